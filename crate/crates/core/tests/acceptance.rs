//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with the measured numbers once its assertions hold.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the
//! per-criterion report.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stridelink_core::metrics::{
    self, PercentileMethod, Stride, ToleranceBand, Weighting,
};
use stridelink_core::nikeplus;
use stridelink_core::relay;
use stridelink_core::scenarios::{
    analyze, run, ExperimentConfig, ScenarioKind,
};
use stridelink_core::scheduler::{Scheduler, Side};
use stridelink_core::signal::StridePipeline;
use stridelink_core::walker::{PressureSynth, ReferenceTimeline, Walker, WalkerProfile};

fn report(criterion: u32, detail: &str) {
    println!("PASS criterion {criterion}: {detail}");
}

/// The direction-symmetry experiment was run by a cohort that showed no
/// directional asymmetry in its alignment times; equal gains model it. The
/// default asymmetric gains model the step-adaptation cohort instead.
fn symmetric_cohort_profile() -> WalkerProfile {
    WalkerProfile {
        gain_speedup: 0.7,
        gain_slowdown: 0.7,
        ..WalkerProfile::default()
    }
}

#[test]
fn criterion_01_signal_round_trip() {
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(5..12);
        let durations: Vec<f64> = (0..n)
            .map(|_| rng.gen_range(600.0f64..=1600.0).round())
            .collect();
        let stance = rng.gen_range(0.4..=0.75);
        let synth = PressureSynth {
            stance_ratio: stance,
            noise_sigma: 0.0,
            seed,
            ..PressureSynth::default()
        };
        let trace = synth.generate(&durations, 100.0);
        let events = StridePipeline::default().extract(&trace).unwrap();
        let got: Vec<f64> = events.iter().filter_map(|e| e.duration_ms).collect();
        assert_eq!(
            got.len(),
            durations.len(),
            "seed {seed}: stride count mismatch"
        );
        for (g, want) in got.iter().zip(&durations) {
            let err = (g - want).abs();
            worst = worst.max(err);
            assert!(err <= 10.0 + 1e-9, "seed {seed}: {g} vs {want}");
        }
    }
    let elapsed = t0.elapsed();
    assert!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    report(
        1,
        &format!("200 sequences round-trip within ±10 ms (worst {worst} ms) in {elapsed:?}"),
    );
}

#[test]
fn criterion_02_scheduler_invariants() {
    let t0 = Instant::now();
    for seed in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let initial = rng.gen_range(300..1600);
        let mut s = Scheduler::create(initial, 0).unwrap();
        let mut now = 0u64;
        let mut last: Option<(u64, Side)> = None;
        let mut last_same_side: BTreeMap<&'static str, u64> = BTreeMap::new();
        let mut period = initial as u64;
        let mut last_change: Option<u64> = None;
        for _ in 0..30 {
            if rng.gen_bool(0.35) {
                let new_period = rng.gen_range(300..=1600);
                now += rng.gen_range(0..500);
                s.on_update(new_period, now).unwrap();
                // A fresh period must be felt within half of it.
                let due = s.next_due_ms(now).unwrap();
                assert!(
                    due <= now + new_period as u64 / 2,
                    "seed {seed}: due {due} after update at {now} period {new_period}"
                );
                period = new_period as u64;
                last_change = Some(now);
            }
            let p = s.next_pulse(now).unwrap();
            if let Some((t_prev, side_prev)) = last {
                assert_eq!(p.side, side_prev.opposite(), "seed {seed}: side repeated");
                // Under a settled period both spacings are exact.
                if last_change.is_none_or(|c| t_prev >= c) && p.start_ms > t_prev {
                    assert_eq!(
                        p.start_ms - t_prev,
                        period / 2,
                        "seed {seed}: inter-pulse gap"
                    );
                }
            }
            let key = if p.side == Side::Left { "L" } else { "R" };
            if let Some(prev_same) = last_same_side.insert(key, p.start_ms) {
                if last_change.is_none_or(|c| prev_same >= c) {
                    let gap = p.start_ms - prev_same;
                    // period/2 twice; odd periods lose the rounded halves.
                    assert!(
                        gap == 2 * (period / 2),
                        "seed {seed}: same-side gap {gap} vs period {period}"
                    );
                }
            }
            last = Some((p.start_ms, p.side));
            now = p.start_ms;
        }
    }
    let elapsed = t0.elapsed();
    assert!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    report(
        2,
        &format!("1000 update sequences hold alternation and half-period timing in {elapsed:?}"),
    );
}

struct TestClient {
    writer: TcpStream,
    reader: BufReader<TcpStream>,
}

impl TestClient {
    fn connect(addr: std::net::SocketAddr, id: &str) -> TestClient {
        let stream = TcpStream::connect(addr).unwrap();
        stream
            .set_read_timeout(Some(Duration::from_secs(20)))
            .unwrap();
        let writer = stream.try_clone().unwrap();
        let mut c = TestClient {
            writer,
            reader: BufReader::new(stream),
        };
        c.send(&format!("HELLO {id}"));
        c
    }

    fn send(&mut self, line: &str) {
        writeln!(self.writer, "{line}").unwrap();
    }

    fn recv(&mut self) -> String {
        let mut line = String::new();
        self.reader.read_line(&mut line).unwrap();
        line.trim_end().to_string()
    }
}

fn relay_exactly_once_session(client_ids: &[&'static str], total_updates: u32) {
    let dir = tempfile::tempdir().unwrap();
    let log_path = dir.path().join("relay.log");
    let handle = relay::start_session("127.0.0.1:0", client_ids.len(), Some(log_path.clone()))
        .unwrap();
    let addr = handle.local_addr();

    let mut clients: Vec<TestClient> = client_ids
        .iter()
        .map(|id| TestClient::connect(addr, id))
        .collect();
    for c in &mut clients {
        assert_eq!(c.recv(), format!("START {}", client_ids.len()));
    }

    let per_sender = total_updates / client_ids.len() as u32;
    let senders: Vec<std::thread::JoinHandle<TestClient>> = clients
        .into_iter()
        .zip(client_ids.iter().copied())
        .map(|(mut c, id)| {
            std::thread::spawn(move || {
                for seq in 1..=per_sender {
                    c.send(&format!("UPDATE {id} {seq} {seq}"));
                }
                c
            })
        })
        .collect();
    let mut clients: Vec<TestClient> = senders.into_iter().map(|t| t.join().unwrap()).collect();

    // Every client sees every other sender's full sequence, in order.
    let expect_total = per_sender as usize * (client_ids.len() - 1);
    for (i, c) in clients.iter_mut().enumerate() {
        let mut seen: BTreeMap<String, Vec<u32>> = BTreeMap::new();
        for _ in 0..expect_total {
            let line = c.recv();
            let mut parts = line.split_whitespace();
            assert_eq!(parts.next(), Some("UPDATE"));
            let from = parts.next().unwrap().to_string();
            assert_ne!(from, client_ids[i], "echoed back to the sender");
            let seq: u32 = parts.next().unwrap().parse().unwrap();
            seen.entry(from).or_default().push(seq);
        }
        for (from, seqs) in &seen {
            let want: Vec<u32> = (1..=per_sender).collect();
            assert_eq!(seqs, &want, "client {} lost order from {from}", client_ids[i]);
        }
        assert_eq!(seen.len(), client_ids.len() - 1);
    }

    for c in &mut clients {
        c.send("BYE");
    }
    let summary = handle.join(Duration::from_secs(20));
    assert_eq!(summary.records.len(), per_sender as usize * client_ids.len());
    assert_eq!(summary.dropped_updates, 0);

    let replayed = relay::replay_final_state(&relay::read_log(&log_path).unwrap());
    assert_eq!(replayed, summary.final_state);
    for id in client_ids {
        assert_eq!(replayed.get(*id), Some(&per_sender));
    }
}

#[test]
fn criterion_03_relay_exactly_once_fifo() {
    relay_exactly_once_session(&["A", "B"], 10_000);
    relay_exactly_once_session(&["A", "B", "C"], 10_002);
    report(
        3,
        "2- and 3-client sessions deliver 10k sequence-numbered updates exactly once, \
         in order, and the log replays to the live final state",
    );
}

fn strides_to_band(profile: &WalkerProfile, seed: u64, target_factor: f64) -> usize {
    let mut p = profile.clone();
    p.seed = seed;
    let target = p.baseline_ms * target_factor;
    let mut w = Walker::new(p).unwrap();
    for k in 1..=50 {
        let c = w.next_stride(Some(target));
        if (c - target).abs() <= 0.04 * target {
            return k;
        }
    }
    50
}

#[test]
fn criterion_04_walker_calibration() {
    let profile = WalkerProfile::default();
    let n = 1000;
    let mean = |factor: f64| {
        (0..n).map(|s| strides_to_band(&profile, s, factor) as f64).sum::<f64>() / n as f64
    };
    let speedup = mean(0.9);
    let slowdown = mean(1.1);
    assert!(
        (speedup - 1.1).abs() <= 1.0,
        "speed-up strides-to-band {speedup} not within 1 of 1.1"
    );
    assert!(
        (slowdown - 3.1).abs() <= 1.0,
        "slow-down strides-to-band {slowdown} not within 1 of 3.1"
    );
    report(
        4,
        &format!(
            "default gains reach the ±4% band in {speedup:.2} strides speeding up, \
             {slowdown:.2} slowing down (targets 1.1 and 3.1 ±1)"
        ),
    );
}

#[test]
fn criterion_05_artificial_leader_alignment() {
    let t0 = Instant::now();
    let mut pcts = Vec::new();
    for seed in 0..20u64 {
        let cfg = ExperimentConfig::new(ScenarioKind::ArtificialLeader).with_seed(seed);
        let rec = run(&cfg).unwrap();
        let m = analyze(&rec.view(), rec.band_pct).unwrap();
        let pct = m.walkers[0].alignment_pct.expect("walker has a target");
        assert!(pct >= 90.0, "seed {seed}: alignment {pct:.1}% below 90%");
        pcts.push(pct);
    }
    pcts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = (pcts[9] + pcts[10]) / 2.0;
    assert!(median >= 94.0, "median alignment {median:.1}% below 94%");
    let elapsed = t0.elapsed();
    assert!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
    report(
        5,
        &format!(
            "20 walkers align ≥90% each (min {:.1}%), median {median:.1}% ≥ 94%, in {elapsed:?}",
            pcts[0]
        ),
    );
}

#[test]
fn criterion_06_constant_reference_symmetry() {
    let mut means = Vec::new();
    for delta in [10.0, -10.0] {
        let mut times = Vec::new();
        for seed in 0..20u64 {
            let mut cfg = ExperimentConfig::new(ScenarioKind::ConstantRef).with_seed(seed);
            cfg.delta_pct = delta;
            cfg.profiles = vec![symmetric_cohort_profile()];
            let rec = run(&cfg).unwrap();
            let m = analyze(&rec.view(), rec.band_pct).unwrap();
            times.push(m.walkers[0].time_to_alignment_s.expect("aligns"));
        }
        let mean = times.iter().sum::<f64>() / times.len() as f64;
        assert!(
            (1.0..=5.0).contains(&mean),
            "delta {delta}: mean time to alignment {mean:.2}s outside [1,5]"
        );
        means.push(mean);
    }
    let diff = (means[0] - means[1]).abs();
    assert!(diff < 1.0, "directional difference {diff:.2}s not below 1s");
    report(
        6,
        &format!(
            "slow-down {:.2}s vs speed-up {:.2}s mean alignment time, difference {diff:.2}s < 1s",
            means[0], means[1]
        ),
    );
}

/// Companion plausibility check: the default (asymmetric) profile aligns to
/// a 10% faster reference within the field-observed span of times.
#[test]
fn constant_reference_default_profile_plausibility() {
    let mut times = Vec::new();
    for seed in 0..20u64 {
        let mut cfg = ExperimentConfig::new(ScenarioKind::ConstantRef).with_seed(seed);
        cfg.delta_pct = -10.0;
        let rec = run(&cfg).unwrap();
        let m = analyze(&rec.view(), rec.band_pct).unwrap();
        times.push(m.walkers[0].time_to_alignment_s.expect("aligns"));
    }
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = (times[9] + times[10]) / 2.0;
    assert!(
        (0.3..=5.6).contains(&median),
        "median {median:.2}s outside the observed [0.3, 5.6]s span"
    );
}

#[test]
fn criterion_07_human_leader() {
    let mut ttas = Vec::new();
    let mut worst = 100.0f64;
    for seed in 0..10u64 {
        let cfg = ExperimentConfig::new(ScenarioKind::HumanLeader).with_seed(seed);
        let rec = run(&cfg).unwrap();
        let m = analyze(&rec.view(), rec.band_pct).unwrap();
        let follower = &m.walkers[1];
        let pct = follower.alignment_pct.expect("follower has a target");
        assert!(pct >= 90.0, "seed {seed}: follower alignment {pct:.1}% < 90%");
        worst = worst.min(pct);
        ttas.push(follower.time_to_alignment_s.expect("follower aligns"));
        // One-way link: the leader never feels pulses.
        assert!(rec.walkers[0].pulses.is_empty());
    }
    let mean_tta = ttas.iter().sum::<f64>() / ttas.len() as f64;
    assert!(
        (2.0..=5.0).contains(&mean_tta),
        "mean time to alignment {mean_tta:.2}s outside [2,5]"
    );
    report(
        7,
        &format!(
            "10 followers align ≥90% each (min {worst:.1}%), mean alignment time {mean_tta:.2}s"
        ),
    );
}

#[test]
fn criterion_08_peer_to_peer() {
    let mut pcts = Vec::new();
    let mut strictly_between = 0;
    for seed in 0..10u64 {
        let cfg = ExperimentConfig::new(ScenarioKind::PeerToPeer).with_seed(seed);
        let (lo, hi) = (
            cfg.profiles[0].baseline_ms.min(cfg.profiles[1].baseline_ms),
            cfg.profiles[0].baseline_ms.max(cfg.profiles[1].baseline_ms),
        );
        let rec = run(&cfg).unwrap();
        let m = analyze(&rec.view(), rec.band_pct).unwrap();
        pcts.push(m.peer_alignment_pct.expect("peer alignment defined"));
        if m.walkers.iter().all(|w| w.haptic_mean_ms > lo && w.haptic_mean_ms < hi) {
            strictly_between += 1;
        }
    }
    let mean = pcts.iter().sum::<f64>() / pcts.len() as f64;
    assert!(mean >= 88.0, "mean peer alignment {mean:.1}% below 88%");
    assert!(
        strictly_between >= 8,
        "only {strictly_between}/10 dyads settled strictly between baselines"
    );

    // Noise-free symmetric dyad: the pair average settles on the midpoint
    // of the two baselines; integer-millisecond strides allow ±1 ms.
    let mut cfg = ExperimentConfig::new(ScenarioKind::PeerToPeer).with_seed(0);
    let quiet = |baseline: f64| WalkerProfile {
        baseline_ms: baseline,
        noise_sigma_pct: 0.0,
        gain_speedup: 0.8,
        gain_slowdown: 0.8,
        ..WalkerProfile::default()
    };
    cfg.profiles = vec![quiet(1000.0), quiet(1100.0)];
    let rec = run(&cfg).unwrap();
    let late_mean = |w: usize| {
        let v: Vec<f64> = rec.walkers[w]
            .strides
            .iter()
            .filter(|s| {
                s.end_ms > (rec.haptics_off_ms - 30_000) as f64
                    && s.end_ms <= rec.haptics_off_ms as f64
            })
            .map(|s| s.duration_ms)
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let dyad_mean = (late_mean(0) + late_mean(1)) / 2.0;
    assert!(
        (dyad_mean - 1050.0).abs() <= 1.0,
        "noise-free dyad mean {dyad_mean} not at the baseline midpoint"
    );
    report(
        8,
        &format!(
            "10 dyads: mean mutual alignment {mean:.1}% ≥ 88%, {strictly_between}/10 strictly \
             between baselines, noise-free dyad mean {dyad_mean:.1} ms at the midpoint"
        ),
    );
}

#[test]
fn criterion_09_phase3_recovery() {
    let mut worst: f64 = 0.0;
    let mut runs = 0;
    let mut battery: Vec<ExperimentConfig> = Vec::new();
    for seed in 0..5u64 {
        for delta in [10.0, -10.0] {
            let mut cfg = ExperimentConfig::new(ScenarioKind::ConstantRef).with_seed(seed);
            cfg.delta_pct = delta;
            battery.push(cfg);
        }
    }
    for seed in 0..10u64 {
        battery.push(ExperimentConfig::new(ScenarioKind::ArtificialLeader).with_seed(seed));
        battery.push(ExperimentConfig::new(ScenarioKind::HumanLeader).with_seed(seed));
        battery.push(ExperimentConfig::new(ScenarioKind::PeerToPeer).with_seed(seed));
    }
    for cfg in &battery {
        let rec = run(cfg).unwrap();
        let m = analyze(&rec.view(), rec.band_pct).unwrap();
        for w in &m.walkers {
            runs += 1;
            assert!(
                w.recovery_z <= 3.0,
                "{} seed {} walker {}: post-haptics mean {:.1} vs baseline {:.1}, z {:.2}",
                cfg.kind.name(),
                cfg.seed,
                w.user_id,
                w.post_mean_ms,
                w.baseline_mean_ms,
                w.recovery_z
            );
            worst = worst.max(w.recovery_z);
        }
    }
    report(
        9,
        &format!(
            "{runs} walker recoveries across 40 scenario runs within 3 robust standard errors \
             (worst z {worst:.2})"
        ),
    );
}

fn random_strides(rng: &mut ChaCha8Rng, n: usize, start_ms: f64) -> Vec<Stride> {
    let mut t = start_ms;
    (0..n)
        .map(|_| {
            let d = rng.gen_range(700.0..1500.0);
            t += d;
            Stride {
                end_ms: t,
                duration_ms: d,
            }
        })
        .collect()
}

fn random_reference(rng: &mut ChaCha8Rng) -> ReferenceTimeline {
    let mut segments = Vec::new();
    let mut t = 0u64;
    for _ in 0..rng.gen_range(1..5) {
        segments.push((t, rng.gen_range(800.0f64..1400.0).round()));
        t += rng.gen_range(3_000..15_000);
    }
    ReferenceTimeline::new(segments).unwrap()
}

#[test]
fn criterion_10_metric_oracles() {
    let band = ToleranceBand::new(4.0).unwrap();
    for seed in 0..500u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(3..=50);
        let start = rng.gen_range(0.0..2000.0);
        let strides = random_strides(&mut rng, n, start);
        let reference = random_reference(&mut rng);
        let from_ms = rng.gen_range(0.0..10_000.0);

        // Alignment percentage against a per-stride brute force.
        let got = metrics::alignment_percentage(
            &strides,
            &reference,
            band,
            from_ms,
            Weighting::TimeWeighted,
        );
        let mut num = 0.0;
        let mut den = 0.0;
        for s in &strides {
            if s.start_ms() < from_ms {
                continue;
            }
            if let Some(r) = reference.value_at(s.start_ms() as u64) {
                den += s.duration_ms;
                if (s.duration_ms - r).abs() <= 0.04 * r {
                    num += s.duration_ms;
                }
            }
        }
        match got {
            Ok(v) => assert_eq!(v, num / den * 100.0, "seed {seed}"),
            Err(_) => assert_eq!(den, 0.0, "seed {seed}"),
        }

        // Time to alignment against a linear scan.
        let haptics_on = rng.gen_range(0.0..20_000.0);
        let sustain = rng.gen_range(1..4);
        let got = metrics::time_to_alignment(&strides, &reference, band, haptics_on, sustain);
        let mut run_len = 0;
        let mut expect = None;
        for s in &strides {
            if s.end_ms <= haptics_on {
                continue;
            }
            let in_band = reference
                .value_at(s.end_ms as u64)
                .map(|r| (s.duration_ms - r).abs() <= 0.04 * r)
                .unwrap_or(false);
            if in_band {
                run_len += 1;
                if run_len == sustain {
                    expect = Some((s.end_ms - haptics_on) / 1000.0);
                    break;
                }
            } else {
                run_len = 0;
            }
        }
        assert_eq!(got.ok(), expect, "seed {seed}");

        // Peer alignment flags against a quadratic partner scan.
        let partner_n = rng.gen_range(3..=50);
        let partner_start = rng.gen_range(0.0..2000.0);
        let partner = random_strides(&mut rng, partner_n, partner_start);
        if let Ok(out) = metrics::peer_alignment_series(&strides, &partner, band) {
            let mut k = 0;
            for s in &strides {
                let mut latest: Option<&Stride> = None;
                for p in &partner {
                    if p.end_ms < s.end_ms && latest.is_none_or(|q| p.end_ms > q.end_ms) {
                        latest = Some(p);
                    }
                }
                if let Some(p) = latest {
                    let expect = (s.duration_ms - p.duration_ms).abs() <= 0.04 * p.duration_ms;
                    assert_eq!(out.flags_a[k].aligned, expect, "seed {seed}");
                    k += 1;
                }
            }
        }

        // Correlation coefficients against the direct formulas.
        let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let ys: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        if let Ok(got) = metrics::pearson(&xs, &ys) {
            let nf = n as f64;
            let mx = xs.iter().sum::<f64>() / nf;
            let my = ys.iter().sum::<f64>() / nf;
            let cov = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>();
            let vx = xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
            let vy = ys.iter().map(|y| (y - my).powi(2)).sum::<f64>();
            assert!((got - cov / (vx * vy).sqrt()).abs() < 1e-12, "seed {seed}");
        }
        if let Ok(got) = metrics::spearman(&xs, &ys) {
            let rx = metrics::average_ranks(&xs);
            let ry = metrics::average_ranks(&ys);
            let expect = metrics::pearson(&rx, &ry).unwrap();
            assert!((got - expect).abs() < 1e-12, "seed {seed}");
        }
    }
    report(
        10,
        "alignment, peer alignment, time-to-alignment, pearson and spearman match \
         brute-force oracles on 500 random instances",
    );
}

#[test]
fn criterion_11_published_quartiles() {
    // Per-user alignment percentages from the cueing study: plain cueing
    // (h) and cueing with a secondary task (hs), at 2/4/6% bands.
    let h2 = [
        66.32, 89.06, 78.90, 47.35, 91.13, 81.52, 89.95, 94.78, 76.98, 80.38,
        66.58, 41.50, 83.28, 78.77, 76.01, 90.76, 77.10, 88.35, 73.78, 72.27,
    ];
    let h4 = [
        99.05, 100.00, 98.00, 98.83, 100.00, 96.53, 99.69, 100.00, 98.47, 100.00,
        94.41, 94.30, 100.00, 94.68, 99.50, 100.00, 98.56, 99.60, 88.66, 100.00,
    ];
    let h6 = [
        100.00, 100.00, 99.80, 100.00, 100.00, 100.00, 100.00, 100.00, 99.96, 100.00,
        100.00, 99.52, 100.00, 100.00, 100.00, 100.00, 100.00, 100.00, 99.09, 100.00,
    ];
    let hs2 = [
        47.36, 88.19, 28.85, 78.66, 38.88, 55.82, 36.91, 25.19, 44.80, 67.61,
        0.00, 34.45, 48.96, 19.07, 76.01, 47.63, 49.64, 50.88, 53.58, 39.28,
    ];
    let hs4 = [
        84.88, 100.00, 78.19, 100.00, 77.34, 93.43, 86.95, 78.78, 80.38, 100.00,
        4.20, 98.54, 97.32, 62.93, 99.52, 84.67, 81.36, 92.36, 88.04, 82.75,
    ];
    let hs6 = [
        92.59, 100.00, 99.60, 100.00, 87.43, 100.00, 100.00, 100.00, 92.29, 100.00,
        39.82, 100.00, 100.00, 97.33, 100.00, 94.27, 93.68, 100.00, 91.48, 95.68,
    ];
    let published: [(&[f64; 20], [f64; 3]); 6] = [
        (&h2, [72.65, 78.84, 88.88]),
        (&h4, [96.90, 99.28, 100.00]),
        (&h6, [100.00, 100.00, 100.00]),
        (&hs2, [35.07, 47.50, 55.26]),
        (&hs4, [79.18, 85.92, 98.24]),
        (&hs6, [92.86, 99.80, 100.00]),
    ];
    for (col, (values, quartiles)) in published.iter().enumerate() {
        let got =
            metrics::percentiles(*values, &[25.0, 50.0, 75.0], PercentileMethod::Exclusive)
                .unwrap();
        for (g, want) in got.iter().zip(quartiles) {
            assert!(
                (g - want).abs() <= 0.005 + 1e-9,
                "column {col}: got {g:.4}, published {want}"
            );
        }
    }
    report(
        11,
        "the exclusive percentile convention reproduces all 18 published quartiles \
         to two decimals",
    );
}

#[test]
fn criterion_12_pedometer_codec() {
    // Round trips.
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..1000 {
        let serial: u32 = rng.gen();
        let steps = rng.gen_range(0..=0xFF_FF_FF);
        let mut aux = [0u8; 19];
        rng.fill(&mut aux[..]);
        let raw = nikeplus::encode_packet(serial, steps, &aux).unwrap();
        let p = nikeplus::parse_packet(&raw, nikeplus::Convention::TwosComplement).unwrap();
        assert_eq!((p.serial(), p.cumulative_steps(), p.aux()), (serial, steps, &aux[..]));
    }

    // Exhaustive single-byte corruption detection.
    let good = nikeplus::encode_packet(0x0005_1D30, 421_337, &[9; 19]).unwrap();
    for idx in 0..nikeplus::PACKET_LEN {
        for delta in 1..=255u8 {
            let mut bad = good;
            bad[idx] = bad[idx].wrapping_add(delta);
            assert!(
                nikeplus::parse_packet(&bad, nikeplus::Convention::TwosComplement).is_err(),
                "corruption at byte {idx} delta {delta} undetected"
            );
        }
    }

    // The captured pod packet: framing accepted, and the convention search
    // lands on the one's-complement sum over everything after the header.
    let captured = nikeplus::parse_hex_bytes(
        "FF 55 1E 09 0D 0D 01 24 F2 1D 30 A3 A1 97 E3 86 C1 F3 39 DC C6 12 5C CE FB 3C 83 0D \
         EE 4C 1F FB F8 38",
    )
    .unwrap();
    assert_eq!(captured[..2], nikeplus::HEADER);
    assert_eq!(captured[2..7], nikeplus::PREFIX);
    let raw: [u8; nikeplus::PACKET_LEN] = captured.clone().try_into().unwrap();
    let (range, convention) = nikeplus::find_checksum_convention(&raw).unwrap();
    assert_eq!(range, 2..33);
    assert_eq!(convention, nikeplus::Convention::OnesComplement);
    nikeplus::parse_packet(&captured, nikeplus::Convention::OnesComplement).unwrap();

    // Five-second moving window against hand-computed sums.
    let readings: Vec<nikeplus::StepReading> = (0..20)
        .map(|t| nikeplus::StepReading {
            serial: 1,
            cumulative_steps: if t < 10 { t } else { 10 + 2 * (t - 10) },
            rx_time_s: t as f64,
        })
        .collect();
    let rates = nikeplus::cadence_from_steps(&readings, 5.0).unwrap();
    for (t, want) in [(9, 60.0), (11, 72.0), (13, 96.0), (15, 120.0), (19, 120.0)] {
        assert!((rates[t] - want).abs() < 1e-9, "t={t}: {} vs {want}", rates[t]);
    }
    report(
        12,
        "codec round-trips 1000 packets, detects every single-byte corruption, accepts the \
         captured packet framing (one's-complement sum over bytes 2..33), and the cadence \
         window matches hand sums",
    );
}
