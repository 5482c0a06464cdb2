//! Remote social walking toolkit.
//!
//! Two walkers far apart stream their gait cadence to each other and feel
//! the partner's rhythm as alternating ankle vibrations. This crate holds
//! every software piece of that loop: stride extraction from heel-pressure
//! traces, the alternating vibration scheduler, the broadcast relay and its
//! per-walker client, a simulated walker with an entrainment model, the
//! discrete-event experiment runners, the synchronization metrics used to
//! evaluate trials, and a codec for a commercial pedometer's radio packets.

pub mod metrics;
pub mod nikeplus;
pub mod node;
pub mod protocol;
pub mod relay;
pub mod scenarios;
pub mod scheduler;
pub mod signal;
pub mod trial;
pub mod walker;
