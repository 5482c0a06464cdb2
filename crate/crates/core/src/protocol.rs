//! Newline-delimited ASCII wire protocol between walkers and the relay.
//!
//! Client to server: `HELLO <user_id>`, `UPDATE <user_id> <stride_ms> <ts_ms>`,
//! `BYE`. Server to client: `START <n>`, the same `UPDATE` line rebroadcast
//! verbatim, and `ERR <code> [detail]`. One message per line; fields are
//! space-separated, user ids carry no whitespace.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("invalid user id `{0}`: must be non-empty without whitespace")]
    InvalidUserId(String),
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("stride duration must be positive")]
    NonPositiveStride,
}

/// Validate a user identifier: non-empty, no whitespace.
pub fn validate_user_id(id: &str) -> Result<(), ProtocolError> {
    if id.is_empty() || id.chars().any(char::is_whitespace) {
        return Err(ProtocolError::InvalidUserId(id.to_string()));
    }
    Ok(())
}

/// One stride-duration message streamed between nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CadenceUpdate {
    pub user_id: String,
    pub stride_ms: u32,
    /// Milliseconds since the sender's session start.
    pub sender_ts_ms: u64,
}

impl CadenceUpdate {
    pub fn new(user_id: &str, stride_ms: u32, sender_ts_ms: u64) -> Result<Self, ProtocolError> {
        validate_user_id(user_id)?;
        if stride_ms == 0 {
            return Err(ProtocolError::NonPositiveStride);
        }
        Ok(Self {
            user_id: user_id.to_string(),
            stride_ms,
            sender_ts_ms,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClientMessage {
    Hello { user_id: String },
    Update(CadenceUpdate),
    Bye,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ServerMessage {
    Start { clients: u32 },
    Update(CadenceUpdate),
    Err { code: String, detail: Option<String> },
}

impl fmt::Display for ClientMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClientMessage::Hello { user_id } => write!(f, "HELLO {user_id}"),
            ClientMessage::Update(u) => {
                write!(f, "UPDATE {} {} {}", u.user_id, u.stride_ms, u.sender_ts_ms)
            }
            ClientMessage::Bye => write!(f, "BYE"),
        }
    }
}

impl fmt::Display for ServerMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ServerMessage::Start { clients } => write!(f, "START {clients}"),
            ServerMessage::Update(u) => {
                write!(f, "UPDATE {} {} {}", u.user_id, u.stride_ms, u.sender_ts_ms)
            }
            ServerMessage::Err { code, detail } => match detail {
                Some(d) => write!(f, "ERR {code} {d}"),
                None => write!(f, "ERR {code}"),
            },
        }
    }
}

fn parse_update(rest: &str) -> Result<CadenceUpdate, ProtocolError> {
    let mut parts = rest.split_ascii_whitespace();
    let user = parts
        .next()
        .ok_or_else(|| ProtocolError::Malformed("UPDATE missing user id".into()))?;
    let stride: u32 = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| ProtocolError::Malformed("UPDATE missing stride_ms".into()))?;
    let ts: u64 = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| ProtocolError::Malformed("UPDATE missing ts_ms".into()))?;
    if parts.next().is_some() {
        return Err(ProtocolError::Malformed("UPDATE has trailing fields".into()));
    }
    CadenceUpdate::new(user, stride, ts)
}

pub fn parse_client_line(line: &str) -> Result<ClientMessage, ProtocolError> {
    let line = line.trim_end_matches(['\r', '\n']);
    match line.split_once(' ') {
        Some(("HELLO", rest)) => {
            let id = rest.trim();
            validate_user_id(id)?;
            Ok(ClientMessage::Hello {
                user_id: id.to_string(),
            })
        }
        Some(("UPDATE", rest)) => Ok(ClientMessage::Update(parse_update(rest)?)),
        None if line == "BYE" => Ok(ClientMessage::Bye),
        _ => Err(ProtocolError::Malformed(line.to_string())),
    }
}

pub fn parse_server_line(line: &str) -> Result<ServerMessage, ProtocolError> {
    let line = line.trim_end_matches(['\r', '\n']);
    match line.split_once(' ') {
        Some(("START", rest)) => {
            let n: u32 = rest
                .trim()
                .parse()
                .map_err(|_| ProtocolError::Malformed(line.to_string()))?;
            Ok(ServerMessage::Start { clients: n })
        }
        Some(("UPDATE", rest)) => Ok(ServerMessage::Update(parse_update(rest)?)),
        Some(("ERR", rest)) => {
            let mut parts = rest.splitn(2, ' ');
            let code = parts.next().unwrap_or_default().to_string();
            if code.is_empty() {
                return Err(ProtocolError::Malformed(line.to_string()));
            }
            Ok(ServerMessage::Err {
                code,
                detail: parts.next().map(str::to_string),
            })
        }
        _ => Err(ProtocolError::Malformed(line.to_string())),
    }
}
