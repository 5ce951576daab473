//! Wire format: each message is a 4-byte big-endian length followed by that
//! many bytes of UTF-8 JSON. Every message object carries a `kind` field.
//!
//! Client to server:
//!
//! | kind        | fields                                              |
//! |-------------|-----------------------------------------------------|
//! | `hello`     | `proto_version`, `token`; must be the first message |
//! | `subscribe` | optional `request_id`                               |
//! | `command`   | `request_id`, `command` (object with its own `kind`) |
//! | `whatif`    | `request_id`, `command`, optional `horizon` seconds |
//!
//! Command kinds are the scenario event kinds (`load_step`, `relay_force`,
//! `generator_trip`, `sensor_bias`, `operator_command`) plus the operator
//! requests addressed directly (`relay_set`, `sync_request`,
//! `setpoint_change`, `reset_trip`, `trip`).
//!
//! Server to client:
//!
//! | kind        | fields                                                  |
//! |-------------|---------------------------------------------------------|
//! | `telemetry` | the `TelemetryFrame` fields, unchanged names            |
//! | `decision`  | `log` plus the `ControllerDecision` fields              |
//! | `ack`       | `request_id`                                            |
//! | `reject`    | `request_id` (null if none could be read), `reason`     |
//! | `event`     | `event` name, optional `request_id`, free-form `data`   |
//!
//! Event names: `welcome` (handshake accepted), `applied` (an event-log
//! entry), `whatif` (forecast result), `dropped` (terminal: backlog bound
//! exceeded), `finished` (terminal: run complete, carries the digest).

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::controller::{ControllerDecision, OperatorRequest};
use crate::devices::TelemetryFrame;
use crate::engine::EventKind;

pub const PROTO_VERSION: u32 = 1;

/// Largest message accepted from a peer, bytes.
pub const MAX_MESSAGE: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClientMessage {
    Hello {
        proto_version: u32,
        token: String,
    },
    Subscribe {
        #[serde(default)]
        request_id: Option<String>,
    },
    Command {
        request_id: String,
        command: Value,
    },
    Whatif {
        request_id: String,
        command: Value,
        #[serde(default)]
        horizon: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ServerMessage {
    Telemetry(TelemetryFrame),
    Decision {
        log: String,
        #[serde(flatten)]
        decision: ControllerDecision,
    },
    Ack {
        request_id: String,
    },
    Reject {
        request_id: Option<String>,
        reason: String,
    },
    Event {
        event: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        request_id: Option<String>,
        #[serde(default)]
        data: Value,
    },
}

impl ServerMessage {
    pub fn event(name: &str, data: Value) -> Self {
        ServerMessage::Event {
            event: name.to_owned(),
            request_id: None,
            data,
        }
    }

    pub fn reject(request_id: Option<String>, reason: impl Into<String>) -> Self {
        ServerMessage::Reject {
            request_id,
            reason: reason.into(),
        }
    }

    /// Length-prefixed bytes ready to write to a socket.
    pub fn encode(&self) -> Vec<u8> {
        let body = serde_json::to_vec(self).expect("server messages always serialize");
        frame(&body)
    }
}

const OPERATOR_KINDS: [&str; 5] = ["relay_set", "sync_request", "setpoint_change", "reset_trip", "trip"];

/// Turns a command object into an engine event.
pub fn parse_command(command: &Value) -> Result<EventKind, String> {
    let kind = command
        .get("kind")
        .and_then(Value::as_str)
        .ok_or("command has no `kind` field")?;
    if OPERATOR_KINDS.contains(&kind) {
        let mut body = command.clone();
        let obj = body.as_object_mut().ok_or("command must be an object")?;
        obj.remove("kind");
        obj.insert("command".into(), json!(kind));
        let req: OperatorRequest = serde_json::from_value(body).map_err(|e| format!("{kind}: {e}"))?;
        return Ok(EventKind::OperatorCommand(req));
    }
    match kind {
        "load_step" | "relay_force" | "generator_trip" | "sensor_bias" | "operator_command" => {
            serde_json::from_value(command.clone()).map_err(|e| format!("{kind}: {e}"))
        }
        other => Err(format!("unknown command kind `{other}`")),
    }
}

pub fn frame(body: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(body.len() + 4);
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(body);
    out
}

/// Reads one length-prefixed message body. `Ok(None)` on clean end of stream.
pub fn read_frame(r: &mut impl Read) -> io::Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let n = u32::from_be_bytes(len) as usize;
    if n > MAX_MESSAGE {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("message of {n} bytes exceeds {MAX_MESSAGE}"),
        ));
    }
    let mut body = vec![0u8; n];
    r.read_exact(&mut body)?;
    Ok(Some(body))
}

pub fn write_message<T: Serialize>(w: &mut impl Write, msg: &T) -> io::Result<()> {
    let body = serde_json::to_vec(msg).map_err(io::Error::other)?;
    w.write_all(&frame(&body))?;
    w.flush()
}
