//! JSON messages exchanged with steering clients.

use serde::{Deserialize, Serialize};
use strata_core::gait::{ControlInputs, CycleInputs, TurningRadius};

/// Client to server.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    /// `[u1, u2]` for the first (`u13`) and second (`u24`) subgait.
    SetInputs { u13: ControlInputs, u24: ControlInputs },
    SetRate { phase_per_sec: f64 },
    Reset {},
    Snapshot {},
    /// Advances the phase directly, independent of wall-clock pacing.
    Step { dtau: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputPair {
    pub u13: ControlInputs,
    pub u24: ControlInputs,
}

impl From<CycleInputs> for InputPair {
    fn from(c: CycleInputs) -> Self {
        Self {
            u13: c.first,
            u24: c.second,
        }
    }
}

impl From<InputPair> for CycleInputs {
    fn from(p: InputPair) -> Self {
        CycleInputs::new(p.u13, p.u24)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateMessage {
    pub tau: f64,
    pub pose: [f64; 3],
    pub alpha: Vec<f64>,
    pub beta: Vec<u8>,
    pub latched: InputPair,
    pub pending: InputPair,
    pub cycle: usize,
    pub last_z: Option<[f64; 3]>,
    pub turning_radius: TurningRadius,
    pub phase_per_sec: f64,
    /// Set while the session is paused after a numerical failure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

/// Server to client.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    State(StateMessage),
    Error { message: String },
}

impl ServerMessage {
    pub fn error(message: impl Into<String>) -> Self {
        Self::Error {
            message: message.into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server message serializes")
    }
}

/// A client message stamped with the session phase at which it arrived.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub tau: f64,
    pub message: ClientMessage,
}
