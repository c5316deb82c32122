//! Live steering sessions for two-beat gaits, served over WebSocket.

pub mod protocol;
pub mod server;
pub mod session;

pub use protocol::{ClientMessage, LogEntry, ServerMessage, StateMessage};
pub use server::{router, serve, ServeConfig, SessionHandle};
pub use session::{CycleEntry, Session};
