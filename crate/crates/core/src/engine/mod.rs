//! Session orchestration and evaluation.

pub mod metrics;
pub mod protocol;
pub mod scripted;
pub mod session;

pub use protocol::{ActionKind, ProtocolError, Status};
pub use session::{adherence, Coach, CoachStep, Session, TraceRecord, Transcript};
