//! Pairwise human-preference annotation: sessions, vote gating, an
//! append-only JSONL log, majority-vote aggregation and an HTTP front end.

pub mod aggregate;
pub mod http;
pub mod model;
pub mod session;

pub use aggregate::{aggregate, tally, AggregateResult, AxisShare};
pub use http::{router, serve, system_clock, Clock, Service};
pub use model::{Axis, Choice, PairInput, PairTask, Rejection, Session, SessionSpec, Slot, TaskView, VoteRecord};
pub use session::{create_session, replay_log, LogEntry, SessionState};
