//! Network front end for the traffic store: a WebSocket replay stream, HTTP
//! endpoints for ingest and panel data, and the `homeviz` command line.

pub mod cli;
pub mod http;
pub mod registry;
pub mod session;

pub use http::{router, serve, AppState};
pub use registry::{SessionGuard, SessionRegistry, SessionSummary};
pub use session::{run_session, SessionConfig, SessionOutcome};
