//! HTTP front end for interactive simulation sessions.

pub mod api;
pub mod session;
pub mod snapshot;

pub use api::{router, serve, AppState, ServerOptions};
