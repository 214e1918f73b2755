//! HTTP consultation service over trained modular networks, plus the
//! command-line front end used by the `modn` binary.

pub mod api;
pub mod cli;
pub mod error;
pub mod journal;
pub mod server;
pub mod state;

pub use error::ServiceError;
pub use server::{build_state, router, serve, ServeConfig};
pub use state::{AppState, StateConfig};
