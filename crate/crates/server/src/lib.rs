//! HTTP service over interactive evolution sessions.

pub mod api;
pub mod error;
pub mod state;

pub use api::router;
pub use error::ApiError;
pub use state::{AppState, Options};
