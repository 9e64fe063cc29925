//! Command-line runner and HTTP service around `semsafe-core`.

pub mod frame;
pub mod server;
