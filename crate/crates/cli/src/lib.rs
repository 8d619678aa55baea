//! Library side of the `layoutgen` binary: the HTTP server and the network
//! transport for the language-model bridge.

pub mod server;
pub mod transport;
