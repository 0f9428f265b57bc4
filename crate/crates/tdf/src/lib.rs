pub mod cli;
pub mod config;
pub mod dataset;
pub mod fanout;
pub mod report;
pub mod server;
pub mod snapshot;
pub mod synthetic;
pub mod wire;
