pub mod bus;
pub mod cli;
pub mod control;
pub mod manager;
pub mod detector;
pub mod kernel;
pub mod recorder;
pub mod scenario;
mod serde_ms;
pub mod task;
pub mod template;
