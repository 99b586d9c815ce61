pub mod error;
pub mod numkernel;
pub mod densesets;
pub mod report;
pub mod serde_ext;
pub mod engine;
pub mod franklin;
pub mod approxkit;
pub mod birkhoff;
