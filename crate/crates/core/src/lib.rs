pub mod archive;
pub mod changepoint;
pub mod cli;
pub mod ingest;
pub mod latency;
pub mod model;
pub mod numerics;
pub mod pipeline;
pub mod providers;
pub mod select;
pub mod service;
pub mod synthetic;
