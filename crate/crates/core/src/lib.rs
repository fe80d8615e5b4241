pub mod cluster;
pub mod egpd;
pub mod error;
pub mod evaluate;
pub mod export;
pub mod ingest;
pub mod optimize;
pub mod pipeline;
pub mod pwm;
pub mod quadrature;
pub mod special;
pub mod synth;

pub use error::{Error, ErrorClass, Result};
