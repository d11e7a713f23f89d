pub mod ao;
pub mod beamforming;
pub mod channel;
pub mod conic;
pub mod experiments;
pub mod linalg;
pub mod metrics;
pub mod phase;
pub mod power;
