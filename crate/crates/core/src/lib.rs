pub mod benchmarks;
pub mod constraints;
pub mod error;
pub mod math;
pub mod netcore;
pub mod proximity;
pub mod safepredictor;
pub mod evalcli;
pub mod training;
pub mod verifier;
