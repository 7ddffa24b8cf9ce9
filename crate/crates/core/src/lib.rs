//! Discrete-event simulator for Bitcoin and Bitcoin-NG, with the metric
//! suite, experiment harness and incentive-bound calculator.

pub mod chain;
pub mod eventlog;
pub mod harness;
pub mod incentive;
pub mod metrics;
pub mod mining;
pub mod netsim;
pub mod protocol;
