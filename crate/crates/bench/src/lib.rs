//! Benchmarks, deployment drivers and adversarial games for the anonymous
//! key distribution stack.

pub mod deploy;
pub mod fit;
pub mod games;
pub mod keyreq;
pub mod record;
pub mod scaling;
pub mod stack;
