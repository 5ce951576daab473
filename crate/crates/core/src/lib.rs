//! Deterministic digital twin of a two-generator, three-bus microgrid with
//! an embedded supervisory controller.

pub mod controller;
pub mod devices;
pub mod engine;
pub mod error;
pub mod plant;
pub mod rng;
pub mod service;
