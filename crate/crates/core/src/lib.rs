//! Donation-aware live-stream recommendation.
//!
//! The pipeline has two stages. [`sensor`] co-factorizes a donation tensor and
//! a response tensor (viewer x channel x slot) with shared factors and learns
//! viewer-to-viewer influence; [`d2r`] turns the factors into per-donation
//! response estimates. [`cars`] then ranks multi-stream parties for each
//! viewer and picks one for a group by least misery.

pub mod cars;
pub mod d2r;
pub mod error;
pub mod eval;
pub mod graph;
pub mod io;
pub mod par;
pub mod sensor;
pub mod synth;
pub mod tensor;

pub use error::{MarsError, Result};
