//! Branch structure, explicit Hilbert-module bases, and KMS eigenmeasure
//! classification for systems of proper contractions on compact sets.
//!
//! The library detects branch points of affine iterated function systems in
//! exact arithmetic, builds the countable patched basis of the associated
//! function bimodule, iterates Hutchinson and branch-orbit measures with
//! certified truncation defects, and verifies/classifies the eigenmeasure
//! conditions that characterize KMS equilibria at inverse temperature
//! `beta = log(lambda)`.

pub mod basis;
pub mod bimodule;
pub mod branching;
pub mod error;
pub mod exact;
pub mod family;
pub mod ifs;
pub mod kms;
pub mod measure;
pub mod par;
pub mod presets;
pub mod pwpoly;
pub mod report;

pub use error::{Error, Result};
