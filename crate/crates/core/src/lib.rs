//! Covariate-adaptive randomization with sequential covariate selection.
//!
//! Patients arrive in batches. After each batch the design refits a
//! regularized regression per treatment arm, keeps the covariates that both
//! arms select, and assigns the next batch with a biased coin that favours
//! the arm reducing imbalance on that selected set. The competitor designs
//! (complete randomization, rerandomization, pairwise Mahalanobis and the
//! full-covariate mean/covariance design) share the same machinery.
//!
//! The crate is `no_std` (it needs `alloc`). IO, threading and timing live in
//! the `arcs` companion crate.
#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod balance;
pub mod engine;
mod error;
pub mod numerics;
pub mod rng;
pub mod selection;
pub mod simulate;

pub use error::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Treatment arm. `Control` is coded 0 and `Treatment` is coded 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Arm {
    Control,
    Treatment,
}

impl Arm {
    pub fn from_bit(bit: bool) -> Self {
        if bit {
            Arm::Treatment
        } else {
            Arm::Control
        }
    }

    pub fn index(self) -> usize {
        match self {
            Arm::Control => 0,
            Arm::Treatment => 1,
        }
    }

    /// `2T - 1`: +1 for treatment, -1 for control.
    pub fn sign(self) -> f64 {
        match self {
            Arm::Control => -1.0,
            Arm::Treatment => 1.0,
        }
    }

    pub fn other(self) -> Self {
        match self {
            Arm::Control => Arm::Treatment,
            Arm::Treatment => Arm::Control,
        }
    }
}
