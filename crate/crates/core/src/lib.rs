//! Decoherence-free-subspace qubits built from two-band fermions in an optical lattice.
//!
//! The crate goes from lattice physics to protocol observables:
//! [`bandstruct`] turns a lattice description into Hubbard parameters,
//! [`fock`] and [`dfs`] build the microscopic model and its logical subspace,
//! [`sw`] and [`spinchain`] derive and build the effective spin chain,
//! [`evolve`] propagates states, and [`protocols`] / [`sitephys`] run the experiments.

// `!(x < y)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bandstruct;
pub mod dfs;
pub mod error;
pub mod evolve;
pub mod fock;
pub mod linalg;
pub mod protocols;
pub mod sitephys;
pub mod spinchain;
pub mod sw;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Energies used by the dynamics layers. Values are in a common unit,
/// normally the tunneling `J` itself so that `tunneling == 1`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelParams {
    pub tunneling: f64,
    pub u_ee: f64,
    pub u_gg: f64,
    pub u_eg: f64,
}

impl ModelParams {
    /// Interaction ratios in units of the tunneling.
    pub fn from_ratios(u_ee: f64, u_gg: f64, u_eg: f64) -> Self {
        Self { tunneling: 1.0, u_ee, u_gg, u_eg }
    }

    /// The 179 / 209 / 239 ratios used throughout the reference benchmarks.
    pub fn reference() -> Self {
        Self::from_ratios(179.0, 209.0, 239.0)
    }

    pub fn u1(&self) -> f64 {
        2.0 * self.u_ee + self.u_eg
    }

    pub fn u2(&self) -> f64 {
        2.0 * self.u_ee - self.u_eg
    }

    pub fn u3(&self) -> f64 {
        2.0 * self.u_ee - 3.0 * self.u_eg
    }

    pub fn resonances(&self) -> [f64; 3] {
        [self.u1(), self.u2(), self.u3()]
    }

    pub fn with_tunneling(self, tunneling: f64) -> Self {
        Self { tunneling, ..self }
    }
}
