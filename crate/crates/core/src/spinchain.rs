//! Effective spin-1/2 chain Hamiltonians on the 2^L logical space.
//!
//! Site j is bit j of the basis index, with ⇑ = 0 (σz = +1).

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{Pauli, SparseOperator, StateVector, C64, I, ONE, ZERO};
use crate::sw::SpinChainParams;

/// Hermitian operator on L spins.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinOperator {
    sites: usize,
    op: SparseOperator,
}

impl SpinOperator {
    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn operator(&self) -> &SparseOperator {
        &self.op
    }

    pub fn into_operator(self) -> SparseOperator {
        self.op
    }

    /// Weighted sum of Pauli strings.
    pub fn from_terms(sites: usize, terms: &[(f64, Vec<(usize, Pauli)>)]) -> Result<Self> {
        if sites == 0 || sites > 24 {
            return invalid(format!("spin chain of {sites} sites outside 1..=24"));
        }
        let dim = 1usize << sites;
        let mut trip = Vec::new();
        for (coeff, string) in terms {
            if *coeff == 0.0 {
                continue;
            }
            if string.iter().any(|&(s, _)| s >= sites) {
                return invalid("Pauli string refers to a site outside the chain");
            }
            for b in 0..dim {
                let (t, amp) = apply_pauli_string(b, string);
                trip.push((t, b, amp * *coeff));
            }
        }
        Ok(Self {
            sites,
            op: SparseOperator::from_triplets(dim, trip, true)?,
        })
    }
}

/// Image of basis state `b` under a Pauli string.
pub fn apply_pauli_string(b: usize, string: &[(usize, Pauli)]) -> (usize, C64) {
    let mut t = b;
    let mut amp = ONE;
    // Rightmost factor acts first; single-site factors on distinct sites commute anyway.
    for &(site, p) in string.iter().rev() {
        let bit = t >> site & 1;
        match p {
            Pauli::I => {}
            Pauli::X => t ^= 1 << site,
            Pauli::Y => {
                amp *= if bit == 0 { I } else { -I };
                t ^= 1 << site;
            }
            Pauli::Z => {
                if bit == 1 {
                    amp = -amp;
                }
            }
        }
    }
    (t, amp)
}

/// How single-site terms of the superexchange are distributed along an open chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldModel {
    /// J_z on every site.
    Uniform,
    /// Each link contributes its own single-site terms, so edge sites see one link only
    /// and keep the uncancelled σx terms of their single link.
    LinkSummed,
}

fn check_chain(p: &SpinChainParams) -> Result<()> {
    if p.sites < 2 {
        return invalid("spin chain needs at least two sites");
    }
    Ok(())
}

/// J_∥ Σσxσx + J_⊥ Σ(σyσy + σzσz) + J_xz Σ(σxσz − σzσx) + J_z Σσz.
pub fn build_h_ex_full(p: &SpinChainParams) -> Result<SpinOperator> {
    build_h_ex_full_with(p, FieldModel::Uniform)
}

pub fn build_h_ex_full_with(p: &SpinChainParams, fields: FieldModel) -> Result<SpinOperator> {
    check_chain(p)?;
    let l = p.sites;
    let mut terms = Vec::new();
    for j in 0..l - 1 {
        let k = j + 1;
        terms.push((p.j_par, vec![(j, Pauli::X), (k, Pauli::X)]));
        terms.push((p.j_perp, vec![(j, Pauli::Y), (k, Pauli::Y)]));
        terms.push((p.j_perp, vec![(j, Pauli::Z), (k, Pauli::Z)]));
        terms.push((p.j_xz, vec![(j, Pauli::X), (k, Pauli::Z)]));
        terms.push((-p.j_xz, vec![(j, Pauli::Z), (k, Pauli::X)]));
    }
    match fields {
        FieldModel::Uniform => {
            for j in 0..l {
                terms.push((p.j_z, vec![(j, Pauli::Z)]));
            }
        }
        FieldModel::LinkSummed => {
            for j in 0..l {
                terms.push((p.bare_field, vec![(j, Pauli::Z)]));
            }
            for j in 0..l - 1 {
                terms.push((p.link_field_z, vec![(j, Pauli::Z)]));
                terms.push((p.link_field_z, vec![(j + 1, Pauli::Z)]));
                terms.push((p.link_field_x, vec![(j, Pauli::X)]));
                terms.push((-p.link_field_x, vec![(j + 1, Pauli::X)]));
            }
        }
    }
    SpinOperator::from_terms(l, &terms)
}

/// Σ[(J_∥+J_⊥)/2 (σxσx + σyσy) + J_⊥ σzσz] + J_z Σσz.
pub fn build_h_xxz(p: &SpinChainParams) -> Result<SpinOperator> {
    check_chain(p)?;
    let l = p.sites;
    let xy = 0.5 * (p.j_par + p.j_perp);
    let mut terms = Vec::new();
    for j in 0..l - 1 {
        terms.push((xy, vec![(j, Pauli::X), (j + 1, Pauli::X)]));
        terms.push((xy, vec![(j, Pauli::Y), (j + 1, Pauli::Y)]));
        terms.push((p.j_perp, vec![(j, Pauli::Z), (j + 1, Pauli::Z)]));
    }
    for j in 0..l {
        terms.push((p.j_z, vec![(j, Pauli::Z)]));
    }
    SpinOperator::from_terms(l, &terms)
}

/// J_zz Σσzσz + J_z Σσz.
pub fn build_ideal_ising(j_zz: f64, j_z: f64, sites: usize) -> Result<SpinOperator> {
    if sites < 2 {
        return invalid("spin chain needs at least two sites");
    }
    let mut terms = Vec::new();
    for j in 0..sites - 1 {
        terms.push((j_zz, vec![(j, Pauli::Z), (j + 1, Pauli::Z)]));
    }
    for j in 0..sites {
        terms.push((j_z, vec![(j, Pauli::Z)]));
    }
    SpinOperator::from_terms(sites, &terms)
}

/// Σ_j σ_j^p.
pub fn total_pauli(sites: usize, p: Pauli) -> Result<SpinOperator> {
    let terms: Vec<_> = (0..sites).map(|j| (1.0, vec![(j, p)])).collect();
    SpinOperator::from_terms(sites, &terms)
}

/// ⟨ψ| Π σ |ψ⟩ for a spin-space state, evaluated without building the operator.
pub fn pauli_expectation(psi: &StateVector, string: &[(usize, Pauli)]) -> C64 {
    let a = psi.amplitudes();
    let mut acc = ZERO;
    for (b, &amp) in a.iter().enumerate() {
        if amp == ZERO {
            continue;
        }
        let (t, phase) = apply_pauli_string(b, string);
        acc += a[t].conj() * phase * amp;
    }
    acc
}

/// Apply a single-site 2×2 matrix to a spin-space state.
pub fn apply_local(psi: &StateVector, site: usize, m: &Matrix2<C64>) -> StateVector {
    let mut out = psi.clone();
    let a = psi.amplitudes();
    let o = out.amplitudes_mut();
    let mask = 1usize << site;
    for b in 0..a.len() {
        if b & mask == 0 {
            let (u, v) = (a[b], a[b | mask]);
            o[b] = m[(0, 0)] * u + m[(0, 1)] * v;
            o[b | mask] = m[(1, 0)] * u + m[(1, 1)] * v;
        }
    }
    out
}

/// Product state with every site in the +1 eigenstate of σx.
pub fn plus_x_state(sites: usize) -> StateVector {
    let dim = 1usize << sites;
    let amp = C64::new((dim as f64).sqrt().recip(), 0.0);
    StateVector::new(vec![amp; dim])
}
