//! Second-order Schrieffer-Wolff reduction and the two-site superexchange couplings.
//!
//! Two-site matrices are ordered |⇑⇑⟩, |⇑⇓⟩, |⇓⇑⟩, |⇓⇓⟩ with the left site as the
//! most significant label, and Pauli products σ^a ⊗ σ^b put `a` on the left site.

use nalgebra::{DMatrix, Matrix2, Matrix4};
use serde::{Deserialize, Serialize};

use crate::dfs::LogicalRegister;
use crate::error::{invalid, Error, Result};
use crate::fock::{build_gradient, build_hopping, build_interaction, chain_band, Spin};
use crate::linalg::{Pauli, SparseOperator, StateVector, C64, ZERO};
use crate::ModelParams;

/// Distance to a resonance, in units of the tunneling, below which evaluation is refused.
pub const POLE_FACTOR: f64 = 3.0;
/// Distance below which results are flagged as outside the perturbative regime.
pub const VALIDITY_FACTOR: f64 = 10.0;

/// Populated and virtual manifolds with the unperturbed energies of all states.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifoldSplit {
    populated: Vec<usize>,
    excited: Vec<usize>,
    energies: Vec<f64>,
}

impl ManifoldSplit {
    pub fn new(populated: Vec<usize>, excited: Vec<usize>, energies: Vec<f64>) -> Result<Self> {
        let n = energies.len();
        if populated.iter().chain(&excited).any(|&k| k >= n) {
            return invalid("manifold index outside the energy list");
        }
        if populated.iter().any(|k| excited.contains(k)) {
            return invalid("populated and excited manifolds overlap");
        }
        for &i in &populated {
            for &k in &excited {
                if energies[i] == energies[k] {
                    return Err(Error::Degeneracy {
                        populated: i,
                        excited: k,
                        energy: energies[i],
                    });
                }
            }
        }
        Ok(Self {
            populated,
            excited,
            energies,
        })
    }

    pub fn populated(&self) -> &[usize] {
        &self.populated
    }

    pub fn excited(&self) -> &[usize] {
        &self.excited
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    /// min |E_populated − E_excited|.
    pub fn gap(&self) -> f64 {
        let mut g = f64::INFINITY;
        for &i in &self.populated {
            for &k in &self.excited {
                g = g.min((self.energies[i] - self.energies[k]).abs());
            }
        }
        g
    }
}

/// Effective coupling inside the populated manifold,
/// ⟨i|H|j⟩ = Σ_k ½[1/(E_i − E_k) + 1/(E_j − E_k)] ⟨i|V|k⟩⟨k|V|j⟩.
///
/// Entries of `v` touching states outside both manifolds are ignored.
pub fn sw_effective(split: &ManifoldSplit, v: &SparseOperator) -> Result<DMatrix<C64>> {
    if v.dim() != split.energies.len() {
        return Err(Error::DimensionMismatch {
            expected: split.energies.len(),
            found: v.dim(),
        });
    }
    let tol = 1e-14 * v.max_abs().max(1.0);
    let in_pop = |k: usize| split.populated.contains(&k);
    let in_exc = |k: usize| split.excited.contains(&k);
    for (r, c, val) in v.triplets() {
        if val.norm() <= tol {
            continue;
        }
        if r == c && (in_pop(r) || in_exc(r)) {
            return invalid(format!("perturbation has a diagonal element at state {r}"));
        }
        if (in_pop(r) && in_pop(c)) || (in_exc(r) && in_exc(c)) {
            return invalid(format!("perturbation couples states {r} and {c} inside one manifold"));
        }
    }
    let p = split.populated.len();
    let mut out = DMatrix::from_element(p, p, ZERO);
    for (a, &i) in split.populated.iter().enumerate() {
        for (b, &j) in split.populated.iter().enumerate() {
            let mut acc = ZERO;
            for &k in &split.excited {
                let vik = v.get(i, k);
                let vkj = v.get(k, j);
                if vik == ZERO || vkj == ZERO {
                    continue;
                }
                let ei = split.energies[i];
                let ej = split.energies[j];
                let ek = split.energies[k];
                acc += vik * vkj * 0.5 * (1.0 / (ei - ek) + 1.0 / (ej - ek));
            }
            out[(a, b)] = acc;
        }
    }
    Ok(out)
}

/// Nearest resonance and its distance from |B|.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResonanceCheck {
    /// 1, 2 or 3.
    pub nearest: usize,
    pub distance: f64,
    pub valid: bool,
}

/// Refuse gradients closer than three tunnelings to a resonance; flag those closer than ten.
pub fn resonance_check(params: &ModelParams, b: f64) -> Result<ResonanceCheck> {
    let (mut nearest, mut distance) = (0, f64::INFINITY);
    for (g, u) in params.resonances().iter().enumerate() {
        let d = (b.abs() - u.abs()).abs();
        if d < distance {
            nearest = g + 1;
            distance = d;
        }
    }
    let j = params.tunneling.abs();
    let limit = POLE_FACTOR * j;
    if distance == 0.0 || distance < limit {
        return Err(Error::Resonance {
            gamma: nearest,
            b,
            resonance: params.resonances()[nearest - 1].abs(),
            distance,
            limit,
        });
    }
    Ok(ResonanceCheck {
        nearest,
        distance,
        valid: distance >= VALIDITY_FACTOR * j,
    })
}

/// Closed-form superexchange block for two sites.
pub fn two_site_closed_form(params: &ModelParams, b: f64) -> Result<Matrix4<f64>> {
    resonance_check(params, b)?;
    Ok(closed_form_unchecked(params, b))
}

fn closed_form_unchecked(params: &ModelParams, b: f64) -> Matrix4<f64> {
    let (u1, u2, u3) = (params.u1(), params.u2(), params.u3());
    let (uee, ueg) = (params.u_ee, params.u_eg);
    let j2 = params.tunneling * params.tunneling;
    let b2 = b * b;
    let d1 = b2 - u1 * u1;
    let d2 = b2 - u2 * u2;
    let d3 = b2 - u3 * u3;
    let a = 2.0 * b * j2 * (b2 - u1 * u1 + 4.0 * uee * ueg) / (d1 * d2);
    let d = -2.0 * j2 * u2 * (b2 - u1 * u3) / (d1 * d3);
    let c = -2.0 * b * j2 * (b2 - 2.0 * ueg * ueg - u2 * u3) / (d2 * d3);
    let e = 2.0 * j2 * u2 / d2;
    Matrix4::new(
        2.0 * j2 * u1 / d1, a, -a, d,
        a, e, -e, c,
        -a, -e, e, -c,
        d, c, -c, 2.0 * j2 * u3 / d3,
    )
}

/// The unperturbed interaction block diag(0, U_eg, U_eg, 2U_eg); the gradient adds nothing here.
pub fn two_site_unperturbed(params: &ModelParams) -> Matrix4<f64> {
    Matrix4::from_diagonal(&nalgebra::Vector4::new(0.0, params.u_eg, params.u_eg, 2.0 * params.u_eg))
}

/// Which virtual states enter the numeric two-site reduction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VirtualStates {
    /// The four states with three atoms on one site.
    Doublons,
    /// Doublons plus the two spin-aligned 2+2 states.
    DoublonsAndAligned,
}

/// Numeric reduction of the two-site chain Hamiltonian onto the logical block.
pub fn two_site_numeric(params: &ModelParams, b: f64, virtual_states: VirtualStates) -> Result<Matrix4<f64>> {
    let reg = LogicalRegister::chain(2)?;
    let basis = reg.basis().clone();
    let idx = *basis.indexing();
    let h0 = build_interaction(&basis, params)?.add(&build_gradient(&basis, b)?)?;
    let hj = build_hopping(&basis, params.tunneling)?;

    let logical: Vec<StateVector> = (0..4)
        .map(|k| {
            let spin_index = (k >> 1) | ((k & 1) << 1);
            reg.from_logical(&StateVector::basis(4, spin_index))
        })
        .collect();
    let doublon = |s: u64| {
        (0..2).any(|site| {
            s >> idx.mode(site, chain_band::E, Spin::Up) & 1 == 1
                && s >> idx.mode(site, chain_band::E, Spin::Down) & 1 == 1
        })
    };
    let virtuals: Vec<usize> = (0..basis.dim())
        .filter(|k| !reg.slots().contains(k))
        .filter(|&k| virtual_states == VirtualStates::DoublonsAndAligned || doublon(basis.state(k)))
        .collect();

    let n = 4 + virtuals.len();
    let mut energies = vec![0.0; n];
    let mut trip = Vec::new();
    for (a, psi) in logical.iter().enumerate() {
        let h0psi = psi.apply(&h0)?;
        for (b2, phi) in logical.iter().enumerate() {
            let e = phi.inner(&h0psi)?;
            if a == b2 {
                energies[a] = e.re;
            } else if e.norm() > 1e-9 {
                return Err(Error::Numerical("logical states are not eigenstates of the onsite terms".into()));
            }
        }
        let vpsi = psi.apply(&hj)?;
        for (slot, &k) in virtuals.iter().enumerate() {
            let coupling = vpsi.amplitudes()[k];
            if coupling != ZERO {
                trip.push((4 + slot, a, coupling));
                trip.push((a, 4 + slot, coupling.conj()));
            }
        }
    }
    for (slot, &k) in virtuals.iter().enumerate() {
        energies[4 + slot] = h0.get(k, k).re;
        for (slot2, &k2) in virtuals.iter().enumerate() {
            let v = hj.get(k2, k);
            if v != ZERO {
                trip.push((4 + slot2, 4 + slot, v));
            }
        }
    }
    let v = SparseOperator::from_triplets(n, trip, true)?;
    let split = ManifoldSplit::new((0..4).collect(), (4..n).collect(), energies)?;
    if virtual_states == VirtualStates::DoublonsAndAligned {
        // Doublon–aligned couplings sit inside the virtual manifold; drop them for the
        // second-order formula, which only needs the populated–virtual block.
        let kept: Vec<_> = v.triplets().filter(|&(r, c, _)| r < 4 || c < 4).collect();
        let v = SparseOperator::from_triplets(n, kept, true)?;
        let m = sw_effective(&split, &v)?;
        return Ok(Matrix4::from_fn(|r, c| m[(r, c)].re));
    }
    let m = sw_effective(&split, &v)?;
    Ok(Matrix4::from_fn(|r, c| m[(r, c)].re))
}

/// The sixteen coefficients c_ab = Tr[(σ^a ⊗ σ^b) H]/4.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PauliCoefficients {
    values: [[f64; 4]; 4],
}

impl PauliCoefficients {
    pub fn get(&self, left: Pauli, right: Pauli) -> f64 {
        self.values[index(left)][index(right)]
    }

    pub fn reconstruct(&self) -> Matrix4<C64> {
        let mut m = Matrix4::zeros();
        for a in Pauli::ALL {
            for b in Pauli::ALL {
                m += kron(&a.matrix(), &b.matrix()).map(|v| v * self.get(a, b));
            }
        }
        m
    }
}

fn index(p: Pauli) -> usize {
    match p {
        Pauli::I => 0,
        Pauli::X => 1,
        Pauli::Y => 2,
        Pauli::Z => 3,
    }
}

pub fn kron(a: &Matrix2<C64>, b: &Matrix2<C64>) -> Matrix4<C64> {
    Matrix4::from_fn(|r, c| a[(r / 2, c / 2)] * b[(r % 2, c % 2)])
}

pub fn pauli_decompose(h: &Matrix4<C64>) -> Result<PauliCoefficients> {
    let scale = h.iter().fold(1.0f64, |m, v| m.max(v.norm()));
    if (h - h.adjoint()).iter().any(|v| v.norm() > 1e-12 * scale) {
        return invalid("Pauli decomposition needs a Hermitian matrix");
    }
    let mut values = [[0.0; 4]; 4];
    for a in Pauli::ALL {
        for b in Pauli::ALL {
            values[index(a)][index(b)] = ((kron(&a.matrix(), &b.matrix()) * h).trace() / 4.0).re;
        }
    }
    Ok(PauliCoefficients { values })
}

pub fn pauli_decompose_real(h: &Matrix4<f64>) -> Result<PauliCoefficients> {
    pauli_decompose(&h.map(|v| C64::new(v, 0.0)))
}

/// Couplings of the effective spin chain.
///
/// `j_par`, `j_perp`, `j_xz` and `j_z` are the bulk values with `j_z` counting both links of
/// a site. `link_field_z` and `link_field_x` are the single-site terms generated by one link
/// on its left site (the right site receives `link_field_z` and `−link_field_x`), and
/// `bare_field` is the onsite −U_eg/2.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinChainParams {
    pub j_par: f64,
    pub j_perp: f64,
    pub j_xz: f64,
    pub j_z: f64,
    pub j_zz: f64,
    pub sites: usize,
    pub b: f64,
    pub b_prime: Option<f64>,
    pub valid: bool,
    pub bare_field: f64,
    pub link_field_z: f64,
    pub link_field_x: f64,
}

impl SpinChainParams {
    /// Only the Ising part, as used by the ideal reference model.
    pub fn ising(j_zz: f64, j_z: f64, sites: usize) -> Self {
        Self {
            j_par: -j_zz,
            j_perp: j_zz,
            j_xz: 0.0,
            j_z,
            j_zz,
            sites,
            b: 0.0,
            b_prime: None,
            valid: true,
            bare_field: j_z,
            link_field_z: 0.0,
            link_field_x: 0.0,
        }
    }

    pub fn with_sites(self, sites: usize) -> Self {
        Self { sites, ..self }
    }
}

/// Superexchange couplings at gradient `b`.
pub fn coupling_constants(params: &ModelParams, b: f64) -> Result<SpinChainParams> {
    let check = resonance_check(params, b)?;
    let (u1, u2, u3) = (params.u1(), params.u2(), params.u3());
    let j2 = params.tunneling * params.tunneling;
    let b2 = b * b;
    let d1 = b2 - u1 * u1;
    let d2 = b2 - u2 * u2;
    let d3 = b2 - u3 * u3;
    let j_par = -0.5 * j2 * (u1 / d1 + 2.0 * u2 / d2 + u3 / d3);
    let j_perp = j2 * u2 * (3.0 * b2 + u1 * u3) * (u1 - u2).powi(2) / (d1 * d2 * d3);
    let j_xz = -2.0 * b * j2 * u2 * (u1 - u2) / (d1 * d3);
    let bare_field = -(u1 - u2) / 4.0;
    let j_z = j2 * (u1 / d1 - u3 / d3) + bare_field;
    let sw = pauli_decompose_real(&closed_form_unchecked(params, b))?;
    Ok(SpinChainParams {
        j_par,
        j_perp,
        j_xz,
        j_z,
        j_zz: 0.5 * (j_perp - j_par),
        sites: 2,
        b,
        b_prime: None,
        valid: check.valid,
        bare_field,
        link_field_z: sw.get(Pauli::Z, Pauli::I),
        link_field_x: sw.get(Pauli::X, Pauli::I),
    })
}
