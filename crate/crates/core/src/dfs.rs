//! The decoherence-free subspace of the chain model and its logical operators.
//!
//! Per site the subspace is spanned by |⇒⟩ = |1001⟩ and |⇐⟩ = |0110⟩
//! (kets list n_e↑ n_e↓ n_g↑ n_g↓). The logical states are
//! |⇑⟩ = (|⇒⟩ + |⇐⟩)/√2 and |⇓⟩ = (|⇒⟩ − |⇐⟩)/√2.
//! Internally the register is indexed by x-configurations: bit j set means site j holds |⇐⟩.
//! Logical (spin-space) indices use bit j set for |⇓⟩ on site j.

use std::sync::Arc;

use nalgebra::Matrix2;

use crate::error::{invalid, Result};
use crate::fock::{build_basis, chain_band, Bits, FockBasis, ModeIndexing, Spin, SymmetrySector};
use crate::linalg::{rotation, Axis, Pauli, SparseOperator, StateVector, C64, ONE, ZERO};

const SQRT_HALF: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Per-site pattern of |⇒⟩ in the chain layout.
pub fn right_pattern(indexing: &ModeIndexing, site: usize) -> Bits {
    (1 << indexing.mode(site, chain_band::E, Spin::Up)) | (1 << indexing.mode(site, chain_band::G, Spin::Down))
}

/// Per-site pattern of |⇐⟩ in the chain layout.
pub fn left_pattern(indexing: &ModeIndexing, site: usize) -> Bits {
    (1 << indexing.mode(site, chain_band::E, Spin::Down)) | (1 << indexing.mode(site, chain_band::G, Spin::Up))
}

/// |⇑⟩ and |⇓⟩ of a single site as vectors over the 16 four-mode occupation words.
pub fn dfs_site_states() -> (StateVector, StateVector) {
    let idx = ModeIndexing::chain(1).expect("one site");
    let (r, l) = (right_pattern(&idx, 0) as usize, left_pattern(&idx, 0) as usize);
    let mut up = StateVector::zeros(16);
    let mut down = StateVector::zeros(16);
    up.amplitudes_mut()[r] = C64::new(SQRT_HALF, 0.0);
    up.amplitudes_mut()[l] = C64::new(SQRT_HALF, 0.0);
    down.amplitudes_mut()[r] = C64::new(SQRT_HALF, 0.0);
    down.amplitudes_mut()[l] = C64::new(-SQRT_HALF, 0.0);
    (up, down)
}

/// How an embedded operator acts on the orthogonal complement of the subspace.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Complement {
    Zero,
    Identity,
}

/// A chain of logical qubits embedded in a Fock sector.
#[derive(Clone, Debug)]
pub struct LogicalRegister {
    basis: Arc<FockBasis>,
    /// Fock index of each x-configuration.
    slots: Vec<usize>,
}

impl LogicalRegister {
    /// Register over the one-g-per-site sector of an `sites`-site chain.
    pub fn chain(sites: usize) -> Result<Self> {
        let basis = build_basis(ModeIndexing::chain(sites)?, SymmetrySector::one_g_per_site(sites))?;
        Self::new(Arc::new(basis))
    }

    pub fn new(basis: Arc<FockBasis>) -> Result<Self> {
        let idx = *basis.indexing();
        let sites = idx.sites();
        if sites > 20 {
            return invalid("logical register limited to 20 sites");
        }
        let mut slots = Vec::with_capacity(1 << sites);
        for x in 0..(1usize << sites) {
            let bits = (0..sites).fold(0, |acc, j| {
                acc | if x >> j & 1 == 0 { right_pattern(&idx, j) } else { left_pattern(&idx, j) }
            });
            match basis.index_of(bits) {
                Some(k) => slots.push(k),
                None => return invalid("basis sector does not contain the decoherence-free subspace"),
            }
        }
        Ok(Self { basis, slots })
    }

    pub fn sites(&self) -> usize {
        self.basis.indexing().sites()
    }

    pub fn basis(&self) -> &Arc<FockBasis> {
        &self.basis
    }

    pub fn fock_dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn logical_dim(&self) -> usize {
        self.slots.len()
    }

    /// Fock indices of the subspace, ordered by x-configuration.
    pub fn slots(&self) -> &[usize] {
        &self.slots
    }

    /// Diagonal projector onto the subspace.
    pub fn projector(&self) -> SparseOperator {
        let mut diag = vec![0.0; self.fock_dim()];
        for &k in &self.slots {
            diag[k] = 1.0;
        }
        SparseOperator::diagonal(&diag)
    }

    /// Amplitudes of ψ on the subspace, converted to the logical basis.
    pub fn to_logical(&self, psi: &StateVector) -> StateVector {
        let mut a: Vec<C64> = self.slots.iter().map(|&k| psi.amplitudes()[k]).collect();
        hadamard_all(&mut a);
        StateVector::new(a)
    }

    /// Embed a logical state into the Fock sector.
    pub fn from_logical(&self, phi: &StateVector) -> StateVector {
        let mut a = phi.amplitudes().to_vec();
        hadamard_all(&mut a);
        let mut out = StateVector::zeros(self.fock_dim());
        for (&k, v) in self.slots.iter().zip(a) {
            out.amplitudes_mut()[k] = v;
        }
        out
    }

    /// The product state with every site in |⇒⟩.
    pub fn all_right(&self) -> StateVector {
        StateVector::basis(self.fock_dim(), self.slots[0])
    }

    /// Operator ⊗_j M_j on the listed sites (logical basis matrices), identity elsewhere in the subspace.
    pub fn embed_product(&self, factors: &[(usize, Matrix2<C64>)], complement: Complement) -> Result<SparseOperator> {
        let factors = self.x_factors(factors)?;
        let mut trip = Vec::new();
        for x in 0..self.slots.len() {
            for (y, amp) in product_images(x, &factors) {
                trip.push((self.slots[y], self.slots[x], amp));
            }
        }
        if complement == Complement::Identity {
            let mut in_dfs = vec![false; self.fock_dim()];
            for &k in &self.slots {
                in_dfs[k] = true;
            }
            trip.extend((0..self.fock_dim()).filter(|&k| !in_dfs[k]).map(|k| (k, k, ONE)));
        }
        let herm = factors.iter().all(|(_, m)| (m - m.adjoint()).norm() < 1e-14);
        SparseOperator::from_triplets(self.fock_dim(), trip, herm)
    }

    /// Apply ⊗_j M_j directly to a Fock state, with the given action on the complement.
    pub fn apply_product(
        &self,
        psi: &StateVector,
        factors: &[(usize, Matrix2<C64>)],
        complement: Complement,
    ) -> Result<StateVector> {
        let factors = self.x_factors(factors)?;
        let mut out = match complement {
            Complement::Identity => psi.clone(),
            Complement::Zero => StateVector::zeros(psi.dim()),
        };
        for &k in &self.slots {
            out.amplitudes_mut()[k] = ZERO;
        }
        for x in 0..self.slots.len() {
            let a = psi.amplitudes()[self.slots[x]];
            if a == ZERO {
                continue;
            }
            for (y, amp) in product_images(x, &factors) {
                out.amplitudes_mut()[self.slots[y]] += amp * a;
            }
        }
        Ok(out)
    }

    fn x_factors(&self, factors: &[(usize, Matrix2<C64>)]) -> Result<Vec<(usize, Matrix2<C64>)>> {
        let mut seen = vec![false; self.sites()];
        let mut out = Vec::with_capacity(factors.len());
        for &(site, m) in factors {
            if site >= self.sites() {
                return invalid(format!("site {site} outside a {}-site register", self.sites()));
            }
            if std::mem::replace(&mut seen[site], true) {
                return invalid(format!("site {site} listed twice"));
            }
            let h = hadamard();
            out.push((site, h * m * h));
        }
        Ok(out)
    }
}

/// Pauli σ^axis on one site, zero outside the subspace.
pub fn embedded_pauli(register: &LogicalRegister, site: usize, axis: Axis) -> Result<SparseOperator> {
    register.embed_product(&[(site, axis.pauli().matrix())], Complement::Zero)
}

/// Product of Paulis on several sites, zero outside the subspace.
pub fn embedded_pauli_string(register: &LogicalRegister, factors: &[(usize, Pauli)]) -> Result<SparseOperator> {
    let m: Vec<_> = factors.iter().map(|&(s, p)| (s, p.matrix())).collect();
    register.embed_product(&m, Complement::Zero)
}

/// exp(−i θ/2 Σ_j σ_j^axis) on the subspace, identity on the complement.
pub fn collective_rotation(register: &LogicalRegister, axis: Axis, theta: f64) -> Result<SparseOperator> {
    let r = rotation(axis, theta);
    let factors: Vec<_> = (0..register.sites()).map(|j| (j, r)).collect();
    register.embed_product(&factors, Complement::Identity)
}

fn hadamard() -> Matrix2<C64> {
    let s = C64::new(SQRT_HALF, 0.0);
    Matrix2::new(s, s, s, -s)
}

/// In-place tensor power of the normalized Hadamard on a 2^L vector.
fn hadamard_all(a: &mut [C64]) {
    let n = a.len();
    let mut h = 1;
    while h < n {
        for block in (0..n).step_by(2 * h) {
            for i in block..block + h {
                let (u, v) = (a[i], a[i + h]);
                a[i] = (u + v) * SQRT_HALF;
                a[i + h] = (u - v) * SQRT_HALF;
            }
        }
        h *= 2;
    }
}

/// Images of x-configuration `x` under a product of x-basis factors.
fn product_images(x: usize, factors: &[(usize, Matrix2<C64>)]) -> Vec<(usize, C64)> {
    let mut out = vec![(x, ONE)];
    for &(site, m) in factors {
        let col = x >> site & 1;
        let mut next = Vec::with_capacity(out.len() * 2);
        for (y, amp) in out {
            for row in 0..2 {
                let v = m[(row, col)];
                if v != ZERO {
                    next.push(((y & !(1 << site)) | (row << site), amp * v));
                }
            }
        }
        out = next;
    }
    out
}
