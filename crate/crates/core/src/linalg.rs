//! Sparse operators, state vectors and small dense helpers shared by the Fock and spin layers.

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

const PAR_ROWS: usize = 1 << 14;

/// Square sparse matrix stored in compressed-row form.
///
/// Built from unordered triplets; duplicates are summed and exact zeros dropped.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseOperator {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
    hermitian: bool,
}

impl SparseOperator {
    pub fn from_triplets(
        dim: usize,
        mut triplets: Vec<(usize, usize, C64)>,
        hermitian: bool,
    ) -> Result<Self> {
        if let Some(&(r, c, _)) = triplets.iter().find(|(r, c, _)| *r >= dim || *c >= dim) {
            return Err(Error::Validation(format!(
                "entry ({r}, {c}) outside dimension {dim}"
            )));
        }
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<C64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        let mut rows = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                rows.push(r);
                cols.push(c);
                vals.push(v);
                last = Some((r, c));
            }
        }
        let mut keep_cols = Vec::with_capacity(cols.len());
        let mut keep_vals = Vec::with_capacity(vals.len());
        for ((r, c), v) in rows.into_iter().zip(cols).zip(vals) {
            if v != ZERO {
                row_ptr[r + 1] += 1;
                keep_cols.push(c);
                keep_vals.push(v);
            }
        }
        for r in 0..dim {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(Self {
            dim,
            row_ptr,
            cols: keep_cols,
            vals: keep_vals,
            hermitian,
        })
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            row_ptr: vec![0; dim + 1],
            cols: Vec::new(),
            vals: Vec::new(),
            hermitian: true,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal(&vec![1.0; dim])
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let trip = values
            .iter()
            .enumerate()
            .map(|(i, &v)| (i, i, C64::new(v, 0.0)))
            .collect();
        Self::from_triplets(values.len(), trip, true).expect("diagonal indices in range")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Whether the operator was declared Hermitian by its builder.
    pub fn is_hermitian_flagged(&self) -> bool {
        self.hermitian
    }

    pub fn with_hermitian_flag(mut self, flag: bool) -> Self {
        self.hermitian = flag;
        self
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.dim).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.cols[k], self.vals[k]))
        })
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (self.cols[k], self.vals[k]))
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        let s = &self.cols[self.row_ptr[r]..self.row_ptr[r + 1]];
        match s.binary_search(&c) {
            Ok(k) => self.vals[self.row_ptr[r] + k],
            Err(_) => ZERO,
        }
    }

    pub fn is_real(&self) -> bool {
        self.vals.iter().all(|v| v.im == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Largest absolute row sum, an upper bound on the spectral radius.
    pub fn norm_inf(&self) -> f64 {
        (0..self.dim)
            .map(|r| self.row(r).map(|(_, v)| v.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![ZERO; self.dim];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[C64], y: &mut [C64]) {
        assert_eq!(x.len(), self.dim, "matvec dimension");
        let row = |r: usize| {
            let mut acc = ZERO;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            acc
        };
        if self.dim >= PAR_ROWS {
            y.par_iter_mut().enumerate().for_each(|(r, out)| *out = row(r));
        } else {
            for (r, out) in y.iter_mut().enumerate() {
                *out = row(r);
            }
        }
    }

    pub fn adjoint(&self) -> Self {
        let trip = self.triplets().map(|(r, c, v)| (c, r, v.conj())).collect();
        Self::from_triplets(self.dim, trip, self.hermitian).expect("same dimension")
    }

    /// Maximum elementwise |H − H†|.
    pub fn max_hermitian_deviation(&self) -> f64 {
        let mut dev: f64 = 0.0;
        for (r, c, v) in self.triplets() {
            dev = dev.max((v - self.get(c, r).conj()).norm());
        }
        dev
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut out = self.clone();
        out.vals.iter_mut().for_each(|v| *v *= s);
        out.hermitian = self.hermitian && s.im == 0.0;
        out
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_dim(other.dim)?;
        let trip = self.triplets().chain(other.triplets()).collect();
        Self::from_triplets(self.dim, trip, self.hermitian && other.hermitian)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(-ONE))
    }

    /// Sparse product `self * other`.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_dim(other.dim)?;
        let mut trip = Vec::new();
        for r in 0..self.dim {
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    trip.push((r, c, a * b));
                }
            }
        }
        Self::from_triplets(self.dim, trip, false)
    }

    pub fn commutator(&self, other: &Self) -> Result<Self> {
        self.mul(other)?.sub(&other.mul(self)?)
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (r, c, v) in self.triplets() {
            m[(r, c)] += v;
        }
        m
    }

    pub fn from_dense(m: &DMatrix<C64>, hermitian: bool) -> Self {
        let mut trip = Vec::new();
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                if m[(r, c)] != ZERO {
                    trip.push((r, c, m[(r, c)]));
                }
            }
        }
        Self::from_triplets(m.nrows(), trip, hermitian).expect("square dense input")
    }

    fn check_dim(&self, other: usize) -> Result<()> {
        if other != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other,
            });
        }
        Ok(())
    }
}

/// Complex amplitudes over some basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    amps: Vec<C64>,
}

impl StateVector {
    pub fn new(amps: Vec<C64>) -> Self {
        Self { amps }
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        let mut amps = vec![ZERO; dim];
        amps[index] = ONE;
        Self { amps }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            amps: vec![ZERO; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalized(mut self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::Numerical("cannot normalize a zero or non-finite state".into()));
        }
        self.amps.iter_mut().for_each(|a| *a /= n);
        Ok(self)
    }

    /// ⟨self|other⟩.
    pub fn inner(&self, other: &Self) -> Result<C64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    pub fn apply(&self, op: &SparseOperator) -> Result<Self> {
        if op.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: op.dim(),
                found: self.dim(),
            });
        }
        Ok(Self::new(op.matvec(&self.amps)))
    }

    pub fn distance(&self, other: &Self) -> f64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

/// |⟨a|b⟩|².
pub fn fidelity(a: &StateVector, b: &StateVector) -> Result<f64> {
    Ok(a.inner(b)?.norm_sqr().min(1.0))
}

/// ⟨ψ|O|ψ⟩. For operators flagged Hermitian the imaginary part is checked to be negligible.
pub fn expectation(op: &SparseOperator, psi: &StateVector) -> Result<C64> {
    let v = psi.inner(&psi.apply(op)?)?;
    if op.is_hermitian_flagged() && v.im.abs() > 1e-10 * (1.0 + v.re.abs()) {
        return Err(Error::Numerical(format!(
            "Hermitian expectation value has imaginary part {}",
            v.im
        )));
    }
    Ok(v)
}

/// Single-qubit Pauli labels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    pub fn matrix(self) -> Matrix2<C64> {
        match self {
            Pauli::I => Matrix2::new(ONE, ZERO, ZERO, ONE),
            Pauli::X => Matrix2::new(ZERO, ONE, ONE, ZERO),
            Pauli::Y => Matrix2::new(ZERO, -I, I, ZERO),
            Pauli::Z => Matrix2::new(ONE, ZERO, ZERO, -ONE),
        }
    }

    pub fn label(self) -> char {
        match self {
            Pauli::I => '0',
            Pauli::X => 'x',
            Pauli::Y => 'y',
            Pauli::Z => 'z',
        }
    }
}

/// Spin axis of a rotation or measurement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn pauli(self) -> Pauli {
        match self {
            Axis::X => Pauli::X,
            Axis::Y => Pauli::Y,
            Axis::Z => Pauli::Z,
        }
    }
}

/// exp(−i θ/2 σ) for a single spin.
pub fn rotation(axis: Axis, theta: f64) -> Matrix2<C64> {
    let c = C64::new((theta / 2.0).cos(), 0.0);
    let s = C64::new(0.0, -(theta / 2.0).sin());
    Matrix2::identity().map(|v: C64| v * c) + axis.pauli().matrix().map(|v| v * s)
}
