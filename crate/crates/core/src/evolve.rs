//! Unitary time evolution ψ(t) = e^{−iHt} ψ with ħ = 1.
//!
//! Small operators are diagonalized once and reused for any time; large ones use a
//! Lanczos propagator with adaptive step size.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{SparseOperator, StateVector, C64, ZERO};

/// Largest dimension handled by full diagonalization.
pub const DENSE_LIMIT: usize = 2048;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Dense up to [`DENSE_LIMIT`], Krylov beyond.
    Auto,
    DenseExponential,
    Krylov,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolutionOptions {
    pub method: Method,
    pub tolerance: f64,
    pub max_krylov_dim: usize,
}

impl Default for EvolutionOptions {
    fn default() -> Self {
        Self {
            method: Method::Auto,
            tolerance: 1e-10,
            max_krylov_dim: 30,
        }
    }
}

impl EvolutionOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance <= 1e-6) {
            return invalid(format!("tolerance {} outside (0, 1e-6]", self.tolerance));
        }
        if self.max_krylov_dim < 2 {
            return invalid("Krylov dimension must be at least 2");
        }
        Ok(())
    }
}

/// One evolution request.
#[derive(Clone, Copy, Debug)]
pub struct EvolutionSpec<'a> {
    pub hamiltonian: &'a SparseOperator,
    pub duration: f64,
    pub options: EvolutionOptions,
}

/// e^{−iHt}ψ for a single duration.
pub fn evolve(spec: &EvolutionSpec, psi: &StateVector) -> Result<StateVector> {
    Propagator::new(spec.hamiltonian, spec.options)?.evolve(psi, spec.duration)
}

#[derive(Clone, Debug)]
enum Eigenvectors {
    Real(DMatrix<f64>),
    Complex(DMatrix<C64>),
}

#[derive(Clone, Debug)]
enum Engine<'a> {
    Dense {
        values: DVector<f64>,
        vectors: Eigenvectors,
    },
    Krylov {
        h: &'a SparseOperator,
        norm: f64,
    },
}

/// Reusable propagator for one Hamiltonian.
#[derive(Clone, Debug)]
pub struct Propagator<'a> {
    engine: Engine<'a>,
    options: EvolutionOptions,
    dim: usize,
}

impl<'a> Propagator<'a> {
    pub fn new(h: &'a SparseOperator, options: EvolutionOptions) -> Result<Self> {
        options.validate()?;
        let dim = h.dim();
        let scale = h.max_abs().max(1.0);
        if h.max_hermitian_deviation() > 1e-12 * scale {
            return invalid("evolution needs a Hermitian operator");
        }
        let dense = match options.method {
            Method::Auto => dim <= DENSE_LIMIT,
            Method::DenseExponential => true,
            Method::Krylov => false,
        };
        let engine = if dense {
            let (values, vectors) = if h.is_real() {
                let m = DMatrix::from_fn(dim, dim, |r, c| h.get(r, c).re);
                let eig = SymmetricEigen::try_new(m, f64::EPSILON, 10_000)
                    .ok_or_else(|| Error::Numerical("dense eigensolver did not converge".into()))?;
                (eig.eigenvalues, Eigenvectors::Real(eig.eigenvectors))
            } else {
                let eig = SymmetricEigen::try_new(h.to_dense(), f64::EPSILON, 10_000)
                    .ok_or_else(|| Error::Numerical("dense eigensolver did not converge".into()))?;
                (eig.eigenvalues, Eigenvectors::Complex(eig.eigenvectors))
            };
            Engine::Dense { values, vectors }
        } else {
            Engine::Krylov { h, norm: h.norm_inf() }
        };
        Ok(Self { engine, options, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.engine, Engine::Dense { .. })
    }

    /// Eigenvalues when the dense path is active.
    pub fn spectrum(&self) -> Option<&DVector<f64>> {
        match &self.engine {
            Engine::Dense { values, .. } => Some(values),
            Engine::Krylov { .. } => None,
        }
    }

    pub fn evolve(&self, psi: &StateVector, t: f64) -> Result<StateVector> {
        if psi.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: psi.dim(),
            });
        }
        if !t.is_finite() {
            return invalid("evolution time must be finite");
        }
        let out = match &self.engine {
            Engine::Dense { values, vectors } => {
                let c = project(vectors, psi.amplitudes());
                dense_apply(values, vectors, &c, t)
            }
            Engine::Krylov { h, norm } => krylov_evolve(h, *norm, psi.amplitudes(), t, &self.options)?,
        };
        let out = StateVector::new(out);
        check_norm(psi, &out)?;
        Ok(out)
    }

    /// States at several times from one initial state.
    pub fn evolve_many(&self, psi: &StateVector, times: &[f64]) -> Result<Vec<StateVector>> {
        match &self.engine {
            Engine::Dense { values, vectors } => {
                if psi.dim() != self.dim {
                    return Err(Error::DimensionMismatch {
                        expected: self.dim,
                        found: psi.dim(),
                    });
                }
                let c = project(vectors, psi.amplitudes());
                times
                    .iter()
                    .map(|&t| {
                        let out = StateVector::new(dense_apply(values, vectors, &c, t));
                        check_norm(psi, &out)?;
                        Ok(out)
                    })
                    .collect()
            }
            Engine::Krylov { .. } => {
                let mut out = Vec::with_capacity(times.len());
                let mut current = psi.clone();
                let mut now = 0.0;
                for &t in times {
                    current = self.evolve(&current, t - now)?;
                    now = t;
                    out.push(current.clone());
                }
                Ok(out)
            }
        }
    }
}

fn check_norm(before: &StateVector, after: &StateVector) -> Result<()> {
    let drift = (after.norm() - before.norm()).abs();
    if drift > 1e-9 {
        return Err(Error::Numerical(format!("norm drifted by {drift:e} during evolution")));
    }
    Ok(())
}

fn project(vectors: &Eigenvectors, x: &[C64]) -> Vec<C64> {
    match vectors {
        Eigenvectors::Real(v) => (0..v.ncols())
            .map(|k| v.column(k).iter().zip(x).map(|(a, b)| b * *a).sum())
            .collect(),
        Eigenvectors::Complex(v) => (0..v.ncols())
            .map(|k| v.column(k).iter().zip(x).map(|(a, b)| a.conj() * b).sum())
            .collect(),
    }
}

fn dense_apply(values: &DVector<f64>, vectors: &Eigenvectors, c: &[C64], t: f64) -> Vec<C64> {
    let phased: Vec<C64> = c
        .iter()
        .zip(values.iter())
        .map(|(a, &e)| a * C64::from_polar(1.0, -e * t))
        .collect();
    let n = phased.len();
    let mut out = vec![ZERO; n];
    match vectors {
        Eigenvectors::Real(v) => {
            for (k, p) in phased.iter().enumerate() {
                for (o, a) in out.iter_mut().zip(v.column(k).iter()) {
                    *o += p * *a;
                }
            }
        }
        Eigenvectors::Complex(v) => {
            for (k, p) in phased.iter().enumerate() {
                for (o, a) in out.iter_mut().zip(v.column(k).iter()) {
                    *o += p * a;
                }
            }
        }
    }
    out
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn vnorm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

struct KrylovStep {
    result: Vec<C64>,
    error: f64,
}

/// One Lanczos step of length τ from `v`, with a posteriori error estimate.
fn krylov_step(h: &SparseOperator, v: &[C64], tau: f64, m_max: usize) -> KrylovStep {
    let beta0 = vnorm(v);
    let n = v.len();
    if beta0 == 0.0 {
        return KrylovStep {
            result: vec![ZERO; n],
            error: 0.0,
        };
    }
    let m_max = m_max.min(n);
    let mut basis: Vec<Vec<C64>> = vec![v.iter().map(|x| x / beta0).collect()];
    let mut alpha = Vec::with_capacity(m_max);
    let mut beta = Vec::with_capacity(m_max);
    let mut residual = 0.0;
    for j in 0..m_max {
        let mut w = h.matvec(&basis[j]);
        alpha.push(dot(&basis[j], &w).re);
        // Full reorthogonalization, twice for stability.
        for _ in 0..2 {
            for q in &basis {
                let c = dot(q, &w);
                w.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
            }
        }
        let b = vnorm(&w);
        if b < 1e-12 * (1.0 + h.max_abs()) || j + 1 == m_max {
            residual = if j + 1 == m_max { b } else { 0.0 };
            break;
        }
        beta.push(b);
        basis.push(w.iter().map(|x| x / b).collect());
    }
    let m = alpha.len();
    let t = DMatrix::from_fn(m, m, |r, c| {
        if r == c {
            alpha[r]
        } else if r + 1 == c {
            beta[r]
        } else if c + 1 == r {
            beta[c]
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(t);
    // y = exp(−iτT) e1
    let mut y = vec![ZERO; m];
    for k in 0..m {
        let w = eig.eigenvectors[(0, k)] * C64::from_polar(1.0, -eig.eigenvalues[k] * tau);
        for (r, yr) in y.iter_mut().enumerate() {
            *yr += w * eig.eigenvectors[(r, k)];
        }
    }
    let mut result = vec![ZERO; n];
    for (q, c) in basis.iter().zip(&y) {
        let c = c * beta0;
        result.iter_mut().zip(q).for_each(|(x, b)| *x += c * b);
    }
    KrylovStep {
        result,
        error: beta0 * residual * y[m - 1].norm(),
    }
}

fn krylov_evolve(h: &SparseOperator, norm: f64, psi: &[C64], t: f64, opts: &EvolutionOptions) -> Result<Vec<C64>> {
    if t == 0.0 || norm == 0.0 {
        return Ok(psi.to_vec());
    }
    let total = t.abs();
    let sign = t.signum();
    let mut v = psi.to_vec();
    let mut done = 0.0;
    let mut tau = total.min(10.0 / norm);
    let floor = total * 1e-12;
    while done < total {
        tau = tau.min(total - done);
        loop {
            let step = krylov_step(h, &v, sign * tau, opts.max_krylov_dim);
            let budget = opts.tolerance * tau / total;
            if step.error <= budget {
                v = step.result;
                done += tau;
                if step.error < 0.1 * budget {
                    tau *= 1.5;
                }
                break;
            }
            tau *= 0.5;
            if tau < floor {
                return Err(Error::Numerical(format!(
                    "Krylov step fell below the floor at t = {done:e} (error {:e})",
                    step.error
                )));
            }
        }
    }
    Ok(v)
}
