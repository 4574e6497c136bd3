//! Cluster-state echo protocol, stabilizers, OTOCs and the full-model benchmark.
//!
//! Every protocol runs on a [`ChainSystem`], which is either the effective spin chain
//! (dimension 2^L) or the microscopic Hubbard chain with its decoherence-free subspace.
//! Observables are always evaluated on the logical projection of the state.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dfs::{Complement, LogicalRegister};
use crate::error::{invalid, Error, Result};
use crate::evolve::{EvolutionOptions, Propagator, DENSE_LIMIT};
use crate::fock::build_hubbard;
use crate::linalg::{rotation, Axis, Pauli, SparseOperator, StateVector, C64, ZERO};
use crate::spinchain::{apply_local, build_h_ex_full_with, pauli_expectation, plus_x_state, FieldModel, SpinOperator};
use crate::sw::{coupling_constants, SpinChainParams};
use crate::ModelParams;

pub use crate::linalg::fidelity;

/// Largest Fock dimension accepted by [`benchmark_sigma_x`].
pub const BENCHMARK_LIMIT: usize = DENSE_LIMIT;
/// Largest Fock dimension accepted for any microscopic chain.
pub const FOCK_LIMIT: usize = 1 << 22;
/// Relative mismatch allowed between |J_⊥(B)| and |J_⊥(B′)| in an OTOC quench.
pub const QUENCH_MATCH_TOLERANCE: f64 = 0.1;

#[derive(Clone, Debug)]
enum Embedding {
    Spin,
    Fock(LogicalRegister),
}

/// A Hamiltonian together with the way logical qubits live in its Hilbert space.
#[derive(Clone, Debug)]
pub struct ChainSystem {
    hamiltonian: SparseOperator,
    sites: usize,
    embedding: Embedding,
}

impl ChainSystem {
    pub fn spin(op: SpinOperator) -> Self {
        let sites = op.sites();
        Self {
            hamiltonian: op.into_operator(),
            sites,
            embedding: Embedding::Spin,
        }
    }

    pub fn fock(hamiltonian: SparseOperator, register: LogicalRegister) -> Result<Self> {
        if hamiltonian.dim() != register.fock_dim() {
            return Err(Error::DimensionMismatch {
                expected: register.fock_dim(),
                found: hamiltonian.dim(),
            });
        }
        Ok(Self {
            hamiltonian,
            sites: register.sites(),
            embedding: Embedding::Fock(register),
        })
    }

    /// Effective spin chain at gradient `b`.
    pub fn spin_model(params: &ModelParams, b: f64, sites: usize, fields: FieldModel) -> Result<Self> {
        let p = coupling_constants(params, b)?.with_sites(sites);
        Ok(Self::spin(build_h_ex_full_with(&p, fields)?))
    }

    /// Full two-band Hubbard chain in the one-g-per-site sector.
    pub fn hubbard(params: &ModelParams, b: f64, sites: usize) -> Result<Self> {
        let dim = one_g_sector_dim(sites);
        if dim > FOCK_LIMIT as u128 {
            return Err(Error::TooLarge {
                dimension: usize::try_from(dim).unwrap_or(usize::MAX),
                limit: FOCK_LIMIT,
                suggestion: largest_sites_within(FOCK_LIMIT),
            });
        }
        let register = LogicalRegister::chain(sites)?;
        let h = build_hubbard(register.basis(), params, b)?;
        Self::fock(h, register)
    }

    pub fn hamiltonian(&self) -> &SparseOperator {
        &self.hamiltonian
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    pub fn is_fock(&self) -> bool {
        matches!(self.embedding, Embedding::Fock(_))
    }

    /// ∏_j |⇒⟩_j in the system's own Hilbert space.
    pub fn initial_state(&self) -> StateVector {
        match &self.embedding {
            Embedding::Spin => plus_x_state(self.sites),
            Embedding::Fock(reg) => reg.all_right(),
        }
    }

    /// Logical-basis amplitudes (subnormalized when population has leaked out).
    pub fn logical(&self, psi: &StateVector) -> StateVector {
        match &self.embedding {
            Embedding::Spin => psi.clone(),
            Embedding::Fock(reg) => reg.to_logical(psi),
        }
    }

    /// Population inside the decoherence-free subspace.
    pub fn dfs_population(&self, psi: &StateVector) -> f64 {
        match &self.embedding {
            Embedding::Spin => psi.norm().powi(2),
            Embedding::Fock(reg) => reg.slots().iter().map(|&k| psi.amplitudes()[k].norm_sqr()).sum(),
        }
    }

    /// exp(−iθ/2 Σ_j σ_j^axis); identity outside the subspace.
    pub fn rotate_all(&self, psi: &StateVector, axis: Axis, theta: f64) -> Result<StateVector> {
        let r = rotation(axis, theta);
        match &self.embedding {
            Embedding::Spin => Ok((0..self.sites).fold(psi.clone(), |acc, j| apply_local(&acc, j, &r))),
            Embedding::Fock(reg) => {
                let factors: Vec<_> = (0..self.sites).map(|j| (j, r)).collect();
                reg.apply_product(psi, &factors, Complement::Identity)
            }
        }
    }

    /// ⟨Σ_j σ_j^x⟩ with the Paulis embedded in the subspace.
    pub fn sigma_x_total(&self, psi: &StateVector) -> f64 {
        let logical = self.logical(psi);
        (0..self.sites).map(|j| pauli_expectation(&logical, &[(j, Pauli::X)]).re).sum()
    }
}

/// Number of Fock states with one g atom per site and L atoms of each spin.
pub fn one_g_sector_dim(sites: usize) -> u128 {
    // counts[u][d]: ways to reach u up and d down spins so far.
    let n = sites;
    let mut counts = vec![vec![0u128; 2 * n + 1]; 2 * n + 1];
    counts[0][0] = 1;
    // Per site: g↑ or g↓, and e empty, ↑, ↓ or ↑↓.
    let site_moves: [(usize, usize); 8] = [(1, 0), (2, 0), (1, 1), (2, 1), (0, 1), (1, 1), (0, 2), (1, 2)];
    for _ in 0..n {
        let mut next = vec![vec![0u128; 2 * n + 1]; 2 * n + 1];
        for u in 0..=2 * n {
            for d in 0..=2 * n {
                let c = counts[u][d];
                if c == 0 {
                    continue;
                }
                for &(du, dd) in &site_moves {
                    if u + du <= 2 * n && d + dd <= 2 * n {
                        next[u + du][d + dd] += c;
                    }
                }
            }
        }
        counts = next;
    }
    counts[n][n]
}

fn largest_sites_within(limit: usize) -> usize {
    (1..=64).take_while(|&l| one_g_sector_dim(l) <= limit as u128).last().unwrap_or(0)
}

/// Plain-data value stored in protocol metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MetaValue {
    Flag(bool),
    Integer(i64),
    Number(f64),
    Text(String),
}

impl From<f64> for MetaValue {
    fn from(v: f64) -> Self {
        Self::Number(v)
    }
}

impl From<usize> for MetaValue {
    fn from(v: usize) -> Self {
        Self::Integer(v as i64)
    }
}

impl From<bool> for MetaValue {
    fn from(v: bool) -> Self {
        Self::Flag(v)
    }
}

impl From<&str> for MetaValue {
    fn from(v: &str) -> Self {
        Self::Text(v.to_owned())
    }
}

impl From<String> for MetaValue {
    fn from(v: String) -> Self {
        Self::Text(v)
    }
}

/// Time series plus the parameters that produced them.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProtocolResult {
    pub times: Vec<f64>,
    pub series: BTreeMap<String, Vec<f64>>,
    pub metadata: BTreeMap<String, MetaValue>,
    pub summary: BTreeMap<String, f64>,
}

impl ProtocolResult {
    pub fn with_times(times: Vec<f64>) -> Self {
        Self {
            times,
            ..Self::default()
        }
    }

    pub fn insert_series(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        if values.len() != self.times.len() {
            return Err(Error::DimensionMismatch {
                expected: self.times.len(),
                found: values.len(),
            });
        }
        self.series.insert(name.into(), values);
        Ok(())
    }

    pub fn meta(&mut self, key: &str, value: impl Into<MetaValue>) {
        self.metadata.insert(key.to_owned(), value.into());
    }

    pub fn series(&self, name: &str) -> Option<&[f64]> {
        self.series.get(name).map(Vec::as_slice)
    }

    /// Value of a series at the last time point.
    pub fn final_value(&self, name: &str) -> Option<f64> {
        self.series(name).and_then(|s| s.last().copied())
    }
}

/// ∏_j |⇒⟩_j in spin space.
pub fn initial_plus_x(sites: usize) -> StateVector {
    plus_x_state(sites)
}

/// ∏_j |1001⟩_j in the Fock sector of `register`.
pub fn initial_plus_x_fock(register: &LogicalRegister) -> StateVector {
    register.all_right()
}

fn z_value(b: usize, site: usize) -> f64 {
    if b >> site & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

fn ising_energy(b: usize, sites: usize, j_zz: f64, j_z: f64) -> f64 {
    let zz: f64 = (0..sites - 1).map(|j| z_value(b, j) * z_value(b, j + 1)).sum();
    let z: f64 = (0..sites).map(|j| z_value(b, j)).sum();
    j_zz * zz + j_z * z
}

/// ∏_⟨ij⟩ exp[−iπ/4 (σz_iσz_j − σz_i − σz_j)] ∏_j|⇒⟩_j, evaluated in the diagonal basis.
pub fn ideal_cluster_state(sites: usize) -> Result<StateVector> {
    if !(2..=24).contains(&sites) {
        return invalid(format!("cluster state of {sites} sites outside 2..=24"));
    }
    let dim = 1usize << sites;
    let norm = (dim as f64).sqrt().recip();
    let amps = (0..dim)
        .map(|b| {
            let phase: f64 = (0..sites - 1)
                .map(|j| {
                    let (zi, zj) = (z_value(b, j), z_value(b, j + 1));
                    -FRAC_PI_4 * (zi * zj - zi - zj)
                })
                .sum();
            C64::from_polar(norm, phase)
        })
        .collect();
    Ok(StateVector::new(amps))
}

/// Direction of the Ising coupling; decides the sign of the edge compensation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sense {
    Positive,
    Negative,
}

impl Sense {
    pub fn of(x: f64) -> Self {
        if x < 0.0 {
            Self::Negative
        } else {
            Self::Positive
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Self::Positive => 1.0,
            Self::Negative => -1.0,
        }
    }
}

/// t_c = π/(4J_zz) with J_zz = (J_⊥ − J_∥)/2. Negative couplings are rejected.
pub fn cluster_time(p: &SpinChainParams) -> Result<f64> {
    let j_zz = 0.5 * (p.j_perp - p.j_par);
    if j_zz == 0.0 {
        return invalid("J_zz = 0: the Ising coupling vanishes and no cluster time exists");
    }
    if j_zz < 0.0 {
        return Err(Error::Domain(format!(
            "J_zz = {j_zz:e} < 0 gives a negative cluster time; move the gradient to the other side of the resonance"
        )));
    }
    Ok(PI / (4.0 * j_zz))
}

/// Durations of the echo protocol for either sign of the couplings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterTiming {
    pub j_zz: f64,
    pub j_z: f64,
    /// Signed π/(4J_zz).
    pub t_c: f64,
    /// Length of the evolve-echo-evolve block, |t_c|.
    pub echo_duration: f64,
    /// π/(2J_z) reduced into [0, π/|J_z|).
    pub final_segment: f64,
    pub sense: Sense,
}

impl ClusterTiming {
    pub fn total(&self) -> f64 {
        self.echo_duration + self.final_segment
    }
}

pub fn cluster_timing(p: &SpinChainParams) -> Result<ClusterTiming> {
    let j_zz = 0.5 * (p.j_perp - p.j_par);
    if j_zz == 0.0 || !j_zz.is_finite() {
        return invalid("J_zz must be finite and nonzero for the cluster protocol");
    }
    if p.j_z == 0.0 || !p.j_z.is_finite() {
        return invalid("J_z must be finite and nonzero for the final rotation");
    }
    let t_c = PI / (4.0 * j_zz);
    let period = PI / p.j_z.abs();
    Ok(ClusterTiming {
        j_zz,
        j_z: p.j_z,
        t_c,
        echo_duration: t_c.abs(),
        final_segment: (FRAC_PI_2 / p.j_z).rem_euclid(period),
        sense: Sense::of(j_zz),
    })
}

/// How the open ends enter the stabilizers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeRule {
    /// Drop the missing σz factor only.
    Bare,
    /// Also rotate the edge site by e^{∓iπσz/4} first, compensating the vacant link.
    Compensated(Sense),
}

/// ⟨K_j⟩ = ⟨σx_j σz_{j−1} σz_{j+1}⟩ for every site of a logical state.
pub fn stabilizer_expectations(logical: &StateVector, sites: usize, rule: EdgeRule) -> Result<Vec<f64>> {
    if sites < 2 || logical.dim() != 1 << sites {
        return invalid(format!("state of dimension {} is not a {sites}-site chain", logical.dim()));
    }
    let edge_state = |site: usize| match rule {
        EdgeRule::Bare => logical.clone(),
        EdgeRule::Compensated(sense) => apply_local(logical, site, &rotation(Axis::Z, sense.sign() * FRAC_PI_2)),
    };
    Ok((0..sites)
        .map(|j| {
            let mut string = vec![(j, Pauli::X)];
            if j > 0 {
                string.push((j - 1, Pauli::Z));
            }
            if j + 1 < sites {
                string.push((j + 1, Pauli::Z));
            }
            if j == 0 || j + 1 == sites {
                pauli_expectation(&edge_state(j), &string).re
            } else {
                pauli_expectation(logical, &string).re
            }
        })
        .collect())
}

/// Logical state of the ideal Ising chain after running the echo protocol up to time `s`.
pub fn ideal_echo_reference(timing: &ClusterTiming, sites: usize, s: f64) -> StateVector {
    let dim = 1usize << sites;
    let all = dim - 1;
    let norm = (dim as f64).sqrt().recip();
    let half = 0.5 * timing.echo_duration;
    let energy = |b: usize| ising_energy(b, sites, timing.j_zz, timing.j_z);
    // Π = (−i)^L ∏σx maps b to its complement.
    let pulse = C64::new(0.0, -1.0).powu(sites as u32);
    let amps = (0..dim)
        .map(|b| {
            if s <= half {
                C64::from_polar(norm, -energy(b) * s)
            } else {
                let before = C64::from_polar(norm, -energy(b ^ all) * half);
                pulse * before * C64::from_polar(1.0, -energy(b) * (s - half))
            }
        })
        .collect();
    StateVector::new(amps)
}

/// Sampling of the echo protocol.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EchoOptions {
    /// Time points per evolution segment (three segments).
    pub samples_per_segment: usize,
    pub evolution: EvolutionOptions,
}

impl Default for EchoOptions {
    fn default() -> Self {
        Self {
            samples_per_segment: 40,
            evolution: EvolutionOptions::default(),
        }
    }
}

/// e^{−iH t_f} · e^{−iH|t_c|/2} Π e^{−iH|t_c|/2} applied to ∏|⇒⟩, sampled along the way.
///
/// Couplings `p` fix the timing and the ideal Ising reference. Stabilizers use the
/// compensated edge rule with the sense of J_zz.
pub fn echo_cluster_protocol(system: &ChainSystem, p: &SpinChainParams, options: &EchoOptions) -> Result<ProtocolResult> {
    if options.samples_per_segment == 0 {
        return invalid("at least one sample per segment is required");
    }
    let timing = cluster_timing(p)?;
    let sites = system.sites();
    let prop = Propagator::new(system.hamiltonian(), options.evolution)?;
    let rule = EdgeRule::Compensated(timing.sense);
    let half = 0.5 * timing.echo_duration;
    let n = options.samples_per_segment;

    let mut times = vec![0.0];
    let mut stab_rows: Vec<Vec<f64>> = Vec::new();
    let mut sx = Vec::new();
    let mut fid = Vec::new();
    let mut leak = Vec::new();
    let mut record = |psi: &StateVector, s: f64| -> Result<()> {
        let logical = system.logical(psi);
        stab_rows.push(stabilizer_expectations(&logical, sites, rule)?);
        sx.push(system.sigma_x_total(psi));
        fid.push(fidelity(&ideal_echo_reference(&timing, sites, s), &logical)?);
        leak.push(system.dfs_population(psi));
        Ok(())
    };

    let mut psi = system.initial_state();
    record(&psi, 0.0)?;
    let segments = [(0.0, half), (half, half), (timing.echo_duration, timing.final_segment)];
    for (k, &(start, length)) in segments.iter().enumerate() {
        if k == 1 {
            psi = system.rotate_all(&psi, Axis::X, PI)?;
        }
        let dt = length / n as f64;
        for i in 1..=n {
            psi = prop.evolve(&psi, dt)?;
            let s = if i == n { start + length } else { start + dt * i as f64 };
            times.push(s);
            record(&psi, s)?;
        }
    }

    let mut result = ProtocolResult::with_times(times);
    for j in 0..sites {
        result.insert_series(format!("stabilizer_{j}"), stab_rows.iter().map(|r| r[j]).collect())?;
    }
    let avg: Vec<f64> = stab_rows.iter().map(|r| r.iter().sum::<f64>() / sites as f64).collect();
    result.insert_series("stabilizer_avg", avg)?;
    result.insert_series("sigma_x_total", sx)?;
    result.insert_series("fidelity", fid)?;
    result.insert_series("dfs_population", leak)?;

    result.meta("protocol", "echo-cluster");
    result.meta("model", if system.is_fock() { "hubbard" } else { "spin" });
    result.meta("sites", sites);
    result.meta("hilbert_dim", system.dim());
    result.meta("j_par", p.j_par);
    result.meta("j_perp", p.j_perp);
    result.meta("j_xz", p.j_xz);
    result.meta("j_z", p.j_z);
    result.meta("j_zz", timing.j_zz);
    result.meta("b", p.b);
    result.meta("edge_rule", format!("compensated-{}", if timing.sense == Sense::Positive { "positive" } else { "negative" }));
    result.meta("samples_per_segment", n);
    result.meta("tolerance", options.evolution.tolerance);

    for key in ["stabilizer_avg", "fidelity", "dfs_population"] {
        let v = result.final_value(key).unwrap_or(f64::NAN);
        result.summary.insert(format!("{key}_final"), v);
    }
    result.summary.insert("t_c".into(), timing.t_c);
    result.summary.insert("final_segment".into(), timing.final_segment);
    result.summary.insert("total_time".into(), timing.total());
    Ok(result)
}

/// How the second half of the OTOC sequence undoes the first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reversal {
    /// Apply the exact inverse of the forward echo sandwich.
    Exact,
    /// Run the echo sandwich again with the gradient quenched to B′.
    Quench,
}

/// The rotation-angle grid θ_n = 2πn/L.
pub fn theta_grid(sites: usize) -> Vec<f64> {
    (0..sites).map(|n| 2.0 * PI * n as f64 / sites as f64).collect()
}

/// Backward half of the OTOC sequence.
#[derive(Clone, Copy, Debug)]
pub enum Backward<'a> {
    Inverse,
    Evolve(&'a SparseOperator),
}

/// Per-θ, per-site complex values ⟨ψ0|W† σx_j W|ψ0⟩ on a spin chain, with
/// W = U_back R(θ) U(t), U(t) = e^{−iHt/2} Π e^{−iHt/2}, R(θ) = e^{−iθΣσx/2}.
pub fn otoc_values(
    forward: &SparseOperator,
    backward: Backward<'_>,
    sites: usize,
    t: f64,
    thetas: &[f64],
    options: EvolutionOptions,
) -> Result<Vec<Vec<C64>>> {
    if forward.dim() != 1 << sites {
        return Err(Error::DimensionMismatch {
            expected: 1 << sites,
            found: forward.dim(),
        });
    }
    if !(t >= 0.0 && t.is_finite()) {
        return invalid(format!("OTOC time {t} must be finite and non-negative"));
    }
    let fwd = Propagator::new(forward, options)?;
    let bwd = match backward {
        Backward::Inverse => None,
        Backward::Evolve(h) => {
            if h.dim() != forward.dim() {
                return Err(Error::DimensionMismatch {
                    expected: forward.dim(),
                    found: h.dim(),
                });
            }
            Some(Propagator::new(h, options)?)
        }
    };
    let spin = |op: &Propagator, psi: &StateVector, dt: f64, pulse: f64| -> Result<StateVector> {
        let a = op.evolve(psi, dt)?;
        let b = (0..sites).fold(a, |acc, j| apply_local(&acc, j, &rotation(Axis::X, pulse)));
        op.evolve(&b, dt)
    };
    let psi0 = plus_x_state(sites);
    let after_forward = spin(&fwd, &psi0, 0.5 * t, PI)?;
    thetas
        .par_iter()
        .map(|&theta| {
            let r = rotation(Axis::X, theta);
            let rotated = (0..sites).fold(after_forward.clone(), |acc, j| apply_local(&acc, j, &r));
            let phi = match &bwd {
                None => spin(&fwd, &rotated, -0.5 * t, -PI)?,
                Some(b) => spin(b, &rotated, 0.5 * t, PI)?,
            };
            Ok((0..sites).map(|j| pauli_expectation(&phi, &[(j, Pauli::X)])).collect())
        })
        .collect()
}

/// Σ_n e^{imθ_n} C(θ_n), optionally divided by L. The grid must be exactly {2πn/L}.
pub fn otoc_fourier(thetas: &[f64], values: &[f64], m: usize, normalize: bool) -> Result<C64> {
    let l = thetas.len();
    if l == 0 || values.len() != l {
        return invalid("Fourier transform needs one value per grid angle");
    }
    if m >= l {
        return invalid(format!("Fourier index {m} outside 0..{l}"));
    }
    for (n, &th) in thetas.iter().enumerate() {
        let expect = 2.0 * PI * n as f64 / l as f64;
        if (th - expect).abs() > 1e-12 {
            return invalid(format!("grid angle {n} is {th}, expected 2π·{n}/{l}"));
        }
    }
    let sum: C64 = thetas
        .iter()
        .zip(values)
        .map(|(&th, &c)| C64::from_polar(c, m as f64 * th))
        .sum();
    Ok(if normalize { sum / l as f64 } else { sum })
}

/// OTOC experiment on the effective spin chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OtocSpec {
    pub sites: usize,
    pub times: Vec<f64>,
    pub b: f64,
    pub b_prime: f64,
    pub reversal: Reversal,
    pub field_model: FieldModel,
    /// Divide the Fourier sums by L.
    pub normalize: bool,
}

impl OtocSpec {
    /// The L = 8, B/J = 350 → 370 quench.
    pub fn reference(times: Vec<f64>) -> Self {
        Self {
            sites: 8,
            times,
            b: 350.0,
            b_prime: 370.0,
            reversal: Reversal::Quench,
            field_model: FieldModel::Uniform,
            normalize: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OtocResult {
    pub times: Vec<f64>,
    pub thetas: Vec<f64>,
    /// [time][θ] site average.
    pub average: Vec<Vec<f64>>,
    /// [time][θ][site].
    pub per_site: Vec<Vec<Vec<f64>>>,
    /// [time][m] transform of the site average.
    pub fourier: Vec<Vec<C64>>,
    /// Largest |Im C| encountered.
    pub max_imaginary: f64,
    /// Largest |C(θ = 0) − 1|, zero for exact reversal up to rounding.
    pub theta_zero_deviation: f64,
    pub forward: SpinChainParams,
    pub backward: SpinChainParams,
    pub normalize: bool,
}

impl OtocResult {
    pub fn to_protocol_result(&self, spec: &OtocSpec) -> Result<ProtocolResult> {
        let mut r = ProtocolResult::with_times(self.times.clone());
        for (n, _) in self.thetas.iter().enumerate() {
            r.insert_series(format!("otoc_avg_n{n}"), self.average.iter().map(|row| row[n]).collect())?;
            for j in 0..spec.sites {
                r.insert_series(format!("otoc_n{n}_site{j}"), self.per_site.iter().map(|row| row[n][j]).collect())?;
            }
        }
        for m in 0..self.thetas.len() {
            r.insert_series(format!("fourier_re_m{m}"), self.fourier.iter().map(|row| row[m].re).collect())?;
            r.insert_series(format!("fourier_im_m{m}"), self.fourier.iter().map(|row| row[m].im).collect())?;
            r.insert_series(format!("fourier_abs_m{m}"), self.fourier.iter().map(|row| row[m].norm()).collect())?;
        }
        r.meta("protocol", "otoc");
        r.meta("sites", spec.sites);
        r.meta("b", spec.b);
        r.meta("b_prime", spec.b_prime);
        r.meta("reversal", match spec.reversal {
            Reversal::Exact => "exact",
            Reversal::Quench => "quench",
        });
        r.meta("field_model", match spec.field_model {
            FieldModel::Uniform => "uniform",
            FieldModel::LinkSummed => "link-summed",
        });
        r.meta("fourier_normalization", if self.normalize { "1/L" } else { "none" });
        r.meta("j_perp_forward", self.forward.j_perp);
        r.meta("j_perp_backward", self.backward.j_perp);
        r.meta("j_zz_forward", self.forward.j_zz);
        r.meta("j_zz_backward", self.backward.j_zz);
        r.summary.insert("max_imaginary".into(), self.max_imaginary);
        r.summary.insert("theta_zero_deviation".into(), self.theta_zero_deviation);
        Ok(r)
    }
}

/// Couplings on both sides of the quench, checking |J_⊥(B)| ≈ |J_⊥(B′)|.
pub fn matched_quench(params: &ModelParams, b: f64, b_prime: f64, sites: usize) -> Result<(SpinChainParams, SpinChainParams)> {
    let fwd = coupling_constants(params, b)?.with_sites(sites);
    let bwd = SpinChainParams {
        b_prime: Some(b_prime),
        ..coupling_constants(params, b_prime)?.with_sites(sites)
    };
    let (a, c) = (fwd.j_perp.abs(), bwd.j_perp.abs());
    let mismatch = (a - c).abs() / a.max(c);
    if !(mismatch <= QUENCH_MATCH_TOLERANCE) {
        return invalid(format!(
            "quench B = {b} → B′ = {b_prime} has |J_⊥| = {a:e} vs {c:e}, mismatch {mismatch:.3} above {QUENCH_MATCH_TOLERANCE}"
        ));
    }
    Ok((SpinChainParams { b_prime: Some(b_prime), ..fwd }, bwd))
}

pub fn otoc(spec: &OtocSpec, params: &ModelParams, options: EvolutionOptions) -> Result<OtocResult> {
    if spec.sites < 2 {
        return invalid("OTOC needs at least two sites");
    }
    if spec.times.is_empty() {
        return invalid("OTOC needs at least one time");
    }
    let (fwd, bwd) = matched_quench(params, spec.b, spec.b_prime, spec.sites)?;
    let h_f = build_h_ex_full_with(&fwd, spec.field_model)?;
    let h_b = build_h_ex_full_with(&bwd, spec.field_model)?;
    let backward = match spec.reversal {
        Reversal::Exact => Backward::Inverse,
        Reversal::Quench => Backward::Evolve(h_b.operator()),
    };
    let thetas = theta_grid(spec.sites);
    let mut average = Vec::new();
    let mut per_site = Vec::new();
    let mut fourier = Vec::new();
    let mut max_imaginary: f64 = 0.0;
    let mut theta_zero_deviation: f64 = 0.0;
    for &t in &spec.times {
        let vals = otoc_values(h_f.operator(), backward, spec.sites, t, &thetas, options)?;
        let mut avg_row = Vec::with_capacity(thetas.len());
        let mut site_row = Vec::with_capacity(thetas.len());
        for row in &vals {
            max_imaginary = row.iter().fold(max_imaginary, |m, c| m.max(c.im.abs()));
            let re: Vec<f64> = row.iter().map(|c| c.re).collect();
            avg_row.push(re.iter().sum::<f64>() / spec.sites as f64);
            site_row.push(re);
        }
        theta_zero_deviation = theta_zero_deviation.max((avg_row[0] - 1.0).abs());
        let f = (0..thetas.len())
            .map(|m| otoc_fourier(&thetas, &avg_row, m, spec.normalize))
            .collect::<Result<Vec<_>>>()?;
        average.push(avg_row);
        per_site.push(site_row);
        fourier.push(f);
    }
    Ok(OtocResult {
        times: spec.times.clone(),
        thetas,
        average,
        per_site,
        fourier,
        max_imaginary,
        theta_zero_deviation,
        forward: fwd,
        backward: bwd,
        normalize: spec.normalize,
    })
}

/// Full Hubbard versus spin-chain ⟨Σσx⟩ comparison.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub sites: usize,
    pub b: f64,
    /// End of the time window; `None` means 2|t_c|.
    pub t_max: Option<f64>,
    pub samples: usize,
    pub field_model: FieldModel,
}

impl BenchmarkSpec {
    pub fn new(sites: usize, b: f64) -> Self {
        Self {
            sites,
            b,
            t_max: None,
            samples: 400,
            field_model: FieldModel::LinkSummed,
        }
    }
}

pub fn benchmark_sigma_x(params: &ModelParams, spec: &BenchmarkSpec, options: EvolutionOptions) -> Result<ProtocolResult> {
    if spec.sites < 2 {
        return invalid("benchmark needs at least two sites");
    }
    if spec.samples == 0 {
        return invalid("benchmark needs at least one sample");
    }
    let dim = one_g_sector_dim(spec.sites);
    if dim > BENCHMARK_LIMIT as u128 {
        return Err(Error::TooLarge {
            dimension: usize::try_from(dim).unwrap_or(usize::MAX),
            limit: BENCHMARK_LIMIT,
            suggestion: largest_sites_within(BENCHMARK_LIMIT),
        });
    }
    let p = coupling_constants(params, spec.b)?.with_sites(spec.sites);
    let t_max = match spec.t_max {
        Some(t) if t > 0.0 && t.is_finite() => t,
        Some(t) => return invalid(format!("t_max = {t} must be positive")),
        None => 2.0 * cluster_timing(&p)?.echo_duration,
    };
    let full = ChainSystem::hubbard(params, spec.b, spec.sites)?;
    let spin = ChainSystem::spin(build_h_ex_full_with(&p, spec.field_model)?);
    let times: Vec<f64> = (0..=spec.samples).map(|k| t_max * k as f64 / spec.samples as f64).collect();
    let run = |sys: &ChainSystem| -> Result<(Vec<f64>, Vec<f64>)> {
        let prop = Propagator::new(sys.hamiltonian(), options)?;
        let states = prop.evolve_many(&sys.initial_state(), &times)?;
        Ok((
            states.iter().map(|s| sys.sigma_x_total(s)).collect(),
            states.iter().map(|s| sys.dfs_population(s)).collect(),
        ))
    };
    let (sx_full, pop) = run(&full)?;
    let (sx_spin, _) = run(&spin)?;
    let diff: Vec<f64> = sx_full.iter().zip(&sx_spin).map(|(a, b)| (a - b).abs()).collect();
    let max_diff = diff.iter().fold(0.0f64, |m, &d| m.max(d));

    let mut r = ProtocolResult::with_times(times);
    r.insert_series("sigma_x_full", sx_full)?;
    r.insert_series("sigma_x_spin", sx_spin)?;
    r.insert_series("discrepancy", diff)?;
    r.insert_series("dfs_population", pop)?;
    r.meta("protocol", "benchmark-sigma-x");
    r.meta("sites", spec.sites);
    r.meta("b", spec.b);
    r.meta("fock_dim", full.dim());
    r.meta("field_model", match spec.field_model {
        FieldModel::Uniform => "uniform",
        FieldModel::LinkSummed => "link-summed",
    });
    r.meta("tunneling", params.tunneling);
    r.meta("u_ee", params.u_ee);
    r.meta("u_gg", params.u_gg);
    r.meta("u_eg", params.u_eg);
    r.summary.insert("max_discrepancy".into(), max_diff);
    r.summary.insert("t_max".into(), t_max);
    Ok(r)
}

/// ⟨ψ|ψ⟩ restricted to the computational-basis states of one site, used for reduced purities.
pub fn single_site_purity(logical: &StateVector, sites: usize, site: usize) -> Result<f64> {
    if logical.dim() != 1 << sites || site >= sites {
        return invalid("site outside the chain");
    }
    let a = logical.amplitudes();
    let mask = 1usize << site;
    let mut rho = [[ZERO; 2]; 2];
    for b in 0..a.len() {
        if b & mask != 0 {
            continue;
        }
        let pair = [a[b], a[b | mask]];
        for r in 0..2 {
            for c in 0..2 {
                rho[r][c] += pair[r] * pair[c].conj();
            }
        }
    }
    Ok((0..2).flat_map(|r| (0..2).map(move |c| (r, c))).map(|(r, c)| (rho[r][c] * rho[c][r]).re).sum())
}
