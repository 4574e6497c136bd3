//! Bloch bands, Wannier functions and Hubbard parameters of a separable cubic lattice
//! V_ν sin²(πν/a) along each axis.
//!
//! Energies leave this module in h-units (Hz). Internally the single-particle problem is
//! solved in units of the recoil energy with momenta in units of k = π/a.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fock::{site_band, InteractionTensor};
use crate::linalg::C64;
use crate::ModelParams;

pub const HBAR: f64 = 1.054_571_817e-34;
pub const PLANCK: f64 = 6.626_070_15e-34;
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;
pub const BOHR_RADIUS: f64 = 5.291_772_109_03e-11;

/// Largest boundary-period probability allowed for a Wannier function.
pub const TAIL_LIMIT: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    X,
    Y,
    Z,
}

impl Direction {
    pub const ALL: [Direction; 3] = [Direction::X, Direction::Y, Direction::Z];

    fn index(self) -> usize {
        self as usize
    }
}

/// Physical lattice and atom inputs plus numerical resolution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeConfig {
    /// kg
    pub mass: f64,
    /// m, any sign
    pub scattering_length: f64,
    /// m
    pub spacing: f64,
    /// V_ν / E_r
    pub depths: [f64; 3],
    /// Reciprocal-lattice vectors kept on each side of the origin.
    pub planewave_cutoff: usize,
    /// Real-space samples per lattice period.
    pub grid_points: usize,
    /// Half-width of the integration window in lattice periods.
    pub quadrature_periods: usize,
}

impl LatticeConfig {
    /// ⁴⁰K at a_s = 120 a₀, a = 527 nm, depths (40, 60, 60) E_r.
    pub fn reference() -> Self {
        Self {
            mass: 40.0 * ATOMIC_MASS_UNIT,
            scattering_length: 120.0 * BOHR_RADIUS,
            spacing: 527e-9,
            depths: [40.0, 60.0, 60.0],
            planewave_cutoff: 20,
            grid_points: 128,
            quadrature_periods: 5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return invalid(format!("mass {} must be positive", self.mass));
        }
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return invalid(format!("lattice spacing {} must be positive", self.spacing));
        }
        if !self.scattering_length.is_finite() {
            return invalid("scattering length must be finite");
        }
        for (d, v) in Direction::ALL.iter().zip(self.depths) {
            if !(v > 0.0 && v.is_finite()) {
                return invalid(format!("lattice depth along {d:?} is {v}; it must be positive"));
            }
        }
        if self.planewave_cutoff < 16 {
            return invalid(format!("planewave cutoff {} below the floor of 16", self.planewave_cutoff));
        }
        if self.grid_points < 64 {
            return invalid(format!("{} grid points per period below the floor of 64", self.grid_points));
        }
        if self.quadrature_periods < 2 {
            return invalid("quadrature window needs at least two periods per side");
        }
        Ok(())
    }

    pub fn depth(&self, direction: Direction) -> f64 {
        self.depths[direction.index()]
    }

    /// Quasimomentum samples used for Wannier synthesis; a multiple of the window so the
    /// synthesized function does not wrap around inside it.
    pub fn quasimomenta(&self) -> usize {
        8 * self.quadrature_periods
    }
}

/// E_r / h with E_r = π²ħ²/(2ma²).
pub fn recoil_energy(config: &LatticeConfig) -> Result<f64> {
    config.validate()?;
    Ok(recoil_joules(config) / PLANCK)
}

fn recoil_joules(config: &LatticeConfig) -> f64 {
    let k = PI / config.spacing;
    HBAR * HBAR * k * k / (2.0 * config.mass)
}

/// Plane-wave Hamiltonian at quasimomentum q (units of k) for depth V (units of E_r).
fn planewave_hamiltonian(depth: f64, cutoff: usize, q: f64) -> DMatrix<f64> {
    let n = 2 * cutoff + 1;
    DMatrix::from_fn(n, n, |r, c| {
        if r == c {
            let g = 2.0 * (r as f64 - cutoff as f64);
            (q + g).powi(2) + 0.5 * depth
        } else if r.abs_diff(c) == 1 {
            -0.25 * depth
        } else {
            0.0
        }
    })
}

/// Lowest `n_bands` eigenpairs, ascending.
fn solve_bloch(depth: f64, cutoff: usize, q: f64, n_bands: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let eig = SymmetricEigen::try_new(planewave_hamiltonian(depth, cutoff, q), 1e-15, 10_000)
        .ok_or_else(|| Error::Numerical(format!("Bloch eigensolver failed at q = {q}")))?;
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order[..n_bands].iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = order[..n_bands].iter().map(|&i| eig.eigenvectors.column(i).iter().copied().collect()).collect();
    Ok((values, vectors))
}

/// Band structure along one axis on the midpoint quasimomentum grid.
#[derive(Clone, Debug, PartialEq)]
pub struct BlochBands {
    /// Quasimomenta in units of k = π/a, inside (−1, 1).
    pub quasimomenta: Vec<f64>,
    /// [q][band] in units of E_r.
    pub energies: Vec<Vec<f64>>,
    /// [q][band][plane wave] real coefficients, index n ↔ reciprocal vector 2(n − cutoff)k.
    pub coefficients: Vec<Vec<Vec<f64>>>,
    pub recoil_hz: f64,
    pub cutoff: usize,
}

impl BlochBands {
    pub fn band_energies_hz(&self, band: usize) -> Vec<f64> {
        self.energies.iter().map(|e| e[band] * self.recoil_hz).collect()
    }

    /// Mean over the zone of E_band − E_0, in Hz.
    pub fn mean_gap_hz(&self, band: usize) -> f64 {
        let n = self.energies.len() as f64;
        self.energies.iter().map(|e| e[band] - e[0]).sum::<f64>() / n * self.recoil_hz
    }

    /// max − min of one band over the sampled zone, in Hz.
    pub fn bandwidth_hz(&self, band: usize) -> f64 {
        let (lo, hi) = self
            .energies
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| (lo.min(e[band]), hi.max(e[band])));
        (hi - lo) * self.recoil_hz
    }

    /// Nearest-neighbour hopping integral ⟨w(x)|H|w(x+a)⟩ in Hz, from the band dispersion.
    pub fn hopping_hz(&self, band: usize) -> f64 {
        let n = self.energies.len() as f64;
        self.quasimomenta
            .iter()
            .zip(&self.energies)
            .map(|(&q, e)| e[band] * (PI * q).cos())
            .sum::<f64>()
            / n
            * self.recoil_hz
    }
}

pub fn bloch_bands(config: &LatticeConfig, direction: Direction, n_bands: usize) -> Result<BlochBands> {
    config.validate()?;
    bloch_bands_at_depth(config, config.depth(direction), n_bands)
}

fn bloch_bands_at_depth(config: &LatticeConfig, depth: f64, n_bands: usize) -> Result<BlochBands> {
    let cutoff = config.planewave_cutoff;
    if n_bands == 0 || n_bands > cutoff {
        return invalid(format!("{n_bands} bands requested with a plane-wave cutoff of {cutoff}"));
    }
    let nq = config.quasimomenta();
    let quasimomenta: Vec<f64> = (0..nq).map(|i| -1.0 + (i as f64 + 0.5) * 2.0 / nq as f64).collect();
    let mut energies = Vec::with_capacity(nq);
    let mut coefficients = Vec::with_capacity(nq);
    for &q in &quasimomenta {
        let (e, v) = solve_bloch(depth, cutoff, q, n_bands)?;
        energies.push(e);
        coefficients.push(v);
    }
    Ok(BlochBands {
        quasimomenta,
        energies,
        coefficients,
        recoil_hz: recoil_joules(config) / PLANCK,
        cutoff,
    })
}

/// Real Wannier function sampled on the quadrature window.
#[derive(Clone, Debug, PartialEq)]
pub struct WannierFunction {
    pub band: usize,
    /// Positions in m, centred on the site.
    pub positions: Vec<f64>,
    pub values: Vec<f64>,
    /// Grid spacing in m.
    pub step: f64,
    pub samples_per_period: usize,
}

impl WannierFunction {
    /// Trapezoidal ∫ f(x) dx over the window.
    pub fn integrate(&self, f: impl Fn(usize) -> f64) -> f64 {
        trapezoid(self.values.len(), self.step, f)
    }

    /// Probability in the outermost period on each side.
    pub fn tail_mass(&self) -> f64 {
        let n = self.values.len();
        let p = self.samples_per_period;
        let left: f64 = self.values[..p].iter().map(|v| v * v).sum();
        let right: f64 = self.values[n - p..].iter().map(|v| v * v).sum();
        (left + right) * self.step
    }
}

fn trapezoid(n: usize, step: f64, f: impl Fn(usize) -> f64) -> f64 {
    if n < 2 {
        return 0.0;
    }
    let inner: f64 = (1..n - 1).map(&f).sum();
    step * (inner + 0.5 * (f(0) + f(n - 1)))
}

/// Wannier function of band 0 (even) or band 1 (odd) along one axis.
///
/// Each Bloch function is phased so that ψ_q(0) (band 0) or ψ'_q(0) (band 1) is real and
/// positive; the sum over the zone is then real and centred on x = 0.
pub fn wannier(config: &LatticeConfig, direction: Direction, band: usize) -> Result<WannierFunction> {
    config.validate()?;
    wannier_at_depth(config, config.depth(direction), band)
}

fn wannier_at_depth(config: &LatticeConfig, depth: f64, band: usize) -> Result<WannierFunction> {
    if band > 1 {
        return invalid(format!("Wannier functions are provided for bands 0 and 1, not {band}"));
    }
    let bands = bloch_bands_at_depth(config, depth, 2)?;
    synthesize(config, &bands, band)
}

fn synthesize(config: &LatticeConfig, bands: &BlochBands, band: usize) -> Result<WannierFunction> {
    let gp = config.grid_points;
    let periods = config.quadrature_periods;
    let n_points = 2 * periods * gp + 1;
    let a = config.spacing;
    let step = a / gp as f64;
    let cutoff = bands.cutoff as f64;
    let mut values = vec![0.0; n_points];
    for (&q, coeffs) in bands.quasimomenta.iter().zip(&bands.coefficients) {
        let c = &coeffs[band];
        let g = |n: usize| 2.0 * (n as f64 - cutoff);
        // Reference value ψ_q(0) for band 0 and −iψ'_q(0)/k for band 1, made real and positive.
        let reference = if band == 0 {
            C64::new(c.iter().sum::<f64>(), 0.0)
        } else {
            C64::new(0.0, c.iter().enumerate().map(|(n, v)| v * (q + g(n))).sum::<f64>())
        };
        if reference.norm() < 1e-300 {
            return Err(Error::Numerical(format!("gauge reference vanishes at q = {q}")));
        }
        let gauge = reference.conj() / reference.norm();
        // Periodic part on one period, reused for every cell of the window.
        let periodic: Vec<C64> = (0..gp)
            .map(|i| {
                let x = i as f64 / gp as f64; // in units of a
                c.iter()
                    .enumerate()
                    .map(|(n, v)| C64::from_polar(*v, PI * g(n) * x))
                    .sum::<C64>()
            })
            .collect();
        for (k, val) in values.iter_mut().enumerate() {
            let offset = k as isize - (periods * gp) as isize;
            let x = offset as f64 / gp as f64;
            let cell = offset.rem_euclid(gp as isize) as usize;
            let psi = C64::from_polar(1.0, PI * q * x) * periodic[cell] * gauge;
            *val += psi.re;
        }
    }
    let positions: Vec<f64> = (0..n_points).map(|k| (k as f64 - (periods * gp) as f64) * step).collect();
    let norm2 = trapezoid(n_points, step, |i| values[i] * values[i]);
    let norm = norm2.sqrt();
    for v in &mut values {
        *v /= norm;
    }
    let w = WannierFunction {
        band,
        positions,
        values,
        step,
        samples_per_period: gp,
    };
    let tail = w.tail_mass();
    if tail > TAIL_LIMIT {
        return Err(Error::Numerical(format!(
            "Wannier band {band} keeps {tail:e} probability in the boundary periods; widen the quadrature window"
        )));
    }
    Ok(w)
}

/// Nearest-neighbour hopping integrals along x in Hz: `(j_e, j_g)` with the sign of the
/// gauge in which both are positive hopping amplitudes (J = −J_{e,x} > 0).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tunneling {
    pub j_e: f64,
    pub j_g: f64,
    /// Raw ⟨w|H|w(·+a)⟩ for band 1 and band 0, before the gauge choice.
    pub raw_e: f64,
    pub raw_g: f64,
}

impl Tunneling {
    pub fn ratio(&self) -> f64 {
        self.j_e / self.j_g
    }
}

pub fn tunneling_amplitudes(config: &LatticeConfig) -> Result<Tunneling> {
    let bands = bloch_bands(config, Direction::X, 2)?;
    let (raw_e, raw_g) = (bands.hopping_hz(1), bands.hopping_hz(0));
    let t = Tunneling {
        j_e: raw_e.abs(),
        j_g: raw_g.abs(),
        raw_e,
        raw_g,
    };
    if !(t.j_e > t.j_g) {
        return Err(Error::Domain(format!(
            "excited-band hopping {} Hz does not exceed ground-band hopping {} Hz",
            t.j_e, t.j_g
        )));
    }
    Ok(t)
}

/// Wannier functions of bands 0 and 1 along all three axes.
#[derive(Clone, Debug)]
pub struct WannierSet {
    /// [axis][band]
    pub functions: [[WannierFunction; 2]; 3],
    /// g/h = 4πħ² a_s / (m h) in Hz·m³.
    pub coupling_hz: f64,
}

impl WannierSet {
    pub fn new(config: &LatticeConfig) -> Result<Self> {
        config.validate()?;
        let build = |d: Direction| -> Result<[WannierFunction; 2]> {
            Ok([wannier(config, d, 0)?, wannier(config, d, 1)?])
        };
        Ok(Self {
            functions: [build(Direction::X)?, build(Direction::Y)?, build(Direction::Z)?],
            coupling_hz: 4.0 * PI * HBAR * HBAR * config.scattering_length / config.mass / PLANCK,
        })
    }

    /// ∫ w_a w_b w_c w_d along one axis.
    pub fn overlap(&self, direction: Direction, bands: [usize; 4]) -> f64 {
        let f = &self.functions[direction.index()];
        let w = |b: usize| &f[b].values;
        f[0].integrate(|i| bands.iter().map(|&b| w(b)[i]).product())
    }
}

/// Onsite interaction energies in Hz.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interactions {
    pub u_ee: f64,
    pub u_gg: f64,
    pub u_eg: f64,
}

pub fn interaction_strengths(config: &LatticeConfig) -> Result<Interactions> {
    interactions_from(&WannierSet::new(config)?)
}

fn interactions_from(set: &WannierSet) -> Result<Interactions> {
    let yz = set.overlap(Direction::Y, [0; 4]) * set.overlap(Direction::Z, [0; 4]);
    let g = set.coupling_hz;
    Ok(Interactions {
        u_ee: g * set.overlap(Direction::X, [1; 4]) * yz,
        u_gg: g * set.overlap(Direction::X, [0; 4]) * yz,
        u_eg: 2.0 * g * set.overlap(Direction::X, [0, 0, 1, 1]) * yz,
    })
}

/// Band index along each axis for the four single-site orbitals.
fn orbital_bands(orbital: usize) -> [usize; 3] {
    match orbital {
        site_band::G => [0, 0, 0],
        site_band::EX => [1, 0, 0],
        site_band::EY => [0, 1, 0],
        site_band::EZ => [0, 0, 1],
        _ => unreachable!("four orbitals"),
    }
}

/// U_{abcd} = g∫φ_aφ_bφ_cφ_d over the orbitals (g, e_x, e_y, e_z), in Hz.
/// Entries with an odd number of excitations along any axis vanish by parity and are not integrated.
pub fn interaction_tensor(config: &LatticeConfig) -> Result<InteractionTensor> {
    let set = WannierSet::new(config)?;
    let mut table = [[0.0; 16]; 3];
    for d in Direction::ALL {
        for (mask, entry) in table[d.index()].iter_mut().enumerate() {
            if mask.count_ones() % 2 == 0 {
                let bands = [mask & 1, mask >> 1 & 1, mask >> 2 & 1, mask >> 3 & 1];
                *entry = set.overlap(d, bands);
            }
        }
    }
    let g = set.coupling_hz;
    Ok(InteractionTensor::from_fn(|a, b, c, d| {
        let orbs = [orbital_bands(a), orbital_bands(b), orbital_bands(c), orbital_bands(d)];
        (0..3)
            .map(|axis| {
                let mask = (0..4).fold(0, |m, k| m | orbs[k][axis] << k);
                table[axis][mask]
            })
            .product::<f64>()
            * g
    }))
}

/// Harmonic-oscillator estimates: ħω_ν = 2√(V_ν E_r) and U_eg = a_s √(2mħω_xω_yω_z/π).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarmonicEstimates {
    /// ħω_ν / h in Hz.
    pub trap_frequencies: [f64; 3],
    /// Hz
    pub u_eg: f64,
}

pub fn harmonic_cross_checks(config: &LatticeConfig) -> Result<HarmonicEstimates> {
    config.validate()?;
    let er = recoil_joules(config);
    // ħω = 2√(V E_r) with V = depth·E_r.
    let omega = config.depths.map(|v| 2.0 * v.sqrt() * er / HBAR);
    let u_eg = config.scattering_length * (2.0 * config.mass * HBAR * omega.iter().product::<f64>() / PI).sqrt() / PLANCK;
    Ok(HarmonicEstimates {
        trap_frequencies: omega.map(|w| HBAR * w / PLANCK),
        u_eg,
    })
}

/// Hubbard coefficients in Hz.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HubbardParams {
    pub tunneling: f64,
    pub tunneling_g: f64,
    pub u_ee: f64,
    pub u_gg: f64,
    pub u_eg: f64,
    pub u1: f64,
    pub u2: f64,
    pub u3: f64,
    /// Zone-averaged gap between bands 0 and 1 along each axis, ħω_ν/h.
    pub omega: [f64; 3],
    pub recoil: f64,
}

impl HubbardParams {
    pub fn from_config(config: &LatticeConfig) -> Result<Self> {
        let t = tunneling_amplitudes(config)?;
        let u = interaction_strengths(config)?;
        let omega = [
            bloch_bands(config, Direction::X, 2)?.mean_gap_hz(1),
            bloch_bands(config, Direction::Y, 2)?.mean_gap_hz(1),
            bloch_bands(config, Direction::Z, 2)?.mean_gap_hz(1),
        ];
        Ok(Self::assemble(t.j_e, t.j_g, u, omega, recoil_energy(config)?))
    }

    fn assemble(tunneling: f64, tunneling_g: f64, u: Interactions, omega: [f64; 3], recoil: f64) -> Self {
        Self {
            tunneling,
            tunneling_g,
            u_ee: u.u_ee,
            u_gg: u.u_gg,
            u_eg: u.u_eg,
            u1: 2.0 * u.u_ee + u.u_eg,
            u2: 2.0 * u.u_ee - u.u_eg,
            u3: 2.0 * u.u_ee - 3.0 * u.u_eg,
            omega,
            recoil,
        }
    }

    /// Energies in units of J.
    pub fn to_model(&self) -> ModelParams {
        ModelParams::from_ratios(self.u_ee / self.tunneling, self.u_gg / self.tunneling, self.u_eg / self.tunneling)
    }

    /// Gap protecting the x excitation from scattering into y or z, ħ(ω_y − ω_x)/h.
    pub fn band_detuning(&self) -> f64 {
        self.omega[1].min(self.omega[2]) - self.omega[0]
    }
}
