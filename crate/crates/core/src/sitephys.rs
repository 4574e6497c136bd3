//! Single-site physics beyond the chain: gradient-driven logical rotations, leakage out of
//! the decoherence-free pair in the four-band site, and the Raman three-level transfer.
//!
//! Energies are in Hz (E/h) and times in seconds; a Hamiltonian `H` in Hz evolves as e^{−i2πHt}.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::bandstruct::{harmonic_cross_checks, wannier, Direction, HubbardParams, LatticeConfig, HBAR};
use crate::error::{invalid, Error, Result};
use crate::evolve::{EvolutionOptions, Propagator};
use crate::fock::{build_basis, build_site_multiband, site_band, Bits, InteractionTensor, ModeIndexing, SymmetrySector};
use crate::linalg::{SparseOperator, StateVector, C64};
use crate::protocols::ProtocolResult;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradientOrder {
    Linear,
    Quadratic,
}

/// Field profile δB(x) across one site.
///
/// Quadratic: δB = δΩ (x − x0)². Linear: δB = δΩ ℓ (x − x0), with ℓ = √(ħ/mω_x) the
/// oscillator length, so both orders have the same energy δΩℓ² one length from x0.
/// `delta_omega` is in Hz/m².
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientSpec {
    pub delta_omega: f64,
    pub x0: f64,
    pub order: GradientOrder,
}

impl GradientSpec {
    pub fn quadratic(delta_omega: f64) -> Self {
        Self {
            delta_omega,
            x0: 0.0,
            order: GradientOrder::Quadratic,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.delta_omega.is_finite() || !self.x0.is_finite() {
            return invalid("gradient strength and offset must be finite");
        }
        Ok(())
    }

    fn profile(&self, length: f64) -> impl Fn(f64) -> f64 + '_ {
        move |x| match self.order {
            GradientOrder::Quadratic => self.delta_omega * (x - self.x0).powi(2),
            GradientOrder::Linear => self.delta_omega * length * (x - self.x0),
        }
    }
}

/// ω_x in rad/s and ℓ_x = √(ħ/mω_x) from the harmonic approximation of the x well.
fn harmonic_x(config: &LatticeConfig) -> Result<(f64, f64)> {
    let omega = 2.0 * PI * harmonic_cross_checks(config)?.trap_frequencies[0];
    Ok((omega, (HBAR / (config.mass * omega)).sqrt()))
}

/// Normalized harmonic-oscillator eigenfunction n ∈ {0, 1} with length ℓ.
fn oscillator(n: usize, length: f64, x: f64) -> f64 {
    let u = x / length;
    let ground = (PI * length * length).powf(-0.25) * (-0.5 * u * u).exp();
    match n {
        0 => ground,
        _ => 2f64.sqrt() * u * ground,
    }
}

/// ∫∫ over the two-particle harmonic wavefunctions on an n×n grid spanning ±`half_width`.
fn gradient_integral(profile: &dyn Fn(f64) -> f64, length: f64, half_width: f64, n: usize) -> f64 {
    let step = 2.0 * half_width / (n - 1) as f64;
    let xs: Vec<f64> = (0..n).map(|i| -half_width + i as f64 * step).collect();
    let w0: Vec<f64> = xs.iter().map(|&x| oscillator(0, length, x)).collect();
    let w1: Vec<f64> = xs.iter().map(|&x| oscillator(1, length, x)).collect();
    let db: Vec<f64> = xs.iter().map(|&x| profile(x)).collect();
    let weight = |i: usize| if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            // Antisymmetric |⇑⟩ and symmetric |⇓⟩ spatial parts, as in the logical pair.
            let up = w1[i] * w0[j] - w0[i] * w1[j];
            let down = w1[i] * w0[j] + w0[i] * w1[j];
            total += weight(i) * weight(j) * up * (db[i] - db[j]) * down;
        }
    }
    0.5 * total * step * step
}

/// ⟨⇑|δB(x₁)σz₁ + δB(x₂)σz₂|⇓⟩ over harmonic wavefunctions along x, in Hz.
///
/// The quadratic result equals ħδΩ/(mω_x); the linear one vanishes by parity.
pub fn gradient_matrix_element(spec: &GradientSpec, config: &LatticeConfig) -> Result<f64> {
    spec.validate()?;
    let (_, length) = harmonic_x(config)?;
    let profile = spec.profile(length);
    let half_width = 12.0 * length + spec.x0.abs();
    let coarse = gradient_integral(&profile, length, half_width, 241);
    let fine = gradient_integral(&profile, length, half_width, 481);
    let scale = spec.delta_omega.abs() * length * length;
    if (fine - coarse).abs() > 1e-10 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::Numerical(format!(
            "gradient quadrature did not converge ({coarse:e} vs {fine:e})"
        )));
    }
    Ok(fine)
}

/// ħδΩ/(mω_x) in Hz for the quadratic profile.
pub fn gradient_closed_form(delta_omega: f64, config: &LatticeConfig) -> Result<f64> {
    let (omega, _) = harmonic_x(config)?;
    Ok(delta_omega * HBAR / (config.mass * omega))
}

/// Same element with the lattice Wannier functions of bands 0 and 1 along x.
///
/// For the logical pair the two-particle integral reduces to ⟨w₁|δB|w₁⟩ − ⟨w₀|δB|w₀⟩.
pub fn gradient_matrix_element_wannier(spec: &GradientSpec, config: &LatticeConfig) -> Result<f64> {
    spec.validate()?;
    let (_, length) = harmonic_x(config)?;
    let profile = spec.profile(length);
    let w0 = wannier(config, Direction::X, 0)?;
    let w1 = wannier(config, Direction::X, 1)?;
    let db: Vec<f64> = w0.positions.iter().map(|&x| profile(x)).collect();
    Ok(w0.integrate(|i| (w1.values[i].powi(2) - w0.values[i].powi(2)) * db[i]))
}

/// δΩ in Hz/m² at which ħδΩ/(mω_x) matches `u_eg` (Hz).
pub fn gradient_threshold(u_eg: f64, config: &LatticeConfig) -> Result<f64> {
    Ok(u_eg / gradient_closed_form(1.0, config)?)
}

/// Single-site Hamiltonian over {|⇑⟩, |⇓⟩} in Hz.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationHamiltonian {
    /// Rows over (|⇑⟩, |⇓⟩).
    pub matrix: [[f64; 2]; 2],
    /// Coefficient of σx.
    pub sigma_x: f64,
    /// Coefficient of σz.
    pub sigma_z: f64,
    /// Multiple of the identity.
    pub constant: f64,
}

impl RotationHamiltonian {
    pub fn new(coupling: f64, u_eg: f64) -> Self {
        Self {
            matrix: [[0.0, coupling], [coupling, u_eg]],
            sigma_x: coupling,
            sigma_z: -0.5 * u_eg,
            constant: 0.5 * u_eg,
        }
    }

    pub fn to_matrix(&self) -> Matrix2<f64> {
        Matrix2::from_fn(|r, c| self.matrix[r][c])
    }

    pub fn eigenvalues(&self) -> [f64; 2] {
        let r = self.sigma_x.hypot(self.sigma_z);
        [self.constant - r, self.constant + r]
    }

    pub fn splitting(&self) -> f64 {
        let [lo, hi] = self.eigenvalues();
        hi - lo
    }

    /// e^{−i2πHt} as a 2×2 matrix.
    pub fn propagator(&self, t: f64) -> Matrix2<C64> {
        let r = self.sigma_x.hypot(self.sigma_z);
        let phase = C64::from_polar(1.0, -2.0 * PI * self.constant * t);
        if r == 0.0 {
            return Matrix2::identity() * phase;
        }
        let (nx, nz) = (self.sigma_x / r, self.sigma_z / r);
        let (c, s) = ((2.0 * PI * r * t).cos(), (2.0 * PI * r * t).sin());
        let i = C64::new(0.0, 1.0);
        let m = Matrix2::new(
            C64::new(c, 0.0) - i * s * nz,
            -i * s * nx,
            -i * s * nx,
            C64::new(c, 0.0) + i * s * nz,
        );
        m * phase
    }
}

/// Gradient-driven rotation generator: off-diagonal ħδΩ/(mω_x), diagonal (0, U_eg).
pub fn dfs_rotation_hamiltonian(
    spec: &GradientSpec,
    config: &LatticeConfig,
    params: &HubbardParams,
) -> Result<RotationHamiltonian> {
    spec.validate()?;
    if spec.order != GradientOrder::Quadratic {
        return invalid("the rotation generator needs a quadratic gradient");
    }
    Ok(RotationHamiltonian::new(gradient_closed_form(spec.delta_omega, config)?, params.u_eg))
}

/// |⇒⟩ = c†_{g↑} c†_{e_x↓}|0⟩ in the single-site four-band mode order.
pub const SITE_RIGHT: Bits = 0b1001;
/// |⇐⟩ = c†_{g↓} c†_{e_x↑}|0⟩.
pub const SITE_LEFT: Bits = 0b0110;

/// Second-order estimate of the population that can leave {|⇒⟩, |⇐⟩}.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeakageBound {
    /// Σ_k 4|V_k|²/Δ_k² over states outside the pair.
    pub leakage: f64,
    /// Smallest detuning Δ_k among coupled states, in Hz; infinite when nothing couples.
    pub min_detuning: f64,
}

impl LeakageBound {
    pub fn p_dfs_floor(&self) -> f64 {
        1.0 - self.leakage
    }
}

fn site_hamiltonian(tensor: &InteractionTensor, b: f64, trap_frequencies: [f64; 3]) -> Result<(Vec<Bits>, SparseOperator)> {
    let sector = SymmetrySector {
        n_up: 1,
        n_down: 1,
        g_occupancy: None,
    };
    let basis = build_basis(ModeIndexing::site_multiband(), sector)?;
    let h = build_site_multiband(&basis, tensor, b, trap_frequencies)?;
    Ok((basis.states().to_vec(), h))
}

/// Perturbative leakage bound computed from the assembled site Hamiltonian.
pub fn leakage_bound(tensor: &InteractionTensor, b: f64, trap_frequencies: [f64; 3]) -> Result<LeakageBound> {
    let (states, h) = site_hamiltonian(tensor, b, trap_frequencies)?;
    let pos = |s: Bits| states.iter().position(|&v| v == s).expect("logical pair lies in the N↑ = N↓ = 1 sector");
    let pair = [pos(SITE_RIGHT), pos(SITE_LEFT)];
    let block = Matrix2::from_fn(|r, c| h.get(pair[r], pair[c]));
    let levels = SymmetricEigen::new(block).eigenvalues;
    let mut leakage = 0.0;
    let mut min_detuning = f64::INFINITY;
    for k in (0..states.len()).filter(|k| !pair.contains(k)) {
        let v2: f64 = pair.iter().map(|&d| h.get(k, d).norm_sqr()).sum();
        if v2 == 0.0 {
            continue;
        }
        let detuning = levels.iter().map(|l| (h.get(k, k).re - l).abs()).fold(f64::INFINITY, f64::min);
        if detuning == 0.0 {
            return Err(Error::Degeneracy {
                populated: pair[0],
                excited: k,
                energy: h.get(k, k).re,
            });
        }
        min_detuning = min_detuning.min(detuning);
        leakage += 4.0 * v2 / (detuning * detuning);
    }
    Ok(LeakageBound { leakage, min_detuning })
}

/// Evolve |⇒⟩ in the four-band site and track the logical populations.
///
/// Series `p_right`, `p_left`, `p_dfs`, `norm`; summary `min_p_dfs`, `perturbative_floor`,
/// and `period` (s) of the |⟨⇒|ψ⟩|² oscillation when at least two mean crossings are sampled.
pub fn multiband_leakage(
    tensor: &InteractionTensor,
    b: f64,
    trap_frequencies: [f64; 3],
    times: &[f64],
) -> Result<ProtocolResult> {
    if times.iter().any(|t| !t.is_finite()) {
        return invalid("time grid must be finite");
    }
    let (states, h) = site_hamiltonian(tensor, b, trap_frequencies)?;
    let bound = leakage_bound(tensor, b, trap_frequencies)?;
    let angular = h.scale(C64::new(2.0 * PI, 0.0));
    let propagator = Propagator::new(&angular, EvolutionOptions::default())?;
    let pos = |s: Bits| states.iter().position(|&v| v == s).expect("logical pair lies in the N↑ = N↓ = 1 sector");
    let (right, left) = (pos(SITE_RIGHT), pos(SITE_LEFT));
    let psi0 = StateVector::basis(states.len(), right);
    let evolved = propagator.evolve_many(&psi0, times)?;

    let p = |psi: &StateVector, i: usize| psi.amplitudes()[i].norm_sqr();
    let p_right: Vec<f64> = evolved.iter().map(|s| p(s, right)).collect();
    let p_left: Vec<f64> = evolved.iter().map(|s| p(s, left)).collect();
    let p_dfs: Vec<f64> = p_right.iter().zip(&p_left).map(|(a, b)| a + b).collect();
    let norm: Vec<f64> = evolved.iter().map(|s| s.norm().powi(2)).collect();

    let mut out = ProtocolResult::with_times(times.to_vec());
    out.summary.insert("min_p_dfs".into(), p_dfs.iter().copied().fold(f64::INFINITY, f64::min));
    out.summary.insert("perturbative_floor".into(), bound.p_dfs_floor());
    out.summary.insert("min_detuning".into(), bound.min_detuning);
    if let Some(period) = oscillation_period(times, &p_right) {
        out.summary.insert("period".into(), period);
    }
    out.insert_series("p_right", p_right)?;
    out.insert_series("p_left", p_left)?;
    out.insert_series("p_dfs", p_dfs)?;
    out.insert_series("norm", norm)?;
    out.meta("initial_state", "g-up e_x-down");
    out.meta("energy_unit", "Hz");
    Ok(out)
}

/// Period from crossings of the series mean, linearly interpolated; `None` with fewer than two.
pub fn oscillation_period(times: &[f64], values: &[f64]) -> Option<f64> {
    if times.len() != values.len() || values.len() < 3 {
        return None;
    }
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let mid = 0.5 * (lo + hi);
    let crossings: Vec<f64> = values
        .windows(2)
        .zip(times.windows(2))
        .filter(|(v, _)| (v[0] - mid) * (v[1] - mid) < 0.0)
        .map(|(v, t)| t[0] + (mid - v[0]) / (v[1] - v[0]) * (t[1] - t[0]))
        .collect();
    if crossings.len() < 2 {
        return None;
    }
    // Two crossings per period.
    Some(2.0 * (crossings[crossings.len() - 1] - crossings[0]) / (crossings.len() - 1) as f64)
}

/// Time dependence of the two Raman couplings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum Schedule {
    /// Both couplings on at full strength for `duration`.
    Constant,
    /// Constant couplings for the light-shift-corrected transfer time; `duration` is computed.
    PiPulse,
    /// Gaussian envelopes exp(−(t − c)²/2w²) of laser (i) and laser (ii) in seconds.
    Stirap { centers: [f64; 2], widths: [f64; 2] },
}

/// Raman drive between the occupied g state and the empty target in e_x.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RamanSpec {
    /// Bare drive Ω₀ in Hz.
    pub omega0: f64,
    /// Detuning Δ from the excited electronic state, Hz.
    pub detuning: f64,
    /// Clebsch-Gordan factors of lasers (i) and (ii).
    pub clebsch_factors: [f64; 2],
    /// λ_L in m.
    pub wavelength: f64,
    pub beam_direction: [f64; 3],
    pub schedule: Schedule,
    /// Seconds; required for constant and STIRAP schedules.
    pub duration: Option<f64>,
    /// Excited-state wavefunction width relative to the ground-state one.
    pub excited_width_scale: f64,
}

impl RamanSpec {
    /// 770 nm beams along x̂ with unit Clebsch-Gordan factors.
    pub fn new(omega0: f64, detuning: f64, schedule: Schedule) -> Self {
        Self {
            omega0,
            detuning,
            clebsch_factors: [1.0, 1.0],
            wavelength: 770e-9,
            beam_direction: [1.0, 0.0, 0.0],
            schedule,
            duration: None,
            excited_width_scale: 1.0,
        }
    }

    pub fn with_duration(mut self, duration: f64) -> Self {
        self.duration = Some(duration);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.omega0, self.detuning, self.clebsch_factors[0], self.clebsch_factors[1]];
        if finite.iter().any(|v| !v.is_finite()) {
            return invalid("Raman drive parameters must be finite");
        }
        if !(self.wavelength > 0.0 && self.wavelength.is_finite()) {
            return invalid(format!("wavelength {} must be positive", self.wavelength));
        }
        let norm = self.beam_direction.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !((norm - 1.0).abs() < 1e-9) {
            return invalid(format!("beam direction must be a unit vector (norm {norm})"));
        }
        if !(self.excited_width_scale > 0.0 && self.excited_width_scale.is_finite()) {
            return invalid("excited-state width scale must be positive");
        }
        match (self.schedule, self.duration) {
            (Schedule::PiPulse, Some(_)) => invalid("pi-pulse duration is derived, do not set it"),
            (Schedule::PiPulse, None) => Ok(()),
            (_, None) => invalid("constant and STIRAP schedules need a duration"),
            (_, Some(d)) if !(d > 0.0 && d.is_finite()) => invalid(format!("duration {d} must be positive")),
            (Schedule::Stirap { centers, widths }, _) => {
                if widths.iter().any(|w| !(*w > 0.0 && w.is_finite())) || centers.iter().any(|c| !c.is_finite()) {
                    return invalid("STIRAP widths must be positive and centers finite");
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Which spatial orbitals enter the Raman overlap.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orbitals {
    Harmonic,
    Wannier,
}

/// ∫φ_μ*(r) e^{ik_L·r} φ̃_ν(r) d³r between ground-state orbital `bands.0` and excited-state
/// orbital `bands.1` (indices of [`site_band`]). The excited-state orbital is the ground-lattice
/// one stretched by `excited_width_scale`.
pub fn raman_overlap(config: &LatticeConfig, spec: &RamanSpec, bands: (usize, usize), orbitals: Orbitals) -> Result<C64> {
    spec.validate()?;
    if bands.0 > site_band::EZ || bands.1 > site_band::EZ {
        return invalid("orbital index outside g, e_x, e_y, e_z");
    }
    let k = 2.0 * PI / spec.wavelength;
    let axis_band = |orbital: usize, axis: usize| usize::from(orbital == axis + 1);
    let lengths = harmonic_cross_checks(config)?
        .trap_frequencies
        .map(|f| (HBAR / (config.mass * 2.0 * PI * f)).sqrt());
    let mut total = C64::new(1.0, 0.0);
    for (axis, direction) in Direction::ALL.into_iter().enumerate() {
        let (m, n) = (axis_band(bands.0, axis), axis_band(bands.1, axis));
        let kx = k * spec.beam_direction[axis];
        let s = spec.excited_width_scale;
        let factor = match orbitals {
            Orbitals::Harmonic => {
                let l = lengths[axis];
                let half = 14.0 * l * s.max(1.0);
                let points = 4001;
                let step = 2.0 * half / (points - 1) as f64;
                trapezoid_c(points, step, |i| {
                    let x = -half + i as f64 * step;
                    let stretched = oscillator(n, l * s, x);
                    C64::from_polar(oscillator(m, l, x) * stretched, kx * x)
                })
            }
            Orbitals::Wannier => {
                let ground = wannier(config, direction, m)?;
                let excited = wannier(config, direction, n)?;
                let stretched = |x: f64| interpolate(&excited.positions, &excited.values, x / s) / s.sqrt();
                trapezoid_c(ground.positions.len(), ground.step, |i| {
                    let x = ground.positions[i];
                    C64::from_polar(ground.values[i] * stretched(x), kx * x)
                })
            }
        };
        total *= factor;
    }
    Ok(total)
}

fn trapezoid_c(n: usize, step: f64, f: impl Fn(usize) -> C64) -> C64 {
    let inner: C64 = (1..n - 1).map(&f).sum();
    (inner + (f(0) + f(n - 1)) * 0.5) * step
}

/// Linear interpolation on a uniform grid, zero outside.
fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    let step = xs[1] - xs[0];
    let u = (x - xs[0]) / step;
    if u < 0.0 || u > (n - 1) as f64 {
        return 0.0;
    }
    let i = (u.floor() as usize).min(n - 2);
    let frac = u - i as f64;
    ys[i] * (1.0 - frac) + ys[i + 1] * frac
}

/// Ω_(i) and Ω_(ii) in Hz from the bare drive, Clebsch-Gordan factors and Raman overlaps.
pub fn rabi_couplings(config: &LatticeConfig, spec: &RamanSpec, orbitals: Orbitals) -> Result<[C64; 2]> {
    let first = raman_overlap(config, spec, (site_band::G, site_band::G), orbitals)?;
    let second = raman_overlap(config, spec, (site_band::EX, site_band::G), orbitals)?;
    Ok([
        first * spec.omega0 * spec.clebsch_factors[0],
        second * spec.omega0 * spec.clebsch_factors[1],
    ])
}

/// Energy of the dressed level adiabatically connected to the ground pair, Hz.
fn dressed_shift(couplings: [C64; 2], detuning: f64) -> f64 {
    let bright = couplings[0].norm_sqr() + couplings[1].norm_sqr();
    let root = (detuning * detuning + 4.0 * bright).sqrt();
    0.5 * (detuning - detuning.signum() * root)
}

fn transfer_matrix(couplings: [C64; 2], detuning: f64) -> Matrix3<C64> {
    let z = C64::new(0.0, 0.0);
    Matrix3::new(
        z,
        z,
        couplings[0],
        z,
        z,
        couplings[1],
        couplings[0].conj(),
        couplings[1].conj(),
        C64::new(detuning, 0.0),
    )
}

fn step_propagator(h: Matrix3<C64>, dt: f64) -> Matrix3<C64> {
    let eig = SymmetricEigen::new(h);
    let phases = Matrix3::from_diagonal(&Vector3::from_fn(|i, _| C64::from_polar(1.0, -2.0 * PI * eig.eigenvalues[i] * dt)));
    eig.eigenvectors * phases * eig.eigenvectors.adjoint()
}

fn populations(psi: &Vector3<C64>) -> [f64; 3] {
    [psi[0].norm_sqr(), psi[1].norm_sqr(), psi[2].norm_sqr()]
}

/// Fewest piecewise-constant STIRAP steps per Gaussian width.
pub const STIRAP_STEPS_PER_WIDTH: usize = 200;
const STIRAP_TOLERANCE: f64 = 1e-6;
const STIRAP_MAX_DOUBLINGS: usize = 8;

/// Integrate the three-level transfer from the occupied g state.
///
/// `couplings` are the peak Ω_(i), Ω_(ii) in Hz. Series `p_g`, `p_target`, `p_excited`, `trace`.
/// The π pulse lasts 1/(2|E_b|) with E_b the dressed shift of the bright state, which
/// already contains the light shift; the differential shift (|Ω_(i)|² − |Ω_(ii)|²)/Δ is reported.
pub fn three_level_transfer(spec: &RamanSpec, couplings: [C64; 2]) -> Result<ProtocolResult> {
    spec.validate()?;
    if couplings.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return invalid("Rabi couplings must be finite");
    }
    let start = Vector3::new(C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0));
    let (times, states, mut out) = match spec.schedule {
        Schedule::Constant | Schedule::PiPulse => {
            let duration = match spec.schedule {
                Schedule::PiPulse => {
                    if spec.detuning == 0.0 {
                        return invalid("pi-pulse mode needs Δ ≠ 0; the second-order coupling is undefined at resonance");
                    }
                    let shift = dressed_shift(couplings, spec.detuning);
                    if shift == 0.0 {
                        return Err(Error::Domain("no Raman coupling: both Rabi frequencies vanish".into()));
                    }
                    1.0 / (2.0 * shift.abs())
                }
                _ => spec.duration.expect("validated"),
            };
            let samples = 401;
            let times: Vec<f64> = (0..samples).map(|i| duration * i as f64 / (samples - 1) as f64).collect();
            let eig = SymmetricEigen::new(transfer_matrix(couplings, spec.detuning));
            let c = eig.eigenvectors.adjoint() * start;
            let states: Vec<Vector3<C64>> = times
                .iter()
                .map(|&t| {
                    let phased = Vector3::from_fn(|i, _| c[i] * C64::from_polar(1.0, -2.0 * PI * eig.eigenvalues[i] * t));
                    eig.eigenvectors * phased
                })
                .collect();
            let mut out = ProtocolResult::with_times(times.clone());
            out.summary.insert("duration".into(), duration);
            (times, states, out)
        }
        Schedule::Stirap { centers, widths } => {
            let duration = spec.duration.expect("validated");
            let base = ((duration / widths[0].min(widths[1])) * STIRAP_STEPS_PER_WIDTH as f64).ceil() as usize;
            let mut steps = base.max(1);
            let mut previous = stirap_run(couplings, spec.detuning, centers, widths, duration, steps);
            let mut change = f64::INFINITY;
            for _ in 0..STIRAP_MAX_DOUBLINGS {
                steps *= 2;
                let next = stirap_run(couplings, spec.detuning, centers, widths, duration, steps);
                let (a, b) = (populations(previous.1.last().unwrap()), populations(next.1.last().unwrap()));
                change = (0..3).map(|i| (a[i] - b[i]).abs()).fold(0.0, f64::max);
                previous = next;
                if change < STIRAP_TOLERANCE {
                    break;
                }
            }
            if change >= STIRAP_TOLERANCE {
                return Err(Error::Numerical(format!(
                    "STIRAP discretization did not converge (last change {change:e} at {steps} steps)"
                )));
            }
            let (times, states) = previous;
            let mut out = ProtocolResult::with_times(times.clone());
            out.summary.insert("duration".into(), duration);
            out.summary.insert("steps".into(), steps as f64);
            out.summary.insert("discretization_change".into(), change);
            (times, states, out)
        }
    };
    let pops: Vec<[f64; 3]> = states.iter().map(populations).collect();
    let column = |i: usize| pops.iter().map(|p| p[i]).collect::<Vec<f64>>();
    let trace: Vec<f64> = pops.iter().map(|p| p.iter().sum()).collect();
    let drift = trace.iter().map(|t| (t - 1.0).abs()).fold(0.0, f64::max);
    if drift > 1e-9 {
        return Err(Error::Numerical(format!("three-level evolution lost trace ({drift:e})")));
    }
    let p_excited = column(2);
    out.summary.insert("final_target".into(), *column(1).last().unwrap_or(&0.0));
    out.summary.insert("peak_excited".into(), p_excited.iter().copied().fold(0.0, f64::max));
    if spec.detuning != 0.0 {
        let (a, b) = (couplings[0], couplings[1]);
        out.summary.insert("effective_rabi".into(), (a * b.conj()).norm() / spec.detuning.abs());
        out.summary.insert("differential_light_shift".into(), (a.norm_sqr() - b.norm_sqr()) / spec.detuning);
    }
    out.insert_series("p_g", column(0))?;
    out.insert_series("p_target", column(1))?;
    out.insert_series("p_excited", p_excited)?;
    out.insert_series("trace", trace)?;
    let mode = match spec.schedule {
        Schedule::Constant => "constant",
        Schedule::PiPulse => "pi-pulse",
        Schedule::Stirap { .. } => "stirap",
    };
    out.meta("mode", mode);
    out.meta("pi_time_convention", "1/(2|E_b|), light shift included");
    debug_assert_eq!(times.len(), out.times.len());
    Ok(out)
}

/// Midpoint piecewise-constant STIRAP integration, keeping at most ~1000 samples.
fn stirap_run(
    couplings: [C64; 2],
    detuning: f64,
    centers: [f64; 2],
    widths: [f64; 2],
    duration: f64,
    steps: usize,
) -> (Vec<f64>, Vec<Vector3<C64>>) {
    let dt = duration / steps as f64;
    let stride = steps.div_ceil(1000);
    let envelope = |t: f64, k: usize| (-(t - centers[k]).powi(2) / (2.0 * widths[k] * widths[k])).exp();
    let mut psi = Vector3::new(C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0));
    let mut times = vec![0.0];
    let mut states = vec![psi];
    for n in 0..steps {
        let mid = (n as f64 + 0.5) * dt;
        let drive = [couplings[0] * envelope(mid, 0), couplings[1] * envelope(mid, 1)];
        psi = step_propagator(transfer_matrix(drive, detuning), dt) * psi;
        if (n + 1) % stride == 0 || n + 1 == steps {
            times.push((n + 1) as f64 * dt);
            states.push(psi);
        }
    }
    (times, states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bandstruct::{interaction_strengths, interaction_tensor};
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn quadratic_gradient_matches_closed_form() {
        let config = LatticeConfig::reference();
        let spec = GradientSpec::quadratic(1e18);
        let numeric = gradient_matrix_element(&spec, &config).unwrap();
        let exact = gradient_closed_form(1e18, &config).unwrap();
        assert!(rel(numeric, exact) < 1e-8, "{numeric} vs {exact}");
    }

    #[test]
    fn linear_gradient_vanishes() {
        let config = LatticeConfig::reference();
        let quad = gradient_matrix_element(&GradientSpec::quadratic(1e18), &config).unwrap();
        let linear = GradientSpec {
            order: GradientOrder::Linear,
            x0: 0.1 * config.spacing,
            ..GradientSpec::quadratic(1e18)
        };
        let value = gradient_matrix_element(&linear, &config).unwrap();
        assert!(value.abs() < 1e-10 * quad.abs(), "{value}");
    }

    #[test]
    fn gradient_is_independent_of_offset() {
        let config = LatticeConfig::reference();
        let at = |x0: f64| gradient_matrix_element(&GradientSpec { x0, ..GradientSpec::quadratic(1e18) }, &config).unwrap();
        let (a, b) = (at(0.0), at(0.25 * config.spacing));
        assert!(rel(a, b) < 1e-10, "{a} vs {b}");
    }

    #[test]
    fn wannier_variant_is_close_to_harmonic() {
        let config = LatticeConfig::reference();
        let spec = GradientSpec::quadratic(1e18);
        let harmonic = gradient_closed_form(1e18, &config).unwrap();
        let lattice = gradient_matrix_element_wannier(&spec, &config).unwrap();
        // Anharmonic wells spread the Wannier functions; same sign and scale.
        assert!(lattice > 0.0 && rel(lattice, harmonic) < 0.5, "{lattice} vs {harmonic}");
    }

    #[test]
    fn threshold_is_near_a_million_hz_per_square_micron() {
        let config = LatticeConfig::reference();
        let per_um2 = gradient_threshold(4.5e3, &config).unwrap() * 1e-12;
        assert!((per_um2.log10() - 6.0).abs() < 0.3, "{per_um2}");
    }

    #[test]
    fn rotation_without_interaction_is_full_rabi() {
        let h = RotationHamiltonian::new(250.0, 0.0);
        let u = h.propagator(1.0 / (4.0 * 250.0));
        assert!((u[(1, 0)].norm_sqr() - 1.0).abs() < 1e-12);
        assert!(h.sigma_z == 0.0);
    }

    #[test]
    fn rotation_splitting_and_zero_gradient_spectrum() {
        let config = LatticeConfig::reference();
        let params = HubbardParams::from_config(&config).unwrap();
        let spec = GradientSpec::quadratic(7e17);
        let h = dfs_rotation_hamiltonian(&spec, &config, &params).unwrap();
        let c = gradient_closed_form(7e17, &config).unwrap();
        let numeric = SymmetricEigen::new(h.to_matrix()).eigenvalues;
        let split = (numeric[0] - numeric[1]).abs();
        assert!(rel(split, (params.u_eg.powi(2) + 4.0 * c * c).sqrt()) < 1e-12);
        assert!(rel(h.splitting(), split) < 1e-12);
        let flat = dfs_rotation_hamiltonian(&GradientSpec::quadratic(0.0), &config, &params).unwrap();
        let [lo, hi] = flat.eigenvalues();
        assert!(lo.abs() < 1e-9 && (hi - params.u_eg).abs() < 1e-9);
        assert!(dfs_rotation_hamiltonian(&GradientSpec { order: GradientOrder::Linear, ..spec }, &config, &params).is_err());
    }

    #[test]
    fn pauli_form_matches_matrix() {
        let h = RotationHamiltonian::new(120.0, 4500.0);
        let rebuilt = Matrix2::new(
            h.constant + h.sigma_z,
            h.sigma_x,
            h.sigma_x,
            h.constant - h.sigma_z,
        );
        assert!((rebuilt - h.to_matrix()).abs().max() < 1e-12);
    }

    fn decoupled_tensor(full: &InteractionTensor) -> InteractionTensor {
        let outside = |i: usize| i == site_band::EY || i == site_band::EZ;
        InteractionTensor::from_fn(|a, b, c, d| {
            let mixed = [a, b, c, d].iter().any(|&i| outside(i)) && ![a, b, c, d].iter().all(|&i| outside(i));
            if mixed { 0.0 } else { full.get(a, b, c, d) }
        })
    }

    #[test]
    fn decoupled_bands_keep_population_in_pair() {
        let config = LatticeConfig::reference();
        let params = HubbardParams::from_config(&config).unwrap();
        let tensor = decoupled_tensor(&interaction_tensor(&config).unwrap());
        let times: Vec<f64> = (0..200).map(|i| i as f64 * 1e-5).collect();
        let r = multiband_leakage(&tensor, 300.0, params.omega, &times).unwrap();
        for p in r.series("p_dfs").unwrap() {
            assert!((p - 1.0).abs() < 1e-12, "{p}");
        }
    }

    #[test]
    fn exchange_period_is_inverse_u_eg() {
        let config = LatticeConfig::reference();
        let params = HubbardParams::from_config(&config).unwrap();
        let u_eg = interaction_strengths(&config).unwrap().u_eg;
        let tensor = interaction_tensor(&config).unwrap();
        let times: Vec<f64> = (0..4001).map(|i| i as f64 * 5.0 / u_eg / 4000.0).collect();
        let r = multiband_leakage(&tensor, 0.0, params.omega, &times).unwrap();
        let period = r.summary["period"];
        assert!(rel(period, 1.0 / u_eg) < 0.01, "{period} vs {}", 1.0 / u_eg);
    }

    #[test]
    fn reference_site_stays_above_perturbative_floor() {
        let config = LatticeConfig::reference();
        let params = HubbardParams::from_config(&config).unwrap();
        let tensor = interaction_tensor(&config).unwrap();
        let times: Vec<f64> = (0..=3000).map(|i| i as f64 * 1e-4).collect();
        let r = multiband_leakage(&tensor, 300.0, params.omega, &times).unwrap();
        assert!(r.summary["min_p_dfs"] >= r.summary["perturbative_floor"] - 1e-9);
        assert!((params.band_detuning() - 13e3).abs() < 1e3);
    }

    #[test]
    fn parity_breaking_coupling_respects_bound() {
        let config = LatticeConfig::reference();
        let params = HubbardParams::from_config(&config).unwrap();
        let mut tensor = interaction_tensor(&config).unwrap();
        // Symmetric admixture of (g, e_x) → (g, e_y) scattering.
        for (a, b, c, d) in [(site_band::G, site_band::EY, site_band::EX, site_band::G), (site_band::EY, site_band::G, site_band::G, site_band::EX)] {
            tensor.set(a, b, c, d, 150.0);
            tensor.set(d, c, b, a, 150.0);
        }
        let bound = leakage_bound(&tensor, 300.0, params.omega).unwrap();
        assert!(bound.leakage > 0.0 && bound.leakage < 0.01);
        let times: Vec<f64> = (0..=6000).map(|i| i as f64 * 2e-6).collect();
        let r = multiband_leakage(&tensor, 300.0, params.omega, &times).unwrap();
        let min = r.summary["min_p_dfs"];
        assert!(min < 1.0 - 1e-6, "coupling should leak a little ({min})");
        assert!(min >= bound.p_dfs_floor(), "{min} vs {}", bound.p_dfs_floor());
    }

    #[test]
    fn site_hamiltonian_preserves_each_spin_sector() {
        let config = LatticeConfig::reference();
        let params = HubbardParams::from_config(&config).unwrap();
        let tensor = interaction_tensor(&config).unwrap();
        for (n_up, n_down) in [(1, 1), (2, 0), (0, 2), (2, 1), (1, 0)] {
            let sector = SymmetrySector { n_up, n_down, g_occupancy: None };
            let basis = build_basis(ModeIndexing::site_multiband(), sector).unwrap();
            // The builder errors if any term leaves the sector.
            build_site_multiband(&basis, &tensor, 300.0, params.omega).unwrap();
        }
        let times: Vec<f64> = (0..50).map(|i| i as f64 * 3e-5).collect();
        let r = multiband_leakage(&tensor, 300.0, params.omega, &times).unwrap();
        for n in r.series("norm").unwrap() {
            assert!((n - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn asymmetric_tensor_is_rejected() {
        let mut tensor = InteractionTensor::zeros();
        tensor.set(0, 1, 0, 1, 10.0);
        assert!(multiband_leakage(&tensor, 0.0, [5e4, 6e4, 6e4], &[0.0]).is_err());
    }

    fn equal(omega: f64) -> [C64; 2] {
        [C64::new(omega, 0.0), C64::new(omega, 0.0)]
    }

    #[test]
    fn uncoupled_target_stays_empty() {
        let spec = RamanSpec::new(1e5, 2e6, Schedule::Constant).with_duration(1e-3);
        let r = three_level_transfer(&spec, [C64::new(1e5, 0.0), C64::new(0.0, 0.0)]).unwrap();
        let max = r.series("p_target").unwrap().iter().copied().fold(0.0, f64::max);
        assert!(max < 1e-24, "{max}");
    }

    /// Adiabatic elimination: H_eff = −(1/Δ)[[|Ω₁|², Ω₁Ω₂*], [Ω₂Ω₁*, |Ω₂|²]].
    fn eliminated_transfer(omega: f64, detuning: f64, t: f64) -> f64 {
        let coupling = omega * omega / detuning;
        (2.0 * PI * coupling * t).sin().powi(2)
    }

    #[test]
    fn far_detuned_pi_pulse_transfers() {
        let omega = 1e5;
        let spec = RamanSpec::new(1e5, 20.0 * omega, Schedule::PiPulse);
        let r = three_level_transfer(&spec, equal(omega)).unwrap();
        let target = r.summary["final_target"];
        assert!(target > 0.99, "{target}");
        let t = r.summary["duration"];
        let oracle = eliminated_transfer(omega, 20.0 * omega, t);
        assert!((oracle - target).abs() < 0.01, "{oracle} vs {target}");
        assert!(r.summary["differential_light_shift"].abs() < 1e-9);
    }

    #[test]
    fn pi_pulse_needs_detuning() {
        let spec = RamanSpec::new(1e5, 0.0, Schedule::PiPulse);
        assert!(matches!(three_level_transfer(&spec, equal(1e5)), Err(Error::Validation(_))));
    }

    fn stirap_spec(omega0: f64, width: f64) -> RamanSpec {
        // Laser (ii) leads laser (i).
        let schedule = Schedule::Stirap {
            centers: [5.5 * width, 4.0 * width],
            widths: [width, width],
        };
        RamanSpec::new(omega0, 0.0, schedule).with_duration(10.0 * width)
    }

    #[test]
    fn stirap_transfers_adiabatically() {
        let (omega0, width) = (1e6, 50e-6);
        let r = three_level_transfer(&stirap_spec(omega0, width), equal(omega0)).unwrap();
        assert!(r.summary["final_target"] > 0.99, "{}", r.summary["final_target"]);
        assert!(r.summary["peak_excited"] < 0.01, "{}", r.summary["peak_excited"]);
        assert!(r.summary["steps"] >= 2.0 * 200.0 * 10.0);
    }

    #[test]
    fn intuitive_ordering_fails_to_transfer_cleanly() {
        let (omega0, width) = (1e6, 50e-6);
        let mut spec = stirap_spec(omega0, width);
        spec.schedule = Schedule::Stirap {
            centers: [4.0 * width, 5.5 * width],
            widths: [width, width],
        };
        let r = three_level_transfer(&spec, equal(omega0)).unwrap();
        assert!(r.summary["peak_excited"] > 0.01);
    }

    #[test]
    fn raman_overlap_parity_and_limits() {
        let config = LatticeConfig::reference();
        for orbitals in [Orbitals::Harmonic, Orbitals::Wannier] {
            let mut spec = RamanSpec::new(1e5, 1e6, Schedule::PiPulse);
            spec.beam_direction = [0.0, 1.0, 0.0];
            let odd = raman_overlap(&config, &spec, (site_band::EX, site_band::G), orbitals).unwrap();
            assert!(odd.norm() < 1e-10, "{orbitals:?} {odd}");

            spec.beam_direction = [1.0, 0.0, 0.0];
            let along_x = raman_overlap(&config, &spec, (site_band::EX, site_band::G), orbitals).unwrap();
            assert!(along_x.norm() > 0.05, "{orbitals:?} {along_x}");

            spec.wavelength = 1.0;
            let same = raman_overlap(&config, &spec, (site_band::G, site_band::G), orbitals).unwrap();
            assert!((same - C64::new(1.0, 0.0)).norm() < 1e-6, "{orbitals:?} {same}");
        }
    }

    #[test]
    fn stretched_excited_orbital_keeps_structure() {
        let config = LatticeConfig::reference();
        let mut spec = RamanSpec::new(1e5, 1e6, Schedule::PiPulse);
        spec.excited_width_scale = 1.3;
        let along_x = raman_overlap(&config, &spec, (site_band::EX, site_band::G), Orbitals::Harmonic).unwrap();
        assert!(along_x.norm() > 0.01);
        spec.beam_direction = [0.0, 0.0, 1.0];
        let odd = raman_overlap(&config, &spec, (site_band::EX, site_band::G), Orbitals::Harmonic).unwrap();
        assert!(odd.norm() < 1e-10);
    }

    #[test]
    fn raman_spec_validation() {
        let mut spec = RamanSpec::new(1e5, 1e6, Schedule::Constant);
        assert!(spec.validate().is_err(), "missing duration");
        spec.duration = Some(1e-3);
        spec.wavelength = 0.0;
        assert!(spec.validate().is_err());
        let stirap = RamanSpec::new(1e5, 0.0, Schedule::Stirap { centers: [0.0, 0.0], widths: [0.0, 1.0] }).with_duration(1.0);
        assert!(stirap.validate().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn three_level_is_trace_preserving(o1 in 1e3..2e5f64, o2 in 1e3..2e5f64, phase in 0.0..std::f64::consts::TAU, det in -2e6..2e6f64, t in 1e-6..1e-3f64) {
            let spec = RamanSpec::new(1e5, det, Schedule::Constant).with_duration(t);
            let r = three_level_transfer(&spec, [C64::new(o1, 0.0), C64::from_polar(o2, phase)]).unwrap();
            for s in r.series("trace").unwrap() {
                prop_assert!((s - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn gradient_is_linear_in_strength(strength in 1e15..1e19f64, factor in 0.1..10.0f64) {
            let config = LatticeConfig::reference();
            let one = gradient_matrix_element(&GradientSpec::quadratic(strength), &config).unwrap();
            let scaled = gradient_matrix_element(&GradientSpec::quadratic(strength * factor), &config).unwrap();
            prop_assert!((scaled - factor * one).abs() < 1e-10 * scaled.abs());
        }
    }
}
