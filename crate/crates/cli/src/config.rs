//! Run configuration read from a TOML file.
//!
//! Every physical key carries its unit in the name (`spacing_nm`, `b_over_j`, ...).
//! Chain energies are in units of the tunneling J and chain times in ħ/J.

use serde::{Deserialize, Serialize};

use dfsq::bandstruct::{HubbardParams, LatticeConfig, ATOMIC_MASS_UNIT, BOHR_RADIUS};
use dfsq::evolve::{EvolutionOptions, Method};
use dfsq::protocols::Reversal;
use dfsq::sitephys::{GradientOrder, GradientSpec, Orbitals, RamanSpec, Schedule};
use dfsq::spinchain::FieldModel;
use dfsq::ModelParams;

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lattice: Option<LatticeSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overrides: Option<OverridesSection>,
    #[serde(default)]
    pub chain: ChainSection,
    #[serde(default)]
    pub cluster: ClusterSection,
    #[serde(default)]
    pub otoc: OtocSection,
    #[serde(default)]
    pub benchmark: BenchmarkSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub site: SiteSection,
    #[serde(default)]
    pub numerics: NumericsSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl Default for RunConfig {
    /// The reference ⁴⁰K lattice with every section at its default.
    fn default() -> Self {
        Self {
            lattice: Some(LatticeSection::default()),
            overrides: None,
            chain: ChainSection::default(),
            cluster: ClusterSection::default(),
            otoc: OtocSection::default(),
            benchmark: BenchmarkSection::default(),
            sweep: SweepSection::default(),
            site: SiteSection::default(),
            numerics: NumericsSection::default(),
            output: OutputSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatticeSection {
    pub mass_amu: f64,
    pub scattering_length_a0: f64,
    pub spacing_nm: f64,
    pub depths_er: [f64; 3],
    pub planewave_cutoff: usize,
    pub grid_points: usize,
    pub quadrature_periods: usize,
}

impl Default for LatticeSection {
    fn default() -> Self {
        Self {
            mass_amu: 40.0,
            scattering_length_a0: 120.0,
            spacing_nm: 527.0,
            depths_er: [40.0, 60.0, 60.0],
            planewave_cutoff: 20,
            grid_points: 128,
            quadrature_periods: 5,
        }
    }
}

impl LatticeSection {
    pub fn to_config(&self) -> LatticeConfig {
        LatticeConfig {
            mass: self.mass_amu * ATOMIC_MASS_UNIT,
            scattering_length: self.scattering_length_a0 * BOHR_RADIUS,
            spacing: self.spacing_nm * 1e-9,
            depths: self.depths_er,
            planewave_cutoff: self.planewave_cutoff,
            grid_points: self.grid_points,
            quadrature_periods: self.quadrature_periods,
        }
    }
}

/// Hubbard energies given directly, bypassing the band-structure pipeline.
///
/// `tunneling_over_j = 0` switches hopping off while keeping the same energy unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverridesSection {
    /// Size of the energy unit J in Hz, used only for reporting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j_hz: Option<f64>,
    #[serde(default = "one")]
    pub tunneling_over_j: f64,
    pub u_ee_over_j: f64,
    pub u_gg_over_j: f64,
    pub u_eg_over_j: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainSection {
    pub sites: usize,
    pub b_over_j: f64,
    pub field_model: FieldModel,
}

impl Default for ChainSection {
    fn default() -> Self {
        Self {
            sites: 8,
            b_over_j: 369.0,
            field_model: FieldModel::Uniform,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChainModel {
    Spin,
    Hubbard,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterSection {
    pub model: ChainModel,
    pub samples_per_segment: usize,
}

impl Default for ClusterSection {
    fn default() -> Self {
        Self {
            model: ChainModel::Spin,
            samples_per_segment: 40,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OtocSection {
    /// Falls back to `chain.sites`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sites: Option<usize>,
    pub b_over_j: f64,
    pub b_prime_over_j: f64,
    pub times_over_j: Vec<f64>,
    pub reversal: Reversal,
    pub field_model: FieldModel,
    pub normalize: bool,
}

impl Default for OtocSection {
    fn default() -> Self {
        Self {
            sites: None,
            b_over_j: 350.0,
            b_prime_over_j: 370.0,
            times_over_j: (0..=20).map(|i| 4.0 * i as f64).collect(),
            reversal: Reversal::Quench,
            field_model: FieldModel::Uniform,
            normalize: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkSection {
    pub sites: usize,
    /// Falls back to `chain.b_over_j`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_over_j: Option<f64>,
    /// End of the window; defaults to 2|t_c|.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_max_over_j: Option<f64>,
    pub samples: usize,
    pub field_model: FieldModel,
}

impl Default for BenchmarkSection {
    fn default() -> Self {
        Self {
            sites: 2,
            b_over_j: None,
            t_max_over_j: None,
            samples: 400,
            field_model: FieldModel::LinkSummed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub b_min_over_j: f64,
    pub b_max_over_j: f64,
    pub points: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            b_min_over_j: 0.0,
            b_max_over_j: 800.0,
            points: 801,
        }
    }
}

impl SweepSection {
    pub fn grid(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.b_min_over_j];
        }
        let step = (self.b_max_over_j - self.b_min_over_j) / (self.points - 1) as f64;
        (0..self.points).map(|i| self.b_min_over_j + i as f64 * step).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    Constant,
    PiPulse,
    Stirap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RamanSection {
    pub omega0_hz: f64,
    pub detuning_hz: f64,
    pub clebsch_factors: [f64; 2],
    pub wavelength_nm: f64,
    pub beam_direction: [f64; 3],
    pub schedule: ScheduleKind,
    /// Required for constant and STIRAP schedules.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duration_us: Option<f64>,
    /// Centres of laser (i) and laser (ii).
    pub stirap_centers_us: [f64; 2],
    pub stirap_widths_us: [f64; 2],
    pub excited_width_scale: f64,
    pub orbitals: Orbitals,
}

impl Default for RamanSection {
    fn default() -> Self {
        Self {
            omega0_hz: 1e5,
            detuning_hz: 2e6,
            clebsch_factors: [1.0, 1.0],
            wavelength_nm: 770.0,
            beam_direction: [1.0, 0.0, 0.0],
            schedule: ScheduleKind::PiPulse,
            duration_us: None,
            stirap_centers_us: [275.0, 200.0],
            stirap_widths_us: [50.0, 50.0],
            excited_width_scale: 1.0,
            orbitals: Orbitals::Harmonic,
        }
    }
}

impl RamanSection {
    pub fn to_spec(&self) -> RamanSpec {
        let schedule = match self.schedule {
            ScheduleKind::Constant => Schedule::Constant,
            ScheduleKind::PiPulse => Schedule::PiPulse,
            ScheduleKind::Stirap => Schedule::Stirap {
                centers: self.stirap_centers_us.map(|c| c * 1e-6),
                widths: self.stirap_widths_us.map(|w| w * 1e-6),
            },
        };
        RamanSpec {
            omega0: self.omega0_hz,
            detuning: self.detuning_hz,
            clebsch_factors: self.clebsch_factors,
            wavelength: self.wavelength_nm * 1e-9,
            beam_direction: self.beam_direction,
            schedule,
            duration: self.duration_us.map(|d| d * 1e-6),
            excited_width_scale: self.excited_width_scale,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SiteSection {
    pub delta_omega_hz_per_um2: f64,
    pub x0_nm: f64,
    pub gradient_order: GradientOrder,
    /// Zeeman splitting B in the four-band site, Hz.
    pub zeeman_hz: f64,
    pub leakage_duration_ms: f64,
    pub leakage_samples: usize,
    pub raman: RamanSection,
}

impl Default for SiteSection {
    fn default() -> Self {
        Self {
            delta_omega_hz_per_um2: 1e6,
            x0_nm: 0.0,
            gradient_order: GradientOrder::Quadratic,
            zeeman_hz: 0.0,
            leakage_duration_ms: 300.0,
            leakage_samples: 3001,
            raman: RamanSection::default(),
        }
    }
}

impl SiteSection {
    pub fn gradient(&self) -> GradientSpec {
        GradientSpec {
            delta_omega: self.delta_omega_hz_per_um2 * 1e12,
            x0: self.x0_nm * 1e-9,
            order: self.gradient_order,
        }
    }

    pub fn leakage_times(&self) -> Vec<f64> {
        let end = self.leakage_duration_ms * 1e-3;
        let n = self.leakage_samples;
        (0..n).map(|i| end * i as f64 / (n - 1) as f64).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericsSection {
    pub method: Method,
    pub tolerance: f64,
    pub max_krylov_dim: usize,
}

impl Default for NumericsSection {
    fn default() -> Self {
        let e = EvolutionOptions::default();
        Self {
            method: e.method,
            tolerance: e.tolerance,
            max_krylov_dim: e.max_krylov_dim,
        }
    }
}

impl NumericsSection {
    pub fn evolution(&self) -> EvolutionOptions {
        EvolutionOptions {
            method: self.method,
            tolerance: self.tolerance,
            max_krylov_dim: self.max_krylov_dim,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Both,
}

impl Format {
    pub fn csv(self) -> bool {
        matches!(self, Self::Csv | Self::Both)
    }

    pub fn json(self) -> bool {
        matches!(self, Self::Json | Self::Both)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
    pub format: Format,
    /// Reserved; every current command is deterministic.
    pub seed: u64,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: "out".into(),
            format: Format::Both,
            seed: 0,
        }
    }
}

/// The Hubbard model a run works with.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedModel {
    /// Energies in units of J.
    pub params: ModelParams,
    /// Size of J in Hz when known.
    pub unit_hz: Option<f64>,
    pub hubbard: Option<HubbardParams>,
    pub lattice: Option<LatticeConfig>,
}

impl RunConfig {
    pub fn resolve_model(&self) -> CliResult<ResolvedModel> {
        match (&self.lattice, &self.overrides) {
            (Some(l), None) => {
                let lattice = l.to_config();
                let hubbard = HubbardParams::from_config(&lattice)?;
                Ok(ResolvedModel {
                    params: hubbard.to_model(),
                    unit_hz: Some(hubbard.tunneling),
                    hubbard: Some(hubbard),
                    lattice: Some(lattice),
                })
            }
            (None, Some(o)) => Ok(ResolvedModel {
                params: ModelParams {
                    tunneling: o.tunneling_over_j,
                    u_ee: o.u_ee_over_j,
                    u_gg: o.u_gg_over_j,
                    u_eg: o.u_eg_over_j,
                },
                unit_hz: o.j_hz,
                hubbard: None,
                lattice: None,
            }),
            _ => unreachable!("validated: exactly one model source"),
        }
    }
}

/// 1-based line and column of byte `offset`.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |p| before.len() - p - 1) + 1;
    (line, column)
}

/// Line of `key` inside `[section]`, or of the section header when `key` is `None`.
fn locate(text: &str, section: &str, key: Option<&str>) -> (usize, usize) {
    let mut current = String::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_owned();
            if key.is_none() && current == section {
                return (n + 1, 1);
            }
            continue;
        }
        if let Some(k) = key {
            if current == section {
                let name = line.split('=').next().unwrap_or("").trim();
                if name == k {
                    return (n + 1, raw.len() - raw.trim_start().len() + 1);
                }
            }
        }
    }
    (1, 1)
}

struct Checker<'a> {
    text: &'a str,
    path: &'a str,
}

impl Checker<'_> {
    fn fail(&self, section: &str, key: Option<&str>, message: impl Into<String>) -> CliError {
        let (line, column) = locate(self.text, section, key);
        CliError::Config {
            path: self.path.to_owned(),
            line,
            column,
            message: message.into(),
        }
    }

    fn require(&self, ok: bool, section: &str, key: &str, message: impl Into<String>) -> CliResult<()> {
        if ok {
            Ok(())
        } else {
            Err(self.fail(section, Some(key), message))
        }
    }
}

fn finite(v: f64) -> bool {
    v.is_finite()
}

fn positive(v: f64) -> bool {
    v > 0.0 && v.is_finite()
}

/// Parse and validate a configuration; errors point at the offending line.
pub fn parse_config(text: &str, path: &str) -> CliResult<RunConfig> {
    let config: RunConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((1, 1), |s| line_col(text, s.start));
        CliError::Config {
            path: path.to_owned(),
            line,
            column,
            message: e.message().trim().to_owned(),
        }
    })?;
    validate(&config, text, path)?;
    Ok(config)
}

pub fn validate(c: &RunConfig, text: &str, path: &str) -> CliResult<()> {
    let ck = Checker { text, path };
    match (&c.lattice, &c.overrides) {
        (Some(_), Some(_)) => {
            return Err(ck.fail("overrides", None, "give either [lattice] or [overrides], not both"));
        }
        (None, None) => {
            return Err(ck.fail("", None, "one of [lattice] or [overrides] must drive the model"));
        }
        _ => {}
    }
    if let Some(l) = &c.lattice {
        ck.require(positive(l.mass_amu), "lattice", "mass_amu", "mass must be positive")?;
        ck.require(finite(l.scattering_length_a0), "lattice", "scattering_length_a0", "scattering length must be finite")?;
        ck.require(positive(l.spacing_nm), "lattice", "spacing_nm", "spacing must be positive")?;
        ck.require(l.depths_er.iter().all(|&d| positive(d)), "lattice", "depths_er", "depths must be positive")?;
        ck.require(l.planewave_cutoff >= 16, "lattice", "planewave_cutoff", "planewave cutoff must be at least 16")?;
        ck.require(l.grid_points >= 64, "lattice", "grid_points", "grid_points must be at least 64")?;
        ck.require(l.quadrature_periods >= 2, "lattice", "quadrature_periods", "quadrature_periods must be at least 2")?;
    }
    if let Some(o) = &c.overrides {
        for (key, v) in [
            ("tunneling_over_j", o.tunneling_over_j),
            ("u_ee_over_j", o.u_ee_over_j),
            ("u_gg_over_j", o.u_gg_over_j),
            ("u_eg_over_j", o.u_eg_over_j),
        ] {
            ck.require(finite(v), "overrides", key, format!("{key} must be finite"))?;
        }
        if let Some(j) = o.j_hz {
            ck.require(positive(j), "overrides", "j_hz", "j_hz must be positive")?;
        }
    }
    ck.require(c.chain.sites >= 2, "chain", "sites", "a chain needs at least two sites")?;
    ck.require(finite(c.chain.b_over_j), "chain", "b_over_j", "gradient must be finite")?;
    ck.require(c.cluster.samples_per_segment >= 1, "cluster", "samples_per_segment", "need at least one sample")?;
    if let Some(l) = c.otoc.sites {
        ck.require(l >= 2, "otoc", "sites", "OTOC needs at least two sites")?;
    }
    ck.require(
        finite(c.otoc.b_over_j) && finite(c.otoc.b_prime_over_j),
        "otoc",
        "b_over_j",
        "gradients must be finite",
    )?;
    ck.require(
        !c.otoc.times_over_j.is_empty() && c.otoc.times_over_j.iter().all(|&t| t >= 0.0 && t.is_finite()),
        "otoc",
        "times_over_j",
        "times must be a non-empty list of non-negative numbers",
    )?;
    ck.require(c.benchmark.sites >= 2, "benchmark", "sites", "benchmark needs at least two sites")?;
    ck.require(c.benchmark.samples >= 1, "benchmark", "samples", "need at least one sample")?;
    if let Some(t) = c.benchmark.t_max_over_j {
        ck.require(positive(t), "benchmark", "t_max_over_j", "t_max must be positive")?;
    }
    ck.require(c.sweep.points >= 1, "sweep", "points", "sweep needs at least one point")?;
    ck.require(
        finite(c.sweep.b_min_over_j) && finite(c.sweep.b_max_over_j) && c.sweep.b_max_over_j >= c.sweep.b_min_over_j,
        "sweep",
        "b_max_over_j",
        "sweep range must be finite with b_max_over_j ≥ b_min_over_j",
    )?;
    ck.require(finite(c.site.delta_omega_hz_per_um2), "site", "delta_omega_hz_per_um2", "must be finite")?;
    ck.require(finite(c.site.x0_nm), "site", "x0_nm", "must be finite")?;
    ck.require(finite(c.site.zeeman_hz), "site", "zeeman_hz", "must be finite")?;
    ck.require(positive(c.site.leakage_duration_ms), "site", "leakage_duration_ms", "must be positive")?;
    ck.require(c.site.leakage_samples >= 2, "site", "leakage_samples", "need at least two samples")?;
    let raman = &c.site.raman;
    ck.require(positive(raman.wavelength_nm), "site.raman", "wavelength_nm", "wavelength must be positive")?;
    ck.require(
        raman.stirap_widths_us.iter().all(|&w| positive(w)),
        "site.raman",
        "stirap_widths_us",
        "STIRAP widths must be positive",
    )?;
    match raman.schedule {
        ScheduleKind::PiPulse => {
            ck.require(raman.duration_us.is_none(), "site.raman", "duration_us", "pi-pulse duration is derived; remove duration_us")?;
            ck.require(raman.detuning_hz != 0.0, "site.raman", "detuning_hz", "pi-pulse mode needs a nonzero detuning")?;
        }
        _ => ck.require(
            raman.duration_us.is_some_and(positive),
            "site.raman",
            "schedule",
            "constant and STIRAP schedules need a positive duration_us",
        )?,
    }
    raman.to_spec().validate().map_err(|e| ck.fail("site.raman", None, e.to_string()))?;
    ck.require(
        (1e-14..=1e-6).contains(&c.numerics.tolerance),
        "numerics",
        "tolerance",
        "tolerance must lie in [1e-14, 1e-6]",
    )?;
    ck.require(c.numerics.max_krylov_dim >= 2, "numerics", "max_krylov_dim", "Krylov dimension must be at least 2")?;
    ck.require(!c.output.dir.is_empty(), "output", "dir", "output directory must not be empty")?;
    Ok(())
}
