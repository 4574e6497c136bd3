//! One function per subcommand. Each returns the artifacts to write; nothing here touches the disk.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use dfsq::bandstruct::{harmonic_cross_checks, interaction_tensor, HubbardParams};
use dfsq::protocols::{
    benchmark_sigma_x, echo_cluster_protocol, otoc, BenchmarkSpec, ChainSystem, EchoOptions, OtocSpec,
};
use dfsq::sitephys::{
    dfs_rotation_hamiltonian, gradient_closed_form, gradient_matrix_element, gradient_matrix_element_wannier,
    gradient_threshold, multiband_leakage, rabi_couplings, raman_overlap, three_level_transfer,
};
use dfsq::fock::site_band;
use dfsq::sw::{coupling_constants, resonance_check};
use dfsq::Error;

use crate::config::{ChainModel, ResolvedModel, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::{Artifact, Cell, Table};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParamRow {
    pub name: String,
    /// None when the energy unit is not known in Hz.
    pub hz: Option<f64>,
    pub over_j: f64,
}

/// Hubbard coefficients in Hz and in units of J.
pub fn parameter_rows(model: &ResolvedModel) -> Vec<ParamRow> {
    let p = &model.params;
    let unit = model.unit_hz;
    let scale = p.tunneling;
    let row = |name: &str, over_j: f64| ParamRow {
        name: name.to_owned(),
        hz: unit.map(|u| u * over_j),
        over_j,
    };
    let mut rows = vec![
        row("tunneling", scale),
        row("u_ee", p.u_ee),
        row("u_gg", p.u_gg),
        row("u_eg", p.u_eg),
        row("u1", p.u1()),
        row("u2", p.u2()),
        row("u3", p.u3()),
    ];
    if let (Some(h), Some(lattice)) = (&model.hubbard, &model.lattice) {
        let j = h.tunneling;
        let hz = |name: &str, v: f64| ParamRow {
            name: name.to_owned(),
            hz: Some(v),
            over_j: v / j,
        };
        rows.push(hz("tunneling_g", h.tunneling_g));
        rows.push(hz("recoil", h.recoil));
        for (axis, w) in ["x", "y", "z"].iter().zip(h.omega) {
            rows.push(hz(&format!("band_gap_{axis}"), w));
        }
        rows.push(hz("band_detuning", h.band_detuning()));
        if let Ok(est) = harmonic_cross_checks(lattice) {
            for (axis, w) in ["x", "y", "z"].iter().zip(est.trap_frequencies) {
                rows.push(hz(&format!("harmonic_omega_{axis}"), w));
            }
            rows.push(hz("harmonic_u_eg", est.u_eg));
        }
    }
    rows
}

pub fn cmd_params(config: &RunConfig) -> CliResult<Vec<Artifact>> {
    let model = config.resolve_model()?;
    let rows = parameter_rows(&model);
    let mut table = Table::new(&["quantity", "hz", "over_j"]);
    for r in &rows {
        table.push(vec![Cell::from(r.name.as_str()), Cell::from(r.hz), Cell::from(r.over_j)]);
    }
    let mut artifact = Artifact::new("params", "params", table).with("parameters", &rows);
    if let Some(h) = &model.hubbard {
        artifact = artifact.with("hubbard_hz", h);
    }
    Ok(vec![artifact])
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub b_over_j: f64,
    pub j_par: Option<f64>,
    pub j_perp: Option<f64>,
    pub j_xz: Option<f64>,
    pub j_z: Option<f64>,
    pub j_zz: Option<f64>,
    pub valid: bool,
    /// `ok`, `near-resonance` or `pole`.
    pub status: String,
    /// γ of the closest resonance |U_γ|.
    pub nearest_resonance: usize,
    pub resonance_distance: f64,
}

pub fn sweep_rows(model: &ResolvedModel, grid: &[f64]) -> Vec<SweepRow> {
    let p = model.params;
    grid.par_iter()
        .map(|&b| {
            let (nearest, distance) = p
                .resonances()
                .iter()
                .enumerate()
                .map(|(g, u)| (g + 1, (b.abs() - u.abs()).abs()))
                .fold((0, f64::INFINITY), |best, c| if c.1 < best.1 { c } else { best });
            match (resonance_check(&p, b), coupling_constants(&p, b)) {
                (Ok(check), Ok(c)) => SweepRow {
                    b_over_j: b,
                    j_par: Some(c.j_par),
                    j_perp: Some(c.j_perp),
                    j_xz: Some(c.j_xz),
                    j_z: Some(c.j_z),
                    j_zz: Some(c.j_zz),
                    valid: check.valid,
                    status: if check.valid { "ok" } else { "near-resonance" }.into(),
                    nearest_resonance: nearest,
                    resonance_distance: distance,
                },
                _ => SweepRow {
                    b_over_j: b,
                    j_par: None,
                    j_perp: None,
                    j_xz: None,
                    j_z: None,
                    j_zz: None,
                    valid: false,
                    status: "pole".into(),
                    nearest_resonance: nearest,
                    resonance_distance: distance,
                },
            }
        })
        .collect()
}

pub fn cmd_sweep_gradient(config: &RunConfig) -> CliResult<Vec<Artifact>> {
    let model = config.resolve_model()?;
    let rows = sweep_rows(&model, &config.sweep.grid());
    let mut table = Table::new(&[
        "b_over_j",
        "j_par",
        "j_perp",
        "j_xz",
        "j_z",
        "j_zz",
        "valid",
        "status",
        "nearest_resonance",
        "resonance_distance",
    ]);
    for r in &rows {
        table.push(vec![
            r.b_over_j.into(),
            r.j_par.into(),
            r.j_perp.into(),
            r.j_xz.into(),
            r.j_z.into(),
            r.j_zz.into(),
            Cell::from(if r.valid { "true" } else { "false" }),
            Cell::from(r.status.as_str()),
            Cell::Text(r.nearest_resonance.to_string()),
            r.resonance_distance.into(),
        ]);
    }
    let resonances = model.params.resonances().map(f64::abs);
    Ok(vec![Artifact::new("sweep_gradient", "sweep-gradient", table)
        .with("resonances_over_j", &resonances)
        .with("rows", &rows)])
}

pub fn cmd_cluster(config: &RunConfig) -> CliResult<Vec<Artifact>> {
    let model = config.resolve_model()?;
    let chain = &config.chain;
    let p = coupling_constants(&model.params, chain.b_over_j)?.with_sites(chain.sites);
    let system = match config.cluster.model {
        ChainModel::Spin => ChainSystem::spin_model(&model.params, chain.b_over_j, chain.sites, chain.field_model)?,
        ChainModel::Hubbard => ChainSystem::hubbard(&model.params, chain.b_over_j, chain.sites)?,
    };
    let options = EchoOptions {
        samples_per_segment: config.cluster.samples_per_segment,
        evolution: config.numerics.evolution(),
    };
    let result = echo_cluster_protocol(&system, &p, &options)?;
    Ok(vec![Artifact::from_protocol("cluster", "cluster", &result).with("couplings", &p)])
}

pub fn otoc_spec(config: &RunConfig) -> OtocSpec {
    let o = &config.otoc;
    OtocSpec {
        sites: o.sites.unwrap_or(config.chain.sites),
        times: o.times_over_j.clone(),
        b: o.b_over_j,
        b_prime: o.b_prime_over_j,
        reversal: o.reversal,
        field_model: o.field_model,
        normalize: o.normalize,
    }
}

pub fn cmd_otoc(config: &RunConfig) -> CliResult<Vec<Artifact>> {
    let model = config.resolve_model()?;
    let spec = otoc_spec(config);
    let result = otoc(&spec, &model.params, config.numerics.evolution())?;
    let series = result.to_protocol_result(&spec)?;

    // θ-grid view: one row per rotation angle, one column per time.
    let mut columns = vec!["theta".to_owned(), "n".to_owned()];
    columns.extend((0..result.times.len()).map(|k| format!("c_t{k}")));
    let mut grid = Table {
        columns,
        rows: Vec::new(),
    };
    for (n, &theta) in result.thetas.iter().enumerate() {
        let mut row = vec![Cell::Number(theta), Cell::Text(n.to_string())];
        row.extend(result.average.iter().map(|at_t| Cell::Number(at_t[n])));
        grid.push(row);
    }
    Ok(vec![
        Artifact::from_protocol("otoc", "otoc", &series),
        Artifact::new("otoc_theta", "otoc", grid)
            .with("times", &result.times)
            .with("thetas", &result.thetas)
            .with("average", &result.average),
    ])
}

pub fn cmd_benchmark(config: &RunConfig) -> CliResult<Vec<Artifact>> {
    let model = config.resolve_model()?;
    let b = &config.benchmark;
    let spec = BenchmarkSpec {
        sites: b.sites,
        b: b.b_over_j.unwrap_or(config.chain.b_over_j),
        t_max: b.t_max_over_j,
        samples: b.samples,
        field_model: b.field_model,
    };
    let result = benchmark_sigma_x(&model.params, &spec, config.numerics.evolution())?;
    Ok(vec![Artifact::from_protocol("benchmark", "benchmark", &result)])
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradientReport {
    pub matrix_element_hz: f64,
    pub closed_form_hz: f64,
    pub wannier_hz: f64,
    pub threshold_hz_per_um2: f64,
    pub u_eg_hz: f64,
    pub rotation_matrix_hz: [[f64; 2]; 2],
    pub sigma_x_hz: f64,
    pub sigma_z_hz: f64,
    pub constant_hz: f64,
    pub splitting_hz: f64,
}

fn site_lattice(config: &RunConfig) -> CliResult<(dfsq::bandstruct::LatticeConfig, HubbardParams)> {
    let model = config.resolve_model()?;
    match (model.lattice, model.hubbard) {
        (Some(l), Some(h)) => Ok((l, h)),
        _ => Err(CliError::Core(Error::Validation(
            "the site command needs a [lattice] section for the wavefunctions".into(),
        ))),
    }
}

pub fn cmd_site(config: &RunConfig) -> CliResult<Vec<Artifact>> {
    let (lattice, hubbard) = site_lattice(config)?;
    let site = &config.site;

    let gradient = site.gradient();
    let element = gradient_matrix_element(&gradient, &lattice)?;
    let closed = gradient_closed_form(gradient.delta_omega, &lattice)?;
    let wannier = gradient_matrix_element_wannier(&gradient, &lattice)?;
    let threshold = gradient_threshold(hubbard.u_eg, &lattice)? * 1e-12;
    let rotation = dfs_rotation_hamiltonian(&dfsq::sitephys::GradientSpec { order: dfsq::sitephys::GradientOrder::Quadratic, ..gradient }, &lattice, &hubbard)?;
    let report = GradientReport {
        matrix_element_hz: element,
        closed_form_hz: closed,
        wannier_hz: wannier,
        threshold_hz_per_um2: threshold,
        u_eg_hz: hubbard.u_eg,
        rotation_matrix_hz: rotation.matrix,
        sigma_x_hz: rotation.sigma_x,
        sigma_z_hz: rotation.sigma_z,
        constant_hz: rotation.constant,
        splitting_hz: rotation.splitting(),
    };
    let mut table = Table::new(&["quantity", "value"]);
    for (k, v) in [
        ("matrix_element_hz", element),
        ("closed_form_hz", closed),
        ("wannier_hz", wannier),
        ("threshold_hz_per_um2", threshold),
        ("u_eg_hz", hubbard.u_eg),
        ("sigma_x_hz", rotation.sigma_x),
        ("sigma_z_hz", rotation.sigma_z),
        ("constant_hz", rotation.constant),
        ("splitting_hz", rotation.splitting()),
    ] {
        table.push(vec![Cell::from(k), Cell::from(v)]);
    }
    let gradient_artifact = Artifact::new("site_gradient", "site", table).with("gradient", &report);

    let tensor = interaction_tensor(&lattice)?;
    let mut leakage = multiband_leakage(&tensor, site.zeeman_hz, hubbard.omega, &site.leakage_times())?;
    leakage.summary.insert("band_detuning".into(), hubbard.band_detuning());
    leakage.summary.insert("expected_period".into(), 1.0 / hubbard.u_eg);

    let spec = site.raman.to_spec();
    let couplings = rabi_couplings(&lattice, &spec, site.raman.orbitals)?;
    let mut transfer = three_level_transfer(&spec, couplings)?;
    let overlap_first = raman_overlap(&lattice, &spec, (site_band::G, site_band::G), site.raman.orbitals)?;
    let overlap_second = raman_overlap(&lattice, &spec, (site_band::EX, site_band::G), site.raman.orbitals)?;
    for (k, v) in [
        ("overlap_i_abs", overlap_first.norm()),
        ("overlap_ii_abs", overlap_second.norm()),
        ("rabi_i_hz", couplings[0].norm()),
        ("rabi_ii_hz", couplings[1].norm()),
        ("overlap_ii_phase", overlap_second.arg() / PI),
    ] {
        transfer.summary.insert(k.into(), v);
    }

    Ok(vec![
        gradient_artifact,
        Artifact::from_protocol("site_leakage", "site", &leakage),
        Artifact::from_protocol("site_transfer", "site", &transfer),
    ])
}
