//! Fermionic occupation bases and second-quantized Hamiltonian builders.
//!
//! A basis state is a 64-bit word whose bit `m` is the occupation of mode `m`.
//! The state it denotes is `c†_{m1} c†_{m2} … |0⟩` with modes in ascending order,
//! which fixes every fermionic sign below.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{SparseOperator, C64};
use crate::ModelParams;

pub use crate::linalg::StateVector;

pub type Bits = u64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Spin {
    Up,
    Down,
}

impl Spin {
    pub const BOTH: [Spin; 2] = [Spin::Up, Spin::Down];

    fn offset(self) -> usize {
        match self {
            Spin::Up => 0,
            Spin::Down => 1,
        }
    }
}

/// Band labels of the chain model, in per-site mode order.
pub mod chain_band {
    pub const E: usize = 0;
    pub const G: usize = 1;
}

/// Band labels of the single-site four-band model, in per-site mode order.
pub mod site_band {
    pub const G: usize = 0;
    pub const EX: usize = 1;
    pub const EY: usize = 2;
    pub const EZ: usize = 3;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Layout {
    /// Per site: (e,↑), (e,↓), (g,↑), (g,↓).
    Chain,
    /// One site: (g,↑), (g,↓), (e_x,↑), (e_x,↓), (e_y,↑), (e_y,↓), (e_z,↑), (e_z,↓).
    SiteMultiband,
}

/// Site-major, then band, then spin.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeIndexing {
    sites: usize,
    layout: Layout,
}

impl ModeIndexing {
    pub fn chain(sites: usize) -> Result<Self> {
        Self::new(sites, Layout::Chain)
    }

    pub fn site_multiband() -> Self {
        Self {
            sites: 1,
            layout: Layout::SiteMultiband,
        }
    }

    pub fn new(sites: usize, layout: Layout) -> Result<Self> {
        let out = Self { sites, layout };
        if sites == 0 {
            return invalid("mode indexing needs at least one site");
        }
        if out.n_modes() > 64 {
            return invalid(format!(
                "{} modes exceed the 64-bit occupation word",
                out.n_modes()
            ));
        }
        Ok(out)
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn bands_per_site(&self) -> usize {
        match self.layout {
            Layout::Chain => 2,
            Layout::SiteMultiband => 4,
        }
    }

    pub fn modes_per_site(&self) -> usize {
        2 * self.bands_per_site()
    }

    pub fn n_modes(&self) -> usize {
        self.sites * self.modes_per_site()
    }

    /// The band whose per-site occupation a sector may pin.
    pub fn g_band(&self) -> usize {
        match self.layout {
            Layout::Chain => chain_band::G,
            Layout::SiteMultiband => site_band::G,
        }
    }

    pub fn mode(&self, site: usize, band: usize, spin: Spin) -> usize {
        debug_assert!(site < self.sites && band < self.bands_per_site());
        site * self.modes_per_site() + 2 * band + spin.offset()
    }

    pub fn decompose(&self, mode: usize) -> (usize, usize, Spin) {
        let site = mode / self.modes_per_site();
        let local = mode % self.modes_per_site();
        let spin = if local.is_multiple_of(2) { Spin::Up } else { Spin::Down };
        (site, local / 2, spin)
    }

    pub fn spin_mask(&self, spin: Spin) -> Bits {
        (0..self.n_modes())
            .filter(|&m| self.decompose(m).2 == spin)
            .fold(0, |acc, m| acc | (1 << m))
    }

    pub fn band_mask(&self, site: usize, band: usize) -> Bits {
        (1 << self.mode(site, band, Spin::Up)) | (1 << self.mode(site, band, Spin::Down))
    }

    pub fn site_mask(&self, site: usize) -> Bits {
        let w = self.modes_per_site();
        ((1u64 << w) - 1) << (site * w)
    }
}

/// Conserved quantities that select a block of the Hamiltonian.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymmetrySector {
    pub n_up: usize,
    pub n_down: usize,
    /// Total g-band occupation pinned on every site.
    pub g_occupancy: Option<Vec<u8>>,
}

impl SymmetrySector {
    /// N↑ = N↓ = L with exactly one g atom per site: the sector holding the logical register.
    pub fn one_g_per_site(sites: usize) -> Self {
        Self {
            n_up: sites,
            n_down: sites,
            g_occupancy: Some(vec![1; sites]),
        }
    }
}

/// Ordered list of occupation words of one sector.
#[derive(Clone, Debug, PartialEq)]
pub struct FockBasis {
    indexing: ModeIndexing,
    sector: SymmetrySector,
    states: Vec<Bits>,
}

impl FockBasis {
    pub fn indexing(&self) -> &ModeIndexing {
        &self.indexing
    }

    pub fn sector(&self) -> &SymmetrySector {
        &self.sector
    }

    pub fn states(&self) -> &[Bits] {
        &self.states
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn state(&self, index: usize) -> Bits {
        self.states[index]
    }

    pub fn index_of(&self, bits: Bits) -> Option<usize> {
        self.states.binary_search(&bits).ok()
    }

    pub fn contains(&self, bits: Bits) -> bool {
        self.index_of(bits).is_some()
    }

    /// Check a word against every sector constraint.
    pub fn satisfies(indexing: &ModeIndexing, sector: &SymmetrySector, bits: Bits) -> bool {
        if (bits & indexing.spin_mask(Spin::Up)).count_ones() as usize != sector.n_up {
            return false;
        }
        if (bits & indexing.spin_mask(Spin::Down)).count_ones() as usize != sector.n_down {
            return false;
        }
        if let Some(g) = &sector.g_occupancy {
            for (site, &occ) in g.iter().enumerate() {
                let mask = indexing.band_mask(site, indexing.g_band());
                if (bits & mask).count_ones() != occ as u32 {
                    return false;
                }
            }
        }
        true
    }
}

/// Enumerate every occupation word of the sector, sorted ascending.
pub fn build_basis(indexing: ModeIndexing, sector: SymmetrySector) -> Result<FockBasis> {
    let half = indexing.n_modes() / 2;
    if sector.n_up > half || sector.n_down > half {
        return invalid(format!(
            "sector N↑={}, N↓={} exceeds {} modes per spin",
            sector.n_up, sector.n_down, half
        ));
    }
    if let Some(g) = &sector.g_occupancy {
        if g.len() != indexing.sites() {
            return invalid(format!(
                "g occupancy list has {} entries for {} sites",
                g.len(),
                indexing.sites()
            ));
        }
        if g.iter().any(|&n| n > 2) {
            return invalid("g occupancy entries must be 0, 1 or 2");
        }
    }

    // Per-site local patterns with their spin counts.
    let w = indexing.modes_per_site();
    let patterns: Vec<(Bits, usize, usize, u32)> = (0..(1u64 << w))
        .map(|p| {
            let up = (0..w).filter(|m| m % 2 == 0 && p >> m & 1 == 1).count();
            let down = (0..w).filter(|m| m % 2 == 1 && p >> m & 1 == 1).count();
            let g = (p >> (2 * indexing.g_band()) & 0b11).count_ones();
            (p, up, down, g)
        })
        .collect();
    let max_per_spin = indexing.bands_per_site();

    let mut states = Vec::new();
    let mut stack: Vec<(usize, Bits, usize, usize)> = vec![(0, 0, 0, 0)];
    while let Some((site, bits, up, down)) = stack.pop() {
        if site == indexing.sites() {
            if up == sector.n_up && down == sector.n_down {
                states.push(bits);
            }
            continue;
        }
        let left = indexing.sites() - site - 1;
        for &(p, pu, pd, pg) in &patterns {
            if let Some(g) = &sector.g_occupancy {
                if pg != g[site] as u32 {
                    continue;
                }
            }
            let (nu, nd) = (up + pu, down + pd);
            if nu > sector.n_up || nd > sector.n_down {
                continue;
            }
            if sector.n_up - nu > left * max_per_spin || sector.n_down - nd > left * max_per_spin {
                continue;
            }
            stack.push((site + 1, bits | (p << (site * w)), nu, nd));
        }
    }
    states.sort_unstable();
    Ok(FockBasis {
        indexing,
        sector,
        states,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    Create,
    Annihilate,
}

/// Apply c†_mode or c_mode to a basis word; `None` when the result vanishes.
pub fn apply_mode_operator(state: Bits, mode: usize, kind: OpKind) -> Option<(Bits, f64)> {
    let bit = 1u64 << mode;
    let occupied = state & bit != 0;
    match (kind, occupied) {
        (OpKind::Create, true) | (OpKind::Annihilate, false) => None,
        _ => {
            let below = (state & (bit - 1)).count_ones();
            let sign = if below.is_multiple_of(2) { 1.0 } else { -1.0 };
            Some((state ^ bit, sign))
        }
    }
}

/// Apply a product of ladder operators written left to right; the rightmost acts first.
pub fn apply_string(state: Bits, ops: &[(usize, OpKind)]) -> Option<(Bits, f64)> {
    let mut s = state;
    let mut sign = 1.0;
    for &(mode, kind) in ops.iter().rev() {
        let (next, sg) = apply_mode_operator(s, mode, kind)?;
        s = next;
        sign *= sg;
    }
    Some((s, sign))
}

fn n(bits: Bits, mode: usize) -> f64 {
    (bits >> mode & 1) as f64
}

fn require_chain(basis: &FockBasis) -> Result<()> {
    if basis.indexing().layout() != Layout::Chain {
        return invalid("builder needs the two-band chain layout");
    }
    Ok(())
}

/// Push `coeff · ops` acting on every basis state, with target lookup.
fn push_string(
    basis: &FockBasis,
    ops: &[(usize, OpKind)],
    coeff: f64,
    trip: &mut Vec<(usize, usize, C64)>,
) -> Result<()> {
    for (col, &s) in basis.states().iter().enumerate() {
        if let Some((t, sign)) = apply_string(s, ops) {
            let row = basis.index_of(t).ok_or_else(|| {
                Error::Validation(format!(
                    "operator maps state {s:#b} outside the sector (to {t:#b})"
                ))
            })?;
            trip.push((row, col, C64::new(coeff * sign, 0.0)));
        }
    }
    Ok(())
}

/// −J Σ_⟨ij⟩σ (c†_{i,e,σ} c_{j,e,σ} + h.c.) on an open chain.
pub fn build_hopping(basis: &FockBasis, tunneling: f64) -> Result<SparseOperator> {
    require_chain(basis)?;
    let idx = basis.indexing();
    let mut trip = Vec::new();
    for site in 0..idx.sites().saturating_sub(1) {
        for spin in Spin::BOTH {
            let a = idx.mode(site, chain_band::E, spin);
            let b = idx.mode(site + 1, chain_band::E, spin);
            for (to, from) in [(a, b), (b, a)] {
                push_string(
                    basis,
                    &[(to, OpKind::Create), (from, OpKind::Annihilate)],
                    -tunneling,
                    &mut trip,
                )?;
            }
        }
    }
    SparseOperator::from_triplets(basis.dim(), trip, true)
}

/// Onsite density-density terms plus the e–g spin exchange.
pub fn build_interaction(basis: &FockBasis, params: &ModelParams) -> Result<SparseOperator> {
    require_chain(basis)?;
    let idx = basis.indexing();
    let mut trip = Vec::new();
    for (col, &s) in basis.states().iter().enumerate() {
        let mut diag = 0.0;
        for site in 0..idx.sites() {
            let eu = n(s, idx.mode(site, chain_band::E, Spin::Up));
            let ed = n(s, idx.mode(site, chain_band::E, Spin::Down));
            let gu = n(s, idx.mode(site, chain_band::G, Spin::Up));
            let gd = n(s, idx.mode(site, chain_band::G, Spin::Down));
            diag += params.u_ee * eu * ed
                + params.u_gg * gu * gd
                + 0.5 * params.u_eg * (eu * gd + ed * gu);
        }
        if diag != 0.0 {
            trip.push((col, col, C64::new(diag, 0.0)));
        }
    }
    for site in 0..idx.sites() {
        let eu = idx.mode(site, chain_band::E, Spin::Up);
        let ed = idx.mode(site, chain_band::E, Spin::Down);
        let gu = idx.mode(site, chain_band::G, Spin::Up);
        let gd = idx.mode(site, chain_band::G, Spin::Down);
        use OpKind::*;
        let fwd = [(eu, Create), (ed, Annihilate), (gd, Create), (gu, Annihilate)];
        let back = [(gu, Create), (gd, Annihilate), (ed, Create), (eu, Annihilate)];
        push_string(basis, &fwd, -0.5 * params.u_eg, &mut trip)?;
        push_string(basis, &back, -0.5 * params.u_eg, &mut trip)?;
    }
    SparseOperator::from_triplets(basis.dim(), trip, true)
}

/// (B/2) Σ_j j (n_{j↑} − n_{j↓}) with sites numbered from 1.
pub fn build_gradient(basis: &FockBasis, b: f64) -> Result<SparseOperator> {
    require_chain(basis)?;
    let idx = basis.indexing();
    let diag: Vec<f64> = basis
        .states()
        .iter()
        .map(|&s| {
            (0..idx.sites())
                .map(|site| {
                    let m = idx.site_mask(site);
                    let up = (s & m & idx.spin_mask(Spin::Up)).count_ones() as f64;
                    let down = (s & m & idx.spin_mask(Spin::Down)).count_ones() as f64;
                    0.5 * b * (site + 1) as f64 * (up - down)
                })
                .sum()
        })
        .collect();
    Ok(SparseOperator::diagonal(&diag))
}

/// Full chain Hamiltonian: tunneling + interactions + gradient.
pub fn build_hubbard(basis: &FockBasis, params: &ModelParams, b: f64) -> Result<SparseOperator> {
    build_hopping(basis, params.tunneling)?
        .add(&build_interaction(basis, params)?)?
        .add(&build_gradient(basis, b)?)
}

/// Two-body coefficients U_{μ1μ2μ3μ4} over the four single-site bands (g, e_x, e_y, e_z).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionTensor {
    values: Vec<f64>,
}

impl InteractionTensor {
    pub fn zeros() -> Self {
        Self {
            values: vec![0.0; 256],
        }
    }

    pub fn from_fn(f: impl Fn(usize, usize, usize, usize) -> f64) -> Self {
        let mut t = Self::zeros();
        for a in 0..4 {
            for b in 0..4 {
                for c in 0..4 {
                    for d in 0..4 {
                        t.set(a, b, c, d, f(a, b, c, d));
                    }
                }
            }
        }
        t
    }

    fn slot(a: usize, b: usize, c: usize, d: usize) -> usize {
        ((a * 4 + b) * 4 + c) * 4 + d
    }

    pub fn get(&self, a: usize, b: usize, c: usize, d: usize) -> f64 {
        self.values[Self::slot(a, b, c, d)]
    }

    pub fn set(&mut self, a: usize, b: usize, c: usize, d: usize, v: f64) {
        self.values[Self::slot(a, b, c, d)] = v;
    }

    /// The two-body operator is Hermitian iff U_{abcd} = U_{dcba}.
    pub fn max_asymmetry(&self) -> f64 {
        let mut dev: f64 = 0.0;
        for a in 0..4 {
            for b in 0..4 {
                for c in 0..4 {
                    for d in 0..4 {
                        dev = dev.max((self.get(a, b, c, d) - self.get(d, c, b, a)).abs());
                    }
                }
            }
        }
        dev
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Single-site four-band Hamiltonian: general two-body term, uniform field, band offsets.
///
/// `trap_frequencies` are the onsite excitation energies along x, y, z in the same unit as
/// the tensor.
pub fn build_site_multiband(
    basis: &FockBasis,
    tensor: &InteractionTensor,
    b: f64,
    trap_frequencies: [f64; 3],
) -> Result<SparseOperator> {
    if basis.indexing().layout() != Layout::SiteMultiband {
        return invalid("builder needs the single-site four-band layout");
    }
    let scale = tensor.max_abs().max(1.0);
    if tensor.max_asymmetry() > 1e-12 * scale {
        return invalid(format!(
            "interaction tensor is not Hermitian (max |U_abcd − U_dcba| = {:e})",
            tensor.max_asymmetry()
        ));
    }
    let idx = basis.indexing();
    let mut trip = Vec::new();
    use OpKind::*;
    for a in 0..4 {
        for bb in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let u = tensor.get(a, bb, c, d);
                    if u == 0.0 {
                        continue;
                    }
                    for s1 in Spin::BOTH {
                        for s2 in Spin::BOTH {
                            let ops = [
                                (idx.mode(0, a, s1), Create),
                                (idx.mode(0, bb, s2), Create),
                                (idx.mode(0, c, s2), Annihilate),
                                (idx.mode(0, d, s1), Annihilate),
                            ];
                            push_string(basis, &ops, 0.5 * u, &mut trip)?;
                        }
                    }
                }
            }
        }
    }
    let half_sum = 0.5 * trap_frequencies.iter().sum::<f64>();
    for (col, &s) in basis.states().iter().enumerate() {
        let mut diag = 0.0;
        for band in 0..4 {
            for spin in Spin::BOTH {
                let occ = n(s, idx.mode(0, band, spin));
                if occ == 0.0 {
                    continue;
                }
                let excitation = if band == site_band::G { 0.0 } else { trap_frequencies[band - 1] };
                let zeeman = match spin {
                    Spin::Up => 0.5 * b,
                    Spin::Down => -0.5 * b,
                };
                diag += occ * (half_sum + excitation + zeeman);
            }
        }
        trip.push((col, col, C64::new(diag, 0.0)));
    }
    let op = SparseOperator::from_triplets(basis.dim(), trip, true)?;
    let dev = op.max_hermitian_deviation();
    if dev > 1e-12 * scale {
        return Err(Error::Validation(format!(
            "assembled multiband Hamiltonian is not Hermitian ({dev:e})"
        )));
    }
    Ok(op)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn chain_basis(l: usize) -> FockBasis {
        build_basis(ModeIndexing::chain(l).unwrap(), SymmetrySector::one_g_per_site(l)).unwrap()
    }

    /// Local 4-bit patterns written as kets |n_e↑ n_e↓ n_g↑ n_g↓⟩.
    fn ket(s: &str) -> Bits {
        s.chars()
            .filter(|c| *c == '0' || *c == '1')
            .enumerate()
            .fold(0, |acc, (m, ch)| acc | (((ch == '1') as u64) << m))
    }

    fn params() -> ModelParams {
        ModelParams {
            tunneling: 1.3,
            u_ee: 179.0,
            u_gg: 209.0,
            u_eg: 239.0,
        }
    }

    #[test]
    fn single_site_unconstrained_sector() {
        let basis = build_basis(
            ModeIndexing::chain(1).unwrap(),
            SymmetrySector { n_up: 1, n_down: 1, g_occupancy: None },
        )
        .unwrap();
        let mut expect = [ket("1001"), ket("0110"), ket("1100"), ket("0011")];
        expect.sort();
        assert_eq!(basis.states(), &expect[..]);
    }

    #[test]
    fn forced_double_g_occupation() {
        let basis = build_basis(
            ModeIndexing::chain(1).unwrap(),
            SymmetrySector { n_up: 1, n_down: 1, g_occupancy: Some(vec![2]) },
        )
        .unwrap();
        assert_eq!(basis.states(), &[ket("0011")]);
    }

    #[test]
    fn constrained_dimension_matches_brute_force_filter() {
        for l in 1..=4 {
            let idx = ModeIndexing::chain(l).unwrap();
            let sector = SymmetrySector::one_g_per_site(l);
            let brute: Vec<Bits> = (0..(1u64 << idx.n_modes()))
                .filter(|&s| FockBasis::satisfies(&idx, &sector, s))
                .collect();
            let basis = build_basis(idx, sector).unwrap();
            assert_eq!(basis.states(), &brute[..]);
        }
        assert_eq!(chain_basis(2).dim(), 10);
        assert_eq!(chain_basis(4).dim(), 346);
    }

    #[test]
    fn empty_sector_gives_empty_basis() {
        let basis = build_basis(
            ModeIndexing::chain(1).unwrap(),
            SymmetrySector { n_up: 2, n_down: 0, g_occupancy: Some(vec![0]) },
        )
        .unwrap();
        assert_eq!(basis.dim(), 0);
        assert_eq!(build_hopping(&basis, 1.0).unwrap().dim(), 0);
    }

    #[test]
    fn inconsistent_sector_is_rejected() {
        let idx = ModeIndexing::chain(1).unwrap();
        assert!(build_basis(idx, SymmetrySector { n_up: 3, n_down: 0, g_occupancy: None }).is_err());
        assert!(build_basis(idx, SymmetrySector { n_up: 1, n_down: 1, g_occupancy: Some(vec![1, 1]) }).is_err());
        assert!(build_basis(idx, SymmetrySector { n_up: 1, n_down: 1, g_occupancy: Some(vec![3]) }).is_err());
        assert!(ModeIndexing::chain(17).is_err());
    }

    #[test]
    fn mode_operator_examples() {
        assert_eq!(apply_mode_operator(ket("1001"), 0, OpKind::Annihilate), Some((ket("0001"), 1.0)));
        assert_eq!(apply_mode_operator(ket("1001"), 0, OpKind::Create), None);
        assert_eq!(apply_mode_operator(ket("1001"), 3, OpKind::Annihilate), Some((ket("1000"), -1.0)));
    }

    #[test]
    fn canonical_anticommutation_on_four_modes() {
        // {c_m, c†_n} = δ_mn as a 16×16 matrix identity.
        let apply = |ops: &[(usize, OpKind)]| {
            let mut m = DMatrix::<f64>::zeros(16, 16);
            for s in 0..16u64 {
                if let Some((t, sg)) = apply_string(s, ops) {
                    m[(t as usize, s as usize)] += sg;
                }
            }
            m
        };
        for a in 0..4 {
            for b in 0..4 {
                let ab = apply(&[(a, OpKind::Annihilate), (b, OpKind::Create)]);
                let ba = apply(&[(b, OpKind::Create), (a, OpKind::Annihilate)]);
                let expect = if a == b { DMatrix::identity(16, 16) } else { DMatrix::zeros(16, 16) };
                assert_eq!(ab + ba, expect, "modes {a},{b}");
                let cc = apply(&[(a, OpKind::Annihilate), (b, OpKind::Annihilate)])
                    + apply(&[(b, OpKind::Annihilate), (a, OpKind::Annihilate)]);
                assert_eq!(cc, DMatrix::zeros(16, 16));
            }
        }
    }

    #[test]
    fn hopping_single_site_is_zero_and_two_site_single_atom_spectrum() {
        assert_eq!(build_hopping(&chain_basis(1), 1.0).unwrap().nnz(), 0);
        let basis = build_basis(
            ModeIndexing::chain(2).unwrap(),
            SymmetrySector { n_up: 1, n_down: 0, g_occupancy: Some(vec![0, 0]) },
        )
        .unwrap();
        let h = build_hopping(&basis, 0.7).unwrap().to_dense();
        let mut ev: Vec<f64> = h.map(|v| v.re).symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        assert!((ev[0] + 0.7).abs() < 1e-14 && (ev[1] - 0.7).abs() < 1e-14);
    }

    #[test]
    fn interaction_on_single_site_dfs_states() {
        let basis = chain_basis(1);
        let h = build_interaction(&basis, &params()).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let a = basis.index_of(ket("1001")).unwrap();
        let b = basis.index_of(ket("0110")).unwrap();
        let mut up = StateVector::zeros(basis.dim());
        up.amplitudes_mut()[a] = C64::new(s, 0.0);
        up.amplitudes_mut()[b] = C64::new(s, 0.0);
        let hup = up.apply(&h).unwrap();
        assert!(hup.norm() < 1e-12);
        let mut down = up.clone();
        down.amplitudes_mut()[b] = C64::new(-s, 0.0);
        let hdown = down.apply(&h).unwrap();
        for (x, y) in hdown.amplitudes().iter().zip(down.amplitudes()) {
            assert!((x - y * 239.0).norm() < 1e-12);
        }
        let ee = basis.index_of(ket("1100"));
        assert!(ee.is_none(), "doubly occupied e state lives outside the one-g sector");
        let free = build_basis(
            ModeIndexing::chain(1).unwrap(),
            SymmetrySector { n_up: 1, n_down: 1, g_occupancy: None },
        )
        .unwrap();
        let hf = build_interaction(&free, &params()).unwrap();
        let k = free.index_of(ket("1100")).unwrap();
        assert_eq!(hf.get(k, k).re, 179.0);
    }

    #[test]
    fn gradient_examples_and_commutation() {
        let basis = build_basis(
            ModeIndexing::chain(2).unwrap(),
            SymmetrySector { n_up: 1, n_down: 0, g_occupancy: None },
        )
        .unwrap();
        let hb = build_gradient(&basis, 3.0).unwrap();
        let on_site2 = basis.index_of(1 << basis.indexing().mode(1, chain_band::E, Spin::Up)).unwrap();
        assert_eq!(hb.get(on_site2, on_site2).re, 3.0);

        let full = build_basis(
            ModeIndexing::chain(2).unwrap(),
            SymmetrySector { n_up: 2, n_down: 2, g_occupancy: None },
        )
        .unwrap();
        let hb = build_gradient(&full, 369.0).unwrap();
        let hu = build_interaction(&full, &params()).unwrap();
        assert!(hb.commutator(&hu).unwrap().max_abs() < 1e-9);
    }

    #[test]
    fn unperturbed_two_site_energies() {
        // J = 0: the Fock states of the excited manifold and the DFS block carry the
        // energies 0, U_eg, U_eg, 2U_eg and U_ee + U_eg/2 ± B/2.
        let p = params().with_tunneling(0.0);
        let b = 369.0;
        let basis = chain_basis(2);
        let h = build_hubbard(&basis, &p, b).unwrap();
        let mut ev: Vec<f64> = h.to_dense().map(|v| v.re).symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        let mut expect = vec![
            0.0,
            p.u_eg,
            p.u_eg,
            2.0 * p.u_eg,
            p.u_ee + p.u_eg / 2.0 + b / 2.0,
            p.u_ee + p.u_eg / 2.0 + b / 2.0,
            p.u_ee + p.u_eg / 2.0 - b / 2.0,
            p.u_ee + p.u_eg / 2.0 - b / 2.0,
            -b,
            b,
        ];
        expect.sort_by(f64::total_cmp);
        for (a, e) in ev.iter().zip(&expect) {
            assert!((a - e).abs() < 1e-10, "{ev:?} vs {expect:?}");
        }
    }

    #[test]
    fn multiband_zero_tensor_is_diagonal() {
        let basis = build_basis(
            ModeIndexing::site_multiband(),
            SymmetrySector { n_up: 1, n_down: 1, g_occupancy: None },
        )
        .unwrap();
        assert_eq!(basis.dim(), 16);
        let h = build_site_multiband(&basis, &InteractionTensor::zeros(), 2.0, [50.0, 60.0, 70.0]).unwrap();
        for (r, c, _) in h.triplets() {
            assert_eq!(r, c);
        }
        // g↑ + e_x↓: 2·(180/2) + 50, field cancels.
        let s = (1 << basis.indexing().mode(0, site_band::G, Spin::Up))
            | (1 << basis.indexing().mode(0, site_band::EX, Spin::Down));
        let k = basis.index_of(s).unwrap();
        assert!((h.get(k, k).re - 230.0).abs() < 1e-12);
    }

    #[test]
    fn multiband_rejects_non_hermitian_tensor() {
        let basis = build_basis(
            ModeIndexing::site_multiband(),
            SymmetrySector { n_up: 1, n_down: 1, g_occupancy: None },
        )
        .unwrap();
        let mut t = InteractionTensor::zeros();
        t.set(0, 1, 1, 1, 1.0);
        assert!(build_site_multiband(&basis, &t, 0.0, [1.0; 3]).is_err());
    }

    #[test]
    fn multiband_two_band_limit_matches_chain_interaction() {
        // Restricted to g and e_x, the general tensor form reproduces the chain interaction.
        let (direct, ee, gg) = (119.5, 179.0, 209.0);
        let tensor = InteractionTensor::from_fn(|a, b, c, d| {
            let set = [a, b, c, d];
            if set.iter().any(|&x| x > 1) {
                return 0.0;
            }
            match set.iter().filter(|&&x| x == 1).count() {
                0 => gg,
                4 => ee,
                2 => direct,
                _ => 0.0,
            }
        });
        let multi = build_basis(
            ModeIndexing::site_multiband(),
            SymmetrySector { n_up: 1, n_down: 1, g_occupancy: None },
        )
        .unwrap();
        let h = build_site_multiband(&multi, &tensor, 0.0, [0.0; 3]).unwrap();
        let chain = build_basis(
            ModeIndexing::chain(1).unwrap(),
            SymmetrySector { n_up: 1, n_down: 1, g_occupancy: None },
        )
        .unwrap();
        let hc = build_interaction(&chain, &ModelParams { tunneling: 0.0, u_ee: ee, u_gg: gg, u_eg: 2.0 * direct }).unwrap();
        // Chain mode (band, spin) ↔ multiband (band', spin) with e ↔ e_x and g ↔ g.
        let map = |s: Bits| -> Bits {
            let ci = chain.indexing();
            let mi = multi.indexing();
            let mut out = 0;
            for spin in Spin::BOTH {
                if s >> ci.mode(0, chain_band::E, spin) & 1 == 1 {
                    out |= 1 << mi.mode(0, site_band::EX, spin);
                }
                if s >> ci.mode(0, chain_band::G, spin) & 1 == 1 {
                    out |= 1 << mi.mode(0, site_band::G, spin);
                }
            }
            out
        };
        // Signs differ by the reordering permutation, identical on both sides of each element.
        for (r, c, v) in hc.triplets() {
            let (mr, mc) = (map(chain.state(r)), map(chain.state(c)));
            let sign_r = reorder_sign(chain.state(r));
            let sign_c = reorder_sign(chain.state(c));
            let w = h.get(multi.index_of(mr).unwrap(), multi.index_of(mc).unwrap());
            assert!((w.re * sign_r * sign_c - v.re).abs() < 1e-12, "({r},{c})");
        }
    }

    /// Sign of reordering (e↑,e↓,g↑,g↓) into (g↑,g↓,e↑,e↓) for a two-particle state.
    fn reorder_sign(s: Bits) -> f64 {
        let e = (s & 0b0011).count_ones();
        let g = (s & 0b1100).count_ones();
        if (e * g).is_multiple_of(2) { 1.0 } else { -1.0 }
    }
}
