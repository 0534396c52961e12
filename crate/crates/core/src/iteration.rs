//! The iteration `K_{m+1} = K(X, (m+1)K_X, h_m)`, `h_{m+1} = 1/K_{m+1}` from a
//! seed metric at level `m₀`, with a per-level diagnostic trace.

use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::basis::{riemann_roch_count, PluricanonicalBasis};
use crate::bergman::{assemble_gram, sample_basis, BergmanKernel, GramMatrix, MetricField, Provenance};
use crate::curve::{Atlas, AtlasParams, HyperellipticCurve};
use crate::einstein::{einstein_residual, ResidualGrid, ResidualReport};
use crate::error::{Error, Result};
use crate::quadrature::{build_nodes, integrate_density, log_integrate_density, NodeSet, Resolution};

/// Relative tolerance of the discrete trace identity and the Hölder chain.
pub const IDENTITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedChoice {
    /// `1 / Σ|σ_i|²` over the monomial basis.
    FubiniStudy,
    /// `1 / Σ|σ_i + σ_{i+1}/2|²`, the shift staying inside each `y`-parity block.
    Sheared,
}

impl SeedChoice {
    pub fn name(self) -> &'static str {
        match self {
            SeedChoice::FubiniStudy => "fubini_study",
            SeedChoice::Sheared => "sheared",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationConfig {
    pub m0: u32,
    pub final_level: u32,
    pub twist: u32,
    pub resolution: Resolution,
    pub atlas: AtlasParams,
    pub seed: SeedChoice,
    /// Sup-log tolerance for comparing candidates (seeds, resolutions).
    pub tolerance: f64,
    /// Steps across the outer diameter of the residual grid; 0 disables residuals.
    pub residual_grid: usize,
    /// Write a checkpoint every this many levels; 0 writes only the last.
    pub checkpoint_every: u32,
}

impl Default for IterationConfig {
    fn default() -> Self {
        Self {
            m0: 3,
            final_level: 24,
            twist: 0,
            resolution: Resolution::default(),
            atlas: AtlasParams::default(),
            seed: SeedChoice::FubiniStudy,
            tolerance: 0.01,
            residual_grid: 96,
            checkpoint_every: 0,
        }
    }
}

impl IterationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.twist == 0 && self.m0 < 3 {
            return Err(Error::config("iteration.m0", "must be at least 3 without a twist"));
        }
        if self.final_level < self.m0 {
            return Err(Error::config("iteration.final_level", "must not be below iteration.m0"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::config("iteration.tolerance", "must be positive"));
        }
        self.resolution.validate().map_err(|e| Error::config("quadrature", e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub m: u32,
    /// `dim H⁰ − 1`.
    pub n_m: usize,
    /// `log ∫ K_m^{1/m}`.
    #[serde(with = "crate::checkpoint::tagged_f64")]
    pub log_integral: f64,
    /// `(m!)^{-1/m} ∫ K_m^{1/m}`.
    #[serde(with = "crate::checkpoint::tagged_f64")]
    pub normalized_integral: f64,
    /// Hölder chain bound on `∫ K_m^{1/m}`.
    #[serde(with = "crate::checkpoint::tagged_f64")]
    pub holder_bound: f64,
    /// Sup over nodes of the change in normalized log density since the previous level.
    #[serde(with = "crate::checkpoint::tagged_f64")]
    pub sup_change: f64,
    #[serde(with = "crate::checkpoint::tagged_f64")]
    pub residual_sup: f64,
    #[serde(with = "crate::checkpoint::tagged_f64")]
    pub residual_l2: f64,
    #[serde(with = "crate::checkpoint::tagged_f64")]
    pub seconds: f64,
    /// `∫ K_m h_{m−1}`; equals `N_m + 1`.
    #[serde(with = "crate::checkpoint::tagged_f64")]
    pub trace_integral: f64,
    /// `inf log [K_m / (m K_{m−1} D_m)]`, the lower-bound gain ratio.
    #[serde(with = "crate::checkpoint::tagged_f64")]
    pub log_gain: f64,
}

impl TraceRow {
    pub const CSV_HEADER: &'static str =
        "m,N_m,log_integral,normalized_integral,holder_bound,sup_change,residual_sup,residual_l2,seconds";

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            self.m,
            self.n_m,
            self.log_integral,
            self.normalized_integral,
            self.holder_bound,
            self.sup_change,
            self.residual_sup,
            self.residual_l2,
            self.seconds
        )
    }
}

/// `ln m!`.
pub fn ln_factorial(m: u32) -> f64 {
    (2..=m).map(|k| (k as f64).ln()).sum()
}

/// Level from which the Hölder chain starts: `m₀`, or 1 for a level-0 twisted seed.
pub fn holder_base(m0: u32) -> u32 {
    m0.max(1)
}

/// Hölder chain bound on `∫ K_m^{1/m}`:
/// `(Π_{k=b+1}^{m} (N_k + 1))^{1/m} · (∫ K_b^{1/b})^{b/m}` with `b` the base level.
/// Returns `None` if the trace lacks the needed rows.
pub fn holder_bound(trace: &[TraceRow], m: u32) -> Option<f64> {
    let base = trace.first().map(|r| holder_base(r.m))?;
    let base_row = trace.iter().find(|r| r.m == base)?;
    if m < base {
        return None;
    }
    let mut log = base as f64 / m as f64 * base_row.log_integral;
    for k in (base + 1)..=m {
        let row = trace.iter().find(|r| r.m == k)?;
        log += ((row.n_m + 1) as f64).ln() / m as f64;
    }
    Some(log.exp())
}

/// The metric at one level together with its kernel representation.
#[derive(Debug, Clone)]
pub struct IterationState {
    pub level: u32,
    pub field: MetricField,
    /// `None` for the seed level.
    pub gram: Option<GramMatrix>,
    pub kernel: BergmanKernel,
    pub trace: Vec<TraceRow>,
    /// Running minimum and maximum of the normalized log density per node.
    pub envelope_min: Vec<f64>,
    pub envelope_max: Vec<f64>,
}

/// The normalized limit density `D = (m!)^{-1/m} K_m^{1/m}` at a level.
#[derive(Debug, Clone)]
pub struct EinsteinCandidate {
    pub level: u32,
    pub curve: String,
    /// `log D` per node.
    pub log_density: Vec<f64>,
    pub kernel: BergmanKernel,
}

impl EinsteinCandidate {
    pub fn from_state(state: &IterationState) -> Self {
        Self {
            level: state.level,
            curve: state.field.provenance.curve.clone(),
            log_density: normalized_log_density(&state.field),
            kernel: state.kernel.clone(),
        }
    }

    /// `log D` at local coordinate `z` of `chart`.
    pub fn log_density_at(&self, atlas: &Atlas, chart: usize, z: Complex64) -> Result<f64> {
        let m = self.level as f64;
        Ok(self.kernel.log_density_at(atlas, chart, z)? / m - ln_factorial(self.level) / m)
    }
}

/// `(1/m)(log K_m) − (1/m) ln m!` per node.
pub fn normalized_log_density(field: &MetricField) -> Vec<f64> {
    if field.level == 0 {
        return vec![f64::NAN; field.log_k.len()];
    }
    let m = field.level as f64;
    let shift = (field.scale_log - ln_factorial(field.level)) / m;
    field.log_k.iter().map(|v| v / m + shift).collect()
}

/// Upper-bidiagonal shear `T = I + N/2` inside each parity block of `basis`.
fn shear_gram(basis: &PluricanonicalBasis) -> GramMatrix {
    let n = basis.len();
    let mut t = DMatrix::<Complex64>::identity(n, n);
    for i in 0..n.saturating_sub(1) {
        if basis.elements[i].eps == basis.elements[i + 1].eps {
            t[(i, i + 1)] = Complex64::new(0.5, 0.0);
        }
    }
    // K = |T v|², so G = (Tᴴ T)⁻¹ = T⁻¹ T⁻ᴴ.
    let mut tinv = DMatrix::<Complex64>::identity(n, n);
    t.solve_upper_triangular_unchecked_mut(&mut tinv);
    GramMatrix { level: basis.level, twist: basis.twist, entries: &tinv * tinv.adjoint(), scale_log: 0.0 }
}

/// Gram matrix whose kernel is the seed: the identity for Fubini–Study.
pub fn seed_gram(basis: &PluricanonicalBasis, seed: SeedChoice) -> GramMatrix {
    match seed {
        SeedChoice::FubiniStudy => {
            let n = basis.len();
            GramMatrix { level: basis.level, twist: basis.twist, entries: DMatrix::identity(n, n), scale_log: 0.0 }
        }
        SeedChoice::Sheared => shear_gram(basis),
    }
}

/// Kernel representing a seed metric `h = 1/K` of level `basis.level`.
pub fn seed_kernel(basis: PluricanonicalBasis, seed: SeedChoice) -> Result<BergmanKernel> {
    match seed {
        SeedChoice::FubiniStudy => Ok(BergmanKernel::fubini_study(basis)),
        SeedChoice::Sheared => {
            let g = shear_gram(&basis);
            BergmanKernel::new(basis, &g)
        }
    }
}

/// Quadrature, atlas and residual grid for one curve and configuration.
#[derive(Debug, Clone)]
pub struct Engine {
    pub atlas: Atlas,
    pub nodes: NodeSet,
    pub config: IterationConfig,
    pub grid: Option<ResidualGrid>,
    pub timings: bool,
}

impl Engine {
    pub fn new(curve: &HyperellipticCurve, config: IterationConfig) -> Result<Self> {
        config.validate()?;
        let atlas = Atlas::new(curve, config.atlas)?;
        let nodes = build_nodes(&atlas, config.resolution)?;
        let grid = (config.residual_grid > 0).then(|| ResidualGrid::bulk(&atlas, config.residual_grid));
        Ok(Self { atlas, nodes, config, grid, timings: false })
    }

    pub fn provenance(&self) -> Provenance {
        Provenance {
            curve: self.atlas.curve().fingerprint(),
            nodes: self.nodes.fingerprint(),
            seed: self.config.seed.name().to_string(),
        }
    }

    fn basis(&self, level: u32) -> Result<PluricanonicalBasis> {
        PluricanonicalBasis::new(self.atlas.curve().genus(), level, self.config.twist)
    }

    /// The seed metric at level `m₀`.
    pub fn seed_metric(&self) -> Result<(MetricField, BergmanKernel)> {
        let basis = self.basis(self.config.m0)?;
        let samples = sample_basis(&basis, &self.atlas, &self.nodes);
        let kernel = seed_kernel(basis, self.config.seed)?;
        let field = kernel.field(&samples, self.provenance())?;
        Ok((field, kernel))
    }

    pub fn seed(&self) -> Result<IterationState> {
        let start = Instant::now();
        let (field, kernel) = self.seed_metric()?;
        let norm = normalized_log_density(&field);
        let mut state = IterationState {
            level: self.config.m0,
            field,
            gram: None,
            kernel,
            trace: Vec::new(),
            envelope_min: norm.clone(),
            envelope_max: norm,
        };
        let row = self.trace_row(&state, None, f64::NAN, start)?;
        state.trace.push(row);
        Ok(state)
    }

    /// Residual report of the candidate at the state's level.
    pub fn residual(&self, state: &IterationState) -> Option<ResidualReport> {
        if state.level == 0 {
            return None;
        }
        let grid = self.grid.as_ref()?;
        let candidate = EinsteinCandidate::from_state(state);
        let chart = self.atlas.bulk_chart(crate::curve::Sheet::Plus);
        Some(einstein_residual(&self.atlas, grid, |x| {
            candidate.log_density_at(&self.atlas, chart, x).unwrap_or(f64::NAN)
        }))
    }

    fn trace_row(
        &self,
        state: &IterationState,
        previous: Option<&MetricField>,
        trace_integral: f64,
        start: Instant,
    ) -> Result<TraceRow> {
        let m = state.level;
        let dim = riemann_roch_count(self.atlas.curve().genus(), m, self.config.twist)
            .unwrap_or_else(|_| state.kernel.basis.len());
        let norm = normalized_log_density(&state.field);
        let (log_integral, normalized_integral) = if m == 0 {
            (f64::NAN, f64::NAN)
        } else {
            let scaled: Vec<f64> = state.field.true_log_k().iter().map(|v| v / m as f64).collect();
            let li = log_integrate_density(&self.nodes, &scaled)?;
            (li, (li - ln_factorial(m) / m as f64).exp())
        };
        let (sup_change, log_gain) = match previous {
            Some(prev) if prev.level > 0 => {
                let before = normalized_log_density(prev);
                let sup = norm.iter().zip(&before).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                let shift = state.field.scale_log - prev.scale_log - (m as f64).ln();
                let gain = state
                    .field
                    .log_k
                    .iter()
                    .zip(&prev.log_k)
                    .zip(&norm)
                    .map(|((a, b), d)| a - b + shift - d)
                    .fold(f64::INFINITY, f64::min);
                (sup, gain)
            }
            _ => (f64::NAN, f64::NAN),
        };
        let (residual_sup, residual_l2) = match self.residual(state) {
            Some(r) => (r.relative_sup, r.relative_l2),
            None => (f64::NAN, f64::NAN),
        };
        let mut row = TraceRow {
            m,
            n_m: dim - 1,
            log_integral,
            normalized_integral,
            holder_bound: f64::NAN,
            sup_change,
            residual_sup,
            residual_l2,
            seconds: if self.timings { start.elapsed().as_secs_f64() } else { 0.0 },
            trace_integral,
            log_gain,
        };
        let mut rows = state.trace.clone();
        rows.push(row.clone());
        row.holder_bound = holder_bound(&rows, m).unwrap_or(f64::NAN);
        Ok(row)
    }

    /// One level: `K_{m+1}` from `h_m`, with the invariants checked.
    pub fn step(&self, state: &mut IterationState) -> Result<()> {
        let start = Instant::now();
        let next = state.level + 1;
        let basis = self.basis(next)?;
        let dim = riemann_roch_count(self.atlas.curve().genus(), next, self.config.twist).unwrap_or(basis.len());
        if dim != basis.len() {
            return Err(Error::Invariant {
                level: next,
                message: format!("basis has {} elements, Riemann–Roch gives {dim}", basis.len()),
            });
        }
        let samples = sample_basis(&basis, &self.atlas, &self.nodes);
        let gram = assemble_gram(&basis, &samples, &state.field, &self.nodes)?;
        let kernel = BergmanKernel::new(basis, &gram)?;
        let field = kernel.field(&samples, state.field.provenance.clone())?;

        let ratio: Vec<f64> = field.true_log_k().iter().zip(state.field.true_log_k()).map(|(a, b)| a - b).collect();
        let trace_integral = integrate_density(&self.nodes, &ratio)?;
        if (trace_integral / dim as f64 - 1.0).abs() > IDENTITY_TOL {
            return Err(Error::Invariant {
                level: next,
                message: format!("trace identity gives {trace_integral}, expected {dim}"),
            });
        }

        let previous = std::mem::replace(&mut state.field, field);
        state.level = next;
        state.gram = Some(gram);
        state.kernel = kernel;
        let row = self.trace_row(state, Some(&previous), trace_integral, start)?;
        if row.log_integral > row.holder_bound.ln() + IDENTITY_TOL {
            return Err(Error::Invariant {
                level: next,
                message: format!(
                    "Hölder chain violated: ∫K^(1/m) = {} exceeds the bound {}",
                    row.log_integral.exp(),
                    row.holder_bound
                ),
            });
        }
        let norm = normalized_log_density(&state.field);
        if previous.level == 0 {
            state.envelope_min = norm.clone();
            state.envelope_max = norm;
        } else {
            for ((lo, hi), v) in state.envelope_min.iter_mut().zip(state.envelope_max.iter_mut()).zip(norm) {
                *lo = lo.min(v);
                *hi = hi.max(v);
            }
        }
        state.trace.push(row);
        Ok(())
    }

    /// Steps until the final level, calling `on_level` after every level.
    pub fn run_from(
        &self,
        mut state: IterationState,
        mut on_level: impl FnMut(&IterationState) -> Result<()>,
    ) -> Result<IterationState> {
        while state.level < self.config.final_level {
            self.step(&mut state)?;
            on_level(&state)?;
        }
        Ok(state)
    }

    pub fn run(&self) -> Result<IterationState> {
        let seed = self.seed()?;
        self.run_from(seed, |_| Ok(()))
    }
}

/// Least-squares fit of `c` in `gain ≈ 1 − c/√m` from the trace.
pub fn fit_gain_constant(trace: &[TraceRow]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = trace
        .iter()
        .filter(|r| r.log_gain.is_finite())
        .map(|r| (1.0 / (r.m as f64).sqrt(), 1.0 - r.log_gain.exp()))
        .collect();
    if pts.is_empty() {
        return None;
    }
    let num: f64 = pts.iter().map(|(x, y)| x * y).sum();
    let den: f64 = pts.iter().map(|(x, _)| x * x).sum();
    Some(num / den)
}

/// Whether `values` decreases (non-strictly) over its final third.
pub fn decreasing_over_final_third(values: &[f64]) -> bool {
    let start = values.len() - values.len().div_ceil(3);
    values[start..].windows(2).all(|w| w[1] <= w[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn holder_bound_at_base_is_the_base_integral() {
        let row = TraceRow {
            m: 3,
            n_m: 4,
            log_integral: 1.25,
            normalized_integral: 0.0,
            holder_bound: 0.0,
            sup_change: 0.0,
            residual_sup: 0.0,
            residual_l2: 0.0,
            seconds: 0.0,
            trace_integral: 0.0,
            log_gain: 0.0,
        };
        assert!((holder_bound(std::slice::from_ref(&row), 3).unwrap() - 1.25f64.exp()).abs() < 1e-15);
        let next = TraceRow { m: 4, n_m: 6, ..row.clone() };
        let b = holder_bound(&[row, next], 4).unwrap();
        assert!((b - (7f64.ln() / 4.0 + 0.75 * 1.25).exp()).abs() < 1e-14);
    }

    #[test]
    fn ln_factorial_matches_product() {
        assert_eq!(ln_factorial(0), 0.0);
        assert!((ln_factorial(5) - 120f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn shear_seed_matches_its_definition() {
        let b = PluricanonicalBasis::new(2, 3, 0).unwrap();
        let k = seed_kernel(b.clone(), SeedChoice::Sheared).unwrap();
        let v: Vec<Complex64> = (0..b.len()).map(|i| Complex64::new(0.3 * i as f64 - 0.5, 0.1 * i as f64)).collect();
        let mut direct = 0.0;
        for i in 0..b.len() {
            let mut s = v[i];
            if i + 1 < b.len() && b.elements[i].eps == b.elements[i + 1].eps {
                s += 0.5 * v[i + 1];
            }
            direct += s.norm_sqr();
        }
        assert!((k.raw_log_density(&v) + k.scale_log - direct.ln()).abs() < 1e-12);
    }

    #[test]
    fn rejects_low_m0() {
        let cfg = IterationConfig { m0: 2, ..IterationConfig::default() };
        assert!(matches!(cfg.validate(), Err(Error::Config { .. })));
        let twisted = IterationConfig { m0: 0, twist: 4, ..IterationConfig::default() };
        assert!(twisted.validate().is_ok());
    }
}
