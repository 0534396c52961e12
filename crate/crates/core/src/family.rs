//! One-parameter families `y² = f(x; t)` and numeric positivity checks for the
//! iterated kernels and the direct-image metrics over a disk in `t`.
//!
//! Fibers are sampled on a polar grid in `t`: the center plus `n_radii` rings of
//! `n_angles` points. Laplacians in `t` use fourth-order differences along
//! diameters, spectral differentiation around rings, and a Richardson
//! extrapolated circle mean at the center.
//!
//! The direct-image section test evaluates `log h(s, s)` along sections that are
//! parallel at the test point (`D's(t₀) = 0`). For a Griffiths semipositive
//! bundle their `t`-Laplacian at `t₀` is `≤ 0`; for arbitrary holomorphic
//! sections the sign is not determined.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::PluricanonicalBasis;
use crate::bergman::{assemble_gram, sample_basis, BergmanKernel, MetricField};
use crate::curve::{HyperellipticCurve, Sheet};
use crate::error::{Error, Result};
use crate::iteration::{normalized_log_density, Engine, IterationConfig};

/// `f(x; t) = Σ_k x^k Σ_j c_kj t^j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveFamily {
    /// `coeffs[k][j]` multiplies `x^k t^j`.
    pub coeffs: Vec<Vec<Complex64>>,
    /// Minimum root separation accepted for a fiber.
    pub separation_guard: f64,
}

impl CurveFamily {
    /// `y² = x⁶ − 1 + t·x`.
    pub fn sextic_reference() -> Self {
        let c = |re: f64| Complex64::new(re, 0.0);
        let mut coeffs = vec![vec![]; 7];
        coeffs[0] = vec![c(-1.0)];
        coeffs[1] = vec![c(0.0), c(1.0)];
        coeffs[6] = vec![c(1.0)];
        Self { coeffs, separation_guard: 1e-3 }
    }

    /// Coefficients of `f(·; t)` in `x`.
    pub fn coefficients_at(&self, t: Complex64) -> Vec<Complex64> {
        self.coeffs.iter().map(|cs| cs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * t + c)).collect()
    }

    pub fn fiber_curve(&self, t: Complex64) -> Result<HyperellipticCurve> {
        let curve = HyperellipticCurve::with_separation_tol(&self.coefficients_at(t), self.separation_guard)?;
        Ok(curve)
    }
}

/// Polar grid in `t`: index 0 is the center, then ring `k ∈ 1..=n_radii`
/// at radius `k·radius/n_radii`, angle `l·2π/n_angles`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarGrid {
    pub radius: f64,
    pub n_radii: usize,
    pub n_angles: usize,
}

impl PolarGrid {
    pub fn new(radius: f64, n_radii: usize, n_angles: usize) -> Result<Self> {
        if n_radii < 3 || n_angles < 4 || !n_angles.is_multiple_of(2) || !(radius > 0.0) {
            return Err(Error::config(
                "family",
                "the t-grid needs radius > 0, at least 3 rings and an even angle count ≥ 4",
            ));
        }
        Ok(Self { radius, n_radii, n_angles })
    }

    pub fn len(&self) -> usize {
        1 + self.n_radii * self.n_angles
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        self.radius / self.n_radii as f64
    }

    fn index(&self, ring: usize, angle: usize) -> usize {
        if ring == 0 {
            0
        } else {
            1 + (ring - 1) * self.n_angles + angle % self.n_angles
        }
    }

    pub fn points(&self) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0)];
        for k in 1..=self.n_radii {
            for l in 0..self.n_angles {
                out.push(Complex64::from_polar(k as f64 * self.step(), self.angle(l)));
            }
        }
        out
    }

    fn angle(&self, l: usize) -> f64 {
        2.0 * PI * l as f64 / self.n_angles as f64
    }

    /// Value at signed radius `j` along the diameter through angle `l`.
    fn along(&self, v: &[f64], j: isize, l: usize) -> f64 {
        match j.cmp(&0) {
            std::cmp::Ordering::Equal => v[0],
            std::cmp::Ordering::Greater => v[self.index(j as usize, l)],
            std::cmp::Ordering::Less => v[self.index((-j) as usize, l + self.n_angles / 2)],
        }
    }

    /// First and second radial derivatives along the diameter at ring `k`.
    fn radial(&self, v: &[f64], k: usize, l: usize) -> Option<(f64, f64)> {
        let h = self.step();
        let f = |d: isize| self.along(v, k as isize + d, l);
        if k + 2 <= self.n_radii {
            let d1 = (-f(2) + 8.0 * f(1) - 8.0 * f(-1) + f(-2)) / (12.0 * h);
            let d2 = (-f(2) + 16.0 * f(1) - 30.0 * f(0) + 16.0 * f(-1) - f(-2)) / (12.0 * h * h);
            Some((d1, d2))
        } else if k < self.n_radii {
            let d1 = (-f(-3) + 6.0 * f(-2) - 18.0 * f(-1) + 10.0 * f(0) + 3.0 * f(1)) / (12.0 * h);
            let d2 = (-f(-3) + 4.0 * f(-2) + 6.0 * f(-1) - 20.0 * f(0) + 11.0 * f(1)) / (12.0 * h * h);
            Some((d1, d2))
        } else {
            None
        }
    }

    /// Angular derivatives of order 1 and 2 on ring `k`, spectrally.
    fn angular(&self, v: &[f64], k: usize) -> (Vec<f64>, Vec<f64>) {
        let n = self.n_angles;
        let ring: Vec<f64> = (0..n).map(|l| v[self.index(k, l)]).collect();
        let mut d1 = vec![0.0; n];
        let mut d2 = vec![0.0; n];
        for mode in 0..=n / 2 {
            let (mut a, mut b) = (0.0, 0.0);
            for (l, &u) in ring.iter().enumerate() {
                let th = mode as f64 * self.angle(l);
                a += u * th.cos();
                b += u * th.sin();
            }
            let norm = if mode == 0 || mode == n / 2 { 1.0 / n as f64 } else { 2.0 / n as f64 };
            let (a, b) = (a * norm, b * norm);
            let q = mode as f64;
            for l in 0..n {
                let th = q * self.angle(l);
                if mode != n / 2 {
                    d1[l] += q * (b * th.cos() - a * th.sin());
                }
                d2[l] -= q * q * (a * th.cos() + b * th.sin());
            }
        }
        (d1, d2)
    }

    /// Mean over ring `k`.
    pub fn ring_mean(&self, v: &[f64], k: usize) -> f64 {
        (0..self.n_angles).map(|l| v[self.index(k, l)]).sum::<f64>() / self.n_angles as f64
    }

    /// Laplacian `∂²_x + ∂²_y` at every point where the stencil fits; `None` on the outer ring.
    pub fn laplacian(&self, v: &[f64]) -> Vec<Option<f64>> {
        let mut out = vec![None; self.len()];
        let h = self.step();
        let l1 = 4.0 * (self.ring_mean(v, 1) - v[0]) / (h * h);
        let l2 = 4.0 * (self.ring_mean(v, 2) - v[0]) / (4.0 * h * h);
        out[0] = Some((4.0 * l1 - l2) / 3.0);
        for k in 1..=self.n_radii {
            let rho = k as f64 * h;
            let (_, dtt) = self.angular(v, k);
            for l in 0..self.n_angles {
                if let Some((d1, d2)) = self.radial(v, k, l) {
                    out[self.index(k, l)] = Some(d2 + d1 / rho + dtt[l] / (rho * rho));
                }
            }
        }
        out
    }

    /// `∂_t = (∂_x − i∂_y)/2` at every point where the stencil fits.
    pub fn d_t(&self, v: &[f64]) -> Vec<Option<Complex64>> {
        let mut out = vec![None; self.len()];
        let h = self.step();
        let first_mode = |k: usize| -> Complex64 {
            (0..self.n_angles)
                .map(|l| v[self.index(k, l)] * Complex64::from_polar(1.0, -self.angle(l)))
                .sum::<Complex64>()
                / self.n_angles as f64
        };
        let c1 = first_mode(1) / h;
        let c2 = first_mode(2) / (2.0 * h);
        out[0] = Some((4.0 * c1 - c2) / 3.0);
        for k in 1..=self.n_radii {
            let rho = k as f64 * h;
            let (dth, _) = self.angular(v, k);
            for l in 0..self.n_angles {
                if let Some((d1, _)) = self.radial(v, k, l) {
                    let phase = Complex64::from_polar(0.5, -self.angle(l));
                    out[self.index(k, l)] = Some(phase * Complex64::new(d1, -dth[l] / rho));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyConfig {
    pub levels: Vec<u32>,
    pub radius: f64,
    pub n_radii: usize,
    pub n_angles: usize,
    /// Level of the candidate `D_L` whose powers stand in for metrics below `m₀`.
    pub candidate_level: u32,
    /// Tolerance on Laplacians divided by the level.
    pub tolerance: f64,
    /// Number of fixed `x` points probed in `log K(x, t)`.
    pub sample_points: usize,
    /// Number of complex lines `(x₀ + a·s, s)` probed.
    pub lines: usize,
    /// Number of random vectors per direct-image test, besides the frame vectors.
    pub sections: usize,
    pub seed: u64,
}

impl Default for FamilyConfig {
    fn default() -> Self {
        Self {
            levels: vec![2, 4],
            radius: 0.2,
            n_radii: 5,
            n_angles: 8,
            candidate_level: 8,
            tolerance: 1e-4,
            sample_points: 48,
            lines: 8,
            sections: 8,
            seed: 20240917,
        }
    }
}

impl FamilyConfig {
    pub fn grid(&self) -> Result<PolarGrid> {
        PolarGrid::new(self.radius, self.n_radii, self.n_angles)
    }
}

/// `log K_m(x, t)` for fixed points and along complex lines, per grid point in `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeBergmanField {
    pub level: u32,
    pub grid: PolarGrid,
    pub points: Vec<Complex64>,
    /// `values[p][k]` at point `p`, grid index `k`.
    pub values: Vec<Vec<f64>>,
    /// `(x₀, a)` of each line `s ↦ (x₀ + a·s, s)`.
    pub lines: Vec<(Complex64, Complex64)>,
    pub line_values: Vec<Vec<f64>>,
}

/// `H(t)_ij = ∫ h_{m−1} σ_i σ̄_j` over the monomial frame, per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectImageMetric {
    pub level: u32,
    pub grid: PolarGrid,
    pub h: Vec<DMatrix<Complex64>>,
}

/// The level-`m` objects of one fiber.
#[derive(Debug, Clone)]
pub struct FiberLevel {
    pub level: u32,
    pub gram: DMatrix<Complex64>,
    pub kernel: BergmanKernel,
}

/// Metric `h_{level}` on a fiber: iterated if `level ≥ m₀`, else `D_L^{-level}`.
fn fiber_metrics(engine: &Engine, levels: &[u32], candidate_level: u32) -> Result<Vec<MetricField>> {
    let m0 = engine.config.m0;
    let top = levels.iter().copied().chain([candidate_level]).max().unwrap_or(m0).max(m0);
    let mut fields: Vec<Option<MetricField>> = vec![None; levels.len()];
    let mut candidate = None;
    let mut record = |field: &MetricField| {
        for (slot, &l) in fields.iter_mut().zip(levels) {
            if l == field.level {
                *slot = Some(field.clone());
            }
        }
        if field.level == candidate_level {
            candidate = Some(normalized_log_density(field));
        }
    };
    let mut state = engine.seed()?;
    record(&state.field);
    while state.level < top {
        engine.step(&mut state)?;
        record(&state.field);
    }
    let candidate =
        candidate.ok_or_else(|| Error::config("family.candidate_level", "must be at least iteration.m0"))?;
    let provenance = engine.provenance();
    levels
        .iter()
        .zip(fields)
        .map(|(&l, f)| match f {
            Some(f) => Ok(f),
            None if engine.config.twist != 0 => {
                Err(Error::config("family.levels", "levels below m0 + 1 need an untwisted iteration"))
            }
            None => {
                let raw = candidate.iter().map(|d| d * l as f64).collect();
                MetricField::from_raw(l, engine.config.twist, raw, 0.0, provenance.clone())
            }
        })
        .collect()
}

/// Level-`m` Gram matrices and kernels on every fiber of the grid.
#[derive(Debug, Clone)]
pub struct FamilySweep {
    pub grid: PolarGrid,
    pub t: Vec<Complex64>,
    pub engines: Vec<Engine>,
    /// `fibers[k][i]` is level `levels[i]` on fiber `k`.
    pub fibers: Vec<Vec<FiberLevel>>,
    pub levels: Vec<u32>,
}

impl FamilySweep {
    pub fn new(family: &CurveFamily, iteration: &IterationConfig, config: &FamilyConfig) -> Result<Self> {
        let grid = config.grid()?;
        let t = grid.points();
        let iteration = IterationConfig { residual_grid: 0, ..iteration.clone() };
        let curves: Vec<HyperellipticCurve> = t.iter().map(|&tk| family.fiber_curve(tk)).collect::<Result<_>>()?;
        let genus = curves[0].genus();
        if let Some(c) = curves.iter().find(|c| c.genus() != genus) {
            return Err(Error::InvalidInput(format!("fiber genus {} differs from {genus}", c.genus())));
        }
        let below: Vec<u32> = config.levels.iter().map(|&m| m.saturating_sub(1)).collect();
        if config.levels.contains(&0) {
            return Err(Error::config("family.levels", "levels must be at least 1"));
        }
        // Identical fibers (a constant family, or symmetric grids) are computed once.
        let mut unique: Vec<usize> = Vec::new();
        let mut slot = Vec::with_capacity(curves.len());
        for c in &curves {
            let fp = c.fingerprint();
            match unique.iter().position(|&u| curves[u].fingerprint() == fp) {
                Some(i) => slot.push(i),
                None => {
                    slot.push(unique.len());
                    unique.push(slot.len() - 1);
                }
            }
        }
        let results: Vec<Result<(Engine, Vec<FiberLevel>)>> = unique
            .par_iter()
            .map(|&u| &curves[u])
            .map(|curve| {
                let engine = Engine::new(curve, iteration.clone())?;
                let metrics = fiber_metrics(&engine, &below, config.candidate_level)?;
                let levels = config
                    .levels
                    .iter()
                    .zip(metrics)
                    .map(|(&m, metric)| {
                        let basis = PluricanonicalBasis::new(genus, m, iteration.twist)?;
                        let samples = sample_basis(&basis, &engine.atlas, &engine.nodes);
                        let gram = assemble_gram(&basis, &samples, &metric, &engine.nodes)?;
                        let kernel = BergmanKernel::new(basis, &gram)?;
                        let entries = &gram.entries * Complex64::new(gram.scale_log.exp(), 0.0);
                        Ok(FiberLevel { level: m, gram: entries, kernel })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok((engine, levels))
            })
            .collect();
        let mut engines = Vec::with_capacity(t.len());
        let mut fibers = Vec::with_capacity(t.len());
        let results = results.into_iter().collect::<Result<Vec<_>>>()?;
        for &i in &slot {
            engines.push(results[i].0.clone());
            fibers.push(results[i].1.clone());
        }
        Ok(Self { grid, t, engines, fibers, levels: config.levels.clone() })
    }

    fn level_index(&self, level: u32) -> Result<usize> {
        self.levels
            .iter()
            .position(|&l| l == level)
            .ok_or_else(|| Error::InvalidInput(format!("level {level} was not swept")))
    }

    fn inside_every_fiber(&self, x: Complex64, margin: f64) -> bool {
        self.engines.iter().all(|e| {
            let a = &e.atlas;
            x.norm() <= a.outer_radius() - margin && a.holes().iter().all(|&(c, r)| (x - c).norm() >= r + margin)
        })
    }

    /// Bulk points for the fixed-`x` probes: a deterministic spiral filtered to
    /// lie in the bulk of every fiber.
    fn probe_points(&self, count: usize, margin: f64) -> Vec<Complex64> {
        let outer = self.engines.iter().map(|e| e.atlas.outer_radius()).fold(f64::INFINITY, f64::min);
        let golden = PI * (3.0 - 5f64.sqrt());
        let mut out = Vec::new();
        let mut i = 0usize;
        while out.len() < count && i < 50 * count {
            let r = outer * ((i as f64 + 0.5) / (4 * count) as f64).sqrt();
            let x = Complex64::from_polar(r.min(outer), golden * i as f64);
            if self.inside_every_fiber(x, margin) {
                out.push(x);
            }
            i += 1;
        }
        out
    }

    fn log_k(&self, k: usize, li: usize, x: Complex64) -> Result<f64> {
        let e = &self.engines[k];
        self.fibers[k][li].kernel.log_density_at(&e.atlas, e.atlas.bulk_chart(Sheet::Plus), x)
    }

    pub fn relative_kernel_field(&self, level: u32, config: &FamilyConfig) -> Result<RelativeBergmanField> {
        let li = self.level_index(level)?;
        let margin = 0.05;
        let points = self.probe_points(config.sample_points, margin);
        let values = points
            .iter()
            .map(|&x| (0..self.t.len()).map(|k| self.log_k(k, li, x)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut lines = Vec::new();
        let mut line_values = Vec::new();
        let mut attempts = 0;
        while lines.len() < config.lines && attempts < 100 * config.lines.max(1) {
            attempts += 1;
            let x0 = points[attempts % points.len().max(1)];
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            let a = Complex64::new(re, im) * 0.5;
            let reach = a.norm() * self.grid.radius;
            if !self.t.iter().all(|&s| self.inside_every_fiber(x0 + a * s, margin)) || reach > 0.5 {
                continue;
            }
            let vals =
                self.t.iter().enumerate().map(|(k, &s)| self.log_k(k, li, x0 + a * s)).collect::<Result<Vec<_>>>()?;
            lines.push((x0, a));
            line_values.push(vals);
        }
        Ok(RelativeBergmanField { level, grid: self.grid, points, values, lines, line_values })
    }

    pub fn direct_image_metric(&self, level: u32) -> Result<DirectImageMetric> {
        let li = self.level_index(level)?;
        Ok(DirectImageMetric { level, grid: self.grid, h: self.fibers.iter().map(|f| f[li].gram.clone()).collect() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub test: String,
    pub t: Complex64,
    pub detail: String,
    /// Scaled Laplacian or mean defect; negative beyond tolerance.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PshRow {
    pub t: Complex64,
    /// Minimum over fixed points of the scaled `t`-Laplacian of `log K`.
    pub min_laplacian: f64,
    /// Minimum over lines of the scaled Laplacian of the restriction.
    pub min_line_laplacian: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PshReport {
    pub level: u32,
    pub tolerance: f64,
    pub min_scaled_laplacian: f64,
    pub min_submean: f64,
    pub min_line_laplacian: f64,
    pub rows: Vec<PshRow>,
    pub violations: Vec<Violation>,
    pub passed: bool,
}

/// Subharmonicity of `log K` in `t` at fixed points, on circles, and along lines.
pub fn psh_check(field: &RelativeBergmanField, tolerance: f64) -> PshReport {
    let g = field.grid;
    let t = g.points();
    let scale = 1.0 / field.level.max(1) as f64;
    let mut violations = Vec::new();
    let mut per_t = vec![f64::INFINITY; g.len()];
    let mut per_t_line = vec![f64::INFINITY; g.len()];
    let mut min_sub = f64::INFINITY;
    let scan = |vals: &[f64], what: String, acc: &mut Vec<f64>, test: &str, violations: &mut Vec<Violation>| {
        for (k, lap) in g.laplacian(vals).iter().enumerate() {
            if let Some(l) = lap {
                let s = l * scale;
                acc[k] = acc[k].min(s);
                if s < -tolerance {
                    violations.push(Violation { test: test.into(), t: t[k], detail: what.clone(), margin: s });
                }
            }
        }
    };
    for (p, vals) in field.values.iter().enumerate() {
        scan(vals, format!("x = {}", field.points[p]), &mut per_t, "laplacian", &mut violations);
        for k in 1..=g.n_radii {
            let d = (g.ring_mean(vals, k) - vals[0]) * scale;
            min_sub = min_sub.min(d);
            if d < -tolerance {
                violations.push(Violation {
                    test: "sub-mean".into(),
                    t: Complex64::new(k as f64 * g.step(), 0.0),
                    detail: format!("x = {}", field.points[p]),
                    margin: d,
                });
            }
        }
    }
    for ((x0, a), vals) in field.lines.iter().zip(&field.line_values) {
        scan(vals, format!("line x = {x0} + ({a})·t"), &mut per_t_line, "line", &mut violations);
    }
    let rows = t
        .iter()
        .enumerate()
        .map(|(k, &tk)| PshRow {
            t: tk,
            min_laplacian: if per_t[k].is_finite() { per_t[k] } else { f64::NAN },
            min_line_laplacian: if per_t_line[k].is_finite() { per_t_line[k] } else { f64::NAN },
        })
        .collect();
    let min_lap = per_t.iter().copied().fold(f64::INFINITY, f64::min);
    let min_line = per_t_line.iter().copied().fold(f64::INFINITY, f64::min);
    PshReport {
        level: field.level,
        tolerance,
        min_scaled_laplacian: min_lap,
        min_submean: min_sub,
        min_line_laplacian: min_line,
        rows,
        passed: violations.is_empty(),
        violations,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositivityRow {
    pub t: Complex64,
    /// Largest scaled Laplacian of `log h(s, s)` over parallel sections.
    pub section_max: f64,
    /// Smallest scaled Laplacian of `log(uᴴ H⁻¹ u)`.
    pub dual_min: f64,
    /// Scaled Laplacian of `−log det H`.
    pub det_laplacian: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositivityReport {
    pub level: u32,
    pub tolerance: f64,
    pub section_max: f64,
    pub dual_min: f64,
    pub det_min: f64,
    pub rows: Vec<PositivityRow>,
    pub violations: Vec<Violation>,
    pub passed: bool,
}

/// `aᵀ H ā`, the squared norm of the section with coefficient vector `a`.
fn section_norm(h: &DMatrix<Complex64>, a: &DVector<Complex64>) -> f64 {
    (a.transpose() * h * a.map(|z| z.conj()))[(0, 0)].re
}

fn test_vectors(n: usize, count: usize, seed: u64) -> Vec<DVector<Complex64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<DVector<Complex64>> =
        (0..n).map(|i| DVector::from_fn(n, |j, _| Complex64::new(if i == j { 1.0 } else { 0.0 }, 0.0))).collect();
    for _ in 0..count {
        out.push(DVector::from_fn(n, |_, _| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(re, im)
        }));
    }
    out
}

/// Section, dual and determinant tests of Griffiths semipositivity of `H(t)`.
pub fn positivity_suite(
    metric: &DirectImageMetric,
    tolerance: f64,
    sections: usize,
    seed: u64,
) -> Result<PositivityReport> {
    let g = metric.grid;
    let t = g.points();
    let n = metric.h.first().map(|h| h.nrows()).unwrap_or(0);
    let scale = 1.0 / metric.level.max(1) as f64;
    let vectors = test_vectors(n, sections, seed);
    let inverses: Vec<DMatrix<Complex64>> = metric
        .h
        .iter()
        .enumerate()
        .map(|(k, h)| {
            h.clone().cholesky().map(|c| c.inverse()).ok_or_else(|| Error::Invariant {
                level: metric.level,
                message: format!("direct-image metric is not positive definite at t = {}", t[k]),
            })
        })
        .collect::<Result<_>>()?;

    // ∂_t H entrywise.
    let mut dh: Vec<DMatrix<Complex64>> = vec![DMatrix::zeros(n, n); g.len()];
    let mut have_dh = vec![true; g.len()];
    for i in 0..n {
        for j in 0..n {
            let re: Vec<f64> = metric.h.iter().map(|h| h[(i, j)].re).collect();
            let im: Vec<f64> = metric.h.iter().map(|h| h[(i, j)].im).collect();
            for (k, (a, b)) in g.d_t(&re).into_iter().zip(g.d_t(&im)).enumerate() {
                match (a, b) {
                    (Some(a), Some(b)) => dh[k][(i, j)] = a + Complex64::new(0.0, 1.0) * b,
                    _ => have_dh[k] = false,
                }
            }
        }
    }

    let mut violations = Vec::new();
    let mut rows = Vec::with_capacity(g.len());
    let det_vals: Vec<f64> = metric
        .h
        .iter()
        .map(|h| {
            -h.clone()
                .cholesky()
                .map(|c| 2.0 * c.l().diagonal().iter().map(|d| d.re.ln()).sum::<f64>())
                .unwrap_or(f64::NAN)
        })
        .collect();
    let det_lap = g.laplacian(&det_vals);
    let dual_laps: Vec<Vec<Option<f64>>> = vectors
        .iter()
        .map(|u| {
            let vals: Vec<f64> = inverses.iter().map(|hi| (u.adjoint() * hi * u)[(0, 0)].re.ln()).collect();
            g.laplacian(&vals)
        })
        .collect();

    for k in 0..g.len() {
        let mut section_max = f64::NEG_INFINITY;
        if have_dh[k] && det_lap[k].is_some() {
            let ht_inv = inverses[k].transpose();
            for (vi, u) in vectors.iter().enumerate() {
                let v = -(&ht_inv * dh[k].transpose() * u);
                let vals: Vec<f64> =
                    t.iter().zip(&metric.h).map(|(&tj, h)| section_norm(h, &(u + &v * (tj - t[k]))).ln()).collect();
                if let Some(l) = g.laplacian(&vals)[k] {
                    let s = l * scale;
                    section_max = section_max.max(s);
                    if s > tolerance {
                        violations.push(Violation {
                            test: "section".into(),
                            t: t[k],
                            detail: format!("vector {vi}"),
                            margin: -s,
                        });
                    }
                }
            }
        }
        let mut dual_min = f64::INFINITY;
        for (vi, laps) in dual_laps.iter().enumerate() {
            if let Some(l) = laps[k] {
                let s = l * scale;
                dual_min = dual_min.min(s);
                if s < -tolerance {
                    violations.push(Violation {
                        test: "dual".into(),
                        t: t[k],
                        detail: format!("vector {vi}"),
                        margin: s,
                    });
                }
            }
        }
        let det = det_lap[k].map(|l| l * scale).unwrap_or(f64::NAN);
        if det < -tolerance {
            violations.push(Violation { test: "determinant".into(), t: t[k], detail: String::new(), margin: det });
        }
        rows.push(PositivityRow {
            t: t[k],
            section_max: if section_max.is_finite() { section_max } else { f64::NAN },
            dual_min: if dual_min.is_finite() { dual_min } else { f64::NAN },
            det_laplacian: det,
        });
    }
    let fold = |f: fn(&PositivityRow) -> f64, max: bool| {
        rows.iter().map(f).filter(|v| v.is_finite()).fold(
            if max { f64::NEG_INFINITY } else { f64::INFINITY },
            |a, b| {
                if max {
                    a.max(b)
                } else {
                    a.min(b)
                }
            },
        )
    };
    Ok(PositivityReport {
        level: metric.level,
        tolerance,
        section_max: fold(|r| r.section_max, true),
        dual_min: fold(|r| r.dual_min, false),
        det_min: fold(|r| r.det_laplacian, false),
        passed: violations.is_empty(),
        rows,
        violations,
    })
}

/// `H(t) = exp(sign·|t|²) I`: positive for `sign = −1`, negative for `+1`.
pub fn model_metric(grid: PolarGrid, rank: usize, sign: f64, level: u32) -> DirectImageMetric {
    let h = grid
        .points()
        .iter()
        .map(|t| DMatrix::identity(rank, rank) * Complex64::new((sign * t.norm_sqr()).exp(), 0.0))
        .collect();
    DirectImageMetric { level, grid, h }
}

/// A field equal to `log(1 − c|t|²)` at every point: strictly superharmonic for `c > 0`.
pub fn superharmonic_control(grid: PolarGrid, c: f64, level: u32) -> RelativeBergmanField {
    let vals: Vec<f64> = grid.points().iter().map(|t| (1.0 - c * t.norm_sqr()).ln()).collect();
    RelativeBergmanField {
        level,
        grid,
        points: vec![Complex64::new(0.0, 0.0); 4],
        values: vec![vals; 4],
        lines: Vec::new(),
        line_values: Vec::new(),
    }
}
