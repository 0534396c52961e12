//! Kähler–Einstein residuals and global mass checks for a candidate density.
//!
//! A candidate stores `log D`, where `D` is the frame coefficient of
//! `(2π)⁻¹ dV_E`. In a coordinate `z`, `ω = i λ dz∧dz̄` and the measure of a
//! density coefficient `k` is `2k dA`, so `λ_z = 2π D_z` and the Einstein
//! equation `−Ric ω = ω` reads `∂_z∂_z̄ log λ = λ`, i.e. `Δ log λ / 4 = λ`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve::{Atlas, Sheet};
use crate::error::{Error, Result};
use crate::quadrature::{integrate_density, NodeSet};

/// Reach of the Laplacian stencil in grid steps.
pub const STENCIL_REACH: usize = 2;
/// Nominal order of the stencil.
pub const STENCIL_ORDER: f64 = 4.0;

/// A uniform Cartesian grid restricted to a region, with the points whose
/// stencils stay well inside the region marked for evaluation.
#[derive(Debug, Clone)]
pub struct ResidualGrid {
    pub h: f64,
    pub points: Vec<Complex64>,
    /// Indices into `points` where the residual is evaluated.
    pub interior: Vec<usize>,
    /// Index of the neighbor at offsets `(±1, ±2)` along `x` then `y`.
    stencils: Vec<[usize; 8]>,
    /// Region points lying too close to the boundary.
    pub excluded: usize,
}

impl ResidualGrid {
    /// Grid of spacing `2·half_width/n` over the square around `center`.
    /// `clearance(p)` is the distance from `p` to the region boundary, negative outside.
    /// Points with clearance below twice the stencil reach are excluded.
    pub fn new(center: Complex64, half_width: f64, n: usize, clearance: impl Fn(Complex64) -> f64) -> Self {
        let h = 2.0 * half_width / n as f64;
        let side = n + 1;
        let mut index = vec![usize::MAX; side * side];
        let mut points = Vec::new();
        let mut margin = Vec::new();
        for j in 0..side {
            for i in 0..side {
                let p = center + Complex64::new(-half_width + i as f64 * h, -half_width + j as f64 * h);
                let c = clearance(p);
                if c >= 0.0 {
                    index[j * side + i] = points.len();
                    points.push(p);
                    margin.push((i, j, c));
                }
            }
        }
        let need = 2.0 * STENCIL_REACH as f64 * h;
        let mut interior = Vec::new();
        let mut stencils = Vec::new();
        let mut excluded = 0;
        for (k, &(i, j, c)) in margin.iter().enumerate() {
            let at = |di: isize, dj: isize| {
                let (a, b) = (i as isize + di, j as isize + dj);
                if a < 0 || b < 0 || a >= side as isize || b >= side as isize {
                    usize::MAX
                } else {
                    index[b as usize * side + a as usize]
                }
            };
            let s = [at(1, 0), at(-1, 0), at(2, 0), at(-2, 0), at(0, 1), at(0, -1), at(0, 2), at(0, -2)];
            if c >= need && s.iter().all(|&v| v != usize::MAX) {
                interior.push(k);
                stencils.push(s);
            } else {
                excluded += 1;
            }
        }
        Self { h, points, interior, stencils, excluded }
    }

    /// Grid over bulk sheet `+` with `n` steps across the outer diameter.
    pub fn bulk(atlas: &Atlas, n: usize) -> Self {
        let holes = atlas.holes();
        let outer = atlas.outer_radius();
        Self::new(Complex64::new(0.0, 0.0), outer, n, |p| {
            holes.iter().fold(outer - p.norm(), |acc, &(e, r)| acc.min((p - e).norm() - r))
        })
    }

    /// Fraction of region points where the residual is evaluated.
    pub fn coverage(&self) -> f64 {
        self.interior.len() as f64 / self.points.len().max(1) as f64
    }

    /// Fourth-order five-point Laplacian of `values` at every interior point.
    pub fn laplacian(&self, values: &[f64]) -> Vec<f64> {
        let h2 = self.h * self.h;
        self.interior
            .iter()
            .zip(&self.stencils)
            .map(|(&k, s)| {
                let c = values[k];
                let ax = -values[s[2]] + 16.0 * values[s[0]] - 30.0 * c + 16.0 * values[s[1]] - values[s[3]];
                let ay = -values[s[6]] + 16.0 * values[s[4]] - 30.0 * c + 16.0 * values[s[5]] - values[s[7]];
                (ax + ay) / (12.0 * h2)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualPoint {
    pub chart: usize,
    pub z: Complex64,
    pub log_density: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussBonnet {
    /// `∫ D`, compared with `2g − 2`.
    pub candidate_mass: f64,
    pub candidate_target: f64,
    /// `∫ dV_E = 2π ∫ D`, compared with `2π(2g − 2)`.
    pub volume: f64,
    pub volume_target: f64,
    /// `|mass / target − 1|`.
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub points: Vec<ResidualPoint>,
    pub sup: f64,
    pub l2: f64,
    /// `sup |R| / sup λ`.
    pub relative_sup: f64,
    /// `(Σ R² / Σ λ²)^{1/2}`.
    pub relative_l2: f64,
    pub coverage: f64,
    pub excluded: usize,
    pub gauss_bonnet: Option<GaussBonnet>,
}

/// Residual `Δ(smooth_log)/4 − λ` at the interior points, where `smooth_log`
/// differs from `log λ` by a harmonic function.
pub fn residual_report(grid: &ResidualGrid, chart: usize, smooth_log: &[f64], lambda: &[f64]) -> ResidualReport {
    let lap = grid.laplacian(smooth_log);
    let mut points = Vec::with_capacity(grid.interior.len());
    let (mut sup, mut lam_sup, mut r2, mut l2) = (0.0f64, 0.0f64, 0.0, 0.0);
    for (&k, d) in grid.interior.iter().zip(&lap) {
        let r = 0.25 * d - lambda[k];
        sup = sup.max(r.abs());
        lam_sup = lam_sup.max(lambda[k]);
        r2 += r * r;
        l2 += lambda[k] * lambda[k];
        points.push(ResidualPoint { chart, z: grid.points[k], log_density: smooth_log[k], residual: r });
    }
    let n = points.len().max(1) as f64;
    ResidualReport {
        points,
        sup,
        l2: (r2 / n).sqrt(),
        relative_sup: if lam_sup > 0.0 { sup / lam_sup } else { f64::INFINITY },
        relative_l2: if l2 > 0.0 { (r2 / l2).sqrt() } else { f64::INFINITY },
        coverage: grid.coverage(),
        excluded: grid.excluded,
        gauss_bonnet: None,
    }
}

/// Einstein residual of a candidate given by `log D` on bulk sheet `+`.
/// `log |f|` is harmonic there, so only `log D` is differenced.
pub fn einstein_residual(
    atlas: &Atlas,
    grid: &ResidualGrid,
    log_d: impl Fn(Complex64) -> f64 + Sync,
) -> ResidualReport {
    let logs: Vec<f64> = grid.points.par_iter().map(|&x| log_d(x)).collect();
    let lambda: Vec<f64> =
        grid.points.iter().zip(&logs).map(|(&x, &ld)| 2.0 * PI * (ld - atlas.curve().f(x).norm().ln()).exp()).collect();
    residual_report(grid, atlas.bulk_chart(Sheet::Plus), &logs, &lambda)
}

/// Residual of the Poincaré metric `λ = 2(1 − |z|²)⁻²` on `|z| ≤ radius`.
pub fn poincare_residual(radius: f64, n: usize) -> ResidualReport {
    let grid = ResidualGrid::new(Complex64::new(0.0, 0.0), radius, n, |p| radius - p.norm());
    let lambda: Vec<f64> = grid.points.iter().map(|p| 2.0 / (1.0 - p.norm_sqr()).powi(2)).collect();
    let logs: Vec<f64> = lambda.iter().map(|l| l.ln()).collect();
    residual_report(&grid, 0, &logs, &lambda)
}

/// Residual of a constant `λ = c` on `|z| ≤ radius`.
pub fn constant_residual(c: f64, radius: f64, n: usize) -> ResidualReport {
    let grid = ResidualGrid::new(Complex64::new(0.0, 0.0), radius, n, |p| radius - p.norm());
    let lambda = vec![c; grid.points.len()];
    let logs: Vec<f64> = lambda.iter().map(|l| l.ln()).collect();
    residual_report(&grid, 0, &logs, &lambda)
}

/// Candidate mass against `2g − 2` and the Einstein volume against `2π(2g − 2)`.
pub fn gauss_bonnet(atlas: &Atlas, nodes: &NodeSet, log_d: &[f64]) -> Result<GaussBonnet> {
    let mass = integrate_density(nodes, log_d)?;
    let target = atlas.curve().canonical_degree() as f64;
    Ok(GaussBonnet {
        candidate_mass: mass,
        candidate_target: target,
        volume: 2.0 * PI * mass,
        volume_target: 2.0 * PI * target,
        deviation: (mass / target - 1.0).abs(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCheck {
    pub sup_log_difference: f64,
    pub points: usize,
}

/// Sup difference of two log densities sampled at the same comparison points.
pub fn compare_log_densities(curve_a: &str, curve_b: &str, a: &[f64], b: &[f64]) -> Result<CrossCheck> {
    if curve_a != curve_b {
        return Err(Error::InvalidInput(format!("candidates belong to different curves ({curve_a} vs {curve_b})")));
    }
    if a.len() != b.len() {
        return Err(Error::InvalidInput("comparison samples differ in length".into()));
    }
    let sup = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    Ok(CrossCheck { sup_log_difference: sup, points: a.len() })
}

/// Least-squares slope of `log residual` against `log h`.
pub fn convergence_slope(samples: &[(f64, f64)]) -> f64 {
    let n = samples.len() as f64;
    let (sx, sy) = samples.iter().fold((0.0, 0.0), |(a, b), (h, r)| (a + h.ln(), b + r.ln()));
    let (mx, my) = (sx / n, sy / n);
    let (num, den) = samples.iter().fold((0.0, 0.0), |(a, b), (h, r)| {
        let dx = h.ln() - mx;
        (a + dx * (r.ln() - my), b + dx * dx)
    });
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_field_has_residual_minus_c() {
        let r = constant_residual(3.0, 0.5, 40);
        assert!(r.points.iter().all(|p| (p.residual + 3.0).abs() < 1e-9));
        assert!((r.relative_sup - 1.0).abs() < 1e-9);
    }

    #[test]
    fn poincare_residual_is_small_and_fourth_order() {
        let coarse = poincare_residual(0.5, 40);
        let fine = poincare_residual(0.5, 80);
        assert!(coarse.relative_sup < 1e-5);
        let slope = convergence_slope(&[(0.5 / 40.0, coarse.sup), (0.5 / 80.0, fine.sup)]);
        assert!((slope - STENCIL_ORDER).abs() < 0.2 * STENCIL_ORDER, "slope {slope}");
    }

    #[test]
    fn laplacian_of_quadratic_is_exact() {
        let grid = ResidualGrid::new(Complex64::new(0.0, 0.0), 1.0, 20, |p| 1.0 - p.norm());
        let v: Vec<f64> = grid.points.iter().map(|p| p.norm_sqr()).collect();
        assert!(grid.laplacian(&v).iter().all(|l| (l - 4.0).abs() < 1e-9));
        assert!(grid.excluded > 0 && !grid.interior.is_empty());
    }
}
