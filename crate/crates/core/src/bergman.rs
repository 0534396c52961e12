//! Gram matrices of pluricanonical bases and Bergman kernel densities.
//!
//! For a basis `σ_i` of level `m + 1` and a metric `h_m = 1/K_m` the Gram
//! matrix is `G_ij = ∫ h_m σ_i σ̄_j`, and the kernel is `K(x) = v(x)ᴴ G⁻¹ v(x)`
//! with `v(x)` the evaluation vector of the raw basis. The inverse is applied
//! through a Cholesky factor of the diagonally equilibrated Gram matrix.
//!
//! Densities are stored as logs with a scale ledger: the true value is
//! `exp(log_k + scale_log)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::PluricanonicalBasis;
use crate::curve::Atlas;
use crate::error::{Error, Result};
use crate::quadrature::NodeSet;

/// Nodes per work unit. Partial results are combined in chunk order, so sums do
/// not depend on the number of threads.
pub const CHUNK: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub curve: String,
    pub nodes: String,
    pub seed: String,
}

/// `h_m` and `K_m` sampled on a node set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricField {
    pub level: u32,
    pub twist: u32,
    /// `log K_m − scale_log` per node, in the node's chart frame; the maximum is 0.
    pub log_k: Vec<f64>,
    pub scale_log: f64,
    pub provenance: Provenance,
}

impl MetricField {
    /// Builds a field from unnormalized log densities, moving the maximum into the ledger.
    pub fn from_raw(level: u32, twist: u32, raw: Vec<f64>, scale_log: f64, provenance: Provenance) -> Result<Self> {
        if let Some(node) = raw.iter().position(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::NonFinite { node });
        }
        if let Some(node) = raw.iter().position(|v| *v == f64::NEG_INFINITY) {
            return Err(Error::BasePoint { node });
        }
        let shift = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_k = raw.into_iter().map(|v| v - shift).collect();
        Ok(Self { level, twist, log_k, scale_log: scale_log + shift, provenance })
    }

    /// True `log K_m` per node.
    pub fn true_log_k(&self) -> Vec<f64> {
        self.log_k.iter().map(|v| v + self.scale_log).collect()
    }

    /// The field with every value multiplied by `exp(shift)`, recorded in the ledger only.
    pub fn rescaled(&self, shift: f64) -> Self {
        Self { scale_log: self.scale_log + shift, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub level: u32,
    pub twist: u32,
    pub entries: DMatrix<Complex64>,
    /// True Gram matrix is `entries · exp(scale_log)`.
    pub scale_log: f64,
}

impl GramMatrix {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// `max |G_ij − conj(G_ji)| / max |G_ij|`.
    pub fn hermitian_defect(&self) -> f64 {
        let g = &self.entries;
        let scale = g.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let mut worst: f64 = 0.0;
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                worst = worst.max((g[(i, j)] - g[(j, i)].conj()).norm());
            }
        }
        if scale > 0.0 {
            worst / scale
        } else {
            worst
        }
    }

    /// Smallest eigenvalue of the diagonally equilibrated matrix.
    pub fn min_equilibrated_eigenvalue(&self) -> f64 {
        let (_, eq) = equilibrate(&self.entries);
        nalgebra::SymmetricEigen::new(eq).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

fn equilibrate(g: &DMatrix<Complex64>) -> (Vec<f64>, DMatrix<Complex64>) {
    let d: Vec<f64> = (0..g.nrows()).map(|i| 1.0 / g[(i, i)].re.max(f64::MIN_POSITIVE).sqrt()).collect();
    let eq = DMatrix::from_fn(g.nrows(), g.ncols(), |i, j| g[(i, j)] * (d[i] * d[j]));
    (d, eq)
}

/// Evaluation vectors of `basis` at every node, one column per node.
pub fn sample_basis(basis: &PluricanonicalBasis, atlas: &Atlas, nodes: &NodeSet) -> DMatrix<Complex64> {
    let n = basis.len();
    let data: Vec<Complex64> = nodes
        .nodes()
        .par_chunks(CHUNK)
        .flat_map_iter(|chunk| {
            let mut out = vec![Complex64::new(0.0, 0.0); n * chunk.len()];
            for (node, slot) in chunk.iter().zip(out.chunks_mut(n)) {
                basis.eval_unchecked(atlas, node.chart, node.z, slot);
            }
            out
        })
        .collect();
    DMatrix::from_vec(n, nodes.len(), data)
}

/// `Σₙ exp(log_mu[n]) vₙ vₙᴴ`, summed chunk by chunk in node order, then symmetrized.
pub fn weighted_gram(samples: &DMatrix<Complex64>, log_mu: &[f64]) -> DMatrix<Complex64> {
    let n = samples.nrows();
    let total = samples.ncols();
    let starts: Vec<usize> = (0..total).step_by(CHUNK).collect();
    let partials: Vec<DMatrix<Complex64>> = starts
        .par_iter()
        .map(|&s| {
            let len = CHUNK.min(total - s);
            let mut a = samples.columns(s, len).clone_owned();
            for (k, mut col) in a.column_iter_mut().enumerate() {
                col *= Complex64::new((0.5 * log_mu[s + k]).exp(), 0.0);
            }
            &a * a.adjoint()
        })
        .collect();
    let mut g = DMatrix::zeros(n, n);
    for p in partials {
        g += p;
    }
    let gh = g.adjoint();
    (g + gh) * Complex64::new(0.5, 0.0)
}

/// Gram matrix of a level-`m+1` basis under `h_m = 1/K_m`.
pub fn assemble_gram(
    basis: &PluricanonicalBasis,
    samples: &DMatrix<Complex64>,
    metric: &MetricField,
    nodes: &NodeSet,
) -> Result<GramMatrix> {
    if basis.level != metric.level + 1 || basis.twist != metric.twist {
        return Err(Error::InvalidInput(format!(
            "basis (level {}, twist {}) does not pair with a metric of level {}, twist {}",
            basis.level, basis.twist, metric.level, metric.twist
        )));
    }
    if metric.log_k.len() != nodes.len() || samples.ncols() != nodes.len() {
        return Err(Error::InvalidInput("metric field and node set have different sizes".into()));
    }
    let log_mu: Vec<f64> = nodes
        .nodes()
        .iter()
        .zip(nodes.log_frame())
        .zip(&metric.log_k)
        .map(|((n, lf), lk)| (2.0 * n.weight).ln() + lf - lk)
        .collect();
    Ok(GramMatrix {
        level: basis.level,
        twist: basis.twist,
        entries: weighted_gram(samples, &log_mu),
        scale_log: -metric.scale_log,
    })
}

/// `K(x) = v(x)ᴴ G⁻¹ v(x)` for a fixed basis and Gram matrix.
#[derive(Debug, Clone)]
pub struct BergmanKernel {
    pub basis: PluricanonicalBasis,
    /// Equilibration `d_i = G_ii^{-1/2}`.
    scale: Vec<f64>,
    /// Lower Cholesky factor of `diag(d) G diag(d)`.
    chol: DMatrix<Complex64>,
    /// True `log K` is the raw value plus this.
    pub scale_log: f64,
}

impl BergmanKernel {
    pub fn new(basis: PluricanonicalBasis, gram: &GramMatrix) -> Result<Self> {
        if gram.dim() != basis.len() {
            return Err(Error::InvalidInput("Gram size does not match the basis".into()));
        }
        let (scale, eq) = equilibrate(&gram.entries);
        let chol = nalgebra::Cholesky::new(eq).ok_or(Error::GramIndefinite { level: gram.level })?;
        Ok(Self { basis, scale, chol: chol.unpack(), scale_log: -gram.scale_log })
    }

    /// Fubini–Study type kernel `Σ|σ_i|²`, the Gram matrix being the identity.
    pub fn fubini_study(basis: PluricanonicalBasis) -> Self {
        let n = basis.len();
        Self { basis, scale: vec![1.0; n], chol: DMatrix::identity(n, n), scale_log: 0.0 }
    }

    fn whiten(&self, mut v: DMatrix<Complex64>) -> DMatrix<Complex64> {
        for (i, mut row) in v.row_iter_mut().enumerate() {
            row *= Complex64::new(self.scale[i], 0.0);
        }
        self.chol.solve_lower_triangular_unchecked_mut(&mut v);
        v
    }

    /// Raw `log(vᴴ G⁻¹ v)` for an evaluation vector, without the ledger.
    pub fn raw_log_density(&self, v: &[Complex64]) -> f64 {
        let m = DMatrix::from_column_slice(v.len(), 1, v);
        self.whiten(m).norm_squared().ln()
    }

    /// True `log K` at local coordinate `z` of `chart`.
    pub fn log_density_at(&self, atlas: &Atlas, chart: usize, z: Complex64) -> Result<f64> {
        let v = self.basis.eval_in_chart(atlas, chart, z)?;
        Ok(self.raw_log_density(&v) + self.scale_log)
    }

    /// Raw log densities for every column of `samples`, chunked and in order.
    pub fn raw_log_densities(&self, samples: &DMatrix<Complex64>) -> Vec<f64> {
        let total = samples.ncols();
        let starts: Vec<usize> = (0..total).step_by(CHUNK).collect();
        starts
            .par_iter()
            .flat_map_iter(|&s| {
                let len = CHUNK.min(total - s);
                let w = self.whiten(samples.columns(s, len).clone_owned());
                w.column_iter().map(|c| c.norm_squared().ln()).collect::<Vec<_>>()
            })
            .collect()
    }

    /// Sampled field on a node set.
    pub fn field(&self, samples: &DMatrix<Complex64>, provenance: Provenance) -> Result<MetricField> {
        let raw = self.raw_log_densities(samples);
        MetricField::from_raw(self.basis.level, self.basis.twist, raw, self.scale_log, provenance)
    }

    /// `G⁻¹ v` in the true scale: the coefficient vector `a` with `σ = Σ conj(a_i) σ_i`
    /// maximizing `|σ(x)|² / ‖σ‖²`, the maximum being `K(x)`.
    pub fn maximizer(&self, v: &[Complex64]) -> DVector<Complex64> {
        let n = v.len();
        let w = self.whiten(DMatrix::from_column_slice(n, 1, v));
        let mut y = w.column(0).clone_owned();
        self.chol.adjoint().solve_upper_triangular_unchecked_mut(&mut y);
        let factor = (self.scale_log).exp();
        DVector::from_fn(n, |i, _| y[i] * (self.scale[i] * factor))
    }
}
