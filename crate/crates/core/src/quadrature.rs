//! Node sets over the chart decomposition and fixed-order density integration.
//!
//! Disk charts (branch and infinity) use a polar rule: Gauss–Legendre in the
//! radius against `ρ dρ`, trapezoid in the angle. The bulk region `|x| ≤ R`
//! minus the branch disks is swept by rays from the atlas polar center. Along
//! each ray the disks cut out exact intervals, so every ray splits into smooth
//! segments, each integrated by Gauss–Legendre. The angular variable is split
//! at every tangency angle, where segment endpoints have square-root behavior,
//! and mapped through `θ = a + (b − a) sin²(πs/2)` before Gauss–Legendre in `s`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::curve::{Atlas, ChartKind, Sheet};
use crate::error::{Error, Result};

/// Grid sizes of every region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    /// Gauss–Legendre nodes in the radius of each disk chart.
    pub disk_radial: usize,
    /// Trapezoid nodes in the angle of each disk chart.
    pub disk_angular: usize,
    /// Gauss–Legendre nodes per smooth ray segment in the bulk.
    pub bulk_radial: usize,
    /// Gauss–Legendre nodes per angular interval in the bulk.
    pub bulk_angular: usize,
}

impl Default for Resolution {
    fn default() -> Self {
        Self { disk_radial: 24, disk_angular: 48, bulk_radial: 24, bulk_angular: 24 }
    }
}

impl Resolution {
    pub const MIN_RADIAL: usize = 4;
    pub const MIN_ANGULAR: usize = 8;

    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("disk_radial", self.disk_radial, Self::MIN_RADIAL),
            ("disk_angular", self.disk_angular, Self::MIN_ANGULAR),
            ("bulk_radial", self.bulk_radial, Self::MIN_RADIAL),
            ("bulk_angular", self.bulk_angular, Self::MIN_RADIAL),
        ];
        for (name, value, min) in checks {
            if value < min {
                return Err(Error::Resolution(format!("{name} = {value} is below the minimum {min}")));
            }
        }
        Ok(())
    }

    /// Every grid size doubled.
    pub fn doubled(&self) -> Self {
        Self {
            disk_radial: 2 * self.disk_radial,
            disk_angular: 2 * self.disk_angular,
            bulk_radial: 2 * self.bulk_radial,
            bulk_angular: 2 * self.bulk_angular,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub chart: usize,
    /// Local coordinate in the chart.
    pub z: Complex64,
    /// Lebesgue area weight in the local coordinate.
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct NodeSet {
    nodes: Vec<Node>,
    log_frame: Vec<f64>,
    resolution: Resolution,
}

impl NodeSet {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `log |frame / dz|²` at every node.
    pub fn log_frame(&self) -> &[f64] {
        &self.log_frame
    }

    pub fn resolution(&self) -> Resolution {
        self.resolution
    }

    /// Hash of the node coordinates and weights.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for n in &self.nodes {
            h.update((n.chart as u64).to_le_bytes());
            h.update(n.z.re.to_le_bytes());
            h.update(n.z.im.to_le_bytes());
            h.update(n.weight.to_le_bytes());
        }
        format!("{:x}", h.finalize())[..16].to_string()
    }
}

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = 0.5 * (1.0 - z);
        x[n - 1 - i] = 0.5 * (1.0 + z);
        w[i] = 0.5 * wi;
        w[n - 1 - i] = 0.5 * wi;
    }
    (x, w)
}

/// Polar rule on the disk `|z| ≤ radius`: `(z, area weight)` pairs, radius outer loop.
pub fn disk_rule(radius: f64, n_radial: usize, n_angular: usize) -> Vec<(Complex64, f64)> {
    let (s, ws) = gauss_legendre(n_radial);
    let dtheta = 2.0 * PI / n_angular as f64;
    let mut out = Vec::with_capacity(n_radial * n_angular);
    for (&si, &wi) in s.iter().zip(&ws) {
        let rho = radius * si;
        let w = wi * radius * rho * dtheta;
        for l in 0..n_angular {
            let theta = dtheta * (l as f64 + 0.5);
            out.push((Complex64::from_polar(rho, theta), w));
        }
    }
    out
}

/// Sorted distances `(enter, exit)` along the ray `c + s·d` through each disk it crosses.
fn ray_holes(c: Complex64, d: Complex64, holes: &[(Complex64, f64)]) -> Vec<(f64, f64)> {
    let mut hits: Vec<(f64, f64)> = holes
        .iter()
        .filter_map(|&(e, r)| {
            let p = (e - c) * d.conj();
            if p.re <= 0.0 || p.im.abs() >= r {
                return None;
            }
            let half = (r * r - p.im * p.im).sqrt();
            Some((p.re - half, p.re + half))
        })
        .collect();
    hits.sort_by(|a, b| a.0.total_cmp(&b.0));
    hits
}

/// Bulk rule in the `x` plane: `(x, area weight)` pairs.
fn bulk_rule(atlas: &Atlas, n_radial: usize, n_angular: usize) -> Result<Vec<(Complex64, f64)>> {
    let c = atlas.polar_center();
    let holes = atlas.holes();
    let outer = atlas.outer_radius();
    let mut critical = Vec::with_capacity(2 * holes.len());
    for &(e, r) in &holes {
        let p = e - c;
        if p.norm() <= r {
            return Err(Error::Resolution("bulk polar center lies inside a branch disk".into()));
        }
        let half = (r / p.norm()).asin();
        for a in [p.arg() - half, p.arg() + half] {
            critical.push(a.rem_euclid(2.0 * PI));
        }
    }
    critical.sort_by(f64::total_cmp);
    critical.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let mut intervals = Vec::new();
    if critical.is_empty() {
        intervals.push((0.0, 2.0 * PI));
    } else {
        for k in 0..critical.len() {
            let a = critical[k];
            let b = if k + 1 < critical.len() { critical[k + 1] } else { critical[0] + 2.0 * PI };
            intervals.push((a, b));
        }
    }

    let (sa, wa) = gauss_legendre(n_angular);
    let (sr, wr) = gauss_legendre(n_radial);
    let cc = c.norm_sqr();
    let mut out = Vec::new();
    for &(a, b) in &intervals {
        for (&s, &w) in sa.iter().zip(&wa) {
            let phase = (0.5 * PI * s).sin();
            let theta = a + (b - a) * phase * phase;
            let wtheta = w * (b - a) * 0.5 * PI * (PI * s).sin();
            let d = Complex64::from_polar(1.0, theta);
            let proj = (c.conj() * d).re;
            let s_out = -proj + (proj * proj + outer * outer - cc).sqrt();
            let mut start = 0.0;
            let mut segments = Vec::new();
            for (enter, exit) in ray_holes(c, d, &holes) {
                segments.push((start, enter));
                start = exit;
            }
            segments.push((start, s_out));
            for (lo, hi) in segments {
                let len = hi - lo;
                if len <= 0.0 {
                    continue;
                }
                for (&u, &wu) in sr.iter().zip(&wr) {
                    let rho = lo + len * u;
                    out.push((c + d * rho, wtheta * wu * len * rho));
                }
            }
        }
    }
    Ok(out)
}

/// Builds the node set of the whole curve. Node order: bulk `+`, bulk `−`,
/// branch disks, infinity `+`, infinity `−`.
pub fn build_nodes(atlas: &Atlas, resolution: Resolution) -> Result<NodeSet> {
    resolution.validate()?;
    let bulk = bulk_rule(atlas, resolution.bulk_radial, resolution.bulk_angular)?;
    let mut nodes = Vec::new();
    for chart in atlas.charts() {
        match chart.kind {
            ChartKind::Bulk(_) => {
                nodes.extend(bulk.iter().map(|&(z, weight)| Node { chart: chart.id, z, weight }));
            }
            ChartKind::Branch(_) | ChartKind::Infinity(_) => {
                let rule = disk_rule(chart.local_radius(), resolution.disk_radial, resolution.disk_angular);
                nodes.extend(rule.into_iter().map(|(z, weight)| Node { chart: chart.id, z, weight }));
            }
        }
    }
    let log_frame = nodes.iter().map(|n| atlas.log_frame_factor(n.chart, n.z)).collect();
    Ok(NodeSet { nodes, log_frame, resolution })
}

/// Compensated sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// `Σ wₙ · 2 · exp(log_density + log_frame)` in node order. The factor 2 turns
/// `i a dz ∧ ā dz̄` into `2|a|² dA`. `−∞` encodes a zero density.
pub fn integrate_density(nodes: &NodeSet, log_density: &[f64]) -> Result<f64> {
    if log_density.len() != nodes.len() {
        return Err(Error::InvalidInput(format!("{} density samples for {} nodes", log_density.len(), nodes.len())));
    }
    let mut acc = KahanSum::default();
    for (i, ((n, &lf), &ld)) in nodes.nodes.iter().zip(&nodes.log_frame).zip(log_density).enumerate() {
        if ld.is_nan() || ld == f64::INFINITY {
            return Err(Error::NonFinite { node: i });
        }
        acc.add(2.0 * n.weight * (ld + lf).exp());
    }
    Ok(acc.value())
}

/// Log of `integrate_density`, computed without overflow for large log densities.
pub fn log_integrate_density(nodes: &NodeSet, log_density: &[f64]) -> Result<f64> {
    let shift = log_density.iter().zip(&nodes.log_frame).map(|(a, b)| a + b).fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return if shift == f64::NEG_INFINITY { Ok(f64::NEG_INFINITY) } else { Err(Error::NonFinite { node: 0 }) };
    }
    let shifted: Vec<f64> = log_density.iter().map(|v| v - shift).collect();
    Ok(integrate_density(nodes, &shifted)?.ln() + shift)
}

/// Which sheet a bulk or infinity node sits on.
pub fn node_sheet(atlas: &Atlas, node: &Node) -> Option<Sheet> {
    match atlas.chart(node.chart).kind {
        ChartKind::Bulk(s) | ChartKind::Infinity(s) => Some(s),
        ChartKind::Branch(_) => None,
    }
}
