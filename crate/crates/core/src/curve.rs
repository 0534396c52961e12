//! Hyperelliptic curves `y² = f(x)` with `deg f = 2g + 2` and their chart atlas.
//!
//! The atlas tiles the curve without overlaps:
//!
//! * two bulk sheets over the region `|x| ≤ R` minus the branch disks, with
//!   coordinate `x`;
//! * one disk per branch point `e_j`, coordinate `t` with `t² = x − e_j`;
//! * two disks around the points at infinity, coordinate `x' = 1/x` and
//!   `y' = y / x^{g+1}`.
//!
//! On the bulk sheets `y` is the branch `y₊` of `√f` that is analytic off a set
//! of straight cuts joining the branch points in pairs (the minimum total length
//! perfect matching, which never crosses itself) and behaves like `√c · x^{g+1}`
//! near infinity, `c` being the leading coefficient. Sheet `−` carries `−y₊`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly;

/// Relative slack used when testing whether a point lies in a closed chart domain.
const DOMAIN_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sheet {
    Plus,
    Minus,
}

impl Sheet {
    pub fn sign(self) -> f64 {
        match self {
            Sheet::Plus => 1.0,
            Sheet::Minus => -1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HyperellipticCurve {
    f_coeffs: Vec<Complex64>,
    genus: usize,
    branch_points: Vec<Complex64>,
}

/// Default root separation below which `f` is treated as having a repeated root.
pub const DEFAULT_SEPARATION_TOL: f64 = 1e-6;

impl HyperellipticCurve {
    /// Builds the curve `y² = f(x)` from ascending coefficients.
    pub fn new(f_coeffs: &[Complex64]) -> Result<Self> {
        Self::with_separation_tol(f_coeffs, DEFAULT_SEPARATION_TOL)
    }

    pub fn with_separation_tol(f_coeffs: &[Complex64], separation_tol: f64) -> Result<Self> {
        if f_coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::InvalidInput("non-finite polynomial coefficient".into()));
        }
        let deg = poly::degree(f_coeffs).ok_or_else(|| Error::InvalidInput("zero polynomial".into()))?;
        if deg % 2 == 1 {
            return Err(Error::UnsupportedModel(format!(
                "odd degree {deg}; only even-degree models with two points at infinity are supported"
            )));
        }
        let f: Vec<Complex64> = f_coeffs[..=deg].to_vec();
        let branch_points = poly::roots(&f);
        let separation = poly::min_separation(&branch_points);
        if !(separation > separation_tol) {
            return Err(Error::RepeatedRoots { separation, tolerance: separation_tol });
        }
        if deg < 6 {
            return Err(Error::UnsupportedModel(format!(
                "degree {deg} gives genus < 2; canonical bundle is not ample"
            )));
        }
        for e in &branch_points {
            let scale = poly::eval_scale(&f, *e);
            if poly::eval(&f, *e).norm() > 1e-12 * scale {
                return Err(Error::InvalidInput(format!(
                    "root {e} could not be polished below the residual threshold"
                )));
            }
        }
        Ok(Self { f_coeffs: f, genus: deg / 2 - 1, branch_points })
    }

    pub fn f_coeffs(&self) -> &[Complex64] {
        &self.f_coeffs
    }

    pub fn genus(&self) -> usize {
        self.genus
    }

    pub fn branch_points(&self) -> &[Complex64] {
        &self.branch_points
    }

    pub fn infinity_count(&self) -> usize {
        2
    }

    /// Degree of `K_X`, which equals `K_X^n` for a curve.
    pub fn canonical_degree(&self) -> usize {
        2 * self.genus - 2
    }

    pub fn leading_coeff(&self) -> Complex64 {
        *self.f_coeffs.last().unwrap()
    }

    pub fn f(&self, x: Complex64) -> Complex64 {
        poly::eval(&self.f_coeffs, x)
    }

    /// Reversed polynomial `x'^{2g+2} f(1/x')`, equal to `y'²` on the infinity charts.
    pub fn f_reversed(&self, xp: Complex64) -> Complex64 {
        let rev: Vec<Complex64> = self.f_coeffs.iter().rev().cloned().collect();
        poly::eval(&rev, xp)
    }

    /// Stable identifier derived from the coefficient bits.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for c in &self.f_coeffs {
            h.update(c.re.to_le_bytes());
            h.update(c.im.to_le_bytes());
        }
        format!("{:x}", h.finalize())[..16].to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtlasParams {
    /// Branch disk radius as a fraction of the distance to the nearest other root.
    pub branch_radius_fraction: f64,
    /// Bulk outer radius as a multiple of `max_j (|e_j| + r_j)`.
    pub outer_radius_factor: f64,
}

impl Default for AtlasParams {
    fn default() -> Self {
        Self { branch_radius_fraction: 0.25, outer_radius_factor: 1.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChartKind {
    Bulk(Sheet),
    Branch(usize),
    Infinity(Sheet),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Chart {
    pub id: usize,
    pub kind: ChartKind,
    /// Center in the `x` plane (`0` for bulk and infinity charts).
    pub center: Complex64,
    /// Bulk: outer radius `R` in `x`. Branch: disk radius in `x`.
    /// Infinity: disk radius `1/R` in `x'`.
    pub radius: f64,
}

impl Chart {
    /// Radius of the chart domain in its own local coordinate, for disk charts.
    pub fn local_radius(&self) -> f64 {
        match self.kind {
            ChartKind::Branch(_) => self.radius.sqrt(),
            _ => self.radius,
        }
    }
}

#[derive(Debug, Clone)]
struct BranchData {
    /// `s_j(0)` with `y = t s_j(t)`.
    s0: Complex64,
    /// `1 / (e_j − e_k)` for `k ≠ j`.
    inv_gaps: Vec<Complex64>,
}

/// A point of the curve given through an affine or an infinity representation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CurvePoint {
    Affine { x: Complex64, y: Complex64 },
    NearInfinity { xp: Complex64, yp: Complex64 },
}

#[derive(Debug, Clone)]
pub struct Atlas {
    curve: HyperellipticCurve,
    params: AtlasParams,
    charts: Vec<Chart>,
    cuts: Vec<(Complex64, Complex64)>,
    branch: Vec<BranchData>,
    sqrt_lead: Complex64,
    outer_radius: f64,
    polar_center: Complex64,
}

impl Atlas {
    pub fn new(curve: &HyperellipticCurve, params: AtlasParams) -> Result<Self> {
        if !(params.branch_radius_fraction > 0.0 && params.branch_radius_fraction < 0.5) {
            return Err(Error::InvalidInput(
                "branch_radius_fraction must lie in (0, 0.5) so branch disks stay disjoint".into(),
            ));
        }
        if !(params.outer_radius_factor > 1.0) {
            return Err(Error::InvalidInput("outer_radius_factor must exceed 1".into()));
        }
        let e = curve.branch_points();
        let n = e.len();
        let radii: Vec<f64> = (0..n)
            .map(|j| {
                let d = (0..n).filter(|&k| k != j).map(|k| (e[j] - e[k]).norm()).fold(f64::INFINITY, f64::min);
                params.branch_radius_fraction * d
            })
            .collect();
        let reach = (0..n).map(|j| e[j].norm() + radii[j]).fold(0.0, f64::max);
        let outer_radius = params.outer_radius_factor * reach;

        let mut charts = vec![
            Chart { id: 0, kind: ChartKind::Bulk(Sheet::Plus), center: 0.0.into(), radius: outer_radius },
            Chart { id: 1, kind: ChartKind::Bulk(Sheet::Minus), center: 0.0.into(), radius: outer_radius },
        ];
        for j in 0..n {
            charts.push(Chart { id: charts.len(), kind: ChartKind::Branch(j), center: e[j], radius: radii[j] });
        }
        for sheet in [Sheet::Plus, Sheet::Minus] {
            charts.push(Chart {
                id: charts.len(),
                kind: ChartKind::Infinity(sheet),
                center: 0.0.into(),
                radius: 1.0 / outer_radius,
            });
        }

        let lead = curve.leading_coeff();
        let branch = (0..n)
            .map(|j| {
                let gj = (0..n).filter(|&k| k != j).fold(lead, |acc, k| acc * (e[j] - e[k]));
                BranchData {
                    s0: gj.sqrt(),
                    inv_gaps: (0..n).filter(|&k| k != j).map(|k| 1.0 / (e[j] - e[k])).collect(),
                }
            })
            .collect();

        let cuts = min_length_matching(e);
        let polar_center = choose_polar_center(e, &radii, outer_radius);
        Ok(Self {
            curve: curve.clone(),
            params,
            charts,
            cuts,
            branch,
            sqrt_lead: lead.sqrt(),
            outer_radius,
            polar_center,
        })
    }

    pub fn curve(&self) -> &HyperellipticCurve {
        &self.curve
    }

    pub fn params(&self) -> AtlasParams {
        self.params
    }

    pub fn charts(&self) -> &[Chart] {
        &self.charts
    }

    pub fn chart(&self, id: usize) -> &Chart {
        &self.charts[id]
    }

    pub fn outer_radius(&self) -> f64 {
        self.outer_radius
    }

    /// Point from which the bulk quadrature casts its rays.
    pub fn polar_center(&self) -> Complex64 {
        self.polar_center
    }

    pub fn branch_cuts(&self) -> &[(Complex64, Complex64)] {
        &self.cuts
    }

    /// `(center, radius)` of every branch disk in the `x` plane.
    pub fn holes(&self) -> Vec<(Complex64, f64)> {
        self.charts.iter().filter(|c| matches!(c.kind, ChartKind::Branch(_))).map(|c| (c.center, c.radius)).collect()
    }

    pub fn bulk_chart(&self, sheet: Sheet) -> usize {
        match sheet {
            Sheet::Plus => 0,
            Sheet::Minus => 1,
        }
    }

    pub fn branch_chart(&self, j: usize) -> usize {
        2 + j
    }

    pub fn infinity_chart(&self, sheet: Sheet) -> usize {
        let base = 2 + self.curve.branch_points.len();
        match sheet {
            Sheet::Plus => base,
            Sheet::Minus => base + 1,
        }
    }

    /// The branch `y₊(x)` on bulk sheet `+`.
    pub fn y_plus(&self, x: Complex64) -> Complex64 {
        self.cuts.iter().fold(self.sqrt_lead, |acc, &(a, b)| {
            let da = x - a;
            acc * da * ((x - b) / da).sqrt()
        })
    }

    /// `s_j(t)` with `y = t s_j(t)` on branch chart `j`.
    pub fn branch_factor(&self, j: usize, t: Complex64) -> Complex64 {
        let t2 = t * t;
        let d = &self.branch[j];
        d.inv_gaps.iter().fold(d.s0, |acc, &g| acc * (1.0 + t2 * g).sqrt())
    }

    /// `y'(x')` on infinity chart `+`; it tends to `√c` as `x' → 0`.
    pub fn y_prime_plus(&self, xp: Complex64) -> Complex64 {
        self.curve.branch_points.iter().fold(self.sqrt_lead, |acc, &e| acc * (1.0 - e * xp).sqrt())
    }

    /// Whether local coordinate `z` lies in the closed domain of `chart`.
    pub fn contains(&self, chart: usize, z: Complex64) -> bool {
        let c = &self.charts[chart];
        match c.kind {
            ChartKind::Bulk(_) => {
                if z.norm() > self.outer_radius * (1.0 + DOMAIN_SLACK) {
                    return false;
                }
                self.holes().iter().all(|&(e, r)| (z - e).norm() >= r * (1.0 - DOMAIN_SLACK))
            }
            ChartKind::Branch(_) | ChartKind::Infinity(_) => z.norm() <= c.local_radius() * (1.0 + DOMAIN_SLACK),
        }
    }

    /// Curve point represented by local coordinate `z` in `chart`.
    pub fn point(&self, chart: usize, z: Complex64) -> Result<CurvePoint> {
        if !self.contains(chart, z) {
            return Err(Error::Domain(format!("coordinate {z} is not in chart {chart}")));
        }
        Ok(match self.charts[chart].kind {
            ChartKind::Bulk(s) => CurvePoint::Affine { x: z, y: s.sign() * self.y_plus(z) },
            ChartKind::Branch(j) => {
                CurvePoint::Affine { x: self.charts[chart].center + z * z, y: z * self.branch_factor(j, z) }
            }
            ChartKind::Infinity(s) => CurvePoint::NearInfinity { xp: z, yp: s.sign() * self.y_prime_plus(z) },
        })
    }

    fn to_affine(&self, p: CurvePoint) -> Option<(Complex64, Complex64)> {
        match p {
            CurvePoint::Affine { x, y } => Some((x, y)),
            CurvePoint::NearInfinity { xp, yp } => {
                if xp.norm() == 0.0 {
                    None
                } else {
                    let x = 1.0 / xp;
                    Some((x, yp * x.powu(self.curve.genus as u32 + 1)))
                }
            }
        }
    }

    fn to_infinity(&self, p: CurvePoint) -> Option<(Complex64, Complex64)> {
        match p {
            CurvePoint::NearInfinity { xp, yp } => Some((xp, yp)),
            CurvePoint::Affine { x, y } => {
                if x.norm() == 0.0 {
                    None
                } else {
                    let xp = 1.0 / x;
                    Some((xp, y * xp.powu(self.curve.genus as u32 + 1)))
                }
            }
        }
    }

    /// Local coordinate of curve point `p` in `chart`, if it lies in the chart's closed domain.
    pub fn coordinate(&self, p: CurvePoint, chart: usize) -> Result<Complex64> {
        let c = self.charts[chart];
        let outside = || Error::Domain(format!("point {p:?} is not in chart {chart}"));
        let z = match c.kind {
            ChartKind::Bulk(s) => {
                let (x, y) = self.to_affine(p).ok_or_else(outside)?;
                if !self.contains(chart, x) {
                    return Err(outside());
                }
                let yb = s.sign() * self.y_plus(x);
                if (y - yb).norm() > (y + yb).norm() {
                    return Err(outside());
                }
                x
            }
            ChartKind::Branch(j) => {
                let (x, y) = self.to_affine(p).ok_or_else(outside)?;
                let mut t = (x - c.center).sqrt();
                if !self.contains(chart, t) {
                    return Err(outside());
                }
                let yt = t * self.branch_factor(j, t);
                if (y - yt).norm() > (y + yt).norm() {
                    t = -t;
                }
                t
            }
            ChartKind::Infinity(s) => {
                let (xp, yp) = self.to_infinity(p).ok_or_else(outside)?;
                if !self.contains(chart, xp) {
                    return Err(outside());
                }
                let yi = s.sign() * self.y_prime_plus(xp);
                if (yp - yi).norm() > (yp + yi).norm() {
                    return Err(outside());
                }
                xp
            }
        };
        Ok(z)
    }

    /// `log |frame / d(coordinate)|²` for the canonical frame of `chart` at `z`:
    /// the frame is `dx/y` on bulk and branch charts and `dx'/y'` at infinity.
    pub fn log_frame_factor(&self, chart: usize, z: Complex64) -> f64 {
        match self.charts[chart].kind {
            ChartKind::Bulk(_) => -2.0 * self.y_plus(z).norm().ln(),
            ChartKind::Branch(j) => 4f64.ln() - 2.0 * self.branch_factor(j, z).norm().ln(),
            ChartKind::Infinity(_) => -2.0 * self.y_prime_plus(z).norm().ln(),
        }
    }
}

/// Pairs the roots so that the total length of the joining segments is minimal.
fn min_length_matching(points: &[Complex64]) -> Vec<(Complex64, Complex64)> {
    let n = points.len();
    let full = (1usize << n) - 1;
    let mut best = vec![f64::INFINITY; 1 << n];
    let mut choice = vec![(0usize, 0usize); 1 << n];
    best[0] = 0.0;
    for mask in 0..=full {
        if best[mask].is_infinite() || mask == full {
            continue;
        }
        let i = (0..n).find(|&i| mask & (1 << i) == 0).unwrap();
        for j in (i + 1)..n {
            if mask & (1 << j) != 0 {
                continue;
            }
            let next = mask | (1 << i) | (1 << j);
            let cost = best[mask] + (points[i] - points[j]).norm();
            if cost < best[next] {
                best[next] = cost;
                choice[next] = (i, j);
            }
        }
    }
    let mut pairs = Vec::with_capacity(n / 2);
    let mut mask = full;
    while mask != 0 {
        let (i, j) = choice[mask];
        pairs.push((points[i], points[j]));
        mask &= !((1 << i) | (1 << j));
    }
    pairs.reverse();
    pairs
}

/// Picks the origin unless it sits inside (or too close to) a branch disk; otherwise
/// the grid point of the inner disk farthest from every branch disk.
fn choose_polar_center(e: &[Complex64], radii: &[f64], outer: f64) -> Complex64 {
    let clearance =
        |c: Complex64| e.iter().zip(radii).map(|(&ej, &r)| (c - ej).norm() / r).fold(f64::INFINITY, f64::min);
    let origin = Complex64::new(0.0, 0.0);
    if clearance(origin) >= 1.5 {
        return origin;
    }
    let steps = 40;
    let mut best = (origin, clearance(origin));
    for i in 0..=steps {
        for j in 0..=steps {
            let c = Complex64::new(
                outer * 0.5 * (2.0 * i as f64 / steps as f64 - 1.0),
                outer * 0.5 * (2.0 * j as f64 / steps as f64 - 1.0),
            );
            if c.norm() > 0.5 * outer {
                continue;
            }
            let cl = clearance(c);
            if cl > best.1 {
                best = (c, cl);
            }
        }
    }
    best.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn real_poly(c: &[f64]) -> Vec<Complex64> {
        c.iter().map(|&x| Complex64::new(x, 0.0)).collect()
    }

    pub(crate) fn sextic() -> HyperellipticCurve {
        HyperellipticCurve::new(&real_poly(&[-1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0])).unwrap()
    }

    #[test]
    fn genus_from_degree() {
        assert_eq!(sextic().genus(), 2);
        let c = HyperellipticCurve::new(&real_poly(&[1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0])).unwrap();
        assert_eq!(c.genus(), 3);
        assert_eq!(c.canonical_degree(), 4);
    }

    #[test]
    fn sixth_roots_are_branch_points() {
        let c = sextic();
        for e in c.branch_points() {
            assert!((e.powu(6) - 1.0).norm() < 1e-13);
        }
    }

    #[test]
    fn rejects_repeated_roots() {
        let f = real_poly(&[1.0, 0.0, -2.0, 0.0, 1.0]);
        assert!(matches!(HyperellipticCurve::new(&f), Err(Error::RepeatedRoots { .. })));
        // (x² − 1)² (x² + 1)
        let f = real_poly(&[1.0, 0.0, -1.0, 0.0, -1.0, 0.0, 1.0]);
        assert!(matches!(HyperellipticCurve::new(&f), Err(Error::RepeatedRoots { .. })));
    }

    #[test]
    fn rejects_odd_degree_and_low_genus() {
        let f = real_poly(&[-1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(matches!(HyperellipticCurve::new(&f), Err(Error::UnsupportedModel(_))));
        let f = real_poly(&[-1.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(matches!(HyperellipticCurve::new(&f), Err(Error::UnsupportedModel(_))));
    }

    #[test]
    fn y_plus_squares_to_f_and_matches_infinity_branch() {
        let c = sextic();
        let atlas = Atlas::new(&c, AtlasParams::default()).unwrap();
        for &x in &[Complex64::new(0.1, 0.2), Complex64::new(-1.5, 0.3), Complex64::new(0.0, 1.7)] {
            let y = atlas.y_plus(x);
            assert!((y * y - c.f(x)).norm() < 1e-12);
        }
        // Near the outer boundary, y₊/x^{g+1} continues to the `+` infinity branch.
        let x = Complex64::from_polar(atlas.outer_radius(), 0.7);
        let yp = atlas.y_plus(x) / x.powu(3);
        assert!((yp - atlas.y_prime_plus(1.0 / x)).norm() < 1e-12);
    }

    #[test]
    fn cuts_do_not_cross() {
        let c = sextic();
        let atlas = Atlas::new(&c, AtlasParams::default()).unwrap();
        let cuts = atlas.branch_cuts();
        assert_eq!(cuts.len(), 3);
        for (i, a) in cuts.iter().enumerate() {
            for b in cuts.iter().skip(i + 1) {
                assert!(!segments_cross(*a, *b));
            }
        }
    }

    fn segments_cross(a: (Complex64, Complex64), b: (Complex64, Complex64)) -> bool {
        let cross = |o: Complex64, p: Complex64, q: Complex64| {
            let u = p - o;
            let v = q - o;
            u.re * v.im - u.im * v.re
        };
        let d1 = cross(a.0, a.1, b.0);
        let d2 = cross(a.0, a.1, b.1);
        let d3 = cross(b.0, b.1, a.0);
        let d4 = cross(b.0, b.1, a.1);
        d1 * d2 < 0.0 && d3 * d4 < 0.0
    }

    #[test]
    fn branch_coordinates_round_trip() {
        let c = sextic();
        let atlas = Atlas::new(&c, AtlasParams::default()).unwrap();
        for j in 0..6 {
            let chart = atlas.branch_chart(j);
            let t = Complex64::from_polar(0.9 * atlas.chart(chart).local_radius(), 1.1);
            let p = atlas.point(chart, t).unwrap();
            let back = atlas.coordinate(p, chart).unwrap();
            assert!((back - t).norm() < 1e-12);
            if let CurvePoint::Affine { x, y } = p {
                assert!((y * y - c.f(x)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn charts_have_disjoint_disks() {
        let c = HyperellipticCurve::new(&real_poly(&[1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0])).unwrap();
        let atlas = Atlas::new(&c, AtlasParams::default()).unwrap();
        let holes = atlas.holes();
        for (i, a) in holes.iter().enumerate() {
            for b in holes.iter().skip(i + 1) {
                assert!((a.0 - b.0).norm() > a.1 + b.1);
            }
            assert!(a.0.norm() + a.1 < atlas.outer_radius());
        }
        assert!(!atlas.contains(0, holes[0].0));
    }
}
