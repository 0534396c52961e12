//! Monomial bases of `H⁰(X, A + mK_X)` with `A = r(∞₊ + ∞₋)`.
//!
//! Elements are `x^i y^ε (dx/y)^m ⊗ 1_A` with `ε ∈ {0, 1}`. On bulk and branch
//! charts coefficients are taken against the frame `(dx/y)^m ⊗ 1_A`; on the
//! infinity charts against `(dx'/y')^m ⊗ x'^{-r} 1_A`, where
//! `dx/y = −x'^{g−1} dx'/y'`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::curve::{Atlas, ChartKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Monomial {
    /// Power of `y` (0 or 1); sorts first.
    pub eps: u8,
    /// Power of `x`.
    pub i: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PluricanonicalBasis {
    pub genus: usize,
    pub level: u32,
    pub twist: u32,
    pub elements: Vec<Monomial>,
}

/// Largest admissible `x`-power for `y^ε`, or `None` when no monomial qualifies.
fn max_power(genus: usize, level: u32, twist: u32, eps: u8) -> Option<u32> {
    let g = genus as i64;
    let top = level as i64 * (g - 1) + twist as i64 - eps as i64 * (g + 1);
    (top >= 0).then_some(top as u32)
}

impl PluricanonicalBasis {
    pub fn new(genus: usize, level: u32, twist: u32) -> Result<Self> {
        if genus < 2 {
            return Err(Error::InvalidInput("genus must be at least 2".into()));
        }
        if level == 0 && twist == 0 {
            return Err(Error::InvalidInput("level 0 without twist is the trivial bundle".into()));
        }
        let mut elements = Vec::new();
        for eps in 0..=1u8 {
            if let Some(top) = max_power(genus, level, twist, eps) {
                elements.extend((0..=top).map(|i| Monomial { eps, i }));
            }
        }
        Ok(Self { genus, level, twist, elements })
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// `m(g−1) + r`, the pole order of the bulk frame at each infinity point.
    fn infinity_shift(&self) -> i64 {
        self.level as i64 * (self.genus as i64 - 1) + self.twist as i64
    }

    /// Coefficients of every element at a point with affine data `(x, y)`.
    pub fn eval_affine(&self, x: Complex64, y: Complex64, out: &mut [Complex64]) {
        let top = self.elements.iter().map(|e| e.i).max().unwrap_or(0) as usize;
        let mut powers = Vec::with_capacity(top + 1);
        let mut p = Complex64::new(1.0, 0.0);
        for _ in 0..=top {
            powers.push(p);
            p *= x;
        }
        for (slot, e) in out.iter_mut().zip(&self.elements) {
            let v = powers[e.i as usize];
            *slot = if e.eps == 1 { v * y } else { v };
        }
    }

    /// Coefficients of every element on an infinity chart at `(x', y')`.
    pub fn eval_infinity(&self, xp: Complex64, yp: Complex64, out: &mut [Complex64]) {
        let g1 = self.genus as i64 + 1;
        let sign = if self.level % 2 == 1 { -1.0 } else { 1.0 };
        let shift = self.infinity_shift();
        for (slot, e) in out.iter_mut().zip(&self.elements) {
            let pow = shift - e.i as i64 - e.eps as i64 * g1;
            debug_assert!(pow >= 0);
            let v = xp.powu(pow as u32) * sign;
            *slot = if e.eps == 1 { v * yp } else { v };
        }
    }

    /// Evaluation vector of the whole basis at local coordinate `z` of `chart`.
    pub fn eval_in_chart(&self, atlas: &Atlas, chart: usize, z: Complex64) -> Result<Vec<Complex64>> {
        if !atlas.contains(chart, z) {
            return Err(Error::Domain(format!("coordinate {z} is not in chart {chart}")));
        }
        let mut out = vec![Complex64::new(0.0, 0.0); self.len()];
        self.eval_unchecked(atlas, chart, z, &mut out);
        Ok(out)
    }

    pub(crate) fn eval_unchecked(&self, atlas: &Atlas, chart: usize, z: Complex64, out: &mut [Complex64]) {
        let c = atlas.chart(chart);
        match c.kind {
            ChartKind::Bulk(s) => self.eval_affine(z, s.sign() * atlas.y_plus(z), out),
            ChartKind::Branch(j) => self.eval_affine(c.center + z * z, z * atlas.branch_factor(j, z), out),
            ChartKind::Infinity(s) => self.eval_infinity(z, s.sign() * atlas.y_prime_plus(z), out),
        }
    }

    /// Coefficient of a single element; see [`PluricanonicalBasis::eval_in_chart`].
    pub fn evaluate_section(&self, index: usize, atlas: &Atlas, chart: usize, z: Complex64) -> Result<Complex64> {
        if index >= self.len() {
            return Err(Error::InvalidInput(format!("basis index {index} out of range")));
        }
        Ok(self.eval_in_chart(atlas, chart, z)?[index])
    }

    /// Orders of vanishing of element `index` at a branch point and at each
    /// infinity point, read off the divisor of `x^i y^ε (dx/y)^m ⊗ 1_A`.
    pub fn divisor_orders(&self, index: usize) -> (i64, i64) {
        let e = self.elements[index];
        let at_branch = if e.eps == 1 { 1 } else { 0 };
        let at_infinity = self.infinity_shift() - e.i as i64 - e.eps as i64 * (self.genus as i64 + 1);
        (at_branch, at_infinity)
    }
}

/// `T` with `coeff_A = T · coeff_B` at the common point given by `z_b` in chart `b`.
pub fn transition_factor(
    atlas: &Atlas,
    chart_a: usize,
    chart_b: usize,
    z_b: Complex64,
    level: u32,
    twist: u32,
) -> Result<Complex64> {
    let p = atlas.point(chart_b, z_b)?;
    let z_a = atlas.coordinate(p, chart_a)?;
    let g = atlas.curve().genus() as i32;
    let power = level as i32 * (g - 1) + twist as i32;
    let sign = if level % 2 == 1 { -1.0 } else { 1.0 };
    let is_inf = |c: usize| matches!(atlas.chart(c).kind, ChartKind::Infinity(_));
    let one = Complex64::new(1.0, 0.0);
    Ok(match (is_inf(chart_a), is_inf(chart_b)) {
        (false, false) | (true, true) => one,
        // coeff_affine = (−1)^m x^{m(g−1)+r} coeff_inf, and x = 1/x'.
        (false, true) => sign * z_b.powi(-power),
        (true, false) => sign * z_a.powi(power),
    })
}

/// `dim H⁰(X, A + mK_X)` for `A = r(∞₊ + ∞₋)` on a hyperelliptic curve of genus `g`.
/// Riemann–Roch above the canonical degree; the hyperelliptic pencil below it.
pub fn riemann_roch_count(genus: usize, level: u32, twist: u32) -> Result<usize> {
    let g = genus as i64;
    let deg = 2 * twist as i64 + level as i64 * (2 * g - 2);
    if deg > 2 * g - 2 {
        Ok((deg - g + 1) as usize)
    } else if level == 1 && twist == 0 {
        Ok(genus)
    } else if level == 0 && twist > 0 {
        // r·g¹₂ with r ≤ g − 1 is spanned by 1, x, …, x^r.
        Ok(twist as usize + 1)
    } else {
        Err(Error::InvalidInput(format!(
            "Riemann–Roch alone does not fix h⁰ for level {level}, twist {twist}, genus {genus}"
        )))
    }
}
