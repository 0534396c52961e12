//! Complex polynomials in ascending-coefficient form and their roots.

use nalgebra::DMatrix;
use num_complex::Complex64;

/// Horner evaluation of `Σ c_k x^k`.
pub fn eval(coeffs: &[Complex64], x: Complex64) -> Complex64 {
    coeffs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * x + c)
}

/// Value and first derivative.
pub fn eval_with_derivative(coeffs: &[Complex64], x: Complex64) -> (Complex64, Complex64) {
    let zero = Complex64::new(0.0, 0.0);
    let mut p = zero;
    let mut dp = zero;
    for &c in coeffs.iter().rev() {
        dp = dp * x + p;
        p = p * x + c;
    }
    (p, dp)
}

/// `Σ |c_k| |x|^k`, the natural scale for the residual of `f(x)`.
pub fn eval_scale(coeffs: &[Complex64], x: Complex64) -> f64 {
    let r = x.norm();
    coeffs.iter().rev().fold(0.0, |acc, c| acc * r + c.norm())
}

/// Index of the highest nonzero coefficient.
pub fn degree(coeffs: &[Complex64]) -> Option<usize> {
    coeffs.iter().rposition(|c| *c != Complex64::new(0.0, 0.0))
}

/// Roots of `coeffs` (ascending order, nonzero leading coefficient) from the
/// eigenvalues of the companion matrix, each polished by Newton's method.
///
/// The returned roots are sorted by argument, then modulus.
pub fn roots(coeffs: &[Complex64]) -> Vec<Complex64> {
    let n = match degree(coeffs) {
        Some(d) if d > 0 => d,
        _ => return Vec::new(),
    };
    // Companion matrices of x^n − c are permutation-like and stall unshifted QR;
    // on failure the eigenvalue problem is retried for f(x + s) and shifted back.
    let shifts = [Complex64::new(0.0, 0.0), Complex64::new(0.137, 0.071), Complex64::new(-0.291, 0.213)];
    let mut found = Vec::new();
    for s in shifts {
        let shifted = taylor_shift(&coeffs[..=n], s);
        if let Some(ev) = companion_eigenvalues(&shifted) {
            found = ev.into_iter().map(|z| z + s).collect();
            break;
        }
    }
    for r in found.iter_mut() {
        *r = newton_polish(&coeffs[..=n], *r);
    }
    found.sort_by(|a, b| a.arg().partial_cmp(&b.arg()).unwrap().then(a.norm().partial_cmp(&b.norm()).unwrap()));
    found
}

/// Coefficients of `f(x + s)`.
pub fn taylor_shift(coeffs: &[Complex64], s: Complex64) -> Vec<Complex64> {
    let mut out = coeffs.to_vec();
    let n = out.len();
    for k in 0..n {
        for j in (k..n - 1).rev() {
            let next = out[j + 1];
            out[j] += s * next;
        }
    }
    out
}

fn companion_eigenvalues(coeffs: &[Complex64]) -> Option<Vec<Complex64>> {
    let n = coeffs.len() - 1;
    let lead = coeffs[n];
    let companion = DMatrix::<Complex64>::from_fn(n, n, |i, j| {
        if j == n - 1 {
            -coeffs[i] / lead
        } else if i == j + 1 {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let schur = nalgebra::linalg::Schur::try_new(companion, 1e-15, 2000)?;
    let (_, t) = schur.unpack();
    Some((0..n).map(|i| t[(i, i)]).collect())
}

/// Newton iterations from `x0`, keeping the iterate with smallest residual.
pub fn newton_polish(coeffs: &[Complex64], x0: Complex64) -> Complex64 {
    let mut best = x0;
    let mut best_res = eval(coeffs, x0).norm();
    let mut x = x0;
    for _ in 0..50 {
        let (p, dp) = eval_with_derivative(coeffs, x);
        if dp.norm() == 0.0 {
            break;
        }
        x -= p / dp;
        let res = eval(coeffs, x).norm();
        if !res.is_finite() {
            break;
        }
        if res < best_res {
            best = x;
            best_res = res;
        }
        if res <= 1e-15 * eval_scale(coeffs, x) {
            break;
        }
    }
    best
}

/// Minimum pairwise distance.
pub fn min_separation(points: &[Complex64]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            best = best.min((points[i] - points[j]).norm());
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn horner_matches_direct_sum() {
        let p = [c(1.0), c(-2.0), Complex64::new(0.5, 1.0)];
        let x = Complex64::new(0.3, -0.7);
        let direct = p[0] + p[1] * x + p[2] * x * x;
        assert!((eval(&p, x) - direct).norm() < 1e-15);
        let (_, d) = eval_with_derivative(&p, x);
        assert!((d - (p[1] + 2.0 * p[2] * x)).norm() < 1e-15);
    }

    #[test]
    fn sixth_roots_of_unity() {
        let mut f = vec![c(0.0); 7];
        f[0] = c(-1.0);
        f[6] = c(1.0);
        let r = roots(&f);
        assert_eq!(r.len(), 6);
        for z in &r {
            assert!((z.norm() - 1.0).abs() < 1e-14);
            assert!(eval(&f, *z).norm() < 1e-13);
        }
        assert!((min_separation(&r) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn taylor_shift_matches_evaluation() {
        let p = [c(1.0), Complex64::new(-2.0, 0.5), c(0.0), c(3.0)];
        let s = Complex64::new(0.3, -0.2);
        let q = taylor_shift(&p, s);
        let x = Complex64::new(-0.4, 0.9);
        assert!((eval(&q, x) - eval(&p, x + s)).norm() < 1e-13);
    }

    #[test]
    fn roots_are_sorted_by_argument() {
        let f = [c(1.0), c(1.0), c(0.0), c(0.0), c(0.0), c(0.0), c(0.0), c(0.0), c(1.0)];
        let r = roots(&f);
        for w in r.windows(2) {
            assert!(w[0].arg() <= w[1].arg());
        }
    }
}
