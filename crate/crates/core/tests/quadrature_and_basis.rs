use std::f64::consts::PI;

use bergman_ke::curve::{AtlasParams, HyperellipticCurve};
use bergman_ke::quadrature::{build_nodes, disk_rule, integrate_density, Resolution};
use bergman_ke::{riemann_roch_count, Atlas, PluricanonicalBasis};
use num_complex::Complex64;

fn sextic() -> Atlas {
    let f: Vec<Complex64> = [-1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0].iter().map(|&x| Complex64::new(x, 0.0)).collect();
    Atlas::new(&HyperellipticCurve::new(&f).unwrap(), AtlasParams::default()).unwrap()
}

/// `h⁰(mK + r(∞₊ + ∞₋))` from Riemann–Roch and the hyperelliptic pencil.
fn dimension_oracle(g: i64, m: i64, r: i64) -> i64 {
    let deg = m * (2 * g - 2) + 2 * r;
    if m == 1 && r == 0 {
        g
    } else if m == 0 {
        // Multiples of the g¹₂ below the canonical degree.
        if deg > 2 * g - 2 {
            deg - g + 1
        } else {
            r + 1
        }
    } else {
        deg - g + 1
    }
}

#[test]
fn disk_integrals_match_closed_form() {
    let res = Resolution::default();
    let rule = disk_rule(1.0, res.disk_radial, res.disk_angular);
    for m in 1..=20 {
        let approx: f64 = rule.iter().map(|(z, w)| w * (1.0 - z.norm_sqr()).powi(m)).sum();
        let exact = PI / (m as f64 + 1.0);
        assert!(((approx - exact) / exact).abs() <= 1e-8, "m = {m}: {approx} vs {exact}");
    }
}

#[test]
fn basis_counts_match_riemann_roch() {
    for g in 2..=4usize {
        for r in 0..=2u32 {
            for m in 0..=12u32 {
                if m == 0 && r == 0 {
                    continue;
                }
                let expected = dimension_oracle(g as i64, m as i64, r as i64) as usize;
                assert_eq!(riemann_roch_count(g, m, r).unwrap(), expected, "g={g} m={m} r={r}");
                assert_eq!(PluricanonicalBasis::new(g, m, r).unwrap().len(), expected, "g={g} m={m} r={r}");
            }
        }
    }
}

#[test]
fn sums_do_not_depend_on_thread_count() {
    let atlas = sextic();
    let nodes = build_nodes(&atlas, Resolution::default()).unwrap();
    let density: Vec<f64> = nodes.nodes().iter().map(|n| -(n.z.norm_sqr() + 1.0).ln()).collect();
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| integrate_density(&nodes, &density).unwrap())
    };
    let one = run(1);
    for t in [2, 3, 8] {
        assert_eq!(run(t).to_bits(), one.to_bits());
    }
}

#[test]
fn doubling_resolution_leaves_integrals_unchanged() {
    let atlas = sextic();
    let coarse = build_nodes(&atlas, Resolution::default()).unwrap();
    let fine = build_nodes(&atlas, Resolution::default().doubled()).unwrap();
    let integral = |nodes: &bergman_ke::NodeSet| {
        let log: Vec<f64> = nodes.nodes().iter().map(|n| -2.0 * (1.0 + n.z.norm_sqr()).ln()).collect();
        integrate_density(nodes, &log).unwrap()
    };
    let (a, b) = (integral(&coarse), integral(&fine));
    assert!(((a - b) / b).abs() < 1e-6, "{a} vs {b}");
}

#[test]
fn rejects_degenerate_curves() {
    let c = |v: &[f64]| v.iter().map(|&x| Complex64::new(x, 0.0)).collect::<Vec<_>>();
    // (x² − 1)² (x² + 2): a repeated root.
    assert!(HyperellipticCurve::new(&c(&[2.0, 0.0, -3.0, 0.0, 0.0, 0.0, 1.0])).is_err());
    // Odd degree.
    assert!(HyperellipticCurve::new(&c(&[-1.0, 0.0, 0.0, 0.0, 0.0, 1.0])).is_err());
    // Genus 1.
    assert!(HyperellipticCurve::new(&c(&[-1.0, 0.0, 0.0, 0.0, 1.0])).is_err());
}
