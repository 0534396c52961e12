#![allow(dead_code)]

use bergman_ke::bergman::{assemble_gram, sample_basis};
use bergman_ke::curve::{AtlasParams, HyperellipticCurve};
use bergman_ke::{BergmanKernel, Engine, IterationConfig, IterationState, MetricField};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn sextic() -> HyperellipticCurve {
    HyperellipticCurve::new(&[c(-1.0), c(0.0), c(0.0), c(0.0), c(0.0), c(0.0), c(1.0)]).unwrap()
}

pub fn reference_config() -> IterationConfig {
    IterationConfig { atlas: AtlasParams::default(), ..IterationConfig::default() }
}

fn gaussian(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im)
}

#[derive(Debug, Clone, Copy)]
pub struct InvariantCheck {
    pub level: u32,
    /// Max relative change of `K` at the probe points after a change of basis.
    pub basis_change: f64,
    /// Max of `|σ(x)|² / (‖σ‖² K(x)) − 1` over random sections; must be `≤ 0`.
    pub extremal_excess: f64,
    /// Max relative gap between the maximizer's ratio and `K`.
    pub maximizer: f64,
    /// Max relative gap between `K` and a direct LU solve of `vᴴ G⁻¹ v`.
    pub direct_solve: f64,
    /// Minimum of `log K` over all nodes, relative to the ledger.
    pub min_log_k: f64,
}

/// Checks the Bergman invariants of `state` (level `m`, built from `previous` = `h_{m−1}`).
pub fn bergman_invariants(
    engine: &Engine,
    previous: &MetricField,
    state: &IterationState,
    seed: u64,
    sections: usize,
    points: usize,
) -> InvariantCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ state.level as u64);
    let basis = state.kernel.basis.clone();
    let n = basis.len();
    let samples = sample_basis(&basis, &engine.atlas, &engine.nodes);
    let gram = state.gram.as_ref().expect("a stepped state carries its Gram matrix");
    let probes: Vec<usize> = (0..points).map(|_| rng.random_range(0..engine.nodes.len())).collect();

    // Change of basis σ' = A σ with the Gram matrix recomputed from the new samples.
    let a = DMatrix::from_fn(n, n, |i, j| {
        let d = if i == j { c(1.0) } else { c(0.0) };
        d + gaussian(&mut rng) * (0.3 / (n as f64).sqrt())
    });
    let changed = &a * &samples;
    let gram2 = assemble_gram(&basis, &changed, previous, &engine.nodes).unwrap();
    let kernel2 = BergmanKernel::new(basis.clone(), &gram2).unwrap();

    let g = &gram.entries;
    let lu = g.clone().lu();
    let mut check = InvariantCheck {
        level: state.level,
        basis_change: 0.0,
        extremal_excess: f64::NEG_INFINITY,
        maximizer: 0.0,
        direct_solve: 0.0,
        min_log_k: state.field.log_k.iter().copied().fold(f64::INFINITY, f64::min),
    };
    let coeffs: Vec<DVector<Complex64>> =
        (0..sections).map(|_| DVector::from_fn(n, |_, _| gaussian(&mut rng))).collect();
    for &k in &probes {
        let v: Vec<Complex64> = samples.column(k).iter().copied().collect();
        let v2: Vec<Complex64> = changed.column(k).iter().copied().collect();
        let raw = state.kernel.raw_log_density(&v);
        let raw2 = kernel2.raw_log_density(&v2) + kernel2.scale_log - state.kernel.scale_log;
        check.basis_change = check.basis_change.max((raw2 - raw).exp_m1().abs());

        // K in the Gram's own scale: vᴴ G⁻¹ v.
        let vv = DVector::from_column_slice(&v);
        let direct = (vv.adjoint() * lu.solve(&vv).unwrap())[(0, 0)].re;
        let k_raw = raw.exp();
        check.direct_solve = check.direct_solve.max((direct / k_raw - 1.0).abs());

        for cvec in &coeffs {
            let value = (cvec.transpose() * &vv)[(0, 0)].norm_sqr();
            let norm = (cvec.transpose() * g * cvec.map(|z| z.conj()))[(0, 0)].re;
            check.extremal_excess = check.extremal_excess.max(value / (norm * k_raw) - 1.0);
        }

        // σ = Σ conj(a_i) σ_i with a = G_true⁻¹ v.
        let amax = state.kernel.maximizer(&v);
        let s = gram.scale_log.exp();
        let value = (amax.adjoint() * &vv)[(0, 0)].norm_sqr();
        let norm = (amax.adjoint() * g * &amax)[(0, 0)].re * s;
        let k_true = (raw + state.kernel.scale_log).exp();
        check.maximizer = check.maximizer.max((value / norm / k_true - 1.0).abs());
    }
    check
}
