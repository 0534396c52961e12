//! TOML run configuration.
//!
//! ```toml
//! [curve]
//! f = [-1, 0, 0, 0, 0, 0, 1]        # ascending powers of x; entries may be [re, im]
//!
//! [iteration]
//! m0 = 3
//! final_level = 24
//!
//! [quadrature]
//! disk_radial = 24
//!
//! [family]
//! f = [[-1], [0, 1], [], [], [], [], [1]]   # f[k][j] multiplies x^k t^j
//!
//! [output]
//! dir = "out"
//! ```
//!
//! Every section is optional except that `run`, `resume` and `verify` need
//! `curve.f` and `family` needs `family.f`.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::curve::{AtlasParams, HyperellipticCurve};
use crate::error::{Error, Result};
use crate::family::{CurveFamily, FamilyConfig};
use crate::iteration::{IterationConfig, SeedChoice};
use crate::quadrature::Resolution;

/// A real number or an `[re, im]` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coefficient {
    Real(f64),
    Complex([f64; 2]),
}

impl Coefficient {
    pub fn value(self) -> Complex64 {
        match self {
            Coefficient::Real(re) => Complex64::new(re, 0.0),
            Coefficient::Complex([re, im]) => Complex64::new(re, im),
        }
    }

    pub fn from_complex(z: Complex64) -> Self {
        if z.im == 0.0 {
            Coefficient::Real(z.re)
        } else {
            Coefficient::Complex([z.re, z.im])
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSection {
    pub f: Option<Vec<Coefficient>>,
    pub separation_tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IterationSection {
    pub m0: u32,
    pub final_level: u32,
    pub twist: u32,
    pub seed: SeedChoice,
    pub tolerance: f64,
    pub residual_grid: usize,
    pub checkpoint_every: u32,
}

impl Default for IterationSection {
    fn default() -> Self {
        let d = IterationConfig::default();
        Self {
            m0: d.m0,
            final_level: d.final_level,
            twist: d.twist,
            seed: d.seed,
            tolerance: d.tolerance,
            residual_grid: d.residual_grid,
            checkpoint_every: d.checkpoint_every,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureSection {
    pub disk_radial: usize,
    pub disk_angular: usize,
    pub bulk_radial: usize,
    pub bulk_angular: usize,
    pub branch_radius_fraction: f64,
    pub outer_radius_factor: f64,
}

impl Default for QuadratureSection {
    fn default() -> Self {
        let r = Resolution::default();
        let a = AtlasParams::default();
        Self {
            disk_radial: r.disk_radial,
            disk_angular: r.disk_angular,
            bulk_radial: r.bulk_radial,
            bulk_angular: r.bulk_angular,
            branch_radius_fraction: a.branch_radius_fraction,
            outer_radius_factor: a.outer_radius_factor,
        }
    }
}

/// What `family` tests: the swept family, or one of the built-in failing controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyControl {
    #[default]
    None,
    /// `log(1 − c|t|²)` in place of `log K`.
    Superharmonic,
    /// `H(t) = exp(|t|²) I` in place of the direct-image metric.
    NegativeBundle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FamilySection {
    pub f: Option<Vec<Vec<Coefficient>>>,
    pub separation_tol: f64,
    pub levels: Vec<u32>,
    pub radius: f64,
    pub n_radii: usize,
    pub n_angles: usize,
    pub candidate_level: u32,
    pub tolerance: f64,
    pub sample_points: usize,
    pub lines: usize,
    pub sections: usize,
    pub seed: u64,
    pub control: FamilyControl,
}

impl Default for FamilySection {
    fn default() -> Self {
        let d = FamilyConfig::default();
        Self {
            f: None,
            separation_tol: 1e-3,
            levels: d.levels,
            radius: d.radius,
            n_radii: d.n_radii,
            n_angles: d.n_angles,
            candidate_level: d.candidate_level,
            tolerance: d.tolerance,
            sample_points: d.sample_points,
            lines: d.lines,
            sections: d.sections,
            seed: d.seed,
            control: FamilyControl::None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<String>,
    /// Record wall time per level in the trace; off keeps artifacts reproducible.
    pub timings: bool,
    /// Fail `verify` when the relative sup residual exceeds this.
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub curve: CurveSection,
    pub iteration: IterationSection,
    pub quadrature: QuadratureSection,
    pub family: FamilySection,
    pub output: OutputSection,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let key = e.message().split('`').nth(1).unwrap_or("config").to_string();
            Error::config(key, e.message().trim().to_string())
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("--config", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// The canonical TOML form, used for hashing and embedding in manifests.
    pub fn snapshot(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn hash(&self) -> String {
        format!("{:x}", Sha256::digest(self.snapshot().as_bytes()))
    }

    pub fn curve(&self) -> Result<HyperellipticCurve> {
        let f = self.curve.f.as_ref().ok_or_else(|| Error::config("curve.f", "missing required key"))?;
        let coeffs: Vec<Complex64> = f.iter().map(|c| c.value()).collect();
        let curve = match self.curve.separation_tol {
            Some(tol) => HyperellipticCurve::with_separation_tol(&coeffs, tol),
            None => HyperellipticCurve::new(&coeffs),
        };
        curve.map_err(|e| Error::config("curve.f", e.to_string()))
    }

    pub fn iteration(&self) -> Result<IterationConfig> {
        let s = &self.iteration;
        let q = &self.quadrature;
        let config = IterationConfig {
            m0: s.m0,
            final_level: s.final_level,
            twist: s.twist,
            resolution: Resolution {
                disk_radial: q.disk_radial,
                disk_angular: q.disk_angular,
                bulk_radial: q.bulk_radial,
                bulk_angular: q.bulk_angular,
            },
            atlas: AtlasParams {
                branch_radius_fraction: q.branch_radius_fraction,
                outer_radius_factor: q.outer_radius_factor,
            },
            seed: s.seed,
            tolerance: s.tolerance,
            residual_grid: s.residual_grid,
            checkpoint_every: s.checkpoint_every,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn family(&self) -> Result<(CurveFamily, FamilyConfig)> {
        let s = &self.family;
        let f = s.f.as_ref().ok_or_else(|| Error::config("family.f", "missing required key"))?;
        let family = CurveFamily {
            coeffs: f.iter().map(|row| row.iter().map(|c| c.value()).collect()).collect(),
            separation_guard: s.separation_tol,
        };
        if !(s.tolerance > 0.0) {
            return Err(Error::config("family.tolerance", "must be positive"));
        }
        if s.levels.is_empty() || s.levels.contains(&0) {
            return Err(Error::config("family.levels", "must be a non-empty list of positive levels"));
        }
        let config = FamilyConfig {
            levels: s.levels.clone(),
            radius: s.radius,
            n_radii: s.n_radii,
            n_angles: s.n_angles,
            candidate_level: s.candidate_level,
            tolerance: s.tolerance,
            sample_points: s.sample_points,
            lines: s.lines,
            sections: s.sections,
            seed: s.seed,
        };
        config.grid().map_err(|e| match e {
            Error::Config { message, .. } => Error::config("family.n_angles", message),
            other => other,
        })?;
        Ok((family, config))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_curve_names_the_key() {
        let cfg = RunConfig::parse("[iteration]\nfinal_level = 6\n").unwrap();
        match cfg.curve() {
            Err(Error::Config { key, .. }) => assert_eq!(key, "curve.f"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected_by_name() {
        match RunConfig::parse("[iteration]\nfinal_levle = 6\n") {
            Err(Error::Config { key, .. }) => assert_eq!(key, "final_levle"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn snapshot_round_trips() {
        let cfg =
            RunConfig::parse("[curve]\nf = [-1, 0, 0, [0, 0.5], 0, 0, 1]\n[family]\nf = [[-1], [0, 1]]\n").unwrap();
        let again = RunConfig::parse(&cfg.snapshot()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.hash(), again.hash());
        assert_eq!(cfg.curve().unwrap().genus(), 2);
    }
}
