//! Iterated Bergman kernels on hyperelliptic curves.
//!
//! Starting from a smooth metric `h_{m₀}` on `m₀K_X`, each step computes the
//! Bergman kernel `K_{m+1}` of `(m+1)K_X` with respect to `h_m` and sets
//! `h_{m+1} = 1/K_{m+1}`. The normalized densities `(m!)^{-1/m} K_m^{1/m}`
//! approach `(2π)^{-1} dV_E`, the volume form of the Kähler–Einstein metric.

pub mod basis;
pub mod bergman;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod curve;
pub mod einstein;
pub mod error;
pub mod family;
pub mod iteration;
pub mod poly;
pub mod quadrature;

pub use basis::{riemann_roch_count, transition_factor, Monomial, PluricanonicalBasis};
pub use bergman::{BergmanKernel, GramMatrix, MetricField, Provenance};
pub use checkpoint::{CandidateFile, Checkpoint};
pub use config::RunConfig;
pub use curve::{Atlas, AtlasParams, Chart, ChartKind, CurvePoint, HyperellipticCurve, Sheet};
pub use einstein::{ResidualGrid, ResidualReport};
pub use error::{Error, Result};
pub use family::{CurveFamily, DirectImageMetric, FamilyConfig, FamilySweep, PolarGrid, RelativeBergmanField};
pub use iteration::{EinsteinCandidate, Engine, IterationConfig, IterationState, SeedChoice, TraceRow};
pub use quadrature::{NodeSet, Resolution};
