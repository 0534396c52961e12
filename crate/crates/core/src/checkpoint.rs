//! Versioned JSON checkpoints and candidate exports.
//!
//! A checkpoint carries a header with array shapes, a provenance hash of the
//! configuration that produced it and the SHA-256 of its payload. Floats are
//! written in round-trip form, so a restored state continues bit-identically.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::basis::PluricanonicalBasis;
use crate::bergman::{sample_basis, BergmanKernel, GramMatrix, MetricField, Provenance};
use crate::config::Coefficient;
use crate::curve::{Atlas, AtlasParams, HyperellipticCurve, Sheet};
use crate::einstein::{
    constant_residual, einstein_residual, gauss_bonnet, poincare_residual, ResidualGrid, ResidualReport,
};
use crate::error::{Error, Result};
use crate::iteration::{ln_factorial, seed_gram, Engine, IterationState, SeedChoice, TraceRow};
use crate::quadrature::{build_nodes, Resolution};

pub const CHECKPOINT_FORMAT: &str = "bergman-ke-checkpoint";
pub const CANDIDATE_FORMAT: &str = "bergman-ke-candidate";
pub const FORMAT_VERSION: u32 = 1;

/// Finite floats as numbers, the rest as `"NaN"`, `"inf"` or `"-inf"`.
pub mod tagged_f64 {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Tag(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("NaN")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Tag(t) => match t.as_str() {
                "NaN" => Ok(f64::NAN),
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(serde::de::Error::custom(format!("unexpected float tag {other:?}"))),
            },
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Hash of everything that determines the iterated fields, excluding the final
/// level, cadence and residual grid, so a checkpoint can seed a longer run.
pub fn provenance_hash(engine: &Engine) -> String {
    let c = &engine.config;
    let key = serde_json::json!({
        "curve": engine.atlas.curve().fingerprint(),
        "nodes": engine.nodes.fingerprint(),
        "m0": c.m0,
        "twist": c.twist,
        "seed": c.seed,
        "resolution": c.resolution,
        "atlas": c.atlas,
    });
    sha256_hex(key.to_string().as_bytes())
}

/// A complex matrix with a log scale, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRecord {
    pub shape: [usize; 2],
    pub scale_log: f64,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl MatrixRecord {
    pub fn from_gram(g: &GramMatrix) -> Self {
        let (r, c) = g.entries.shape();
        let mut re = Vec::with_capacity(r * c);
        let mut im = Vec::with_capacity(r * c);
        for i in 0..r {
            for j in 0..c {
                re.push(g.entries[(i, j)].re);
                im.push(g.entries[(i, j)].im);
            }
        }
        Self { shape: [r, c], scale_log: g.scale_log, re, im }
    }

    pub fn to_gram(&self, level: u32, twist: u32) -> Result<GramMatrix> {
        let [r, c] = self.shape;
        if r != c || self.re.len() != r * c || self.im.len() != r * c {
            return Err(Error::Checkpoint(format!("matrix shape {r}x{c} does not match its data")));
        }
        let entries = DMatrix::from_fn(r, c, |i, j| Complex64::new(self.re[i * c + j], self.im[i * c + j]));
        Ok(GramMatrix { level, twist, entries, scale_log: self.scale_log })
    }
}

/// Per-node rows `(chart id, re z, im z, value)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeTable {
    pub shape: [usize; 2],
    pub rows: Vec<[f64; 4]>,
}

impl NodeTable {
    fn new(engine_nodes: &crate::quadrature::NodeSet, values: &[f64]) -> Self {
        let rows: Vec<[f64; 4]> =
            engine_nodes.nodes().iter().zip(values).map(|(n, &v)| [n.chart as f64, n.z.re, n.z.im, v]).collect();
        Self { shape: [rows.len(), 4], rows }
    }

    fn check_nodes(&self, nodes: &crate::quadrature::NodeSet) -> Result<()> {
        if self.shape != [nodes.len(), 4] || self.rows.len() != nodes.len() {
            return Err(Error::Checkpoint(format!(
                "stored field has {} rows, the node set has {}",
                self.rows.len(),
                nodes.len()
            )));
        }
        for (k, (row, n)) in self.rows.iter().zip(nodes.nodes()).enumerate() {
            if row[0] != n.chart as f64 || row[1].to_bits() != n.z.re.to_bits() || row[2].to_bits() != n.z.im.to_bits()
            {
                return Err(Error::Checkpoint(format!("node {k} differs from the stored coordinates")));
            }
        }
        Ok(())
    }

    fn values(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r[3]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldRecord {
    pub level: u32,
    pub twist: u32,
    pub scale_log: f64,
    pub provenance: Provenance,
    pub log_k: NodeTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Payload {
    pub metric: FieldRecord,
    /// Gram matrix whose kernel is `K_level`.
    pub gram: MatrixRecord,
    pub trace: Vec<TraceRow>,
    pub envelope_min: Vec<f64>,
    pub envelope_max: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub level: u32,
    pub provenance_hash: String,
    pub payload_sha256: String,
    pub shapes: BTreeMap<String, [usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub header: Header,
    pub payload: Payload,
}

fn state_gram(engine: &Engine, state: &IterationState) -> Result<GramMatrix> {
    match &state.gram {
        Some(g) => Ok(g.clone()),
        None => {
            let basis = PluricanonicalBasis::new(engine.atlas.curve().genus(), state.level, engine.config.twist)?;
            Ok(seed_gram(&basis, engine.config.seed))
        }
    }
}

impl Checkpoint {
    pub fn capture(engine: &Engine, state: &IterationState) -> Result<Self> {
        let gram = MatrixRecord::from_gram(&state_gram(engine, state)?);
        let payload = Payload {
            metric: FieldRecord {
                level: state.field.level,
                twist: state.field.twist,
                scale_log: state.field.scale_log,
                provenance: state.field.provenance.clone(),
                log_k: NodeTable::new(&engine.nodes, &state.field.log_k),
            },
            gram,
            trace: state.trace.clone(),
            envelope_min: state.envelope_min.clone(),
            envelope_max: state.envelope_max.clone(),
        };
        let mut shapes = BTreeMap::new();
        shapes.insert("metric".to_string(), payload.metric.log_k.shape);
        shapes.insert("gram".to_string(), payload.gram.shape);
        shapes.insert("trace".to_string(), [payload.trace.len(), 11]);
        shapes.insert("envelope".to_string(), [payload.envelope_min.len(), 2]);
        let header = Header {
            level: state.level,
            provenance_hash: provenance_hash(engine),
            payload_sha256: sha256_hex(serde_json::to_string(&payload)?.as_bytes()),
            shapes,
        };
        Ok(Self { format: CHECKPOINT_FORMAT.into(), version: FORMAT_VERSION, header, payload })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cp: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if cp.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unexpected format {:?}", cp.format)));
        }
        if cp.version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", cp.version)));
        }
        let digest = sha256_hex(serde_json::to_string(&cp.payload)?.as_bytes());
        if digest != cp.header.payload_sha256 {
            return Err(Error::Checkpoint("payload hash does not match the header".into()));
        }
        Ok(cp)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// The iteration state, after checking that `engine` matches the run that wrote it.
    pub fn restore(&self, engine: &Engine) -> Result<IterationState> {
        if self.header.provenance_hash != provenance_hash(engine) {
            return Err(Error::Checkpoint("checkpoint was written by a different curve or configuration".into()));
        }
        let p = &self.payload;
        p.metric.log_k.check_nodes(&engine.nodes)?;
        if p.envelope_min.len() != engine.nodes.len() || p.envelope_max.len() != engine.nodes.len() {
            return Err(Error::Checkpoint("envelope arrays do not match the node set".into()));
        }
        let level = self.header.level;
        if p.metric.level != level {
            return Err(Error::Checkpoint("header level differs from the stored field".into()));
        }
        let field = MetricField {
            level,
            twist: p.metric.twist,
            log_k: p.metric.log_k.values(),
            scale_log: p.metric.scale_log,
            provenance: p.metric.provenance.clone(),
        };
        let basis = PluricanonicalBasis::new(engine.atlas.curve().genus(), level, engine.config.twist)?;
        let (gram, kernel) = if level == engine.config.m0 {
            let (_, kernel) = engine.seed_metric()?;
            (None, kernel)
        } else {
            let gram = p.gram.to_gram(level, engine.config.twist)?;
            let kernel = BergmanKernel::new(basis, &gram)?;
            (Some(gram), kernel)
        };
        Ok(IterationState {
            level,
            field,
            gram,
            kernel,
            trace: p.trace.clone(),
            envelope_min: p.envelope_min.clone(),
            envelope_max: p.envelope_max.clone(),
        })
    }
}

/// Everything needed to re-evaluate `log D` off the nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveCandidate {
    pub f: Vec<Coefficient>,
    pub curve: String,
    pub atlas: AtlasParams,
    pub resolution: Resolution,
    pub level: u32,
    pub twist: u32,
    pub seed: SeedChoice,
    pub gram: MatrixRecord,
    /// `log D` per node.
    pub log_density: NodeTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CandidateBody {
    Curve(Box<CurveCandidate>),
    /// `λ = 2(1 − |z|²)⁻²` on `|z| ≤ radius`.
    Poincare {
        radius: f64,
        grid: usize,
    },
    /// `λ = value` on `|z| ≤ radius`.
    Constant {
        value: f64,
        radius: f64,
        grid: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateFile {
    pub format: String,
    pub version: u32,
    #[serde(flatten)]
    pub body: CandidateBody,
}

impl CandidateFile {
    pub fn export(engine: &Engine, state: &IterationState) -> Result<Self> {
        let curve = engine.atlas.curve();
        let log_d = crate::iteration::normalized_log_density(&state.field);
        let body = CurveCandidate {
            f: curve.f_coeffs().iter().map(|&z| Coefficient::from_complex(z)).collect(),
            curve: curve.fingerprint(),
            atlas: engine.config.atlas,
            resolution: engine.config.resolution,
            level: state.level,
            twist: engine.config.twist,
            seed: engine.config.seed,
            gram: MatrixRecord::from_gram(&state_gram(engine, state)?),
            log_density: NodeTable::new(&engine.nodes, &log_d),
        };
        Ok(Self {
            format: CANDIDATE_FORMAT.into(),
            version: FORMAT_VERSION,
            body: CandidateBody::Curve(Box::new(body)),
        })
    }

    pub fn fixture(body: CandidateBody) -> Self {
        Self { format: CANDIDATE_FORMAT.into(), version: FORMAT_VERSION, body }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: CandidateFile = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if c.format != CANDIDATE_FORMAT || c.version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported candidate {:?} version {}", c.format, c.version)));
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Einstein residual of a candidate; for curve candidates also the Gauss–Bonnet check.
pub fn verify_candidate(file: &CandidateFile, residual_grid: usize) -> Result<ResidualReport> {
    match &file.body {
        CandidateBody::Poincare { radius, grid } => Ok(poincare_residual(*radius, *grid)),
        CandidateBody::Constant { value, radius, grid } => Ok(constant_residual(*value, *radius, *grid)),
        CandidateBody::Curve(c) => {
            let coeffs: Vec<Complex64> = c.f.iter().map(|v| v.value()).collect();
            let curve = HyperellipticCurve::with_separation_tol(&coeffs, 0.0)?;
            if curve.fingerprint() != c.curve {
                return Err(Error::Checkpoint("curve coefficients do not match the stored fingerprint".into()));
            }
            let atlas = Atlas::new(&curve, c.atlas)?;
            let nodes = build_nodes(&atlas, c.resolution)?;
            c.log_density.check_nodes(&nodes)?;
            let basis = PluricanonicalBasis::new(curve.genus(), c.level, c.twist)?;
            let samples = sample_basis(&basis, &atlas, &nodes);
            let kernel = BergmanKernel::new(basis, &c.gram.to_gram(c.level, c.twist)?)?;
            let m = c.level as f64;
            let shift = ln_factorial(c.level) / m;
            let log_d: Vec<f64> =
                kernel.raw_log_densities(&samples).iter().map(|v| (v + kernel.scale_log) / m - shift).collect();
            let grid = ResidualGrid::bulk(&atlas, residual_grid);
            let chart = atlas.bulk_chart(Sheet::Plus);
            let mut report = einstein_residual(&atlas, &grid, |x| {
                kernel.log_density_at(&atlas, chart, x).map(|v| v / m - shift).unwrap_or(f64::NAN)
            });
            report.gauss_bonnet = Some(gauss_bonnet(&atlas, &nodes, &log_d)?);
            Ok(report)
        }
    }
}
