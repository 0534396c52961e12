//! The `bergman-ke` command line.
//!
//! Exit codes: 0 success, 1 invariant or acceptance failure, 2 configuration error.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint::{verify_candidate, CandidateFile, Checkpoint};
use crate::config::{FamilyControl, RunConfig};
use crate::einstein::ResidualReport;
use crate::error::{Error, Result};
use crate::family::{model_metric, positivity_suite, psh_check, superharmonic_control, FamilySweep};
use crate::iteration::{Engine, IterationState, TraceRow};

pub const OUT_ENV: &str = "BERGMAN_KE_OUT";
const DEFAULT_OUT: &str = "out";

#[derive(Debug, Parser)]
#[command(name = "bergman-ke", version, about = "Iterated Bergman kernels on hyperelliptic curves")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory [default: config output.dir, else "out"].
    #[arg(long, global = true, env = OUT_ENV)]
    pub out: Option<PathBuf>,
    /// Print the summary as JSON.
    #[arg(long, global = true)]
    pub json: bool,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Overrides `family.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Iterate from the seed level (or a checkpoint) to the final level.
    Run {
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Continue a run from a checkpoint.
    Resume {
        #[arg(long)]
        resume: PathBuf,
    },
    /// Einstein residual and mass checks of a candidate file.
    Verify {
        candidate: PathBuf,
        /// Exit 1 when the relative sup residual exceeds this.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Positivity checks over a one-parameter family.
    Family,
}

/// Entry point; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.common.threads.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return 2;
        }
    };
    match pool.install(|| dispatch(&cli)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } | Error::Checkpoint(_) | Error::Resolution(_) => 2,
        _ => 1,
    }
}

fn dispatch(cli: &Cli) -> Result<i32> {
    let config = match &cli.common.config {
        Some(path) => RunConfig::load(path)?,
        None if matches!(cli.command, Command::Verify { .. }) => RunConfig::default(),
        None => return Err(Error::config("--config", "a configuration file is required")),
    };
    let out = cli
        .common
        .out
        .clone()
        .or_else(|| config.output.dir.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    match &cli.command {
        Command::Run { resume } => cmd_run(&config, &out, resume.as_deref(), cli.common.json),
        Command::Resume { resume } => cmd_run(&config, &out, Some(resume), cli.common.json),
        Command::Verify { candidate, threshold } => {
            cmd_verify(&config, &out, candidate, threshold.or(config.output.threshold), cli.common.json)
        }
        Command::Family => {
            let mut config = config.clone();
            if let Some(seed) = cli.common.seed {
                config.family.seed = seed;
            }
            cmd_family(&config, &out, cli.common.json)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub name: String,
    pub seconds: f64,
}

/// Provenance of one command invocation. Written last; not listed in itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_sha256: String,
    pub config: String,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub stages: Vec<Stage>,
    pub outputs: Vec<OutputFile>,
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Collects written files and stage timings for the manifest.
struct Outputs {
    root: PathBuf,
    files: Vec<OutputFile>,
    stages: Vec<Stage>,
    started: f64,
    clock: Instant,
}

impl Outputs {
    fn new(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
            stages: Vec::new(),
            started: unix_now(),
            clock: Instant::now(),
        })
    }

    fn write(&mut self, rel: &str, contents: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(&path, contents)?;
        self.files.retain(|f| f.path != rel);
        self.files.push(OutputFile {
            path: rel.to_string(),
            bytes: contents.len() as u64,
            sha256: format!("{:x}", Sha256::digest(contents)),
        });
        Ok(())
    }

    fn stage(&mut self, name: &str) {
        let seconds = self.clock.elapsed().as_secs_f64();
        self.stages.push(Stage { name: name.into(), seconds });
        self.clock = Instant::now();
    }

    fn finish(mut self, command: &str, config: &RunConfig) -> Result<RunManifest> {
        self.files.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_sha256: config.hash(),
            config: config.snapshot(),
            started_unix: self.started,
            finished_unix: unix_now(),
            stages: self.stages,
            outputs: self.files,
        };
        std::fs::write(self.root.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(manifest)
    }
}

pub fn trace_csv(trace: &[TraceRow]) -> String {
    let mut s = String::from(TraceRow::CSV_HEADER);
    s.push('\n');
    for row in trace {
        s.push_str(&row.csv_line());
        s.push('\n');
    }
    s
}

pub const RESIDUAL_CSV_HEADER: &str = "chart,re,im,log_density,residual";

pub fn residual_csv(report: &ResidualReport) -> String {
    let mut s = String::from(RESIDUAL_CSV_HEADER);
    s.push('\n');
    for p in &report.points {
        let _ = writeln!(s, "{},{:e},{:e},{:e},{:e}", p.chart, p.z.re, p.z.im, p.log_density, p.residual);
    }
    s
}

/// Summary of a residual report without the per-point data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualTotals {
    pub points: usize,
    pub sup: f64,
    pub l2: f64,
    pub relative_sup: f64,
    pub relative_l2: f64,
    pub coverage: f64,
    pub excluded: usize,
    pub gauss_bonnet: Option<crate::einstein::GaussBonnet>,
}

impl From<&ResidualReport> for ResidualTotals {
    fn from(r: &ResidualReport) -> Self {
        Self {
            points: r.points.len(),
            sup: r.sup,
            l2: r.l2,
            relative_sup: r.relative_sup,
            relative_l2: r.relative_l2,
            coverage: r.coverage,
            excluded: r.excluded,
            gauss_bonnet: r.gauss_bonnet.clone(),
        }
    }
}

fn totals_table(t: &ResidualTotals) -> String {
    let mut s = String::new();
    let mut row = |k: &str, v: String| {
        let _ = writeln!(s, "{k:<22}{v:>16}");
    };
    row("points", t.points.to_string());
    row("excluded", t.excluded.to_string());
    row("coverage", format!("{:.6}", t.coverage));
    row("sup", format!("{:.6e}", t.sup));
    row("l2", format!("{:.6e}", t.l2));
    row("relative_sup", format!("{:.6e}", t.relative_sup));
    row("relative_l2", format!("{:.6e}", t.relative_l2));
    if let Some(gb) = &t.gauss_bonnet {
        row("candidate_mass", format!("{:.6}", gb.candidate_mass));
        row("mass_target", format!("{:.6}", gb.candidate_target));
        row("volume", format!("{:.6}", gb.volume));
        row("volume_target", format!("{:.6}", gb.volume_target));
        row("deviation", format!("{:.6e}", gb.deviation));
    }
    s
}

#[derive(Debug, Clone, Serialize)]
struct RunSummary<'a> {
    level: u32,
    trace: &'a [TraceRow],
    residual: Option<ResidualTotals>,
}

fn cmd_run(config: &RunConfig, out: &Path, resume: Option<&Path>, json: bool) -> Result<i32> {
    let curve = config.curve()?;
    let iteration = config.iteration()?;
    let mut outputs = Outputs::new(out)?;
    let mut engine = Engine::new(&curve, iteration.clone())?;
    engine.timings = config.output.timings;
    let every = iteration.checkpoint_every;
    let state = match resume {
        Some(path) => Checkpoint::load(path)?.restore(&engine)?,
        None => engine.seed()?,
    };
    outputs.stage("setup");
    let cadence = |state: &IterationState, outputs: &mut Outputs| -> Result<()> {
        if every > 0 && state.level.is_multiple_of(every) {
            let cp = Checkpoint::capture(&engine, state)?;
            outputs.write(&format!("checkpoints/level_{:03}.json", state.level), cp.to_json()?.as_bytes())?;
        }
        Ok(())
    };
    if resume.is_none() {
        cadence(&state, &mut outputs)?;
    }
    let state = engine.run_from(state, |s| cadence(s, &mut outputs))?;
    outputs.stage("iterate");

    outputs.write("trace.csv", trace_csv(&state.trace).as_bytes())?;
    outputs.write("checkpoint.json", Checkpoint::capture(&engine, &state)?.to_json()?.as_bytes())?;
    let candidate = CandidateFile::export(&engine, &state)?;
    outputs.write("candidate.json", candidate.to_json()?.as_bytes())?;
    let residual = engine.residual(&state);
    if let Some(r) = &residual {
        outputs.write("residual.csv", residual_csv(r).as_bytes())?;
    }
    outputs.stage("export");
    outputs.finish("run", config)?;

    let summary = RunSummary { level: state.level, trace: &state.trace, residual: residual.as_ref().map(Into::into) };
    if json {
        println!("{}", serde_json::to_string_pretty(&summary)?);
    } else {
        print!("{}", trace_csv(&state.trace));
        if let Some(t) = &summary.residual {
            print!("{}", totals_table(t));
        }
    }
    Ok(0)
}

fn cmd_verify(config: &RunConfig, out: &Path, candidate: &Path, threshold: Option<f64>, json: bool) -> Result<i32> {
    let file = CandidateFile::load(candidate)?;
    let grid = match config.iteration.residual_grid {
        0 => crate::iteration::IterationConfig::default().residual_grid,
        n => n,
    };
    let mut outputs = Outputs::new(out)?;
    let report = verify_candidate(&file, grid)?;
    outputs.stage("verify");
    let totals = ResidualTotals::from(&report);
    outputs.write("residual.csv", residual_csv(&report).as_bytes())?;
    outputs.write("verify.json", (serde_json::to_string_pretty(&totals)? + "\n").as_bytes())?;
    outputs.finish("verify", config)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&totals)?);
    } else {
        print!("{}", totals_table(&totals));
    }
    Ok(match threshold {
        Some(t) if !(totals.relative_sup <= t) => {
            eprintln!("relative sup residual {:.3e} exceeds the threshold {t:.3e}", totals.relative_sup);
            1
        }
        _ => 0,
    })
}

#[derive(Debug, Clone, Serialize)]
struct FamilySummary {
    control: FamilyControl,
    psh: Vec<crate::family::PshReport>,
    positivity: Vec<crate::family::PositivityReport>,
    /// The built-in failing controls; each must fail.
    superharmonic_control_failed: bool,
    negative_bundle_control_failed: bool,
    passed: bool,
}

fn cmd_family(config: &RunConfig, out: &Path, json: bool) -> Result<i32> {
    let (family, fcfg) = config.family()?;
    let grid = fcfg.grid()?;
    let mut outputs = Outputs::new(out)?;
    let mut psh = Vec::new();
    let mut positivity = Vec::new();
    match config.family.control {
        FamilyControl::None => {
            let iteration = config.iteration()?;
            let sweep = FamilySweep::new(&family, &iteration, &fcfg)?;
            outputs.stage("sweep");
            for &m in &fcfg.levels {
                psh.push(psh_check(&sweep.relative_kernel_field(m, &fcfg)?, fcfg.tolerance));
                positivity.push(positivity_suite(
                    &sweep.direct_image_metric(m)?,
                    fcfg.tolerance,
                    fcfg.sections,
                    fcfg.seed,
                )?);
            }
        }
        FamilyControl::Superharmonic => {
            for &m in &fcfg.levels {
                psh.push(psh_check(&superharmonic_control(grid, 0.5, m), fcfg.tolerance));
            }
        }
        FamilyControl::NegativeBundle => {
            for &m in &fcfg.levels {
                positivity.push(positivity_suite(
                    &model_metric(grid, 3, 1.0, m),
                    fcfg.tolerance,
                    fcfg.sections,
                    fcfg.seed,
                )?);
            }
        }
    }
    let level = fcfg.levels[0];
    let superharmonic_control_failed = !psh_check(&superharmonic_control(grid, 0.5, level), fcfg.tolerance).passed;
    let negative_bundle_control_failed =
        !positivity_suite(&model_metric(grid, 3, 1.0, level), fcfg.tolerance, fcfg.sections, fcfg.seed)?.passed;
    outputs.stage("checks");

    for r in &psh {
        let mut s = String::from("re_t,im_t,min_laplacian,min_line_laplacian\n");
        for row in &r.rows {
            let _ = writeln!(s, "{:e},{:e},{:e},{:e}", row.t.re, row.t.im, row.min_laplacian, row.min_line_laplacian);
        }
        outputs.write(&format!("family_psh_m{}.csv", r.level), s.as_bytes())?;
    }
    for r in &positivity {
        let mut s = String::from("re_t,im_t,section_max,dual_min,det_laplacian\n");
        for row in &r.rows {
            let _ = writeln!(
                s,
                "{:e},{:e},{:e},{:e},{:e}",
                row.t.re, row.t.im, row.section_max, row.dual_min, row.det_laplacian
            );
        }
        outputs.write(&format!("family_positivity_m{}.csv", r.level), s.as_bytes())?;
    }
    let passed = psh.iter().all(|r| r.passed)
        && positivity.iter().all(|r| r.passed)
        && superharmonic_control_failed
        && negative_bundle_control_failed;
    let summary = FamilySummary {
        control: config.family.control,
        psh,
        positivity,
        superharmonic_control_failed,
        negative_bundle_control_failed,
        passed,
    };
    outputs.write("family.json", (serde_json::to_string_pretty(&summary)? + "\n").as_bytes())?;
    outputs.finish("family", config)?;

    if json {
        println!("{}", serde_json::to_string_pretty(&summary)?);
    } else {
        println!("{:<6}{:<12}{:>14}{:>14}{:>14}  status", "m", "test", "min/max", "secondary", "tertiary");
        for r in &summary.psh {
            println!(
                "{:<6}{:<12}{:>14.4e}{:>14.4e}{:>14.4e}  {}",
                r.level,
                "psh",
                r.min_scaled_laplacian,
                r.min_line_laplacian,
                r.min_submean,
                if r.passed { "pass" } else { "FAIL" }
            );
        }
        for r in &summary.positivity {
            println!(
                "{:<6}{:<12}{:>14.4e}{:>14.4e}{:>14.4e}  {}",
                r.level,
                "direct",
                r.section_max,
                r.dual_min,
                r.det_min,
                if r.passed { "pass" } else { "FAIL" }
            );
        }
        println!(
            "negative controls fail as expected: {}",
            superharmonic_control_failed && negative_bundle_control_failed
        );
    }
    Ok(if passed { 0 } else { 1 })
}
