//! Config-driven command-line harness. Subcommands cover the gate-matrix
//! sweeps, the nullifier/entanglement table, repeated-teleportation runs,
//! gate compilation, and the waveform round trip; `replay` regenerates any
//! output from its embedded provenance and compares bytes.
//!
//! Sub-run seeding is deterministic: the `k`-th internal run of a command
//! uses `derive_seed(seed, k)`, with `k` assigned in the documented order
//! of each command (sweep point by sweep point, estimator entries row-major
//! before nullifier runs).

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::Matrix2;
use rand::Rng;
use serde::Serialize;

use crate::chain::{
    db_from_variance, run_analytic, run_sampled_with, AnalyticChain, ChainConfig,
    MeasurementSchedule, RunRecords, SampleEngine,
};
use crate::config::{ExperimentConfig, GateName, OutputFormat, RunMode};
use crate::error::{Error, Result};
use crate::estimation::{
    estimate_s, estimate_s_analytic, inseparability_threshold, nullifier_variance_analytic,
    theory_matrix, verify, BootstrapCfg, NullifierSpec, SEstimate, SFrame, SweepRuns,
};
use crate::gates::{angles_for, compile, rotation, shear, squeeze, SingleModeTarget};
use crate::report::{self, cell, Meta};
use crate::rng::{derive_seed, shot_rng};
use crate::trace::{integrate_all, synthesize_frame, Channel, FRAME_BINS};

#[derive(Parser)]
#[command(
    name = "cvmbqc",
    version,
    about = "Gaussian simulator for time-multiplexed measurement-based CV quantum computation"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default, Clone)]
struct CommonArgs {
    /// TOML experiment config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the per-run shot count.
    #[arg(long)]
    shots: Option<u64>,
    /// Exact moments instead of sampling.
    #[arg(long, conflicts_with = "sampled")]
    analytic: bool,
    /// Per-shot sampling (the default mode).
    #[arg(long)]
    sampled: bool,
    /// Shot-level worker threads.
    #[arg(long)]
    threads: Option<usize>,
    /// Output file path (default: <output.dir>/<command>.<format>).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate realized gate matrices across a parameter sweep.
    GateSweep {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Nullifier variances and entanglement verification per operation.
    NullifierTable {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Repeated teleportation: matrix stability and noise growth over n.
    Multistep {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Compile a target operation (e.g. "R(30)", "S(20)*R(45)", or
    /// "[[1,0],[0.5,1]]") into measurement angle steps.
    Compile {
        /// Target specification; angles in degrees.
        target: String,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Synthesize detector traces from sampled quadratures and integrate
    /// them back.
    TraceDemo {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Re-run the command recorded in an output file and compare bytes.
    Replay {
        file: PathBuf,
        /// Write the regenerated output here instead of only comparing.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parse the process arguments, execute, and map errors to exit codes:
/// 0 success, 2 configuration problems, 3 numerical failures.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Parse { .. } => 2,
                _ => 3,
            }
        }
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::GateSweep { common } => run_report(CommandKind::GateSweep, common),
        Command::NullifierTable { common } => run_report(CommandKind::NullifierTable, common),
        Command::Multistep { common } => run_report(CommandKind::Multistep, common),
        Command::Compile { target, common } => run_report(CommandKind::Compile { target }, common),
        Command::TraceDemo { common } => run_report(CommandKind::TraceDemo, common),
        Command::Replay { file, out } => run_replay(&file, out.as_deref()),
    }
}

fn load_config(common: &CommonArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(shots) = common.shots {
        cfg.shots = shots;
    }
    if common.analytic {
        cfg.mode = RunMode::Analytic;
    }
    if common.sampled {
        cfg.mode = RunMode::Sampled;
    }
    if let Some(threads) = common.threads {
        cfg.threads = threads;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run_report(kind: CommandKind, common: CommonArgs) -> Result<()> {
    let cfg = load_config(&common)?;
    let ext = match cfg.output.format {
        OutputFormat::Csv => "csv",
        OutputFormat::Json => "json",
    };
    let out_path = common
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.output.dir).join(format!("{}.{ext}", kind.stem())));
    if let Some(parent) = out_path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let side_dir = out_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let text = render_output(&kind, &cfg, &side_dir)?;
    std::fs::write(&out_path, &text)?;
    println!("wrote {}", out_path.display());
    Ok(())
}

fn run_replay(file: &Path, out: Option<&Path>) -> Result<()> {
    let original = std::fs::read_to_string(file)?;
    let meta = report::parse_meta(&original)?;
    let kind = CommandKind::from_name(&meta.command)?;
    let scratch = std::env::temp_dir().join(format!(
        "cvmbqc-replay-{}-{}",
        std::process::id(),
        meta.config_sha256.get(..8).unwrap_or("x")
    ));
    std::fs::create_dir_all(&scratch)?;
    let regenerated = render_output(&kind, &meta.config, &scratch);
    let _ = std::fs::remove_dir_all(&scratch);
    let regenerated = regenerated?;
    if let Some(path) = out {
        std::fs::write(path, &regenerated)?;
    }
    if regenerated == original {
        println!("replay ok: {} reproduced byte-identically", file.display());
        Ok(())
    } else {
        Err(Error::Config(format!(
            "replay mismatch: regenerated output differs from {}",
            file.display()
        )))
    }
}

/// A dispatchable command with its parameters; the printable name is what
/// `replay` stores and parses back.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CommandKind {
    GateSweep,
    NullifierTable,
    Multistep,
    Compile { target: String },
    TraceDemo,
}

impl CommandKind {
    fn stem(&self) -> &'static str {
        match self {
            CommandKind::GateSweep => "gate-sweep",
            CommandKind::NullifierTable => "nullifier-table",
            CommandKind::Multistep => "multistep",
            CommandKind::Compile { .. } => "compile",
            CommandKind::TraceDemo => "trace-demo",
        }
    }

    fn name(&self) -> String {
        match self {
            CommandKind::Compile { target } => format!("compile {target}"),
            other => other.stem().to_string(),
        }
    }

    fn from_name(name: &str) -> Result<Self> {
        if let Some(target) = name.strip_prefix("compile ") {
            return Ok(CommandKind::Compile {
                target: target.to_string(),
            });
        }
        match name {
            "gate-sweep" => Ok(CommandKind::GateSweep),
            "nullifier-table" => Ok(CommandKind::NullifierTable),
            "multistep" => Ok(CommandKind::Multistep),
            "trace-demo" => Ok(CommandKind::TraceDemo),
            other => Err(Error::Config(format!("unknown recorded command: {other}"))),
        }
    }
}

/// Render the full output text of a command for a resolved config.
/// Deterministic; side files (trace binaries) go under `side_dir`.
pub fn render_output(
    kind: &CommandKind,
    cfg: &ExperimentConfig,
    side_dir: &Path,
) -> Result<String> {
    let meta = Meta::new(&kind.name(), cfg);
    match kind {
        CommandKind::GateSweep => {
            let rows = gate_sweep_rows(cfg)?;
            render(cfg, &meta, &SWEEP_COLUMNS, &rows, sweep_cells)
        }
        CommandKind::NullifierTable => {
            let rows = nullifier_table_rows(cfg)?;
            render(cfg, &meta, &TABLE_COLUMNS, &rows, table_cells)
        }
        CommandKind::Multistep => {
            let rows = multistep_rows(cfg)?;
            render(cfg, &meta, &MULTISTEP_COLUMNS, &rows, multistep_cells)
        }
        CommandKind::Compile { target } => {
            let rows = compile_rows(target)?;
            render(cfg, &meta, &COMPILE_COLUMNS, &rows, compile_cells)
        }
        CommandKind::TraceDemo => {
            let rows = trace_demo_rows(cfg, side_dir)?;
            render(cfg, &meta, &TRACE_COLUMNS, &rows, trace_cells)
        }
    }
}

fn render<T: Serialize>(
    cfg: &ExperimentConfig,
    meta: &Meta,
    columns: &[&str],
    rows: &[T],
    cells: fn(&T) -> Vec<String>,
) -> Result<String> {
    match cfg.output.format {
        OutputFormat::Json => report::render_json(meta, rows),
        OutputFormat::Csv => {
            let rendered: Vec<Vec<String>> = rows.iter().map(cells).collect();
            Ok(report::render_csv(meta, columns, &rendered))
        }
    }
}

fn bootstrap_cfg(cfg: &ExperimentConfig) -> BootstrapCfg {
    BootstrapCfg {
        n_resamples: cfg.bootstrap_resamples,
        seed: derive_seed(cfg.seed, 0xB001),
    }
}

/// The four estimator runs of one sweep point, row-major over
/// (output basis, reference basis) in {x, p}.
fn sampled_estimate(
    cfg: &ExperimentConfig,
    chain_cfg: &ChainConfig,
    schedule: &MeasurementSchedule,
    analytic: &AnalyticChain,
    frame: SFrame,
    seed_base: u64,
) -> Result<SEstimate> {
    let theta = [0.0, std::f64::consts::FRAC_PI_2];
    let mut runs: Vec<RunRecords> = Vec::with_capacity(4);
    for i in 0..2 {
        for j in 0..2 {
            let sched = schedule.with_readout(theta[j], theta[i]);
            runs.push(run_sampled_with(
                chain_cfg,
                &sched,
                cfg.shots,
                derive_seed(cfg.seed, seed_base + (i * 2 + j) as u64),
                cfg.feedforward,
                SampleEngine::Auto,
                cfg.threads,
            )?);
        }
    }
    estimate_s(
        &SweepRuns {
            run_11: &runs[0],
            run_12: &runs[1],
            run_21: &runs[2],
            run_22: &runs[3],
        },
        analytic.input_ref_denominators(),
        frame,
        &bootstrap_cfg(cfg),
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub gate: String,
    pub phi_deg: f64,
    pub s11: f64,
    pub s11_err: f64,
    pub s11_theory: f64,
    pub s12: f64,
    pub s12_err: f64,
    pub s12_theory: f64,
    pub s21: f64,
    pub s21_err: f64,
    pub s21_theory: f64,
    pub s22: f64,
    pub s22_err: f64,
    pub s22_theory: f64,
}

const SWEEP_COLUMNS: [&str; 14] = [
    "gate",
    "phi_deg",
    "s11",
    "s11_err",
    "s11_theory",
    "s12",
    "s12_err",
    "s12_theory",
    "s21",
    "s21_err",
    "s21_theory",
    "s22",
    "s22_err",
    "s22_theory",
];

fn sweep_cells(r: &SweepRow) -> Vec<String> {
    vec![
        r.gate.clone(),
        cell(r.phi_deg),
        cell(r.s11),
        cell(r.s11_err),
        cell(r.s11_theory),
        cell(r.s12),
        cell(r.s12_err),
        cell(r.s12_theory),
        cell(r.s21),
        cell(r.s21_err),
        cell(r.s21_theory),
        cell(r.s22),
        cell(r.s22_err),
        cell(r.s22_theory),
    ]
}

/// Matrix estimates across the configured sweep, expressed against the
/// mirrored reference (the frame the relation tables use).
pub fn gate_sweep_rows(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config("gate-sweep needs a [sweep] section".into()))?;
    let gate = sweep.gate.gate();
    let chain_cfg = cfg.chain.chain_config(1);
    let mut rows = Vec::with_capacity(sweep.phi_deg.len());
    for (pi, &phi_deg) in sweep.phi_deg.iter().enumerate() {
        let phi = phi_deg.to_radians();
        let pair = angles_for(gate, phi)
            .map_err(|e| Error::Config(format!("sweep phi {phi_deg} deg: {e}")))?;
        let schedule = MeasurementSchedule::with_gates(&[pair], 0.0, 0.0);
        let analytic = run_analytic(&chain_cfg, &schedule, cfg.feedforward)?;
        let theory = theory_matrix(gate, phi, SFrame::VsReference)
            .map_err(|e| Error::Config(format!("sweep phi {phi_deg} deg: {e}")))?;
        let (s, err) = match cfg.mode {
            RunMode::Analytic => (
                estimate_s_analytic(&analytic, SFrame::VsReference)?,
                Matrix2::zeros(),
            ),
            RunMode::Sampled => {
                let est = sampled_estimate(
                    cfg,
                    &chain_cfg,
                    &schedule,
                    &analytic,
                    SFrame::VsReference,
                    (pi * 4) as u64,
                )?;
                (est.s_hat, est.stderr)
            }
        };
        rows.push(SweepRow {
            gate: sweep.gate.label().into(),
            phi_deg,
            s11: s[(0, 0)],
            s11_err: err[(0, 0)],
            s11_theory: theory[(0, 0)],
            s12: s[(0, 1)],
            s12_err: err[(0, 1)],
            s12_theory: theory[(0, 1)],
            s21: s[(1, 0)],
            s21_err: err[(1, 0)],
            s21_theory: theory[(1, 0)],
            s22: s[(1, 1)],
            s22_err: err[(1, 1)],
            s22_theory: theory[(1, 1)],
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct TableRow {
    pub operation: String,
    pub phi_deg: f64,
    pub var1: f64,
    pub var1_err: f64,
    pub var2: f64,
    pub var2_err: f64,
    pub sum: f64,
    pub sum_err: f64,
    pub threshold: f64,
    pub pass: bool,
    pub near_threshold: bool,
}

const TABLE_COLUMNS: [&str; 11] = [
    "operation",
    "phi_deg",
    "var1",
    "var1_err",
    "var2",
    "var2_err",
    "sum",
    "sum_err",
    "threshold",
    "pass",
    "near_threshold",
];

fn table_cells(r: &TableRow) -> Vec<String> {
    vec![
        r.operation.clone(),
        cell(r.phi_deg),
        cell(r.var1),
        cell(r.var1_err),
        cell(r.var2),
        cell(r.var2_err),
        cell(r.sum),
        cell(r.sum_err),
        cell(r.threshold),
        r.pass.to_string(),
        r.near_threshold.to_string(),
    ]
}

/// Nullifier variances and entanglement verification per configured
/// operation row. Each sampled row takes two runs, one per nullifier
/// (different readout bases).
pub fn nullifier_table_rows(cfg: &ExperimentConfig) -> Result<Vec<TableRow>> {
    let table = cfg.table.clone().unwrap_or_default();
    let chain_cfg = cfg.chain.chain_config(1);
    let boot = bootstrap_cfg(cfg);
    let mut rows = Vec::new();
    let mut run_index = 0u64;
    let groups: [(GateName, &Vec<f64>); 3] = [
        (GateName::Rotation, &table.rotation_phi_deg),
        (GateName::SqueezeRot, &table.squeeze_phi_deg),
        (GateName::Shear, &table.shear_phi_deg),
    ];
    for (gate_name, phis) in groups {
        for &phi_deg in phis {
            let phi = phi_deg.to_radians();
            let gate = gate_name.gate();
            let pair = angles_for(gate, phi)
                .map_err(|e| Error::Config(format!("{} {phi_deg} deg: {e}", gate_name.label())))?;
            let spec = NullifierSpec::for_gate(gate, phi);
            let threshold = inseparability_threshold(&spec);
            let schedule = MeasurementSchedule::with_gates(&[pair], 0.0, 0.0);
            let row = match cfg.mode {
                RunMode::Analytic => {
                    let chain = run_analytic(&chain_cfg, &schedule, cfg.feedforward)?;
                    let (v1, v2) = nullifier_variance_analytic(&chain, &spec);
                    TableRow {
                        operation: gate_name.label().into(),
                        phi_deg,
                        var1: v1,
                        var1_err: 0.0,
                        var2: v2,
                        var2_err: 0.0,
                        sum: v1 + v2,
                        sum_err: 0.0,
                        threshold,
                        pass: v1 + v2 < threshold,
                        near_threshold: false,
                    }
                }
                RunMode::Sampled => {
                    let sched1 = schedule
                        .with_readout(spec.delta1.reference.theta, spec.delta1.output.theta);
                    let sched2 = schedule
                        .with_readout(spec.delta2.reference.theta, spec.delta2.output.theta);
                    let run1 = run_sampled_with(
                        &chain_cfg,
                        &sched1,
                        cfg.shots,
                        derive_seed(cfg.seed, 0x7AB0 + run_index),
                        cfg.feedforward,
                        SampleEngine::Auto,
                        cfg.threads,
                    )?;
                    let run2 = run_sampled_with(
                        &chain_cfg,
                        &sched2,
                        cfg.shots,
                        derive_seed(cfg.seed, 0x7AB0 + run_index + 1),
                        cfg.feedforward,
                        SampleEngine::Auto,
                        cfg.threads,
                    )?;
                    run_index += 2;
                    let report = verify(&run1, &run2, &spec, &boot)?;
                    TableRow {
                        operation: gate_name.label().into(),
                        phi_deg,
                        var1: report.variances.var1,
                        var1_err: report.variances.err1,
                        var2: report.variances.var2,
                        var2_err: report.variances.err2,
                        sum: report.variances.sum,
                        sum_err: report.variances.err_sum,
                        threshold: report.threshold,
                        pass: report.pass,
                        near_threshold: report.near_threshold,
                    }
                }
            };
            rows.push(row);
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct MultistepRow {
    pub n: usize,
    pub s11: f64,
    pub s11_err: f64,
    pub s12: f64,
    pub s12_err: f64,
    pub s21: f64,
    pub s21_err: f64,
    pub s22: f64,
    pub s22_err: f64,
    pub var_x: f64,
    pub var_x_err: f64,
    pub var_x_db: f64,
    pub var_p: f64,
    pub var_p_err: f64,
    pub var_p_db: f64,
    pub theory_var_x: f64,
    pub theory_var_p: f64,
}

const MULTISTEP_COLUMNS: [&str; 17] = [
    "n",
    "s11",
    "s11_err",
    "s12",
    "s12_err",
    "s21",
    "s21_err",
    "s22",
    "s22_err",
    "var_x",
    "var_x_err",
    "var_x_db",
    "var_p",
    "var_p_err",
    "var_p_db",
    "theory_var_x",
    "theory_var_p",
];

fn multistep_cells(r: &MultistepRow) -> Vec<String> {
    vec![
        r.n.to_string(),
        cell(r.s11),
        cell(r.s11_err),
        cell(r.s12),
        cell(r.s12_err),
        cell(r.s21),
        cell(r.s21_err),
        cell(r.s22),
        cell(r.s22_err),
        cell(r.var_x),
        cell(r.var_x_err),
        cell(r.var_x_db),
        cell(r.var_p),
        cell(r.var_p_err),
        cell(r.var_p_db),
        cell(r.theory_var_x),
        cell(r.theory_var_p),
    ]
}

/// Repeated plain teleportation: the realized matrix (against the logical
/// input, so ideally the identity) and the nullifier variance growth.
pub fn multistep_rows(cfg: &ExperimentConfig) -> Result<Vec<MultistepRow>> {
    let section = cfg.multistep.clone().unwrap_or_default();
    let boot = bootstrap_cfg(cfg);
    let half_pi = std::f64::consts::FRAC_PI_2;
    let mut rows = Vec::with_capacity(section.n_list.len());
    for (ni, &n) in section.n_list.iter().enumerate() {
        let chain_cfg = cfg.chain.chain_config(n);
        let schedule = MeasurementSchedule::identity_chain(n, 0.0, 0.0);
        let analytic = run_analytic(&chain_cfg, &schedule, cfg.feedforward)?;
        let spec = NullifierSpec::identity();
        let (theory_var_x, theory_var_p) =
            crate::estimation::predict_multistep_variance(n, chain_cfg.r_x, chain_cfg.r_p);
        let row = match cfg.mode {
            RunMode::Analytic => {
                let s = estimate_s_analytic(&analytic, SFrame::VsInput)?;
                let (v1, v2) = nullifier_variance_analytic(&analytic, &spec);
                MultistepRow {
                    n,
                    s11: s[(0, 0)],
                    s11_err: 0.0,
                    s12: s[(0, 1)],
                    s12_err: 0.0,
                    s21: s[(1, 0)],
                    s21_err: 0.0,
                    s22: s[(1, 1)],
                    s22_err: 0.0,
                    var_x: v1,
                    var_x_err: 0.0,
                    var_x_db: db_from_variance(v1),
                    var_p: v2,
                    var_p_err: 0.0,
                    var_p_db: db_from_variance(v2),
                    theory_var_x,
                    theory_var_p,
                }
            }
            RunMode::Sampled => {
                let base = (ni * 6) as u64;
                let est = sampled_estimate(
                    cfg,
                    &chain_cfg,
                    &schedule,
                    &analytic,
                    SFrame::VsInput,
                    0x3000 + base,
                )?;
                let run_x = run_sampled_with(
                    &chain_cfg,
                    &schedule,
                    cfg.shots,
                    derive_seed(cfg.seed, 0x3000 + base + 4),
                    cfg.feedforward,
                    SampleEngine::Auto,
                    cfg.threads,
                )?;
                let run_p = run_sampled_with(
                    &chain_cfg,
                    &schedule.with_readout(half_pi, half_pi),
                    cfg.shots,
                    derive_seed(cfg.seed, 0x3000 + base + 5),
                    cfg.feedforward,
                    SampleEngine::Auto,
                    cfg.threads,
                )?;
                let vars = crate::estimation::nullifier_variance(&run_x, &run_p, &spec, &boot)?;
                MultistepRow {
                    n,
                    s11: est.s_hat[(0, 0)],
                    s11_err: est.stderr[(0, 0)],
                    s12: est.s_hat[(0, 1)],
                    s12_err: est.stderr[(0, 1)],
                    s21: est.s_hat[(1, 0)],
                    s21_err: est.stderr[(1, 0)],
                    s22: est.s_hat[(1, 1)],
                    s22_err: est.stderr[(1, 1)],
                    var_x: vars.var1,
                    var_x_err: vars.err1,
                    var_x_db: db_from_variance(vars.var1),
                    var_p: vars.var2,
                    var_p_err: vars.err2,
                    var_p_db: db_from_variance(vars.var2),
                    theory_var_x,
                    theory_var_p,
                }
            }
        };
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct CompileRow {
    pub step: usize,
    pub theta_a_deg: f64,
    pub theta_b_deg: f64,
    pub residual: f64,
}

const COMPILE_COLUMNS: [&str; 4] = ["step", "theta_a_deg", "theta_b_deg", "residual"];

fn compile_cells(r: &CompileRow) -> Vec<String> {
    vec![
        r.step.to_string(),
        cell(r.theta_a_deg),
        cell(r.theta_b_deg),
        cell(r.residual),
    ]
}

/// Compile a target string into measurement steps. The residual column
/// repeats the total Frobenius residual on every step row.
pub fn compile_rows(target: &str) -> Result<Vec<CompileRow>> {
    let parsed = parse_target(target)?;
    let steps = compile(&parsed, 2)?;
    let mut realized = SingleModeTarget::identity();
    for pair in &steps {
        realized = crate::gates::v_map(pair).compose(&realized);
    }
    let residual = realized.distance(&parsed);
    Ok(steps
        .iter()
        .enumerate()
        .map(|(i, pair)| CompileRow {
            step: i,
            theta_a_deg: pair.theta_a().to_degrees(),
            theta_b_deg: pair.theta_b().to_degrees(),
            residual,
        })
        .collect())
}

/// Parse a target specification: a `*`-separated product of `R(deg)`,
/// `S(deg)`, `P(deg)` factors and literal matrices `[[a,b],[c,d]]`. The
/// rightmost factor applies first. Errors carry the byte position.
pub fn parse_target(text: &str) -> Result<SingleModeTarget> {
    let mut parser = TargetParser {
        bytes: text.as_bytes(),
        pos: 0,
    };
    let target = parser.product()?;
    parser.skip_ws();
    if parser.pos != parser.bytes.len() {
        return Err(parser.error("unexpected trailing input"));
    }
    Ok(target)
}

struct TargetParser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> TargetParser<'a> {
    fn error(&self, message: &str) -> Error {
        Error::Parse {
            position: self.pos,
            message: message.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn expect(&mut self, ch: u8) -> Result<()> {
        if self.peek() == Some(ch) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("expected '{}'", ch as char)))
        }
    }

    fn product(&mut self) -> Result<SingleModeTarget> {
        let mut total = self.factor()?;
        loop {
            self.skip_ws();
            if self.peek() == Some(b'*') {
                self.pos += 1;
                let rhs = self.factor()?;
                total = total.compose(&rhs);
            } else {
                return Ok(total);
            }
        }
    }

    fn factor(&mut self) -> Result<SingleModeTarget> {
        self.skip_ws();
        match self.peek() {
            Some(b'R') | Some(b'S') | Some(b'P') => {
                let name = self.bytes[self.pos];
                self.pos += 1;
                self.skip_ws();
                self.expect(b'(')?;
                let deg = self.number()?;
                self.skip_ws();
                self.expect(b')')?;
                let phi = deg.to_radians();
                match name {
                    b'R' => Ok(rotation(phi)),
                    b'S' => squeeze(phi).map_err(|e| self.error(&e.to_string())),
                    b'P' => shear(phi).map_err(|e| self.error(&e.to_string())),
                    _ => unreachable!(),
                }
            }
            Some(b'[') => self.matrix(),
            _ => Err(self.error("expected a gate factor R(..), S(..), P(..) or a matrix [[..]]")),
        }
    }

    fn matrix(&mut self) -> Result<SingleModeTarget> {
        self.expect(b'[')?;
        let mut rows = [[0.0; 2]; 2];
        for (i, row) in rows.iter_mut().enumerate() {
            self.skip_ws();
            self.expect(b'[')?;
            for (j, entry) in row.iter_mut().enumerate() {
                *entry = self.number()?;
                self.skip_ws();
                if j == 0 {
                    self.expect(b',')?;
                }
            }
            self.expect(b']')?;
            self.skip_ws();
            if i == 0 {
                self.expect(b',')?;
            }
        }
        self.expect(b']')?;
        SingleModeTarget::from_rows(rows).map_err(|e| self.error(&e.to_string()))
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_digit() || matches!(c, b'+' | b'-' | b'.' | b'e' | b'E') {
                self.pos += 1;
            } else {
                break;
            }
        }
        if start == self.pos {
            return Err(self.error("expected a number"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .expect("ascii slice")
            .parse::<f64>()
            .map_err(|e| Error::Parse {
                position: start,
                message: format!("bad number: {e}"),
            })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceRow {
    pub frame: usize,
    pub bin: usize,
    pub value_in: f64,
    pub value_recovered: f64,
}

const TRACE_COLUMNS: [&str; 4] = ["frame", "bin", "value_in", "value_recovered"];

fn trace_cells(r: &TraceRow) -> Vec<String> {
    vec![
        r.frame.to_string(),
        r.bin.to_string(),
        cell(r.value_in),
        cell(r.value_recovered),
    ]
}

/// Synthesize per-frame traces from vacuum-sampled quadratures, write them
/// (binary plus CSV) under `dir`, read the binaries back and integrate.
pub fn trace_demo_rows(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<TraceRow>> {
    let section = cfg.trace_demo.clone().unwrap_or_default();
    let mut rows = Vec::with_capacity(section.frames * FRAME_BINS);
    for frame in 0..section.frames {
        let mut value_rng = shot_rng(derive_seed(cfg.seed, (2 * frame) as u64), 0);
        let values: Vec<f64> = (0..FRAME_BINS)
            .map(|_| value_rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let trace = synthesize_frame(
            &values,
            Channel::A,
            section.noise_power,
            derive_seed(cfg.seed, (2 * frame + 1) as u64),
        )?;
        let bin_path = dir.join(format!("trace_f{frame:03}.bin"));
        trace.write_binary_file(&bin_path)?;
        let mut csv = Vec::new();
        trace.write_csv(&mut csv)?;
        std::fs::write(dir.join(format!("trace_f{frame:03}.csv")), csv)?;

        let reloaded = crate::trace::Trace::read_binary_file(&bin_path)?;
        let recovered = integrate_all(&reloaded);
        for (bin, (&v_in, &v_out)) in values.iter().zip(&recovered).enumerate() {
            rows.push(TraceRow {
                frame,
                bin,
                value_in: v_in,
                value_recovered: v_out,
            });
        }
    }
    Ok(rows)
}
