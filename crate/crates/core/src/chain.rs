//! The time-multiplexed teleportation chain: a stream of two-mode squeezed
//! resource pairs, one balanced beamsplitter coupling per step, dual
//! homodyne measurements with programmable bases, feedforward, and logical
//! reference/output readouts.
//!
//! Chain layout for `n` gate steps: resource pair 0 supplies the reference
//! half and the logical input half. Each step `k >= 1` brings a fresh pair;
//! the beamsplitter couples the propagating mode with one half, both outputs
//! are homodyned at `(theta_a, theta_b)`, and the other half propagates. The
//! reference is read out at `theta_ref` and the surviving mode at
//! `theta_out`.
//!
//! Two evaluation paths are provided. [`run_analytic`] propagates exact
//! joint moments of every measured quantity (no sampling noise) by tracking
//! each one as a linear combination of the independent squeezed and vacuum
//! sources. [`run_sampled`] draws per-shot records; with phase jitter
//! disabled it samples the exact joint outcome distribution through a
//! Cholesky factor, otherwise it simulates the chain shot by shot with
//! sequential homodyne conditioning.

mod ledger;

pub use ledger::AnalyticChain;

use nalgebra::Matrix2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gates::{v_map, AnglePair, SingleModeTarget};
use crate::gaussian::{beamsplitter_5050, BsSign, GaussianState, QuadratureSelector};
use crate::rng::shot_rng;

/// Convert a squeezed-quadrature variance in dB (relative to vacuum) into
/// the squeezing parameter `r`: `10^(db/10) = exp(-2r)`.
pub fn r_from_variance_db(db: f64) -> f64 {
    -db * std::f64::consts::LN_10 / 20.0
}

/// Variance in vacuum units expressed in dB.
pub fn db_from_variance(var: f64) -> f64 {
    10.0 * var.log10()
}

/// Basis-driver imperfections: the programmable phase is quantized to
/// `2 pi / 2^bits` and smeared by Gaussian jitter, independently per bin and
/// per shot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseNoise {
    /// Driver resolution in bits.
    #[serde(default = "PhaseNoise::default_bits")]
    pub bits: u32,
    /// Standard deviation of the residual phase jitter, degrees.
    #[serde(default = "PhaseNoise::default_jitter")]
    pub jitter_sigma_deg: f64,
}

impl PhaseNoise {
    fn default_bits() -> u32 {
        7
    }

    fn default_jitter() -> f64 {
        0.5
    }

    /// Snap an angle to the driver grid.
    pub fn quantize(&self, theta: f64) -> f64 {
        let step = std::f64::consts::TAU / 2f64.powi(self.bits as i32);
        (theta / step).round() * step
    }
}

impl Default for PhaseNoise {
    fn default() -> Self {
        Self {
            bits: Self::default_bits(),
            jitter_sigma_deg: Self::default_jitter(),
        }
    }
}

/// Physical parameters of a chain run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    /// Gate steps between the reference and the output readout.
    pub n_steps: usize,
    /// Squeezing parameter of the x-squeezed resource quadrature.
    pub r_x: f64,
    /// Squeezing parameter of the p-squeezed resource quadrature.
    pub r_p: f64,
    /// Transmissivity applied to each resource half at creation.
    pub eta_resource: f64,
    /// Transmissivity in front of every homodyne detector.
    pub eta_detect: f64,
    /// Optional basis-driver imperfections; `None` means exact bases.
    pub phase_noise: Option<PhaseNoise>,
    /// Wave-packet width in nanoseconds (informational).
    pub delta_t_ns: f64,
}

impl ChainConfig {
    /// Lossless, noise-free chain at the given squeezing.
    pub fn ideal(n_steps: usize, r_x: f64, r_p: f64) -> Self {
        Self {
            n_steps,
            r_x,
            r_p,
            eta_resource: 1.0,
            eta_detect: 1.0,
            phase_noise: None,
            delta_t_ns: 40.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.r_x < 0.0 {
            return Err(Error::NegativeSqueezing(self.r_x));
        }
        if self.r_p < 0.0 {
            return Err(Error::NegativeSqueezing(self.r_p));
        }
        if !(0.0..=1.0).contains(&self.eta_resource) {
            return Err(Error::EtaOutOfRange(self.eta_resource));
        }
        if !(0.0..=1.0).contains(&self.eta_detect) {
            return Err(Error::EtaOutOfRange(self.eta_detect));
        }
        if let Some(pn) = &self.phase_noise {
            if pn.bits < 1 {
                return Err(Error::ParameterOutOfRange {
                    name: "phase_noise.bits",
                    value: pn.bits as f64,
                    range: ">= 1",
                });
            }
            if pn.jitter_sigma_deg < 0.0 {
                return Err(Error::ParameterOutOfRange {
                    name: "phase_noise.jitter_sigma_deg",
                    value: pn.jitter_sigma_deg,
                    range: ">= 0",
                });
            }
        }
        Ok(())
    }
}

/// The role of one time bin in a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "snake_case")]
pub enum BinRole {
    /// Logical readout of the reference half at this basis.
    Reference { theta: f64 },
    /// One teleportation step measured at this basis pair.
    Gate { theta_a: f64, theta_b: f64 },
    /// Logical readout of the surviving mode.
    Output { theta: f64 },
}

/// Ordered per-bin program of a run: one reference bin first, gate bins in
/// between, one output bin last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<BinRole>", into = "Vec<BinRole>")]
pub struct MeasurementSchedule {
    bins: Vec<BinRole>,
    gates: Vec<AnglePair>,
}

impl TryFrom<Vec<BinRole>> for MeasurementSchedule {
    type Error = Error;

    fn try_from(bins: Vec<BinRole>) -> Result<Self> {
        Self::new(bins)
    }
}

impl From<MeasurementSchedule> for Vec<BinRole> {
    fn from(s: MeasurementSchedule) -> Vec<BinRole> {
        s.bins
    }
}

impl MeasurementSchedule {
    pub fn new(bins: Vec<BinRole>) -> Result<Self> {
        if bins.len() < 2 {
            return Err(Error::InvalidSchedule(
                "need at least a reference bin and an output bin".into(),
            ));
        }
        if !matches!(bins[0], BinRole::Reference { .. }) {
            return Err(Error::InvalidSchedule(
                "first bin must be the reference".into(),
            ));
        }
        if !matches!(bins[bins.len() - 1], BinRole::Output { .. }) {
            return Err(Error::InvalidSchedule("last bin must be the output".into()));
        }
        let mut gates = Vec::new();
        for (i, bin) in bins.iter().enumerate() {
            match bin {
                BinRole::Gate { theta_a, theta_b } => {
                    gates.push(AnglePair::new(*theta_a, *theta_b)?);
                }
                BinRole::Reference { .. } if i != 0 => {
                    return Err(Error::InvalidSchedule(format!(
                        "unexpected second reference bin at index {i}"
                    )));
                }
                BinRole::Output { .. } if i != bins.len() - 1 => {
                    return Err(Error::InvalidSchedule(format!(
                        "output bin at index {i} is not last"
                    )));
                }
                _ => {}
            }
        }
        Ok(Self { bins, gates })
    }

    /// Gate bins realizing the given angle pairs, reference and output read
    /// out at the given bases.
    pub fn with_gates(pairs: &[AnglePair], theta_ref: f64, theta_out: f64) -> Self {
        let mut bins = vec![BinRole::Reference { theta: theta_ref }];
        bins.extend(pairs.iter().map(|p| BinRole::Gate {
            theta_a: p.theta_a(),
            theta_b: p.theta_b(),
        }));
        bins.push(BinRole::Output { theta: theta_out });
        Self {
            bins,
            gates: pairs.to_vec(),
        }
    }

    /// `n` plain teleportation steps.
    pub fn identity_chain(n_steps: usize, theta_ref: f64, theta_out: f64) -> Self {
        let pair = AnglePair::new(0.0, std::f64::consts::FRAC_PI_2).unwrap();
        Self::with_gates(&vec![pair; n_steps], theta_ref, theta_out)
    }

    pub fn bins(&self) -> &[BinRole] {
        &self.bins
    }

    pub fn gate_pairs(&self) -> &[AnglePair] {
        &self.gates
    }

    pub fn n_steps(&self) -> usize {
        self.gates.len()
    }

    pub fn theta_ref(&self) -> f64 {
        match self.bins[0] {
            BinRole::Reference { theta } => theta,
            _ => unreachable!("validated on construction"),
        }
    }

    pub fn theta_out(&self) -> f64 {
        match self.bins[self.bins.len() - 1] {
            BinRole::Output { theta } => theta,
            _ => unreachable!("validated on construction"),
        }
    }

    /// Readout copy with different reference/output bases.
    pub fn with_readout(&self, theta_ref: f64, theta_out: f64) -> Self {
        Self::with_gates(&self.gates, theta_ref, theta_out)
    }
}

fn check_consistent(cfg: &ChainConfig, schedule: &MeasurementSchedule) -> Result<()> {
    cfg.validate()?;
    if cfg.n_steps != schedule.n_steps() {
        return Err(Error::InconsistentSchedule(format!(
            "config has {} steps, schedule has {} gate bins",
            cfg.n_steps,
            schedule.n_steps()
        )));
    }
    Ok(())
}

/// One element of the unrolled chain circuit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainElement {
    /// Resource pair `pair` enters the chain.
    EprSource { pair: usize },
    /// Reference half of pair 0 is read out.
    ReferenceReadout,
    /// Step `step` couples the propagating mode with a half of
    /// `resource_pair` on a balanced beamsplitter; both outputs homodyned.
    CouplingStep { step: usize, resource_pair: usize },
    /// The surviving half of the last pair is read out.
    OutputReadout { pair: usize },
}

/// Lazily evaluable circuit description of a chain run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainCircuit {
    elements: Vec<ChainElement>,
    n_pairs: usize,
}

impl ChainCircuit {
    pub fn elements(&self) -> &[ChainElement] {
        &self.elements
    }

    pub fn n_pairs(&self) -> usize {
        self.n_pairs
    }
}

/// Unroll the chain for a config: pair 0 carries (reference, input), each
/// step consumes one further pair.
pub fn build_chain(cfg: &ChainConfig) -> ChainCircuit {
    let mut elements = vec![
        ChainElement::EprSource { pair: 0 },
        ChainElement::ReferenceReadout,
    ];
    for step in 1..=cfg.n_steps {
        elements.push(ChainElement::EprSource { pair: step });
        elements.push(ChainElement::CouplingStep {
            step,
            resource_pair: step,
        });
    }
    elements.push(ChainElement::OutputReadout { pair: cfg.n_steps });
    ChainCircuit {
        elements,
        n_pairs: cfg.n_steps + 1,
    }
}

/// How measurement-dependent displacements are realized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedforwardMode {
    /// Displace the propagating mode after each step.
    InCircuit,
    /// Record raw outcomes and correct the data afterwards.
    Postprocess,
}

/// Feedforward gain matrix of one step: columns map the outcome pair
/// `(m_a, m_b)` to the `(x, p)` displacement that completes the step map.
/// Derived by solving the step's Heisenberg propagation for the surviving
/// half, so that the corrected output equals `V(theta_a, theta_b)` applied
/// to the input plus squeezing-limited noise.
pub fn step_gains(pair: &AnglePair) -> Matrix2<f64> {
    let ta = pair.theta_a();
    let tb = pair.theta_b();
    let d = (ta - tb).sin();
    let f = -std::f64::consts::SQRT_2 / d;
    Matrix2::new(f * tb.sin(), f * ta.sin(), f * tb.cos(), f * ta.cos())
}

/// Per-step feedforward gains for a whole schedule.
pub fn feedforward_gains(schedule: &MeasurementSchedule) -> Vec<Matrix2<f64>> {
    schedule.gate_pairs().iter().map(step_gains).collect()
}

/// Per-step matrices mapping raw outcomes `(m_a, m_b)` of step `k` to the
/// displacement they contribute at the chain output, i.e. the step gains
/// propagated through all later step maps. Used to apply feedforward as
/// postprocessing on recorded data.
pub fn output_corrections(schedule: &MeasurementSchedule) -> Vec<Matrix2<f64>> {
    let pairs = schedule.gate_pairs();
    let n = pairs.len();
    let mut corrections = vec![Matrix2::zeros(); n];
    // suffix holds V_n ... V_{k+1} while step k is processed
    let mut suffix: Matrix2<f64> = Matrix2::identity();
    for k in (0..n).rev() {
        corrections[k] = suffix * step_gains(&pairs[k]);
        suffix *= *v_map(&pairs[k]).matrix();
    }
    corrections
}

/// Ordered product of the step maps (right-to-left over the gate bins): the
/// operation the chain applies to its logical input.
pub fn effective_map(schedule: &MeasurementSchedule) -> SingleModeTarget {
    let mut total = SingleModeTarget::identity();
    for pair in schedule.gate_pairs() {
        total = v_map(pair).compose(&total);
    }
    total
}

/// The same operation expressed against the mirrored reference
/// (`x_ref = -x_in`): the matrix tabulated for output-versus-reference
/// correlations. Determinant -1 by construction.
pub fn effective_map_vs_reference(schedule: &MeasurementSchedule) -> Matrix2<f64> {
    crate::gates::reference_frame_matrix(&effective_map(schedule))
}

/// Exact joint moments of a chain run; no sampling noise.
pub fn run_analytic(
    cfg: &ChainConfig,
    schedule: &MeasurementSchedule,
    feedforward: FeedforwardMode,
) -> Result<AnalyticChain> {
    check_consistent(cfg, schedule)?;
    Ok(AnalyticChain::build(cfg, schedule, feedforward))
}

/// Per-shot measured values of one chain run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub shot: u64,
    /// Reference readout `x_ref(theta_ref)`.
    pub reference: f64,
    /// Raw dual-homodyne outcomes `(m_a, m_b)` per gate bin.
    pub gate_outcomes: Vec<(f64, f64)>,
    /// Output readout `x_out(theta_out)`; already corrected when the run
    /// used in-circuit feedforward, raw otherwise.
    pub output: f64,
}

/// A complete seeded run: configuration, program, and every shot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecords {
    pub config: ChainConfig,
    pub schedule: MeasurementSchedule,
    pub seed: u64,
    pub feedforward: FeedforwardMode,
    pub shots: Vec<ShotRecord>,
}

impl RunRecords {
    /// JSON round trip; carries the config, schedule, seed and every shot.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("records serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let records: RunRecords = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("bad records file: {e}")))?;
        records.check_lengths()?;
        Ok(records)
    }

    /// CSV round trip: provenance comments (config, schedule, seed,
    /// feedforward mode), then one row per shot with the raw outcomes.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# cvmbqc records v1")?;
        writeln!(w, "# seed: {}", self.seed)?;
        writeln!(
            w,
            "# feedforward: {}",
            serde_json::to_string(&self.feedforward).expect("serializes")
        )?;
        writeln!(
            w,
            "# config: {}",
            serde_json::to_string(&self.config).expect("serializes")
        )?;
        writeln!(
            w,
            "# schedule: {}",
            serde_json::to_string(&self.schedule).expect("serializes")
        )?;
        let mut header = String::from("shot,reference,output");
        for k in 1..=self.schedule.n_steps() {
            header.push_str(&format!(",m_a_{k},m_b_{k}"));
        }
        writeln!(w, "{header}")?;
        for shot in &self.shots {
            let mut line = format!("{},{},{}", shot.shot, shot.reference, shot.output);
            for (a, b) in &shot.gate_outcomes {
                line.push_str(&format!(",{a},{b}"));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: std::io::BufRead>(r: R) -> Result<Self> {
        let mut seed = None;
        let mut feedforward = None;
        let mut config: Option<ChainConfig> = None;
        let mut schedule: Option<MeasurementSchedule> = None;
        let mut shots = Vec::new();
        let mut saw_header = false;
        for line in r.lines() {
            let line = line?;
            if let Some(comment) = line.strip_prefix("# ") {
                if let Some(v) = comment.strip_prefix("seed: ") {
                    seed = Some(
                        v.trim()
                            .parse::<u64>()
                            .map_err(|e| Error::Config(format!("bad seed in records: {e}")))?,
                    );
                } else if let Some(v) = comment.strip_prefix("feedforward: ") {
                    feedforward =
                        Some(serde_json::from_str(v.trim()).map_err(|e| {
                            Error::Config(format!("bad feedforward in records: {e}"))
                        })?);
                } else if let Some(v) = comment.strip_prefix("config: ") {
                    config = Some(
                        serde_json::from_str(v.trim())
                            .map_err(|e| Error::Config(format!("bad config in records: {e}")))?,
                    );
                } else if let Some(v) = comment.strip_prefix("schedule: ") {
                    schedule = Some(
                        serde_json::from_str(v.trim())
                            .map_err(|e| Error::Config(format!("bad schedule in records: {e}")))?,
                    );
                }
                continue;
            }
            if !saw_header {
                saw_header = true; // column header row
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() < 3 || !(cells.len() - 3).is_multiple_of(2) {
                return Err(Error::Config(format!("bad records row: {line}")));
            }
            let parse = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|e| Error::Config(format!("bad value {s}: {e}")))
            };
            let shot = cells[0]
                .parse::<u64>()
                .map_err(|e| Error::Config(format!("bad shot index: {e}")))?;
            let reference = parse(cells[1])?;
            let output = parse(cells[2])?;
            let mut gate_outcomes = Vec::with_capacity((cells.len() - 3) / 2);
            for pair in cells[3..].chunks(2) {
                gate_outcomes.push((parse(pair[0])?, parse(pair[1])?));
            }
            shots.push(ShotRecord {
                shot,
                reference,
                gate_outcomes,
                output,
            });
        }
        let (Some(seed), Some(feedforward), Some(config), Some(schedule)) =
            (seed, feedforward, config, schedule)
        else {
            return Err(Error::Config(
                "records file lacks its provenance comments".into(),
            ));
        };
        let records = RunRecords {
            config,
            schedule,
            seed,
            feedforward,
            shots,
        };
        records.check_lengths()?;
        Ok(records)
    }

    fn check_lengths(&self) -> Result<()> {
        let n = self.schedule.n_steps();
        for shot in &self.shots {
            if shot.gate_outcomes.len() != n {
                return Err(Error::Config(format!(
                    "shot {} carries {} gate outcomes, schedule has {n} steps",
                    shot.shot,
                    shot.gate_outcomes.len()
                )));
            }
        }
        Ok(())
    }

    /// Feedforward-corrected `(reference, output)` readout pairs.
    pub fn corrected_pairs(&self) -> Vec<(f64, f64)> {
        match self.feedforward {
            FeedforwardMode::InCircuit => {
                self.shots.iter().map(|s| (s.reference, s.output)).collect()
            }
            FeedforwardMode::Postprocess => {
                let corrections = output_corrections(&self.schedule);
                let theta = self.schedule.theta_out();
                let (ct, st) = (theta.cos(), theta.sin());
                self.shots
                    .iter()
                    .map(|s| {
                        let mut dx = 0.0;
                        let mut dp = 0.0;
                        for (c, &(ma, mb)) in corrections.iter().zip(&s.gate_outcomes) {
                            dx += c[(0, 0)] * ma + c[(0, 1)] * mb;
                            dp += c[(1, 0)] * ma + c[(1, 1)] * mb;
                        }
                        (s.reference, s.output + ct * dx + st * dp)
                    })
                    .collect()
            }
        }
    }
}

/// Sampling backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SampleEngine {
    /// Factored joint-Gaussian sampler when there is no phase jitter,
    /// sequential conditioning otherwise.
    #[default]
    Auto,
    /// Draw all outcomes of a shot from the exact joint distribution via a
    /// Cholesky factor of the outcome covariance.
    FactoredGaussian,
    /// Simulate each shot by sequential homodyne conditioning.
    Sequential,
}

/// Sample a chain run shot by shot. Records are bit-reproducible functions
/// of `(config, schedule, seed)` and independent of `threads`.
pub fn run_sampled(
    cfg: &ChainConfig,
    schedule: &MeasurementSchedule,
    n_shots: u64,
    seed: u64,
    feedforward: FeedforwardMode,
) -> Result<RunRecords> {
    run_sampled_with(
        cfg,
        schedule,
        n_shots,
        seed,
        feedforward,
        SampleEngine::Auto,
        1,
    )
}

pub fn run_sampled_with(
    cfg: &ChainConfig,
    schedule: &MeasurementSchedule,
    n_shots: u64,
    seed: u64,
    feedforward: FeedforwardMode,
    engine: SampleEngine,
    threads: usize,
) -> Result<RunRecords> {
    check_consistent(cfg, schedule)?;
    if n_shots < 1 {
        return Err(Error::ParameterOutOfRange {
            name: "n_shots",
            value: n_shots as f64,
            range: ">= 1",
        });
    }
    let jitter = cfg
        .phase_noise
        .map(|pn| pn.jitter_sigma_deg > 0.0)
        .unwrap_or(false);
    let engine = match engine {
        SampleEngine::Auto if jitter => SampleEngine::Sequential,
        SampleEngine::Auto => SampleEngine::FactoredGaussian,
        e => e,
    };
    let shots = match engine {
        SampleEngine::FactoredGaussian => {
            let chain = AnalyticChain::build(cfg, schedule, feedforward);
            let sampler = chain.outcome_sampler()?;
            run_parallel(n_shots, threads, move |shot| {
                Ok(sampler.sample_shot(seed, shot, schedule.n_steps()))
            })?
        }
        SampleEngine::Sequential => run_parallel(n_shots, threads, move |shot| {
            sample_shot_sequential(cfg, schedule, feedforward, seed, shot)
        })?,
        SampleEngine::Auto => unreachable!(),
    };
    Ok(RunRecords {
        config: cfg.clone(),
        schedule: schedule.clone(),
        seed,
        feedforward,
        shots,
    })
}

fn run_parallel<F>(n_shots: u64, threads: usize, shot_fn: F) -> Result<Vec<ShotRecord>>
where
    F: Fn(u64) -> Result<ShotRecord> + Sync,
{
    let threads = threads.max(1);
    if threads == 1 {
        return (0..n_shots).map(&shot_fn).collect();
    }
    let mut records: Vec<Option<ShotRecord>> = vec![None; n_shots as usize];
    let chunk = n_shots.div_ceil(threads as u64).max(1) as usize;
    let mut failure = Ok(());
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for (t, slice) in records.chunks_mut(chunk).enumerate() {
            let start = (t * chunk) as u64;
            let shot_fn = &shot_fn;
            handles.push(scope.spawn(move || -> Result<()> {
                for (i, slot) in slice.iter_mut().enumerate() {
                    *slot = Some(shot_fn(start + i as u64)?);
                }
                Ok(())
            }));
        }
        for handle in handles {
            if let Err(e) = handle.join().expect("sampler thread panicked") {
                failure = Err(e);
            }
        }
    });
    failure?;
    Ok(records
        .into_iter()
        .map(|r| r.expect("all shots filled"))
        .collect())
}

/// Effective measurement angle for one bin of one shot: driver quantization
/// plus Gaussian jitter.
fn noisy_angle<R: Rng + ?Sized>(theta: f64, pn: &Option<PhaseNoise>, rng: &mut R) -> f64 {
    match pn {
        None => theta,
        Some(pn) => {
            let mut t = pn.quantize(theta);
            if pn.jitter_sigma_deg > 0.0 {
                let z: f64 = rng.sample(StandardNormal);
                t += z * pn.jitter_sigma_deg.to_radians();
            }
            t
        }
    }
}

/// One shot via explicit Gaussian-state evolution: adjoin a resource pair,
/// couple, measure, feed forward, repeat. At most three modes are alive at
/// any point.
fn sample_shot_sequential(
    cfg: &ChainConfig,
    schedule: &MeasurementSchedule,
    feedforward: FeedforwardMode,
    seed: u64,
    shot: u64,
) -> Result<ShotRecord> {
    let mut rng = shot_rng(seed, shot);
    let pn = &cfg.phase_noise;
    let bs = beamsplitter_5050(BsSign::MinusFirst);

    let pair = GaussianState::epr_pair(cfg.r_x, cfg.r_p)?;
    let pair = if cfg.eta_resource < 1.0 {
        pair.loss(cfg.eta_resource, &[0, 1])?
    } else {
        pair
    };

    // Modes: 0 = reference half, 1 = propagating half.
    let mut state = pair.clone();

    // Reference readout first; afterwards only the propagating mode remains.
    let theta_ref = noisy_angle(schedule.theta_ref(), pn, &mut rng);
    let state_for_ref = if cfg.eta_detect < 1.0 {
        state.loss(cfg.eta_detect, &[0])?
    } else {
        state.clone()
    };
    let (reference, rest) =
        state_for_ref.homodyne_sample(&QuadratureSelector::new(0, theta_ref), &mut rng)?;
    state = rest.expect("propagating mode survives the reference readout");

    let mut gate_outcomes = Vec::with_capacity(schedule.n_steps());
    for pair_angles in schedule.gate_pairs() {
        // Adjoin the fresh pair: modes 0 = w, 1 = L, 2 = R.
        state = state.tensor(&pair);
        // Couple (L, w): slot 1 becomes A = (L + w)/sqrt2 at mode 1, slot 2
        // becomes B = (w - L)/sqrt2 at mode 0.
        state = state.apply(&bs, &[1, 0])?;
        if cfg.eta_detect < 1.0 {
            state = state.loss(cfg.eta_detect, &[0, 1])?;
        }
        let ta = noisy_angle(pair_angles.theta_a(), pn, &mut rng);
        let tb = noisy_angle(pair_angles.theta_b(), pn, &mut rng);
        let (m_a, rest) = state.homodyne_sample(&QuadratureSelector::new(1, ta), &mut rng)?;
        state = rest.expect("two modes left");
        let (m_b, rest) = state.homodyne_sample(&QuadratureSelector::new(0, tb), &mut rng)?;
        state = rest.expect("one mode left");
        gate_outcomes.push((m_a, m_b));
        if feedforward == FeedforwardMode::InCircuit {
            let g = step_gains(pair_angles);
            state = state.displace(
                0,
                g[(0, 0)] * m_a + g[(0, 1)] * m_b,
                g[(1, 0)] * m_a + g[(1, 1)] * m_b,
            )?;
        }
    }

    let theta_out = noisy_angle(schedule.theta_out(), pn, &mut rng);
    let state = if cfg.eta_detect < 1.0 {
        state.loss(cfg.eta_detect, &[0])?
    } else {
        state
    };
    let (output, _) = state.homodyne_sample(&QuadratureSelector::new(0, theta_out), &mut rng)?;

    Ok(ShotRecord {
        shot,
        reference,
        gate_outcomes,
        output,
    })
}
