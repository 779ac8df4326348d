//! Analysis layer: correlation-based estimation of the realized gate
//! matrix, nullifier variances, inseparability verification with
//! gate-dependent thresholds, bootstrap errors, and multi-step noise
//! predictions.
//!
//! Sign conventions. The resource pair anticorrelates the x quadratures of
//! its halves (`x_ref ~ -x_in`, `p_ref ~ +p_in`), so output-versus-reference
//! relations differ from the applied operation by `diag(-1, 1)`.
//! [`SFrame::VsInput`] divides the measured correlations by the signed
//! calibration constants `<x_in x_ref>` (negative) and `<p_in p_ref>`,
//! recovering the applied map (identity chains estimate close to the
//! identity). [`SFrame::VsReference`] flips the x column and reproduces the
//! tabulated relation matrices (identity estimates `diag(-1, 1)`).

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::chain::{AnalyticChain, RunRecords};
use crate::error::{Error, Result};
use crate::gates::{gate_target, reference_frame_matrix, Gate};
use crate::gaussian::commutator_magnitude;
use crate::rng::resample_rng;

use rand::Rng;

const SQRT_HALF: f64 = std::f64::consts::FRAC_1_SQRT_2;
const HALF_PI: f64 = std::f64::consts::FRAC_PI_2;

/// One scaled rotated quadrature, `coeff * x(theta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadCoeff {
    pub coeff: f64,
    pub theta: f64,
}

impl QuadCoeff {
    /// Coefficient vector over `(x, p)` of one mode.
    fn vector(&self) -> [f64; 2] {
        [self.coeff * self.theta.cos(), self.coeff * self.theta.sin()]
    }
}

/// One nullifier: a combination of an output and a reference quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullifierCombo {
    pub output: QuadCoeff,
    pub reference: QuadCoeff,
}

impl NullifierCombo {
    /// The nullifier value for one `(reference, output)` readout pair.
    pub fn evaluate(&self, reference: f64, output: f64) -> f64 {
        self.output.coeff * output + self.reference.coeff * reference
    }
}

/// The nullifier pair certifying one operation, with the readout bases each
/// combination requires.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullifierSpec {
    pub delta1: NullifierCombo,
    pub delta2: NullifierCombo,
}

impl NullifierSpec {
    /// Nullifiers of a phase rotation by `phi`:
    /// `d1 = [x_out(-phi/2) + x_ref(-phi/2)]/sqrt2`,
    /// `d2 = [p_out(-phi/2) - p_ref(-phi/2)]/sqrt2`.
    pub fn rotation(phi: f64) -> Self {
        let t = -0.5 * phi;
        Self {
            delta1: NullifierCombo {
                output: QuadCoeff {
                    coeff: SQRT_HALF,
                    theta: t,
                },
                reference: QuadCoeff {
                    coeff: SQRT_HALF,
                    theta: t,
                },
            },
            delta2: NullifierCombo {
                output: QuadCoeff {
                    coeff: SQRT_HALF,
                    theta: t + HALF_PI,
                },
                reference: QuadCoeff {
                    coeff: -SQRT_HALF,
                    theta: t + HALF_PI,
                },
            },
        }
    }

    /// Nullifiers of plain teleportation.
    pub fn identity() -> Self {
        Self::rotation(0.0)
    }

    /// Nullifiers of the squeezing gate `R(pi/2) S(phi)`:
    /// `d1 = cos(phi) x_out - sin(phi) p_ref`,
    /// `d2 = sin(phi) p_out - cos(phi) x_ref`.
    pub fn squeeze_rot(phi: f64) -> Self {
        Self {
            delta1: NullifierCombo {
                output: QuadCoeff {
                    coeff: phi.cos(),
                    theta: 0.0,
                },
                reference: QuadCoeff {
                    coeff: -phi.sin(),
                    theta: HALF_PI,
                },
            },
            delta2: NullifierCombo {
                output: QuadCoeff {
                    coeff: phi.sin(),
                    theta: HALF_PI,
                },
                reference: QuadCoeff {
                    coeff: -phi.cos(),
                    theta: 0.0,
                },
            },
        }
    }

    /// Nullifiers of the shear gate `P(phi)`:
    /// `d1 = (x_out + x_ref)/sqrt2`,
    /// `d2 = [p_out(phi) - p_ref(phi)]/sqrt2`.
    pub fn shear(phi: f64) -> Self {
        Self {
            delta1: NullifierCombo {
                output: QuadCoeff {
                    coeff: SQRT_HALF,
                    theta: 0.0,
                },
                reference: QuadCoeff {
                    coeff: SQRT_HALF,
                    theta: 0.0,
                },
            },
            delta2: NullifierCombo {
                output: QuadCoeff {
                    coeff: SQRT_HALF,
                    theta: phi + HALF_PI,
                },
                reference: QuadCoeff {
                    coeff: -SQRT_HALF,
                    theta: phi + HALF_PI,
                },
            },
        }
    }

    pub fn for_gate(gate: Gate, phi: f64) -> Self {
        match gate {
            Gate::Identity => Self::identity(),
            Gate::Rotation => Self::rotation(phi),
            Gate::SqueezeRot => Self::squeeze_rot(phi),
            Gate::Shear => Self::shear(phi),
        }
    }
}

/// Separability bound for the nullifier pair, in vacuum units: twice the
/// sum of the two subsystems' commutator magnitudes. Any separable state
/// has nullifier variances summing to at least this value, so a smaller
/// measured sum certifies entanglement; a larger sum is inconclusive.
pub fn inseparability_threshold(spec: &NullifierSpec) -> f64 {
    let za = spec.delta1.output.vector();
    let xa = spec.delta2.output.vector();
    let zb = spec.delta1.reference.vector();
    let xb = spec.delta2.reference.vector();
    2.0 * (commutator_magnitude(&za, &xa) + commutator_magnitude(&zb, &xb))
}

/// Bootstrap settings: percentile resampling with a dedicated seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootstrapCfg {
    pub n_resamples: usize,
    pub seed: u64,
}

impl Default for BootstrapCfg {
    fn default() -> Self {
        Self {
            n_resamples: 1000,
            seed: 0x62_73,
        }
    }
}

/// Result of a bootstrap: the point estimate on the full sample, the
/// resampling standard error, and the central 95% percentile interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub estimate: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Percentile bootstrap of an arbitrary statistic. Deterministic under the
/// seed; resamples use independent streams so the result does not depend on
/// evaluation order.
pub fn bootstrap<F>(
    data: &[f64],
    statistic: F,
    n_resamples: usize,
    seed: u64,
) -> Result<BootstrapResult>
where
    F: Fn(&[f64]) -> f64,
{
    if n_resamples < 2 {
        return Err(Error::TooFewResamples(n_resamples));
    }
    if data.is_empty() {
        return Err(Error::DimensionMismatch("bootstrap over empty data".into()));
    }
    let estimate = statistic(data);
    let index = rand::distributions::Uniform::new(0, data.len());
    let mut resampled = Vec::with_capacity(data.len());
    let mut stats = Vec::with_capacity(n_resamples);
    for k in 0..n_resamples {
        let mut rng = resample_rng(seed, k as u64);
        resampled.clear();
        resampled.extend((0..data.len()).map(|_| data[rng.sample(index)]));
        stats.push(statistic(&resampled));
    }
    let mean = stats.iter().sum::<f64>() / n_resamples as f64;
    let var = stats.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n_resamples - 1) as f64;
    let mut sorted = stats;
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pick =
        |q: f64| sorted[((q * (n_resamples - 1) as f64).round() as usize).min(n_resamples - 1)];
    Ok(BootstrapResult {
        estimate,
        std_error: var.sqrt(),
        ci_low: pick(0.025),
        ci_high: pick(0.975),
    })
}

fn sample_variance(data: &[f64]) -> f64 {
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
}

fn check_bases(run: &RunRecords, theta_ref: f64, theta_out: f64, what: &str) -> Result<()> {
    let dr = angle_distance(run.schedule.theta_ref(), theta_ref);
    let do_ = angle_distance(run.schedule.theta_out(), theta_out);
    if dr > 1e-9 || do_ > 1e-9 {
        return Err(Error::BasisMismatch(format!(
            "{what}: run measured at (ref {:.6}, out {:.6}) rad, needs ({:.6}, {:.6})",
            run.schedule.theta_ref(),
            run.schedule.theta_out(),
            theta_ref,
            theta_out
        )));
    }
    Ok(())
}

fn angle_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(std::f64::consts::TAU);
    d.min(std::f64::consts::TAU - d)
}

/// Measured nullifier variances, in vacuum units, with bootstrap errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullifierVariances {
    pub var1: f64,
    pub err1: f64,
    pub var2: f64,
    pub err2: f64,
    pub sum: f64,
    pub err_sum: f64,
    pub n_events: usize,
}

/// Sample variances of the two nullifiers from two dedicated runs, one per
/// combination (each requires its own readout bases).
pub fn nullifier_variance(
    run1: &RunRecords,
    run2: &RunRecords,
    spec: &NullifierSpec,
    boot: &BootstrapCfg,
) -> Result<NullifierVariances> {
    check_bases(
        run1,
        spec.delta1.reference.theta,
        spec.delta1.output.theta,
        "delta1",
    )?;
    check_bases(
        run2,
        spec.delta2.reference.theta,
        spec.delta2.output.theta,
        "delta2",
    )?;
    let values1: Vec<f64> = run1
        .corrected_pairs()
        .iter()
        .map(|&(r, o)| spec.delta1.evaluate(r, o))
        .collect();
    let values2: Vec<f64> = run2
        .corrected_pairs()
        .iter()
        .map(|&(r, o)| spec.delta2.evaluate(r, o))
        .collect();
    let b1 = bootstrap(&values1, sample_variance, boot.n_resamples, boot.seed)?;
    let b2 = bootstrap(&values2, sample_variance, boot.n_resamples, boot.seed ^ 1)?;
    Ok(NullifierVariances {
        var1: b1.estimate,
        err1: b1.std_error,
        var2: b2.estimate,
        err2: b2.std_error,
        sum: b1.estimate + b2.estimate,
        err_sum: (b1.std_error.powi(2) + b2.std_error.powi(2)).sqrt(),
        n_events: values1.len().min(values2.len()),
    })
}

/// Exact nullifier variances from an analytic run pair of moments.
pub fn nullifier_variance_analytic(chain: &AnalyticChain, spec: &NullifierSpec) -> (f64, f64) {
    let v1 = chain.combination_variance(
        spec.delta1.output.coeff,
        spec.delta1.output.theta,
        spec.delta1.reference.coeff,
        spec.delta1.reference.theta,
    );
    let v2 = chain.combination_variance(
        spec.delta2.output.coeff,
        spec.delta2.output.theta,
        spec.delta2.reference.coeff,
        spec.delta2.reference.theta,
    );
    (v1, v2)
}

/// One verification row: variances against the separability bound. The
/// criterion is one-sided; `pass = false` never claims separability, it
/// only means the test was inconclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InseparabilityReport {
    pub variances: NullifierVariances,
    pub threshold: f64,
    pub pass: bool,
    /// `threshold - sum`; positive when entanglement is certified.
    pub margin: f64,
    /// The point estimate sits within two standard errors of the bound.
    pub near_threshold: bool,
}

pub fn verify(
    run1: &RunRecords,
    run2: &RunRecords,
    spec: &NullifierSpec,
    boot: &BootstrapCfg,
) -> Result<InseparabilityReport> {
    let variances = nullifier_variance(run1, run2, spec, boot)?;
    let threshold = inseparability_threshold(spec);
    let margin = threshold - variances.sum;
    Ok(InseparabilityReport {
        variances,
        threshold,
        pass: variances.sum < threshold,
        margin,
        near_threshold: margin.abs() < 2.0 * variances.err_sum,
    })
}

/// Which frame an estimated matrix is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SFrame {
    /// Against the logical input: identity chains estimate the identity.
    VsInput,
    /// Against the mirrored reference: the tabulated relation matrices.
    VsReference,
}

/// Estimated input-output matrix with entry-wise standard errors. Noise
/// means the estimate need not be symplectic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SEstimate {
    pub s_hat: Matrix2<f64>,
    pub stderr: Matrix2<f64>,
    pub n_events: usize,
    pub frame: SFrame,
}

/// The four record sets feeding one matrix estimate: `run_ij` measures the
/// output at basis `i` and the reference at basis `j`, with basis 1 = x
/// (theta 0) and basis 2 = p (theta pi/2).
#[derive(Debug, Clone, Copy)]
pub struct SweepRuns<'a> {
    pub run_11: &'a RunRecords,
    pub run_12: &'a RunRecords,
    pub run_21: &'a RunRecords,
    pub run_22: &'a RunRecords,
}

impl<'a> SweepRuns<'a> {
    fn entry(&self, i: usize, j: usize) -> &'a RunRecords {
        match (i, j) {
            (0, 0) => self.run_11,
            (0, 1) => self.run_12,
            (1, 0) => self.run_21,
            (1, 1) => self.run_22,
            _ => unreachable!(),
        }
    }
}

/// Estimate the realized matrix from readout correlations:
/// `S_ij = <out_i ref_j> / d_j`, with the calibration denominators
/// `d = (<x_in x_ref>, <p_in p_ref>)` supplied by the caller (the logical
/// input is never measured directly). Standard errors by bootstrap.
pub fn estimate_s(
    runs: &SweepRuns,
    denominators: (f64, f64),
    frame: SFrame,
    boot: &BootstrapCfg,
) -> Result<SEstimate> {
    let signed = frame_denominators(denominators, frame)?;
    let mut s_hat = Matrix2::zeros();
    let mut stderr = Matrix2::zeros();
    let mut n_events = usize::MAX;
    for i in 0..2 {
        for j in 0..2 {
            let run = runs.entry(i, j);
            check_bases(
                run,
                [0.0, HALF_PI][j],
                [0.0, HALF_PI][i],
                &format!("S[{},{}]", i + 1, j + 1),
            )?;
            let products: Vec<f64> = run.corrected_pairs().iter().map(|&(r, o)| r * o).collect();
            n_events = n_events.min(products.len());
            let d = signed[j];
            let b = bootstrap(
                &products,
                |p| p.iter().sum::<f64>() / p.len() as f64 / d,
                boot.n_resamples,
                boot.seed ^ ((i * 2 + j) as u64) << 8,
            )?;
            s_hat[(i, j)] = b.estimate;
            stderr[(i, j)] = b.std_error;
        }
    }
    Ok(SEstimate {
        s_hat,
        stderr,
        n_events,
        frame,
    })
}

/// The infinite-statistics estimate: the same ratio evaluated on exact
/// moments. Errors are zero by construction.
pub fn estimate_s_analytic(chain: &AnalyticChain, frame: SFrame) -> Result<Matrix2<f64>> {
    let signed = frame_denominators(chain.input_ref_denominators(), frame)?;
    let cross = chain.out_ref_cross();
    Ok(Matrix2::new(
        cross[(0, 0)] / signed[0],
        cross[(0, 1)] / signed[1],
        cross[(1, 0)] / signed[0],
        cross[(1, 1)] / signed[1],
    ))
}

fn frame_denominators(denominators: (f64, f64), frame: SFrame) -> Result<[f64; 2]> {
    let (dx, dp) = denominators;
    if dx.abs() < 1e-300 {
        return Err(Error::ZeroDenominator(1));
    }
    if dp.abs() < 1e-300 {
        return Err(Error::ZeroDenominator(2));
    }
    Ok(match frame {
        SFrame::VsInput => [dx, dp],
        SFrame::VsReference => [-dx, dp],
    })
}

/// Denominator calibration from identity-schedule runs: for plain
/// teleportation the output mirrors the input, so `<x_out x_ref>` estimates
/// `<x_in x_ref>` directly (and likewise for p).
pub fn calibrate_denominators(run_xx: &RunRecords, run_pp: &RunRecords) -> Result<(f64, f64)> {
    check_bases(run_xx, 0.0, 0.0, "calibration x")?;
    check_bases(run_pp, HALF_PI, HALF_PI, "calibration p")?;
    let mean_product = |run: &RunRecords| {
        let pairs = run.corrected_pairs();
        pairs.iter().map(|&(r, o)| r * o).sum::<f64>() / pairs.len() as f64
    };
    Ok((mean_product(run_xx), mean_product(run_pp)))
}

/// Ideal relation matrix of a named gate, used as the theory curve for
/// sweep comparisons. Computed from the gate matrices directly, not through
/// the measurement-map route.
pub fn theory_matrix(gate: Gate, phi: f64, frame: SFrame) -> Result<Matrix2<f64>> {
    let target = gate_target(gate, phi)?;
    Ok(match frame {
        SFrame::VsInput => *target.matrix(),
        SFrame::VsReference => reference_frame_matrix(&target),
    })
}

/// Noise growth of repeated teleportation: after `n` steps the nullifier
/// variances are `(n+1) exp(-2 r)` vacuum units per quadrature.
pub fn predict_multistep_variance(n: usize, r_x: f64, r_p: f64) -> (f64, f64) {
    let steps = n as f64 + 1.0;
    (steps * (-2.0 * r_x).exp(), steps * (-2.0 * r_p).exp())
}

#[cfg(test)]
mod tests;
