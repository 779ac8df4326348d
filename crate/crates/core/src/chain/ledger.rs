//! Exact moment propagation for a chain run.
//!
//! Every measured quantity of the chain is a linear combination of
//! independent zero-mean Gaussian sources: the four squeezed quadratures of
//! each resource pair plus one vacuum mode per loss port. Tracking those
//! coefficient vectors gives exact joint moments of all readouts (the
//! measured observables live on distinct modes and commute, so their joint
//! statistics are classical), which serves both the analytic evaluation
//! path and the factored-Gaussian shot sampler.

use nalgebra::{DMatrix, Matrix2, Matrix4};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{ChainConfig, FeedforwardMode, MeasurementSchedule, ShotRecord};
use crate::error::{Error, Result};
use crate::gates::{v_map, SingleModeTarget};
use crate::rng::shot_rng;

const SQRT_HALF: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// A linear functional over the source register.
#[derive(Debug, Clone, Default)]
struct Lin(Vec<f64>);

impl Lin {
    fn axpy(&mut self, a: f64, other: &Lin) {
        if self.0.len() < other.0.len() {
            self.0.resize(other.0.len(), 0.0);
        }
        for (dst, src) in self.0.iter_mut().zip(&other.0) {
            *dst += a * src;
        }
    }

    fn scale(&mut self, a: f64) {
        for c in &mut self.0 {
            *c *= a;
        }
    }

    fn combine(a: f64, x: &Lin, b: f64, y: &Lin) -> Lin {
        let mut out = Lin::default();
        out.axpy(a, x);
        out.axpy(b, y);
        out
    }

    /// `cos(theta) x + sin(theta) p`.
    fn at_angle(theta: f64, x: &Lin, p: &Lin) -> Lin {
        Lin::combine(theta.cos(), x, theta.sin(), p)
    }
}

fn cov(vars: &[f64], a: &Lin, b: &Lin) -> f64 {
    a.0.iter()
        .zip(&b.0)
        .zip(vars)
        .map(|((ca, cb), v)| ca * cb * v)
        .sum()
}

/// Source register: variances of the independent Gaussian inputs, in vacuum
/// units.
#[derive(Debug, Default)]
struct Sources {
    vars: Vec<f64>,
}

impl Sources {
    fn fresh(&mut self, var: f64) -> Lin {
        self.vars.push(var);
        let mut coeffs = vec![0.0; self.vars.len()];
        coeffs[self.vars.len() - 1] = 1.0;
        Lin(coeffs)
    }

    /// One resource pair after creation loss: returns the quadrature
    /// functionals `(l_x, l_p, r_x, r_p)` of its two halves.
    fn resource_pair(&mut self, r_x: f64, r_p: f64, eta: f64) -> [Lin; 4] {
        let s1x = self.fresh((-2.0 * r_x).exp());
        let s1p = self.fresh((2.0 * r_x).exp());
        let s2x = self.fresh((2.0 * r_p).exp());
        let s2p = self.fresh((-2.0 * r_p).exp());
        let mut l_x = Lin::combine(SQRT_HALF, &s1x, SQRT_HALF, &s2x);
        let mut l_p = Lin::combine(SQRT_HALF, &s1p, SQRT_HALF, &s2p);
        let mut r_xq = Lin::combine(SQRT_HALF, &s1x, -SQRT_HALF, &s2x);
        let mut r_pq = Lin::combine(SQRT_HALF, &s1p, -SQRT_HALF, &s2p);
        self.attenuate(&mut l_x, &mut l_p, eta);
        self.attenuate(&mut r_xq, &mut r_pq, eta);
        [l_x, l_p, r_xq, r_pq]
    }

    /// Attenuation channel on one mode: mixes in a fresh vacuum pair.
    fn attenuate(&mut self, x: &mut Lin, p: &mut Lin, eta: f64) {
        if eta >= 1.0 {
            return;
        }
        let root = eta.sqrt();
        let mix = (1.0 - eta).sqrt();
        let vx = self.fresh(1.0);
        let vp = self.fresh(1.0);
        x.scale(root);
        x.axpy(mix, &vx);
        p.scale(root);
        p.axpy(mix, &vp);
    }
}

/// Exact joint moments of one chain run, with feedforward applied the way
/// the run specifies. All second moments are in vacuum units; every first
/// moment is zero.
#[derive(Debug)]
pub struct AnalyticChain {
    vars: Vec<f64>,
    // measured-equivalent reference quadratures (detection loss included)
    ref_x: Lin,
    ref_p: Lin,
    // corrected output, as recorded (detection loss, plus data-level
    // corrections in postprocess mode)
    out_x: Lin,
    out_p: Lin,
    // recorded output before feedforward corrections
    out_x_raw: Lin,
    out_p_raw: Lin,
    // corrected output mode before the detector (for gate-error residuals)
    mode_x: Lin,
    mode_p: Lin,
    // logical input half (after creation loss)
    in_x: Lin,
    in_p: Lin,
    m_gate: Vec<(Lin, Lin)>,
    theta_ref_eff: f64,
    theta_out_eff: f64,
    v_total: Matrix2<f64>,
    feedforward: FeedforwardMode,
}

impl AnalyticChain {
    pub(super) fn build(
        cfg: &ChainConfig,
        schedule: &MeasurementSchedule,
        feedforward: FeedforwardMode,
    ) -> Self {
        let mut sources = Sources::default();
        // Analytic bases carry the deterministic driver quantization; jitter
        // is a per-shot effect and only exists in the sequential sampler.
        let eff = |theta: f64| match &cfg.phase_noise {
            Some(pn) => pn.quantize(theta),
            None => theta,
        };

        let [ref_x_mode, ref_p_mode, w_x0, w_p0] =
            sources.resource_pair(cfg.r_x, cfg.r_p, cfg.eta_resource);
        let in_x = w_x0.clone();
        let in_p = w_p0.clone();
        let mut ref_x = ref_x_mode;
        let mut ref_p = ref_p_mode;
        sources.attenuate(&mut ref_x, &mut ref_p, cfg.eta_detect);

        let mut w_x = w_x0;
        let mut w_p = w_p0;
        let mut m_gate = Vec::with_capacity(schedule.n_steps());
        // postprocess bookkeeping: per-step gains and step maps
        let mut step_data: Vec<(Matrix2<f64>, Matrix2<f64>)> = Vec::new();
        let mut v_total: Matrix2<f64> = Matrix2::identity();

        for pair_angles in schedule.gate_pairs() {
            let [l_x, l_p, r_x, r_p] = sources.resource_pair(cfg.r_x, cfg.r_p, cfg.eta_resource);
            // beamsplitter outputs: A = (L + w)/sqrt2, B = (w - L)/sqrt2
            let mut a_x = Lin::combine(SQRT_HALF, &l_x, SQRT_HALF, &w_x);
            let mut a_p = Lin::combine(SQRT_HALF, &l_p, SQRT_HALF, &w_p);
            let mut b_x = Lin::combine(SQRT_HALF, &w_x, -SQRT_HALF, &l_x);
            let mut b_p = Lin::combine(SQRT_HALF, &w_p, -SQRT_HALF, &l_p);
            sources.attenuate(&mut a_x, &mut a_p, cfg.eta_detect);
            sources.attenuate(&mut b_x, &mut b_p, cfg.eta_detect);
            let m_a = Lin::at_angle(eff(pair_angles.theta_a()), &a_x, &a_p);
            let m_b = Lin::at_angle(eff(pair_angles.theta_b()), &b_x, &b_p);

            w_x = r_x;
            w_p = r_p;
            let gains = super::step_gains(pair_angles);
            match feedforward {
                FeedforwardMode::InCircuit => {
                    w_x.axpy(gains[(0, 0)], &m_a);
                    w_x.axpy(gains[(0, 1)], &m_b);
                    w_p.axpy(gains[(1, 0)], &m_a);
                    w_p.axpy(gains[(1, 1)], &m_b);
                }
                FeedforwardMode::Postprocess => {
                    step_data.push((gains, *v_map(pair_angles).matrix()));
                }
            }
            m_gate.push((m_a, m_b));
            // The realized unitary part follows the effective (quantized)
            // bases; gain mismatch appears as residual-outcome coupling.
            let realized = crate::gates::AnglePair::new(
                eff(pair_angles.theta_a()),
                eff(pair_angles.theta_b()),
            )
            .unwrap_or(*pair_angles);
            v_total = v_map(&realized).matrix() * v_total;
        }

        // Data-level corrections: step-k outcomes displace the output by the
        // step gains propagated through all later step maps.
        let mut corr_x = Lin::default();
        let mut corr_p = Lin::default();
        if feedforward == FeedforwardMode::Postprocess {
            let mut suffix: Matrix2<f64> = Matrix2::identity();
            for (k, (gains, v_step)) in step_data.iter().enumerate().rev() {
                let c = suffix * gains;
                let (m_a, m_b) = &m_gate[k];
                corr_x.axpy(c[(0, 0)], m_a);
                corr_x.axpy(c[(0, 1)], m_b);
                corr_p.axpy(c[(1, 0)], m_a);
                corr_p.axpy(c[(1, 1)], m_b);
                suffix *= *v_step;
            }
        }

        let mut mode_x = w_x.clone();
        let mut mode_p = w_p.clone();
        mode_x.axpy(1.0, &corr_x);
        mode_p.axpy(1.0, &corr_p);

        let mut out_x_raw = w_x;
        let mut out_p_raw = w_p;
        sources.attenuate(&mut out_x_raw, &mut out_p_raw, cfg.eta_detect);
        let mut out_x = out_x_raw.clone();
        let mut out_p = out_p_raw.clone();
        out_x.axpy(1.0, &corr_x);
        out_p.axpy(1.0, &corr_p);

        AnalyticChain {
            vars: sources.vars,
            ref_x,
            ref_p,
            out_x,
            out_p,
            out_x_raw,
            out_p_raw,
            mode_x,
            mode_p,
            in_x,
            in_p,
            m_gate,
            theta_ref_eff: eff(schedule.theta_ref()),
            theta_out_eff: eff(schedule.theta_out()),
            v_total,
            feedforward,
        }
    }

    fn cov(&self, a: &Lin, b: &Lin) -> f64 {
        cov(&self.vars, a, b)
    }

    /// Covariance of `(x_ref, p_ref, x_out, p_out)` as recorded, with
    /// feedforward applied. Means are all zero.
    pub fn moments(&self) -> Matrix4<f64> {
        self.moments_of([&self.ref_x, &self.ref_p, &self.out_x, &self.out_p])
    }

    /// Same moments without feedforward corrections.
    pub fn moments_uncorrected(&self) -> Matrix4<f64> {
        self.moments_of([&self.ref_x, &self.ref_p, &self.out_x_raw, &self.out_p_raw])
    }

    fn moments_of(&self, q: [&Lin; 4]) -> Matrix4<f64> {
        let mut m = Matrix4::zeros();
        for i in 0..4 {
            for j in i..4 {
                let c = self.cov(q[i], q[j]);
                m[(i, j)] = c;
                m[(j, i)] = c;
            }
        }
        m
    }

    /// Cross-covariances `Cov(out_i, ref_j)` of the corrected records.
    pub fn out_ref_cross(&self) -> Matrix2<f64> {
        Matrix2::new(
            self.cov(&self.out_x, &self.ref_x),
            self.cov(&self.out_x, &self.ref_p),
            self.cov(&self.out_p, &self.ref_x),
            self.cov(&self.out_p, &self.ref_p),
        )
    }

    /// `(<x_in x_ref>, <p_in p_ref>)` between the logical input half and the
    /// measured reference; the calibration constants of the correlation
    /// estimator. The x entry is negative (anticorrelated halves).
    pub fn input_ref_denominators(&self) -> (f64, f64) {
        (
            self.cov(&self.in_x, &self.ref_x),
            self.cov(&self.in_p, &self.ref_p),
        )
    }

    /// Variance of `c_out x_out(theta_out) + c_ref x_ref(theta_ref)` over
    /// corrected records.
    pub fn combination_variance(
        &self,
        c_out: f64,
        theta_out: f64,
        c_ref: f64,
        theta_ref: f64,
    ) -> f64 {
        let out = Lin::at_angle(theta_out, &self.out_x, &self.out_p);
        let reference = Lin::at_angle(theta_ref, &self.ref_x, &self.ref_p);
        let total = Lin::combine(c_out, &out, c_ref, &reference);
        self.cov(&total, &total)
    }

    /// Covariance matrix of `(m_ref, m_out)` at the scheduled readout bases,
    /// corrected.
    pub fn readout_covariance(&self) -> Matrix2<f64> {
        let m_ref = Lin::at_angle(self.theta_ref_eff, &self.ref_x, &self.ref_p);
        let m_out = Lin::at_angle(self.theta_out_eff, &self.out_x, &self.out_p);
        Matrix2::new(
            self.cov(&m_ref, &m_ref),
            self.cov(&m_ref, &m_out),
            self.cov(&m_out, &m_ref),
            self.cov(&m_out, &m_out),
        )
    }

    /// Product of the step maps actually realized (with driver quantization
    /// when configured).
    pub fn v_total(&self) -> SingleModeTarget {
        SingleModeTarget::new(self.v_total).expect("product of det-1 maps")
    }

    /// Per-step covariances between the raw outcomes and the gate-error
    /// residual `q_out - V_total q_in` of the corrected output mode:
    /// `[Cov(m_a, res_x), Cov(m_a, res_p), Cov(m_b, res_x), Cov(m_b, res_p)]`.
    /// With the step gains in place these vanish in the strong-squeezing
    /// limit; with feedforward off they stay finite.
    pub fn outcome_residual_covariances(&self) -> Vec<[f64; 4]> {
        let mut res_x = self.mode_x.clone();
        res_x.axpy(-self.v_total[(0, 0)], &self.in_x);
        res_x.axpy(-self.v_total[(0, 1)], &self.in_p);
        let mut res_p = self.mode_p.clone();
        res_p.axpy(-self.v_total[(1, 0)], &self.in_x);
        res_p.axpy(-self.v_total[(1, 1)], &self.in_p);
        self.m_gate
            .iter()
            .map(|(m_a, m_b)| {
                [
                    self.cov(m_a, &res_x),
                    self.cov(m_a, &res_p),
                    self.cov(m_b, &res_x),
                    self.cov(m_b, &res_p),
                ]
            })
            .collect()
    }

    /// Regression slopes of the gate-error residual on each outcome:
    /// `Cov(m, res) / Var(m)`, i.e. how much the corrected output's
    /// conditional mean still depends on the recorded outcomes. With the
    /// step gains in place these vanish in the strong-squeezing limit;
    /// unlike the raw covariances they stay numerically meaningful there
    /// (the covariance itself is swamped by antisqueezed rounding noise).
    pub fn outcome_residual_slopes(&self) -> Vec<[f64; 4]> {
        self.m_gate
            .iter()
            .zip(self.outcome_residual_covariances())
            .map(|((m_a, m_b), covs)| {
                let va = self.cov(m_a, m_a);
                let vb = self.cov(m_b, m_b);
                [covs[0] / va, covs[1] / va, covs[2] / vb, covs[3] / vb]
            })
            .collect()
    }

    /// Same slopes against the *uncorrected* recorded output: what the
    /// outcomes couple to when feedforward is left out.
    pub fn outcome_raw_residual_slopes(&self) -> Vec<[f64; 4]> {
        self.m_gate
            .iter()
            .zip(self.outcome_raw_residual_covariances())
            .map(|((m_a, m_b), covs)| {
                let va = self.cov(m_a, m_a);
                let vb = self.cov(m_b, m_b);
                [covs[0] / va, covs[1] / va, covs[2] / vb, covs[3] / vb]
            })
            .collect()
    }

    /// Same covariances against the *uncorrected* recorded output: what the
    /// outcomes couple to when feedforward is left out. Finite squeezing
    /// keeps these large.
    pub fn outcome_raw_residual_covariances(&self) -> Vec<[f64; 4]> {
        let mut res_x = self.out_x_raw.clone();
        res_x.axpy(-self.v_total[(0, 0)], &self.in_x);
        res_x.axpy(-self.v_total[(0, 1)], &self.in_p);
        let mut res_p = self.out_p_raw.clone();
        res_p.axpy(-self.v_total[(1, 0)], &self.in_x);
        res_p.axpy(-self.v_total[(1, 1)], &self.in_p);
        self.m_gate
            .iter()
            .map(|(m_a, m_b)| {
                [
                    self.cov(m_a, &res_x),
                    self.cov(m_a, &res_p),
                    self.cov(m_b, &res_x),
                    self.cov(m_b, &res_p),
                ]
            })
            .collect()
    }

    /// Variances of the gate-error residual quadratures themselves.
    pub fn residual_variances(&self) -> (f64, f64) {
        let mut res_x = self.mode_x.clone();
        res_x.axpy(-self.v_total[(0, 0)], &self.in_x);
        res_x.axpy(-self.v_total[(0, 1)], &self.in_p);
        let mut res_p = self.mode_p.clone();
        res_p.axpy(-self.v_total[(1, 0)], &self.in_x);
        res_p.axpy(-self.v_total[(1, 1)], &self.in_p);
        (self.cov(&res_x, &res_x), self.cov(&res_p, &res_p))
    }

    /// Factored sampler over the joint outcome distribution.
    pub(super) fn outcome_sampler(&self) -> Result<OutcomeSampler> {
        let m_ref = Lin::at_angle(self.theta_ref_eff, &self.ref_x, &self.ref_p);
        // Records carry the corrected output for in-circuit runs (the
        // displacement is physical there) and the raw value otherwise.
        let (rec_x, rec_p) = match self.feedforward {
            FeedforwardMode::InCircuit => (&self.out_x, &self.out_p),
            FeedforwardMode::Postprocess => (&self.out_x_raw, &self.out_p_raw),
        };
        let m_out = Lin::at_angle(self.theta_out_eff, rec_x, rec_p);
        let mut outcomes: Vec<&Lin> = vec![&m_ref];
        for (m_a, m_b) in &self.m_gate {
            outcomes.push(m_a);
            outcomes.push(m_b);
        }
        outcomes.push(&m_out);
        let k = outcomes.len();
        let mut sigma = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in 0..=i {
                let c = cov(&self.vars, outcomes[i], outcomes[j]);
                sigma[(i, j)] = c;
                sigma[(j, i)] = c;
            }
        }
        let chol = sigma.cholesky().ok_or(Error::NotPositiveDefinite)?.unpack();
        Ok(OutcomeSampler { lower: chol })
    }
}

/// Samples full shot records from the exact joint outcome distribution.
pub(super) struct OutcomeSampler {
    lower: DMatrix<f64>,
}

impl OutcomeSampler {
    pub(super) fn sample_shot(&self, seed: u64, shot: u64, n_steps: usize) -> ShotRecord {
        let k = self.lower.nrows();
        let mut rng = shot_rng(seed, shot);
        let z: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
        let mut values = vec![0.0; k];
        for (i, value) in values.iter_mut().enumerate() {
            *value = z[..=i]
                .iter()
                .enumerate()
                .map(|(j, zj)| self.lower[(i, j)] * zj)
                .sum();
        }
        let gate_outcomes = (0..n_steps)
            .map(|s| (values[1 + 2 * s], values[2 + 2 * s]))
            .collect();
        ShotRecord {
            shot,
            reference: values[0],
            gate_outcomes,
            output: values[k - 1],
        }
    }
}
