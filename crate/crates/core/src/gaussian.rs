//! Exact Gaussian-state engine: states, symplectic maps, loss channels and
//! homodyne conditioning/sampling.
//!
//! Conventions used throughout the crate:
//!
//! * Quadratures are ordered block-wise, `(x_1 .. x_n, p_1 .. p_n)`.
//! * `hbar = 1`. Covariances are stored in *vacuum units*, i.e. multiples of
//!   the vacuum quadrature variance `hbar/2`, so the vacuum covariance is the
//!   identity matrix. Means are in units of `sqrt(hbar/2)`.
//! * A homodyne measurement at angle `theta` measures
//!   `x(theta) = cos(theta) x + sin(theta) p`.
//!
//! All operations are pure: they take a state by reference and return a new
//! one. `GaussianState` has no interior mutability and is safe to share
//! across threads.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Symmetry tolerance for covariance matrices.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Tolerance on the symplectic identity `S^T Omega S = Omega`.
pub const SYMPLECTIC_TOL: f64 = 1e-10;
/// Slack allowed on the uncertainty bound (symplectic eigenvalues >= 1).
pub const UNCERTAINTY_TOL: f64 = 1e-9;

/// Standard symplectic form for the `(x.., p..)` ordering:
/// `Omega = [[0, I], [-I, 0]]`.
pub fn symplectic_form(n_modes: usize) -> DMatrix<f64> {
    let mut omega = DMatrix::zeros(2 * n_modes, 2 * n_modes);
    for k in 0..n_modes {
        omega[(k, n_modes + k)] = 1.0;
        omega[(n_modes + k, k)] = -1.0;
    }
    omega
}

/// `|a^T Omega b| * hbar` for two quadrature coefficient vectors over the
/// same mode set. With `hbar = 1` the canonical pair gives 1; expressed in
/// vacuum units the same commutator is worth 2.
pub fn commutator_magnitude(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "coefficient vectors over the same modes");
    assert_eq!(a.len() % 2, 0, "coefficients come in (x.., p..) blocks");
    let n = a.len() / 2;
    let mut acc = 0.0;
    for k in 0..n {
        acc += a[k] * b[n + k] - a[n + k] * b[k];
    }
    acc.abs()
}

/// Which quadrature a single-mode squeezer shrinks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SqueezeAxis {
    X,
    P,
}

/// Sign convention of the balanced beamsplitter: which input picks up the
/// minus sign on output B.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BsSign {
    /// `A = (u + v)/sqrt2`, `B = (v - u)/sqrt2`; the `(A-B)/sqrt2`
    /// combination recovers input `u` and `(A+B)/sqrt2` recovers input `v`.
    #[default]
    MinusFirst,
    /// `A = (u + v)/sqrt2`, `B = (u - v)/sqrt2`.
    MinusSecond,
}

/// One measured quadrature: mode index plus homodyne angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSelector {
    mode: usize,
    theta: f64,
}

impl QuadratureSelector {
    /// `theta` is normalized into `[0, 2*pi)`.
    pub fn new(mode: usize, theta: f64) -> Self {
        let two_pi = 2.0 * std::f64::consts::PI;
        let mut t = theta % two_pi;
        if t < 0.0 {
            t += two_pi;
        }
        if t >= two_pi {
            t = 0.0;
        }
        Self { mode, theta: t }
    }

    pub fn mode(&self) -> usize {
        self.mode
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    fn coefficients(&self, n_modes: usize) -> DVector<f64> {
        let mut c = DVector::zeros(2 * n_modes);
        c[self.mode] = self.theta.cos();
        c[n_modes + self.mode] = self.theta.sin();
        c
    }
}

/// A Gaussian operation in the Heisenberg picture: `q_out = S q_in + c`
/// with `S` symplectic.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticMap {
    s: DMatrix<f64>,
    c: DVector<f64>,
}

impl SymplecticMap {
    /// Build a map from its matrix and displacement, checking the symplectic
    /// identity within [`SYMPLECTIC_TOL`].
    pub fn new(s: DMatrix<f64>, c: DVector<f64>) -> Result<Self> {
        if s.nrows() != s.ncols() || !s.nrows().is_multiple_of(2) || s.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "symplectic matrix must be 2n x 2n, got {}x{}",
                s.nrows(),
                s.ncols()
            )));
        }
        if c.len() != s.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "displacement length {} does not match matrix size {}",
                c.len(),
                s.nrows()
            )));
        }
        let n = s.nrows() / 2;
        let omega = symplectic_form(n);
        let defect = (s.transpose() * &omega * &s - &omega).abs().max();
        if defect > SYMPLECTIC_TOL {
            return Err(Error::DimensionMismatch(format!(
                "matrix is not symplectic: |S^T Omega S - Omega| = {defect:e}"
            )));
        }
        Ok(Self { s, c })
    }

    /// Identity map on `n` modes.
    pub fn identity(n_modes: usize) -> Self {
        Self {
            s: DMatrix::identity(2 * n_modes, 2 * n_modes),
            c: DVector::zeros(2 * n_modes),
        }
    }

    /// Embed a 2x2 single-mode matrix as a one-mode map.
    pub fn single_mode(m: [[f64; 2]; 2]) -> Result<Self> {
        let s = DMatrix::from_row_slice(2, 2, &[m[0][0], m[0][1], m[1][0], m[1][1]]);
        Self::new(s, DVector::zeros(2))
    }

    /// Pure displacement on one mode.
    pub fn displacement(dx: f64, dp: f64) -> Self {
        Self {
            s: DMatrix::identity(2, 2),
            c: DVector::from_column_slice(&[dx, dp]),
        }
    }

    pub fn n_modes(&self) -> usize {
        self.s.nrows() / 2
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn displacement_vector(&self) -> &DVector<f64> {
        &self.c
    }

    /// Composition: apply `other` first, then `self`.
    pub fn compose(&self, other: &SymplecticMap) -> Result<Self> {
        if self.n_modes() != other.n_modes() {
            return Err(Error::DimensionMismatch(
                "composing maps over different mode counts".into(),
            ));
        }
        Ok(Self {
            s: &self.s * &other.s,
            c: &self.s * &other.c + &self.c,
        })
    }
}

/// Balanced (50:50) beamsplitter on two modes, acting identically on the x
/// and p blocks. With [`BsSign::MinusFirst`] the outputs are
/// `A = (u + v)/sqrt2`, `B = (v - u)/sqrt2`.
pub fn beamsplitter_5050(sign: BsSign) -> SymplecticMap {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let block = match sign {
        BsSign::MinusFirst => [[r, r], [-r, r]],
        BsSign::MinusSecond => [[r, r], [r, -r]],
    };
    let mut s = DMatrix::zeros(4, 4);
    for (i, row) in block.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            s[(i, j)] = v;
            s[(2 + i, 2 + j)] = v;
        }
    }
    SymplecticMap {
        s,
        c: DVector::zeros(4),
    }
}

/// Gaussian state over `n` modes: mean vector and covariance matrix in the
/// block quadrature ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    n_modes: usize,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussianState {
    /// Build a state from raw moments, validating symmetry and the
    /// uncertainty relation.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let dim = mean.len();
        if dim == 0 || !dim.is_multiple_of(2) || cov.nrows() != dim || cov.ncols() != dim {
            return Err(Error::DimensionMismatch(format!(
                "moments must be length 2n and 2n x 2n, got {} and {}x{}",
                dim,
                cov.nrows(),
                cov.ncols()
            )));
        }
        let state = Self {
            n_modes: dim / 2,
            mean,
            cov,
        };
        state.check_symmetry()?;
        state.check_uncertainty()?;
        Ok(state)
    }

    /// Vacuum on `n` modes: zero mean, identity covariance.
    pub fn vacuum(n_modes: usize) -> Self {
        assert!(n_modes >= 1, "need at least one mode");
        Self {
            n_modes,
            mean: DVector::zeros(2 * n_modes),
            cov: DMatrix::identity(2 * n_modes, 2 * n_modes),
        }
    }

    /// Single-mode squeezed vacuum: variance `exp(-2r)` along `axis`,
    /// `exp(+2r)` along the conjugate quadrature.
    pub fn squeezed_vacuum(r: f64, axis: SqueezeAxis) -> Result<Self> {
        if r < 0.0 {
            return Err(Error::NegativeSqueezing(r));
        }
        let (vx, vp) = match axis {
            SqueezeAxis::X => ((-2.0 * r).exp(), (2.0 * r).exp()),
            SqueezeAxis::P => ((2.0 * r).exp(), (-2.0 * r).exp()),
        };
        let mut cov = DMatrix::zeros(2, 2);
        cov[(0, 0)] = vx;
        cov[(1, 1)] = vp;
        Ok(Self {
            n_modes: 1,
            mean: DVector::zeros(2),
            cov,
        })
    }

    /// Two-mode squeezed state from interfering an x-squeezed and a
    /// p-squeezed vacuum on a balanced beamsplitter. The sign convention
    /// makes `x_1 + x_2` and `p_1 - p_2` the squeezed combinations:
    /// `Var(x_1 + x_2) = 2 exp(-2 r_x)` and `Var(p_1 - p_2) = 2 exp(-2 r_p)`
    /// in vacuum units.
    pub fn epr_pair(r_x: f64, r_p: f64) -> Result<Self> {
        let sq_x = Self::squeezed_vacuum(r_x, SqueezeAxis::X)?;
        let sq_p = Self::squeezed_vacuum(r_p, SqueezeAxis::P)?;
        // mode 1 = (s1 + s2)/sqrt2, mode 2 = (s1 - s2)/sqrt2
        sq_x.tensor(&sq_p)
            .apply(&beamsplitter_5050(BsSign::MinusSecond), &[0, 1])
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Tensor product, keeping the block quadrature ordering.
    pub fn tensor(&self, other: &GaussianState) -> GaussianState {
        let n = self.n_modes + other.n_modes;
        let mut mean = DVector::zeros(2 * n);
        let mut cov = DMatrix::zeros(2 * n, 2 * n);
        let map_self = |i: usize| {
            if i < self.n_modes {
                i
            } else {
                n + (i - self.n_modes)
            }
        };
        let map_other = |i: usize| {
            if i < other.n_modes {
                self.n_modes + i
            } else {
                n + self.n_modes + (i - other.n_modes)
            }
        };
        for i in 0..2 * self.n_modes {
            mean[map_self(i)] = self.mean[i];
            for j in 0..2 * self.n_modes {
                cov[(map_self(i), map_self(j))] = self.cov[(i, j)];
            }
        }
        for i in 0..2 * other.n_modes {
            mean[map_other(i)] = other.mean[i];
            for j in 0..2 * other.n_modes {
                cov[(map_other(i), map_other(j))] = other.cov[(i, j)];
            }
        }
        GaussianState {
            n_modes: n,
            mean,
            cov,
        }
    }

    /// Apply a symplectic map on the listed modes:
    /// `mean <- S mean + c`, `cov <- S cov S^T`, embedded into the full
    /// register.
    pub fn apply(&self, map: &SymplecticMap, modes: &[usize]) -> Result<GaussianState> {
        let m = modes.len();
        if map.n_modes() != m {
            return Err(Error::DimensionMismatch(format!(
                "map acts on {} modes but {} indices were given",
                map.n_modes(),
                m
            )));
        }
        for (i, &mode) in modes.iter().enumerate() {
            if mode >= self.n_modes {
                return Err(Error::ModeOutOfRange {
                    index: mode,
                    n_modes: self.n_modes,
                });
            }
            if modes[..i].contains(&mode) {
                return Err(Error::RepeatedMode(mode));
            }
        }
        // Quadrature slot i of the map acts on global quadrature embed[i].
        let n = self.n_modes;
        let embed: Vec<usize> = modes
            .iter()
            .copied()
            .chain(modes.iter().map(|&k| n + k))
            .collect();
        let mut s_full = DMatrix::identity(2 * n, 2 * n);
        let mut c_full = DVector::zeros(2 * n);
        for (i, &gi) in embed.iter().enumerate() {
            c_full[gi] = map.c[i];
            for (j, &gj) in embed.iter().enumerate() {
                s_full[(gi, gj)] = map.s[(i, j)];
            }
        }
        let mean = &s_full * &self.mean + &c_full;
        let mut cov = &s_full * &self.cov * s_full.transpose();
        symmetrize(&mut cov);
        Ok(GaussianState {
            n_modes: n,
            mean,
            cov,
        })
    }

    /// Attenuation channel with transmissivity `eta` on the listed modes:
    /// `mean <- sqrt(eta) mean`, `cov <- eta cov + (1 - eta) I` there.
    pub fn loss(&self, eta: f64, modes: &[usize]) -> Result<GaussianState> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::EtaOutOfRange(eta));
        }
        for (i, &mode) in modes.iter().enumerate() {
            if mode >= self.n_modes {
                return Err(Error::ModeOutOfRange {
                    index: mode,
                    n_modes: self.n_modes,
                });
            }
            if modes[..i].contains(&mode) {
                return Err(Error::RepeatedMode(mode));
            }
        }
        let n = self.n_modes;
        let root = eta.sqrt();
        let mut scale = DVector::from_element(2 * n, 1.0);
        for &k in modes {
            scale[k] = root;
            scale[n + k] = root;
        }
        let mut mean = self.mean.clone();
        let mut cov = self.cov.clone();
        for i in 0..2 * n {
            mean[i] *= scale[i];
            for j in 0..2 * n {
                cov[(i, j)] *= scale[i] * scale[j];
            }
        }
        for &k in modes {
            cov[(k, k)] += 1.0 - eta;
            cov[(n + k, n + k)] += 1.0 - eta;
        }
        Ok(GaussianState {
            n_modes: n,
            mean,
            cov,
        })
    }

    /// Exact first and second moments of the selected quadratures.
    pub fn quadrature_moments(
        &self,
        sels: &[QuadratureSelector],
    ) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let k = sels.len();
        let mut c = DMatrix::zeros(k, 2 * self.n_modes);
        for (row, sel) in sels.iter().enumerate() {
            if sel.mode >= self.n_modes {
                return Err(Error::ModeOutOfRange {
                    index: sel.mode,
                    n_modes: self.n_modes,
                });
            }
            c.row_mut(row)
                .copy_from(&sel.coefficients(self.n_modes).transpose());
        }
        let mean = &c * &self.mean;
        let mut cov = &c * &self.cov * c.transpose();
        symmetrize(&mut cov);
        Ok((mean, cov))
    }

    /// Homodyne-measure one quadrature. Returns the sampled outcome and the
    /// conditioned remainder; the measured mode is removed, so the result
    /// has one mode fewer (`None` when the last mode was measured).
    pub fn homodyne_sample<R: Rng + ?Sized>(
        &self,
        sel: &QuadratureSelector,
        rng: &mut R,
    ) -> Result<(f64, Option<GaussianState>)> {
        if sel.mode >= self.n_modes {
            return Err(Error::ModeOutOfRange {
                index: sel.mode,
                n_modes: self.n_modes,
            });
        }
        let c = sel.coefficients(self.n_modes);
        let var = (c.transpose() * &self.cov * &c)[(0, 0)];
        if var <= 0.0 {
            return Err(Error::NotPositiveDefinite);
        }
        let mu = c.dot(&self.mean);
        let z: f64 = rng.sample(StandardNormal);
        let outcome = mu + var.sqrt() * z;
        let remainder = self.condition_and_remove(sel, outcome)?;
        Ok((outcome, remainder))
    }

    /// Condition the other modes on an observed value of the selected
    /// quadrature and drop the measured mode (Schur complement update).
    pub fn condition_and_remove(
        &self,
        sel: &QuadratureSelector,
        outcome: f64,
    ) -> Result<Option<GaussianState>> {
        if sel.mode >= self.n_modes {
            return Err(Error::ModeOutOfRange {
                index: sel.mode,
                n_modes: self.n_modes,
            });
        }
        if self.n_modes == 1 {
            return Ok(None);
        }
        let n = self.n_modes;
        let c = sel.coefficients(n);
        let var = (c.transpose() * &self.cov * &c)[(0, 0)];
        if var <= 0.0 {
            return Err(Error::NotPositiveDefinite);
        }
        let cross = &self.cov * &c;
        let mu = c.dot(&self.mean);
        let mean_full = &self.mean + &cross * ((outcome - mu) / var);
        let cov_full = &self.cov - &cross * cross.transpose() / var;

        let keep: Vec<usize> = (0..2 * n)
            .filter(|&i| i != sel.mode && i != n + sel.mode)
            .collect();
        let mut mean = DVector::zeros(2 * (n - 1));
        let mut cov = DMatrix::zeros(2 * (n - 1), 2 * (n - 1));
        for (i, &gi) in keep.iter().enumerate() {
            mean[i] = mean_full[gi];
            for (j, &gj) in keep.iter().enumerate() {
                cov[(i, j)] = cov_full[(gi, gj)];
            }
        }
        symmetrize(&mut cov);
        Ok(Some(GaussianState {
            n_modes: n - 1,
            mean,
            cov,
        }))
    }

    /// Displace the mean of one mode.
    pub fn displace(&self, mode: usize, dx: f64, dp: f64) -> Result<GaussianState> {
        if mode >= self.n_modes {
            return Err(Error::ModeOutOfRange {
                index: mode,
                n_modes: self.n_modes,
            });
        }
        let mut mean = self.mean.clone();
        mean[mode] += dx;
        mean[self.n_modes + mode] += dp;
        Ok(GaussianState {
            n_modes: self.n_modes,
            mean,
            cov: self.cov.clone(),
        })
    }

    /// Symplectic eigenvalues of the covariance matrix (each listed once).
    pub fn symplectic_eigenvalues(&self) -> Vec<f64> {
        symplectic_eigenvalues(&self.cov)
    }

    fn check_symmetry(&self) -> Result<()> {
        let defect = (&self.cov - self.cov.transpose()).abs().max();
        if defect > SYMMETRY_TOL {
            return Err(Error::DimensionMismatch(format!(
                "covariance not symmetric: max asymmetry {defect:e}"
            )));
        }
        Ok(())
    }

    fn check_uncertainty(&self) -> Result<()> {
        for nu in self.symplectic_eigenvalues() {
            if nu < 1.0 - UNCERTAINTY_TOL {
                return Err(Error::DimensionMismatch(format!(
                    "uncertainty relation violated: symplectic eigenvalue {nu}"
                )));
            }
        }
        Ok(())
    }
}

/// Symplectic eigenvalues of a covariance matrix: moduli of the eigenvalues
/// of `i Omega cov`, each pair counted once.
pub fn symplectic_eigenvalues(cov: &DMatrix<f64>) -> Vec<f64> {
    let n = cov.nrows() / 2;
    let m = symplectic_form(n) * cov;
    let eigs = m.complex_eigenvalues();
    let mut nus: Vec<f64> = eigs.iter().map(|e| e.im.abs()).collect();
    nus.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // eigenvalues come in +/- i nu pairs; keep one of each
    nus.into_iter().skip(1).step_by(2).collect()
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            m[(i, j)] = 0.5 * (m[(i, j)] + t[(i, j)]);
        }
    }
}
