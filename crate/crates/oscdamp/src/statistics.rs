//! Detection statistics of atoms leaving a steadily pumped cavity: a priori click
//! probabilities, correlation functions, waiting times, counting distributions and
//! Fano-Mandel factors.

use faer::{c64, Mat, MatRef};
use rayon::prelude::*;

use crate::error::{check_finite, Error, Result};
use crate::fock::{DensityMatrix, FockOperator};
use crate::linalg;
use crate::liouvillian::OscillatorParams;
use crate::micromaser::{scully_lamb, Branch, DetectionConfig, KickPair, BRANCH_TOL};
use crate::quadrature::gauss_legendre;
use crate::superop::{common_restriction, restrict_vector, SuperOperator};

/// Largest probability mass allowed beyond `n_max` in a counting distribution.
pub const COUNTING_TAIL_TOL: f64 = 1e-6;

/// `(eta_down Tr{A rho}, eta_up Tr{B rho})`, click probabilities per atom.
pub fn apriori_click_probs(kick: &KickPair, rho: &DensityMatrix, cfg: &DetectionConfig) -> Result<(f64, f64)> {
    cfg.validate()?;
    let pa = kick.probability(rho.as_operator(), Branch::Down)?;
    let pb = kick.probability(rho.as_operator(), Branch::Up)?;
    Ok((cfg.eta_down * pa, cfg.eta_up * pb))
}

/// Two-click correlation function `G_xy(t)` for a `to` click at `t` after a `from` click at 0.
#[derive(Clone, Debug)]
pub struct CorrelationCurve {
    pub from: Branch,
    pub to: Branch,
    pub t_grid: Vec<f64>,
    pub values: Vec<f64>,
}

/// Density of the delay until the next `to` click after a `from` click.
#[derive(Clone, Debug)]
pub struct WaitingCurve {
    pub from: Branch,
    pub to: Branch,
    pub t_grid: Vec<f64>,
    pub values: Vec<f64>,
}

/// Probabilities `w_n(t)` of `n` clicks in a window of length `t`.
#[derive(Clone, Debug)]
pub struct CountingDistribution {
    pub t: f64,
    pub probs: Vec<f64>,
    pub truncation_mass: f64,
}

impl CountingDistribution {
    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(n, w)| n as f64 * w).sum()
    }

    pub fn factorial_moment2(&self) -> f64 {
        self.probs.iter().enumerate().map(|(n, w)| (n * n.saturating_sub(1)) as f64 * w).sum()
    }
}

/// Fano-Mandel factor `Q(t)` of the click count.
#[derive(Clone, Debug)]
pub struct FanoCurve {
    pub branch: Branch,
    pub t_grid: Vec<f64>,
    pub values: Vec<f64>,
}

/// A steadily running cavity with its kick, detectors and steady state.
///
/// All maps are held restricted to the diagonals occupied by the steady state.
#[derive(Clone, Debug)]
pub struct DetectionModel {
    kick: KickPair,
    cfg: DetectionConfig,
    steady: DensityMatrix,
    l0: Mat<c64>,
    a: Mat<c64>,
    b: Mat<c64>,
    rho: Mat<c64>,
    ones: Mat<c64>,
}

fn check_times(ts: &[f64]) -> Result<()> {
    for &t in ts {
        check_finite("time", t)?;
        if t < 0.0 {
            return Err(Error::Domain(format!("time {t} must be non-negative")));
        }
    }
    Ok(())
}

fn dot(row: MatRef<'_, c64>, col: MatRef<'_, c64>) -> c64 {
    (0..col.nrows()).map(|i| row[(i, 0)] * col[(i, 0)]).sum()
}

fn scaled(m: MatRef<'_, c64>, s: f64) -> Mat<c64> {
    linalg::scaled(m, c64::new(s, 0.0))
}

impl DetectionModel {
    /// Model for the Scully-Lamb generator of `p`, `kick` and `cfg.rate` on `kick.dim()` levels.
    pub fn new(p: &OscillatorParams, kick: KickPair, cfg: DetectionConfig) -> Result<Self> {
        let l0 = scully_lamb(p, &kick, cfg.rate, kick.dim())?;
        let steady = DensityMatrix::normalized(&l0.steady_state()?)?;
        Self::from_parts(&l0, kick, cfg, steady)
    }

    pub fn from_parts(l0: &SuperOperator, kick: KickPair, cfg: DetectionConfig, steady: DensityMatrix) -> Result<Self> {
        cfg.validate()?;
        let dim = l0.dim();
        if kick.dim() != dim || steady.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: kick.dim().min(steady.dim()) });
        }
        let sector = common_restriction(&[l0, &kick.a, &kick.b], steady.as_operator());
        Ok(Self {
            l0: l0.restricted(sector)?,
            a: kick.a.restricted(sector)?,
            b: kick.b.restricted(sector)?,
            rho: restrict_vector(steady.as_operator(), sector),
            ones: restrict_vector(&FockOperator::identity(dim), sector),
            kick,
            cfg,
            steady,
        })
    }

    pub fn kick(&self) -> &KickPair {
        &self.kick
    }

    pub fn config(&self) -> &DetectionConfig {
        &self.cfg
    }

    pub fn steady_state(&self) -> &DensityMatrix {
        &self.steady
    }

    /// Same model with other detector efficiencies.
    pub fn with_config(&self, cfg: DetectionConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.rate != self.cfg.rate {
            return Err(Error::Domain("changing the arrival rate changes the generator".into()));
        }
        Ok(Self { cfg, ..self.clone() })
    }

    fn branch_mat(&self, b: Branch) -> &Mat<c64> {
        match b {
            Branch::Down => &self.a,
            Branch::Up => &self.b,
        }
    }

    /// Row vector `Tr{X .}` for the branch `X`.
    fn branch_row(&self, b: Branch) -> Mat<c64> {
        self.branch_mat(b).transpose() * &self.ones
    }

    fn trace(&self, v: MatRef<'_, c64>) -> f64 {
        dot(self.ones.as_ref(), v).re
    }

    /// `Tr{X rho_ss}`
    pub fn branch_probability(&self, b: Branch) -> f64 {
        self.trace((self.branch_mat(b) * &self.rho).as_ref())
    }

    fn conditioned(&self, b: Branch) -> Result<(Mat<c64>, f64)> {
        let v = self.branch_mat(b) * &self.rho;
        let p = self.trace(v.as_ref());
        if !(p > BRANCH_TOL) {
            return Err(Error::Domain(format!("{b} clicks have probability {p:e} in the steady state")));
        }
        Ok((v, p))
    }

    /// `(eta_down Tr{A rho_ss}, eta_up Tr{B rho_ss})`
    pub fn apriori(&self) -> (f64, f64) {
        (
            self.cfg.eta_down * self.branch_probability(Branch::Down),
            self.cfg.eta_up * self.branch_probability(Branch::Up),
        )
    }

    /// `G_xy(t) = Tr{Y exp(L0 t) X rho_ss} / (Tr{Y rho_ss} Tr{X rho_ss})`
    pub fn correlation(&self, from: Branch, to: Branch, t_grid: &[f64]) -> Result<CorrelationCurve> {
        check_times(t_grid)?;
        let (v, px) = self.conditioned(from)?;
        let py = self.branch_probability(to);
        if !(py > BRANCH_TOL) {
            return Err(Error::Domain(format!("{to} clicks have probability {py:e} in the steady state")));
        }
        let row = self.branch_row(to);
        let values = t_grid
            .par_iter()
            .map(|&t| {
                let e = linalg::expm(scaled(self.l0.as_ref(), t).as_ref())?;
                Ok(dot(row.as_ref(), (&e * &v).as_ref()).re / (px * py))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CorrelationCurve { from, to, t_grid: t_grid.to_vec(), values })
    }

    fn watched(&self, to: Branch) -> Result<(Mat<c64>, f64)> {
        let eta = self.cfg.eta(to);
        if !(eta > 0.0) {
            return Err(Error::Domain(format!("the {to} detector has zero efficiency")));
        }
        let rate = self.cfg.rate * eta;
        Ok((&self.l0 - &scaled(self.branch_mat(to).as_ref(), rate), rate))
    }

    /// `P_next(t) = r eta_y Tr{Y exp((L0 - r eta_y Y) t) X rho_ss} / Tr{X rho_ss}`,
    /// the density of the next `to` click at `t` after a `from` click at 0.
    pub fn waiting_time(&self, from: Branch, to: Branch, t_grid: &[f64]) -> Result<WaitingCurve> {
        check_times(t_grid)?;
        let (v, px) = self.conditioned(from)?;
        let (m, rate) = self.watched(to)?;
        let row = self.branch_row(to);
        let values = t_grid
            .par_iter()
            .map(|&t| {
                let e = linalg::expm(scaled(m.as_ref(), t).as_ref())?;
                Ok(rate * dot(row.as_ref(), (&e * &v).as_ref()).re / px)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(WaitingCurve { from, to, t_grid: t_grid.to_vec(), values })
    }

    /// Evaluator of the waiting-time density up to `horizon` that reuses cached
    /// exponentials, for quadrature and sampling.
    pub fn waiting_density(&self, from: Branch, to: Branch, horizon: f64) -> Result<WaitingDensity> {
        check_times(&[horizon])?;
        let (v, px) = self.conditioned(from)?;
        let (m, rate) = self.watched(to)?;
        let row = scaled(self.branch_row(to).as_ref(), rate / px);
        Ok(WaitingDensity { ladder: linalg::ExpLadder::with_horizon(m, horizon)?, row, start: v })
    }

    /// Probability that no `to` click happens within `t` after a `from` click.
    pub fn no_click_after(&self, from: Branch, to: Branch, t: f64) -> Result<f64> {
        check_times(&[t])?;
        let (v, px) = self.conditioned(from)?;
        let (m, _) = self.watched(to)?;
        let e = linalg::expm(scaled(m.as_ref(), t).as_ref())?;
        Ok(self.trace((&e * &v).as_ref()) / px)
    }

    /// Probability that no `branch` click happens in a window of length `t`.
    pub fn no_click_probability(&self, branch: Branch, t: f64) -> Result<f64> {
        self.generating_function(branch, t, 0.0)
    }

    /// `sum_n x^n w_n(t) = Tr{exp((L0 - (1 - x) r eta X) t) rho_ss}`
    pub fn generating_function(&self, branch: Branch, t: f64, x: f64) -> Result<f64> {
        check_times(&[t])?;
        check_finite("x", x)?;
        let rate = self.cfg.rate * self.cfg.eta(branch) * (1.0 - x);
        let m = &self.l0 - &scaled(self.branch_mat(branch).as_ref(), rate);
        let e = linalg::expm(scaled(m.as_ref(), t).as_ref())?;
        Ok(self.trace((&e * &self.rho).as_ref()))
    }

    /// Counting probabilities `w_0..w_{n_max}` for `branch` clicks in a window of length `t`,
    /// from the exponential of the block-bidiagonal counting generator.
    pub fn counting_distribution(&self, branch: Branch, t: f64, n_max: usize) -> Result<CountingDistribution> {
        check_times(&[t])?;
        if n_max == 0 {
            return Err(Error::Domain("n_max must be at least 1".into()));
        }
        let c = scaled(self.branch_mat(branch).as_ref(), self.cfg.rate * self.cfg.eta(branch));
        let leta = &self.l0 - &c;
        let blocks = toeplitz_exp(leta.as_ref(), c.as_ref(), t, n_max)?;
        let probs: Vec<f64> = blocks.iter().map(|w| self.trace((w * &self.rho).as_ref())).collect();
        let truncation_mass = 1.0 - probs.iter().sum::<f64>();
        if truncation_mass > COUNTING_TAIL_TOL {
            return Err(Error::Numerical(format!(
                "counting distribution at t = {t} leaves mass {truncation_mass:.3e} beyond n_max = {n_max}"
            )));
        }
        Ok(CountingDistribution { t, probs, truncation_mass })
    }

    /// `eta r t Tr{X rho_ss}`
    pub fn mean_count(&self, branch: Branch, t: f64) -> f64 {
        self.cfg.eta(branch) * self.cfg.rate * t * self.branch_probability(branch)
    }

    /// `sum_n n(n-1) w_n(t) = (eta r t)^2 Tr{X E(L0 t) X rho_ss}` with
    /// `E(y) = 2(e^y - 1 - y)/y^2 = 2 phi_2(y)`.
    pub fn second_factorial_moment(&self, branch: Branch, t: f64) -> Result<f64> {
        check_times(&[t])?;
        let x = self.branch_mat(branch);
        let v = x * &self.rho;
        let y = linalg::phi_apply(scaled(self.l0.as_ref(), t).as_ref(), 2, v.as_ref())?;
        let s = self.cfg.eta(branch) * self.cfg.rate * t;
        Ok(2.0 * s * s * dot(self.branch_row(branch).as_ref(), y.as_ref()).re)
    }

    /// `Q(t) = <n(n-1)> / <n> - <n>`
    pub fn fano(&self, branch: Branch, t_grid: &[f64]) -> Result<FanoCurve> {
        check_times(t_grid)?;
        let values = t_grid
            .par_iter()
            .map(|&t| {
                let mean = self.mean_count(branch, t);
                if !(mean > 0.0) {
                    return Err(Error::Domain(format!("mean click count vanishes at t = {t}")));
                }
                Ok(self.second_factorial_moment(branch, t)? / mean - mean)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FanoCurve { branch, t_grid: t_grid.to_vec(), values })
    }

    /// `w_1(t)` as the first-order response of the generating function, through
    /// [`perturbation_slice`] of `exp(L_eta t)` in the direction `r C t`.
    pub fn one_click_probability(&self, branch: Branch, t: f64, quad_points: usize) -> Result<f64> {
        check_times(&[t])?;
        let c = scaled(self.branch_mat(branch).as_ref(), self.cfg.rate * self.cfg.eta(branch) * t);
        let f = scaled((&self.l0 - &scaled(c.as_ref(), 1.0 / t.max(f64::MIN_POSITIVE))).as_ref(), t);
        let d = slice_matrix(f.as_ref(), c.as_ref(), quad_points)?;
        Ok(self.trace((&d * &self.rho).as_ref()))
    }
}

/// Waiting-time density `t -> P_next(t)`.
#[derive(Clone, Debug)]
pub struct WaitingDensity {
    ladder: linalg::ExpLadder,
    row: Mat<c64>,
    start: Mat<c64>,
}

impl WaitingDensity {
    pub fn eval(&self, t: f64) -> f64 {
        dot(self.row.as_ref(), self.ladder.apply(self.start.clone(), t).as_ref()).re
    }
}

/// Blocks `W_0..W_n` of `exp(t G)` for the lower block-bidiagonal Toeplitz generator
/// with `l` on the diagonal and `c` below it.
fn toeplitz_exp(l: MatRef<'_, c64>, c: MatRef<'_, c64>, t: f64, n: usize) -> Result<Vec<Mat<c64>>> {
    let size = l.nrows();
    let theta = (linalg::norm1(l) + linalg::norm1(c)) * t;
    let s = if theta > 0.25 { (theta / 0.25).log2().ceil() as i32 } else { 0 };
    let h = t * 0.5f64.powi(s);
    let x0 = scaled(l, h);
    let x1 = scaled(c, h);
    let mut result: Vec<Mat<c64>> = (0..=n)
        .map(|j| if j == 0 { linalg::identity(size) } else { Mat::zeros(size, size) })
        .collect();
    let mut term = result.clone();
    for k in 1..=40 {
        let next: Vec<Mat<c64>> = (0..=n)
            .map(|j| {
                let mut m = &term[j] * &x0;
                if j > 0 {
                    m += &term[j - 1] * &x1;
                }
                scaled(m.as_ref(), 1.0 / k as f64)
            })
            .collect();
        let size_term = next.iter().map(|m| linalg::norm1(m.as_ref())).fold(0.0, f64::max);
        for (r, m) in result.iter_mut().zip(&next) {
            *r += m;
        }
        term = next;
        if size_term < 1e-18 {
            break;
        }
    }
    for _ in 0..s {
        result = (0..=n)
            .map(|j| {
                let mut m = Mat::<c64>::zeros(size, size);
                for i in 0..=j {
                    m += &result[j - i] * &result[i];
                }
                m
            })
            .collect();
    }
    for m in &result {
        if !linalg::is_finite(m.as_ref()) {
            return Err(Error::Numerical("counting generator exponential overflowed".into()));
        }
    }
    Ok(result)
}

fn slice_matrix(f: MatRef<'_, c64>, df: MatRef<'_, c64>, quad_points: usize) -> Result<Mat<c64>> {
    let (nodes, weights) = gauss_legendre(quad_points);
    let mut out = Mat::<c64>::zeros(f.nrows(), f.ncols());
    for (tau, w) in nodes.iter().zip(&weights) {
        let left = linalg::expm(scaled(f, *tau).as_ref())?;
        let right = linalg::expm(scaled(f, 1.0 - tau).as_ref())?;
        out += scaled((&(&left * df) * &right).as_ref(), *w);
    }
    Ok(out)
}

/// `delta exp(F) = int_0^1 exp(tau F) dF exp((1 - tau) F) dtau` by Gauss-Legendre quadrature.
pub fn perturbation_slice(f: &SuperOperator, df: &SuperOperator, quad_points: usize) -> Result<SuperOperator> {
    if quad_points < 8 {
        return Err(Error::Domain(format!("need at least 8 quadrature points, got {quad_points}")));
    }
    f.zip_blocks(df, |a, b| slice_matrix(a, b, quad_points))
}
