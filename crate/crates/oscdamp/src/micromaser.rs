//! Atom kicks, click operators and micromaser master equations.
//!
//! A kick is the quasi-instantaneous net effect of one atom crossing the cavity.
//! It splits into the branch `A` (atom leaves in the lower state) and the branch `B`
//! (atom leaves in the upper state), with `A + B` trace preserving.

use std::fmt;

use faer::{c64, Mat};

use crate::damping::{pairing_required_dim, DampingBasis};
use crate::error::{check_finite, Error, Result};
use crate::fock::{self, DensityMatrix, FockOperator};
use crate::linalg;
use crate::liouvillian::{build_liouvillian, eigenvalue, OscillatorParams};
use crate::superop::{common_restriction, expand_vector, restrict_vector, restricted_trace, SuperOperator};

/// Smallest trace a branch may carry before the outcome counts as impossible.
pub const BRANCH_TOL: f64 = 1e-14;

/// Smallest no-click probability that is still normalised.
pub const UNDERFLOW_TOL: f64 = 1e-300;

/// Distance from 1 within which an eigenvalue of the period map counts as a fixed point.
const FIXED_POINT_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Branch {
    Down,
    Up,
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Branch::Down => "down",
            Branch::Up => "up",
        })
    }
}

/// The two branches of a single-atom kick.
#[derive(Clone, Debug)]
pub struct KickPair {
    pub a: SuperOperator,
    pub b: SuperOperator,
}

fn check_kick_dim(dim: usize) -> Result<()> {
    if dim < 2 {
        return Err(Error::Domain(format!("kicks need dim >= 2, got {dim}")));
    }
    Ok(())
}

impl KickPair {
    pub fn new(a: SuperOperator, b: SuperOperator) -> Result<Self> {
        if a.dim() != b.dim() {
            return Err(Error::DimensionMismatch { expected: a.dim(), found: b.dim() });
        }
        Ok(Self { a, b })
    }

    /// Jaynes-Cummings kick with accumulated Rabi angle `phi`.
    ///
    /// `A rho = a^+ S rho S a` with `S = sin(phi sqrt(aa^+)) / sqrt(aa^+)` and
    /// `B rho = C rho C` with `C = cos(phi sqrt(aa^+))`. The top level cannot take a
    /// photon in the truncated space, so `C` is set to 1 there.
    pub fn jc(phi: f64, dim: usize) -> Result<Self> {
        check_finite("phi", phi)?;
        check_kick_dim(dim)?;
        let s: Vec<f64> = (0..dim)
            .map(|m| {
                let r = ((m + 1) as f64).sqrt();
                (phi * r).sin() / r
            })
            .collect();
        let c: Vec<f64> = (0..dim)
            .map(|m| if m + 1 == dim { 1.0 } else { (phi * ((m + 1) as f64).sqrt()).cos() })
            .collect();
        let up = &fock::creation(dim)? * &FockOperator::from_real_diagonal(&s);
        let a = SuperOperator::sandwich(&up, &up.dagger())?;
        let cc = FockOperator::from_real_diagonal(&c);
        let b = SuperOperator::sandwich(&cc, &cc)?;
        Self::new(a, b)
    }

    /// Projective parity measurement: `A` keeps the even part, `B` the odd part.
    pub fn parity(dim: usize) -> Result<Self> {
        check_kick_dim(dim)?;
        let even: Vec<f64> = (0..dim).map(|n| if n % 2 == 0 { 1.0 } else { 0.0 }).collect();
        let odd: Vec<f64> = even.iter().map(|e| 1.0 - e).collect();
        let pe = FockOperator::from_real_diagonal(&even);
        let po = FockOperator::from_real_diagonal(&odd);
        Self::new(SuperOperator::sandwich(&pe, &pe)?, SuperOperator::sandwich(&po, &po)?)
    }

    /// Kick that leaves the field alone: `A = q`, `B = 1 - q`.
    pub fn trivial(q: f64, dim: usize) -> Result<Self> {
        check_finite("q", q)?;
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::Domain(format!("q = {q} must lie in [0, 1]")));
        }
        check_kick_dim(dim)?;
        let id = SuperOperator::identity(dim);
        Self::new(id.scale_real(q), id.scale_real(1.0 - q))
    }

    pub fn dim(&self) -> usize {
        self.a.dim()
    }

    pub fn branch(&self, b: Branch) -> &SuperOperator {
        match b {
            Branch::Down => &self.a,
            Branch::Up => &self.b,
        }
    }

    /// Net kick `M = A + B - 1`.
    pub fn net(&self) -> Result<SuperOperator> {
        self.a.add(&self.b)?.sub(&SuperOperator::identity(self.dim()))
    }

    /// `Tr{X rho}` for the branch `X`.
    pub fn probability(&self, rho: &FockOperator, b: Branch) -> Result<f64> {
        Ok(self.branch(b).apply(rho)?.trace().re)
    }
}

/// Deposit one photon with probability `p`:
/// `K rho = p (a^+ T rho T a - rho)` with `T = (aa^+)^(-1/2)`.
///
/// The top level cannot be raised in the truncated space and is left in place.
pub fn one_photon_kick(p: f64, dim: usize) -> Result<SuperOperator> {
    check_finite("p", p)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("p = {p} must lie in [0, 1]")));
    }
    check_kick_dim(dim)?;
    let t: Vec<f64> = (0..dim).map(|m| 1.0 / ((m + 1) as f64).sqrt()).collect();
    let up = &fock::creation(dim)? * &FockOperator::from_real_diagonal(&t);
    let top = FockOperator::projector(dim - 1, dim)?;
    let raise = SuperOperator::sandwich(&up, &up.dagger())?.add(&SuperOperator::sandwich(&top, &top)?)?;
    raise.sub(&SuperOperator::identity(dim)).map(|k| k.scale_real(p))
}

/// Detector efficiencies for the two branches and the atomic arrival rate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectionConfig {
    pub eta_down: f64,
    pub eta_up: f64,
    pub rate: f64,
}

impl DetectionConfig {
    pub fn new(eta_down: f64, eta_up: f64, rate: f64) -> Result<Self> {
        let c = Self { eta_down, eta_up, rate };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, eta) in [("eta_down", self.eta_down), ("eta_up", self.eta_up)] {
            check_finite(name, eta)?;
            if !(0.0..=1.0).contains(&eta) {
                return Err(Error::Domain(format!("{name} = {eta} must lie in [0, 1]")));
            }
        }
        check_finite("rate", self.rate)?;
        if !(self.rate > 0.0) {
            return Err(Error::Domain(format!("rate = {} must be positive", self.rate)));
        }
        Ok(())
    }

    pub fn eta(&self, b: Branch) -> f64 {
        match b {
            Branch::Down => self.eta_down,
            Branch::Up => self.eta_up,
        }
    }
}

/// `C = eta_down A + eta_up B`
pub fn click_operator(cfg: &DetectionConfig, kick: &KickPair) -> Result<SuperOperator> {
    kick.a.scale_real(cfg.eta_down).add(&kick.b.scale_real(cfg.eta_up))
}

/// `L0 = L + r (A + B - 1)` for Poissonian arrivals at rate `r`.
pub fn scully_lamb(p: &OscillatorParams, kick: &KickPair, r: f64, dim: usize) -> Result<SuperOperator> {
    check_finite("rate", r)?;
    if !(r > 0.0) {
        return Err(Error::Domain(format!("rate = {r} must be positive")));
    }
    if kick.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: kick.dim() });
    }
    build_liouvillian(p, dim)?.add(&kick.net()?.scale_real(r))
}

/// Between-click generator `L_eta = L0 - r C`.
pub fn conditional_liouvillian(l0: &SuperOperator, cfg: &DetectionConfig, kick: &KickPair) -> Result<SuperOperator> {
    cfg.validate()?;
    l0.sub(&click_operator(cfg, kick)?.scale_real(cfg.rate))
}

/// `exp(L_eta t) rho0` normalised to unit trace, together with the trace it had.
pub fn propagate_normalized(leta: &SuperOperator, rho0: &DensityMatrix, t: f64) -> Result<(DensityMatrix, f64)> {
    check_finite("time", t)?;
    if t < 0.0 {
        return Err(Error::Domain(format!("time {t} must be non-negative")));
    }
    let y = leta.propagate(rho0.as_operator(), t)?;
    let tr = y.trace().re;
    if !(tr > UNDERFLOW_TOL) {
        return Err(Error::Underflow(format!("no-click probability {tr:e} at t = {t}")));
    }
    let state = y.hermitian_part().scale(c64::new(1.0 / tr, 0.0));
    Ok((DensityMatrix::new_unchecked(state), tr))
}

/// Apply a map and renormalise, failing when the result carries no weight.
pub fn reduce_with(rho: &DensityMatrix, map: &SuperOperator) -> Result<DensityMatrix> {
    let y = map.apply(rho.as_operator())?;
    let tr = y.trace().re;
    if !(tr > BRANCH_TOL) {
        return Err(Error::ImpossibleOutcome(format!("outcome has probability {tr:e}")));
    }
    Ok(DensityMatrix::new_unchecked(y.hermitian_part().scale(c64::new(1.0 / tr, 0.0))))
}

/// State after an atom is found in `branch`.
pub fn reduce_state(rho: &DensityMatrix, branch: Branch, kick: &KickPair) -> Result<DensityMatrix> {
    reduce_with(rho, kick.branch(branch)).map_err(|e| match e {
        Error::ImpossibleOutcome(m) => Error::ImpossibleOutcome(format!("{branch} branch: {m}")),
        other => other,
    })
}

fn check_period(t: f64) -> Result<()> {
    check_finite("period", t)?;
    if !(t > 0.0) {
        return Err(Error::Domain(format!("period {t} must be positive")));
    }
    Ok(())
}

/// Samples of a periodically kicked evolution.
#[derive(Clone, Debug)]
pub struct KickedSeries {
    pub times: Vec<f64>,
    pub states: Vec<FockOperator>,
}

impl KickedSeries {
    /// `Tr{X rho_t}` along the series.
    pub fn expectation(&self, x: &FockOperator) -> Result<Vec<f64>> {
        self.states.iter().map(|s| Ok(fock::expectation(x, s)?.re)).collect()
    }
}

/// Evolve `rho0` (taken just before the first kick) through `periods` cycles of
/// `rho <- exp(LT)(1 + K) rho`, sampling `samples` times per period starting right
/// after each kick, plus the final pre-kick state.
pub fn periodic_kick_evolve(
    l: &SuperOperator,
    k: &SuperOperator,
    period: f64,
    rho0: &DensityMatrix,
    periods: usize,
    samples: usize,
) -> Result<KickedSeries> {
    check_period(period)?;
    if samples == 0 {
        return Err(Error::Domain("need at least one sample per period".into()));
    }
    let dt = period / samples as f64;
    let step = l.exp(dt)?;
    let mut rho = rho0.as_operator().clone();
    let mut times = Vec::with_capacity(periods * samples + 1);
    let mut states = Vec::with_capacity(periods * samples + 1);
    for j in 0..periods {
        rho = &rho + &k.apply(&rho)?;
        for i in 0..samples {
            times.push(j as f64 * period + i as f64 * dt);
            states.push(rho.clone());
            rho = step.apply(&rho)?;
        }
    }
    times.push(periods as f64 * period);
    states.push(rho);
    Ok(KickedSeries { times, states })
}

/// Restricted matrix of the period map `exp(LT)(1 + K)`.
fn period_map(l: &SuperOperator, k: &SuperOperator, period: f64, sector: Option<isize>) -> Result<Mat<c64>> {
    let lm = l.restricted(sector)?;
    let km = k.restricted(sector)?;
    let e = linalg::expm(linalg::scaled(lm.as_ref(), c64::new(period, 0.0)).as_ref())?;
    let kick = &linalg::identity(km.nrows()) + &km;
    Ok(&e * &kick)
}

fn state_restriction(l: &SuperOperator, k: &SuperOperator) -> Option<isize> {
    let probe = FockOperator::identity(l.dim());
    common_restriction(&[l, k], &probe)
}

/// The pre-kick state `rho(-0)` of the cyclically steady solution,
/// the unit-trace fixed point of `exp(LT)(1 + K)`.
pub fn cyclic_steady_state(l: &SuperOperator, k: &SuperOperator, period: f64) -> Result<DensityMatrix> {
    check_period(period)?;
    if l.dim() != k.dim() {
        return Err(Error::DimensionMismatch { expected: l.dim(), found: k.dim() });
    }
    let d = l.dim();
    let sector = state_restriction(l, k);
    let p = period_map(l, k, period, sector)?;
    let fixed = linalg::eigenvalues(p.as_ref())?
        .iter()
        .filter(|z| (**z - c64::new(1.0, 0.0)).norm() < FIXED_POINT_TOL)
        .count();
    if fixed != 1 {
        return Err(Error::Numerical(format!(
            "period map has {fixed} eigenvalues at 1; the cyclic steady state is not unique"
        )));
    }
    let n = p.nrows();
    let mut sys = &p - &linalg::identity(n);
    let ones = restrict_vector(&FockOperator::identity(d), sector);
    for j in 0..n {
        sys[(0, j)] = ones[(j, 0)];
    }
    let mut rhs = Mat::<c64>::zeros(n, 1);
    rhs[(0, 0)] = c64::new(1.0, 0.0);
    let x = linalg::solve(sys.as_ref(), rhs.as_ref())?;
    let tr = restricted_trace(x.as_ref(), d, sector);
    let rho = expand_vector(x.as_ref(), d, sector).scale(tr.inv());
    Ok(DensityMatrix::new_unchecked(rho.hermitian_part()))
}

/// Period average `(1/T) int_0^T exp(Lt)(1 + K) rho dt` of the solution that is
/// `rho` just before a kick.
pub fn cycle_average(
    l: &SuperOperator,
    k: &SuperOperator,
    period: f64,
    rho_before_kick: &FockOperator,
) -> Result<FockOperator> {
    check_period(period)?;
    let kicked = rho_before_kick + &k.apply(rho_before_kick)?;
    let d = l.dim();
    let sector = common_restriction(&[l], &kicked);
    let lm = l.restricted(sector)?;
    let v = restrict_vector(&kicked, sector);
    let y = linalg::phi_apply(linalg::scaled(lm.as_ref(), c64::new(period, 0.0)).as_ref(), 1, v.as_ref())?;
    Ok(expand_vector(y.as_ref(), d, sector))
}

/// `g(L) = L / (1 - exp(-LT))`, with `g(0) = 1/T`, as the block function
/// `exp(LT) phi_1(LT)^-1 / T`.
pub fn rate_function(l: &SuperOperator, period: f64) -> Result<SuperOperator> {
    check_period(period)?;
    l.map_blocks(|m| {
        let phis = linalg::phi_functions(linalg::scaled(m, c64::new(period, 0.0)).as_ref(), 1)?;
        let g = linalg::solve(phis[1].as_ref(), phis[0].as_ref())?;
        Ok(linalg::scaled(g.as_ref(), c64::new(1.0 / period, 0.0)))
    })
}

/// Generator `L + K g(L)` of the period-averaged evolution.
pub fn time_averaged_rhs(l: &SuperOperator, k: &SuperOperator, period: f64) -> Result<SuperOperator> {
    l.add(&k.compose(&rate_function(l, period)?)?)
}

/// Steady state of a trace-annihilating generator, as a density matrix.
pub fn generator_steady_state(g: &SuperOperator) -> Result<DensityMatrix> {
    let x = g.steady_state()?;
    Ok(DensityMatrix::new_unchecked(x.hermitian_part()))
}

/// Steady state of `L + r(A + B - 1)` from the detailed-balance product
/// `p_m / p_{m-1} = nu/(nu+1) + (r/A)/(nu+1) sin^2(phi sqrt m)/m`.
pub fn maser_steady_state(p: &OscillatorParams, phi: f64, r: f64, dim: usize) -> Result<DensityMatrix> {
    p.validate()?;
    check_finite("phi", phi)?;
    check_finite("rate", r)?;
    let nu = p.nu;
    let mut w = vec![1.0; dim];
    for m in 1..dim {
        let s = (phi * (m as f64).sqrt()).sin();
        let ratio = nu / (nu + 1.0) + r / p.decay / (nu + 1.0) * s * s / m as f64;
        w[m] = w[m - 1] * ratio;
    }
    let total: f64 = w.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::NonFinite("maser steady-state weights".into()));
    }
    w.iter_mut().for_each(|x| *x /= total);
    Ok(DensityMatrix::new_unchecked(FockOperator::from_real_diagonal(&w)))
}

/// Kick entries `Tr{left_n^(k) K right_n'^(k')}` in the damping bases.
#[derive(Clone, Debug)]
pub struct KickMatrix {
    pub n_max: usize,
    pub k_max: usize,
    pub entries: Mat<c64>,
}

impl KickMatrix {
    pub fn index(&self, n: usize, k: i64) -> usize {
        (k + self.k_max as i64) as usize * (self.n_max + 1) + n
    }

    /// `K_{n,n'}^{(k,k')}`
    pub fn get(&self, n: usize, k: i64, np: usize, kp: i64) -> c64 {
        self.entries[(self.index(n, k), self.index(np, kp))]
    }
}

pub fn kick_matrix(k: &SuperOperator, nu: f64, n_max: usize, k_max: usize) -> Result<KickMatrix> {
    let dim = k.dim();
    let required = pairing_required_dim(n_max + 1, k_max, nu)? + 1;
    if dim < required {
        return Err(Error::Truncation {
            required,
            reason: format!("kick matrix up to n = {n_max}, |k| = {k_max} at nu = {nu}"),
        });
    }
    let basis = DampingBasis::new(nu, dim, n_max, k_max)?;
    let size = (n_max + 1) * (2 * k_max + 1);
    let mut entries = Mat::<c64>::zeros(size, size);
    let mut km = KickMatrix { n_max, k_max, entries: Mat::zeros(0, 0) };
    for kp in -(k_max as i64)..=k_max as i64 {
        let kk = kp.unsigned_abs() as usize;
        for np in 0..=n_max {
            let mut rho = FockOperator::zeros(dim);
            let diag: Vec<c64> = basis.right_diag(np, kk).iter().map(|&x| c64::new(x, 0.0)).collect();
            rho.set_sector(kp as isize, &diag);
            let e = basis.expand(&k.apply(&rho)?)?;
            let col = km.index(np, kp);
            for kr in -(k_max as i64)..=k_max as i64 {
                for n in 0..=n_max {
                    entries[(km.index(n, kr), col)] = e.coefficient(n, kr);
                }
            }
        }
    }
    km.entries = entries;
    Ok(km)
}

/// Linear equations for the damping-basis coefficients of the period-averaged state,
/// `d alpha/dt = (Lambda + K g(Lambda)) alpha`.
#[derive(Clone, Debug)]
pub struct ModeEquation {
    pub n_max: usize,
    pub k_max: usize,
    pub generator: Mat<c64>,
}

impl ModeEquation {
    pub fn new(km: &KickMatrix, p: &OscillatorParams, period: f64) -> Result<Self> {
        check_period(period)?;
        let size = km.entries.nrows();
        let mut lam = vec![c64::new(0.0, 0.0); size];
        for k in -(km.k_max as i64)..=km.k_max as i64 {
            for n in 0..=km.n_max {
                lam[km.index(n, k)] = eigenvalue(n, k, p);
            }
        }
        let g: Vec<c64> = lam
            .iter()
            .map(|&l| {
                let z = l * period;
                if z.norm() < 1e-8 {
                    c64::new(1.0 / period, 0.0) + l * 0.5
                } else {
                    l / (c64::new(1.0, 0.0) - (-z).exp())
                }
            })
            .collect();
        let generator = Mat::from_fn(size, size, |i, j| {
            let d = if i == j { lam[i] } else { c64::new(0.0, 0.0) };
            d + km.entries[(i, j)] * g[j]
        });
        Ok(Self { n_max: km.n_max, k_max: km.k_max, generator })
    }

    fn index(&self, n: usize, k: i64) -> usize {
        (k + self.k_max as i64) as usize * (self.n_max + 1) + n
    }

    /// Stationary coefficients normalised by `alpha_0^(0) = 1`.
    pub fn steady_state(&self) -> Result<Vec<c64>> {
        let size = self.generator.nrows();
        let i0 = self.index(0, 0);
        let mut sys = self.generator.clone();
        for j in 0..size {
            sys[(i0, j)] = c64::new(if j == i0 { 1.0 } else { 0.0 }, 0.0);
        }
        let mut rhs = Mat::<c64>::zeros(size, 1);
        rhs[(i0, 0)] = c64::new(1.0, 0.0);
        let x = linalg::solve(sys.as_ref(), rhs.as_ref())?;
        Ok((0..size).map(|i| x[(i, 0)]).collect())
    }

    /// Coefficients after time `t`.
    pub fn evolve(&self, alpha0: &[c64], t: f64) -> Result<Vec<c64>> {
        check_finite("time", t)?;
        let e = linalg::expm(linalg::scaled(self.generator.as_ref(), c64::new(t, 0.0)).as_ref())?;
        let y = &e * &linalg::column(alpha0);
        Ok((0..y.nrows()).map(|i| y[(i, 0)]).collect())
    }

    pub fn coefficient(&self, alpha: &[c64], n: usize, k: i64) -> c64 {
        alpha[self.index(n, k)]
    }
}
