//! Monte-Carlo runs of a cavity crossed by Poissonian atoms, as seen by observers
//! that attend to different subsets of the detector clicks.
//!
//! Atoms arrive at rate `r`. Each atom leaves in the branch sampled from the
//! omniscient state, which is reduced for every atom and evolves under the plain
//! damping generator in between. A detector fires with its efficiency. Every observer
//! evolves its own state with its conditional generator and reduces it only at the
//! detected clicks it attends to.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;

use faer::c64;

use crate::error::{check_finite, Error, Result};
use crate::fock::{DensityMatrix, FockOperator};
use crate::liouvillian::{build_liouvillian, OscillatorParams};
use crate::micromaser::{click_operator, conditional_liouvillian, scully_lamb, Branch, DetectionConfig, KickPair, UNDERFLOW_TOL};
use crate::superop::{Propagator, SuperOperator};

/// Generator behind every random stream, recorded with results for replay.
pub const RNG_ALGORITHM: &str = "ChaCha8Rng (rand_chacha 0.9), seed_from_u64(seed), set_stream(index)";

/// Trace and positivity slack for the optional state checks.
const STATE_CHECK_TOL: f64 = 1e-8;

/// One atom leaving the cavity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClickRecord {
    pub time: f64,
    pub branch: Branch,
    pub detected: bool,
}

/// How an observer reduces its state at a click it attends to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduction {
    /// Knows which detector fired and applies that branch.
    ByBranch,
    /// Knows only that some attended detector fired and applies the click operator.
    AnyClick,
}

/// An analyst who conditions on a subset of the detected clicks.
#[derive(Clone, Debug, PartialEq)]
pub struct Observer {
    pub name: String,
    pub attend_down: bool,
    pub attend_up: bool,
    pub eta_down_eff: f64,
    pub eta_up_eff: f64,
    pub reduction: Reduction,
}

impl Observer {
    pub fn new(name: &str, attend_down: bool, attend_up: bool, cfg: &DetectionConfig) -> Self {
        Self {
            name: name.to_string(),
            attend_down,
            attend_up,
            eta_down_eff: if attend_down { cfg.eta_down } else { 0.0 },
            eta_up_eff: if attend_up { cfg.eta_up } else { 0.0 },
            reduction: Reduction::ByBranch,
        }
    }

    /// Attends both detectors without telling them apart.
    pub fn alice(cfg: &DetectionConfig) -> Self {
        Self { reduction: Reduction::AnyClick, ..Self::new("alice", true, true, cfg) }
    }

    /// Attends only the up detector.
    pub fn bob(cfg: &DetectionConfig) -> Self {
        Self::new("bob", false, true, cfg)
    }

    /// Attends only the down detector.
    pub fn chuck(cfg: &DetectionConfig) -> Self {
        Self::new("chuck", true, false, cfg)
    }

    /// Attends both detectors.
    pub fn doris(cfg: &DetectionConfig) -> Self {
        Self::new("doris", true, true, cfg)
    }

    pub fn attends(&self, b: Branch) -> bool {
        match b {
            Branch::Down => self.attend_down,
            Branch::Up => self.attend_up,
        }
    }

    fn validate(&self) -> Result<()> {
        for (attend, eta, label) in [
            (self.attend_down, self.eta_down_eff, "down"),
            (self.attend_up, self.eta_up_eff, "up"),
        ] {
            check_finite("observer efficiency", eta)?;
            if !(0.0..=1.0).contains(&eta) {
                return Err(Error::Domain(format!("observer {}: {label} efficiency {eta} outside [0, 1]", self.name)));
            }
            if !attend && eta != 0.0 {
                return Err(Error::Domain(format!(
                    "observer {} ignores the {label} detector but assigns it efficiency {eta}",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

/// Expectation values along one account of the run.
#[derive(Clone, Debug, PartialEq)]
pub struct ObserverSeries {
    pub name: String,
    pub times: Vec<f64>,
    pub parity: Vec<f64>,
    pub number: Vec<f64>,
    /// Probability of no attended click since the observer's previous attended click.
    pub no_click: Vec<f64>,
}

impl ObserverSeries {
    fn new(name: &str) -> Self {
        Self { name: name.to_string(), times: Vec::new(), parity: Vec::new(), number: Vec::new(), no_click: Vec::new() }
    }

    fn push(&mut self, t: f64, rho: &FockOperator, no_click: f64) {
        let (parity, number) = diagonal_moments(rho);
        self.times.push(t);
        self.parity.push(parity);
        self.number.push(number);
        self.no_click.push(no_click);
    }
}

/// Parity and photon number expectations.
fn diagonal_moments(rho: &FockOperator) -> (f64, f64) {
    let mut parity = 0.0;
    let mut number = 0.0;
    for n in 0..rho.dim() {
        let p = rho.get(n, n).re;
        parity += if n % 2 == 0 { p } else { -p };
        number += n as f64 * p;
    }
    (parity, number)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryResult {
    pub seed: u64,
    pub stream: u64,
    pub rng: &'static str,
    pub clicks: Vec<ClickRecord>,
    pub omniscient: ObserverSeries,
    pub observer_series: Vec<ObserverSeries>,
}

impl TrajectoryResult {
    pub fn detected(&self, b: Branch) -> usize {
        self.clicks.iter().filter(|c| c.detected && c.branch == b).count()
    }

    pub fn atoms(&self, b: Branch) -> usize {
        self.clicks.iter().filter(|c| c.branch == b).count()
    }
}

/// Everything that defines a simulated run except the seed.
#[derive(Clone, Debug)]
pub struct TrajectoryConfig {
    pub params: OscillatorParams,
    pub kick: KickPair,
    pub detection: DetectionConfig,
    pub observers: Vec<Observer>,
    pub t_end: f64,
    /// Spacing of the recorded expectation values; `None` records nothing.
    pub sample_dt: Option<f64>,
    /// Starting state of every account; the Scully-Lamb steady state when `None`.
    pub initial: Option<DensityMatrix>,
    /// Verify trace and positivity of every recorded state.
    pub check_states: bool,
}

/// Prepared generators and propagators for repeated runs of one configuration.
pub struct Simulator {
    cfg: TrajectoryConfig,
    initial: FockOperator,
    free: Propagator,
    observers: Vec<(Propagator, SuperOperator)>,
    sample_times: Vec<f64>,
}

impl Simulator {
    pub fn new(cfg: TrajectoryConfig) -> Result<Self> {
        cfg.detection.validate()?;
        check_finite("t_end", cfg.t_end)?;
        if !(cfg.t_end > 0.0) {
            return Err(Error::Domain(format!("t_end = {} must be positive", cfg.t_end)));
        }
        let dim = cfg.kick.dim();
        let r = cfg.detection.rate;
        let l = build_liouvillian(&cfg.params, dim)?;
        let l0 = scully_lamb(&cfg.params, &cfg.kick, r, dim)?;
        let initial = match &cfg.initial {
            Some(rho) => {
                rho.as_operator().check_dim(dim)?;
                rho.as_operator().clone()
            }
            None => DensityMatrix::normalized(&l0.steady_state()?)?.into_operator(),
        };
        let horizon = cfg.t_end;
        let mut observers = Vec::with_capacity(cfg.observers.len());
        for o in &cfg.observers {
            o.validate()?;
            let eff = DetectionConfig { eta_down: o.eta_down_eff, eta_up: o.eta_up_eff, rate: r };
            let leta = conditional_liouvillian(&l0, &eff, &cfg.kick)?;
            let reduce = match o.reduction {
                Reduction::ByBranch => SuperOperator::zero(dim),
                Reduction::AnyClick => click_operator(&eff, &cfg.kick)?,
            };
            observers.push((Propagator::new(leta, horizon)?, reduce));
        }
        let sample_times = match cfg.sample_dt {
            Some(dt) => {
                check_finite("sample_dt", dt)?;
                if !(dt > 0.0) {
                    return Err(Error::Domain(format!("sample_dt = {dt} must be positive")));
                }
                let n = (cfg.t_end / dt + 1e-9).floor() as usize;
                (0..=n).map(|i| i as f64 * dt).collect()
            }
            None => Vec::new(),
        };
        Ok(Self { free: Propagator::new(l, horizon)?, initial, observers, sample_times, cfg })
    }

    pub fn config(&self) -> &TrajectoryConfig {
        &self.cfg
    }

    pub fn sample_times(&self) -> &[f64] {
        &self.sample_times
    }

    fn check(&self, rho: &FockOperator, who: &str, t: f64) -> Result<()> {
        if !self.cfg.check_states {
            return Ok(());
        }
        let tr = rho.trace();
        let min = rho.hermitian_part().hermitian_eigenvalues()?[0];
        if (tr - c64::new(1.0, 0.0)).norm() > STATE_CHECK_TOL || min < -STATE_CHECK_TOL {
            return Err(Error::InvalidState(format!("{who} at t = {t}: trace {tr}, min eigenvalue {min:e}")));
        }
        Ok(())
    }

    /// One run on the stream `(seed, stream)`.
    pub fn run(&self, seed: u64, stream: u64) -> Result<TrajectoryResult> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let (clicks, omniscient) = self.sample_atoms(&mut rng)?;
        let observer_series = self.replay(&clicks)?;
        Ok(TrajectoryResult { seed, stream, rng: RNG_ALGORITHM, clicks, omniscient, observer_series })
    }

    fn sample_atoms(&self, rng: &mut ChaCha8Rng) -> Result<(Vec<ClickRecord>, ObserverSeries)> {
        let det = &self.cfg.detection;
        let kick = &self.cfg.kick;
        let gaps = Exp::new(det.rate).map_err(|e| Error::Domain(e.to_string()))?;
        let mut series = ObserverSeries::new("omniscient");
        let mut samples = self.sample_times.iter().copied().peekable();
        let mut rho = self.initial.clone();
        let mut now = 0.0;
        let mut clicks = Vec::new();
        let mut t = 0.0;
        loop {
            t += gaps.sample(rng);
            let arrival = t <= self.cfg.t_end;
            let until = if arrival { t } else { self.cfg.t_end };
            while let Some(&s) = samples.peek() {
                if s > until {
                    break;
                }
                let at = self.free.propagate(&rho, s - now)?;
                self.check(&at, "omniscient", s)?;
                series.push(s, &at, 1.0);
                samples.next();
            }
            if !arrival {
                break;
            }
            rho = self.free.propagate(&rho, t - now)?;
            now = t;
            let p_down = kick.probability(&rho, Branch::Down)?.clamp(0.0, 1.0);
            let branch = if rng.random::<f64>() < p_down { Branch::Down } else { Branch::Up };
            let y = kick.branch(branch).apply(&rho)?;
            let tr = y.trace().re;
            if !(tr > 0.0) {
                return Err(Error::ImpossibleOutcome(format!("{branch} atom sampled with probability {tr:e}")));
            }
            rho = y.hermitian_part().scale(c64::new(1.0 / tr, 0.0));
            let detected = rng.random::<f64>() < det.eta(branch);
            clicks.push(ClickRecord { time: t, branch, detected });
        }
        Ok((clicks, series))
    }

    /// Feed a click list through every observer's update rule.
    pub fn replay(&self, clicks: &[ClickRecord]) -> Result<Vec<ObserverSeries>> {
        for w in clicks.windows(2) {
            if !(w[1].time > w[0].time) {
                return Err(Error::Domain("click times must increase strictly".into()));
            }
        }
        self.cfg
            .observers
            .iter()
            .zip(&self.observers)
            .map(|(o, (prop, any))| self.replay_observer(o, prop, any, clicks))
            .collect()
    }

    fn replay_observer(
        &self,
        o: &Observer,
        prop: &Propagator,
        any: &SuperOperator,
        clicks: &[ClickRecord],
    ) -> Result<ObserverSeries> {
        let mut series = ObserverSeries::new(&o.name);
        let mut samples = self.sample_times.iter().copied().peekable();
        let mut rho = self.initial.clone();
        let mut now = 0.0;
        let mut survival = 1.0;
        let events = clicks.iter().filter(|c| c.detected && o.attends(c.branch) && c.time <= self.cfg.t_end);
        let advance = |rho: &FockOperator, dt: f64, survival: &mut f64| -> Result<FockOperator> {
            let y = prop.propagate(rho, dt)?;
            let tr = y.trace().re;
            if !(tr > UNDERFLOW_TOL) {
                return Err(Error::Underflow(format!("observer {} after a gap of {dt}", o.name)));
            }
            *survival *= tr;
            Ok(y.hermitian_part().scale(c64::new(1.0 / tr, 0.0)))
        };
        for c in events.map(Some).chain(std::iter::once(None)) {
            let until = c.map_or(self.cfg.t_end, |c| c.time);
            while let Some(&s) = samples.peek() {
                if s > until || (c.is_some() && s == until) {
                    break;
                }
                let mut p = survival;
                let at = advance(&rho, s - now, &mut p)?;
                self.check(&at, &o.name, s)?;
                series.push(s, &at, p);
                samples.next();
            }
            let Some(c) = c else { break };
            rho = advance(&rho, c.time - now, &mut survival)?;
            now = c.time;
            let map = match o.reduction {
                Reduction::ByBranch => self.cfg.kick.branch(c.branch),
                Reduction::AnyClick => any,
            };
            let y = map.apply(&rho)?;
            let tr = y.trace().re;
            if !(tr > 0.0) {
                return Err(Error::ImpossibleOutcome(format!(
                    "observer {} cannot explain the {} click at t = {}",
                    o.name, c.branch, c.time
                )));
            }
            rho = y.hermitian_part().scale(c64::new(1.0 / tr, 0.0));
            survival = 1.0;
        }
        Ok(series)
    }
}

/// Run `cfg` once with the given seed on stream 0.
pub fn simulate(cfg: TrajectoryConfig, seed: u64) -> Result<TrajectoryResult> {
    Simulator::new(cfg)?.run(seed, 0)
}

/// Runs `0..n` on streams of one master seed, in parallel but returned in index order.
pub fn run_ensemble(sim: &Simulator, master_seed: u64, n: usize) -> Result<Vec<TrajectoryResult>> {
    (0..n as u64).into_par_iter().map(|i| sim.run(master_seed, i)).collect()
}

/// Which account of a run to average.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Account {
    Omniscient,
    Observer(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Observable {
    Parity,
    Number,
}

/// Seed-averaged expectation values with standard errors.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleCurve {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_seeds: usize,
}

/// Average an observable over `n_seeds` runs on streams of `master_seed`.
pub fn ensemble_average(
    sim: &Simulator,
    master_seed: u64,
    n_seeds: usize,
    account: Account,
    observable: Observable,
) -> Result<EnsembleCurve> {
    if n_seeds < 2 {
        return Err(Error::Domain("an ensemble needs at least two seeds".into()));
    }
    let runs = run_ensemble(sim, master_seed, n_seeds)?;
    let times = sim.sample_times().to_vec();
    let pick = |r: &TrajectoryResult| -> Result<Vec<f64>> {
        let s = match account {
            Account::Omniscient => &r.omniscient,
            Account::Observer(i) => r
                .observer_series
                .get(i)
                .ok_or_else(|| Error::Domain(format!("no observer with index {i}")))?,
        };
        Ok(match observable {
            Observable::Parity => s.parity.clone(),
            Observable::Number => s.number.clone(),
        })
    };
    let values: Vec<Vec<f64>> = runs.iter().map(pick).collect::<Result<_>>()?;
    let n = n_seeds as f64;
    let mut mean = vec![0.0; times.len()];
    let mut stderr = vec![0.0; times.len()];
    for j in 0..times.len() {
        let m = values.iter().map(|v| v[j]).sum::<f64>() / n;
        let var = values.iter().map(|v| (v[j] - m).powi(2)).sum::<f64>() / (n - 1.0);
        mean[j] = m;
        stderr[j] = (var / n).sqrt();
    }
    Ok(EnsembleCurve { times, mean, stderr, n_seeds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{expectation, number};
    use crate::micromaser::propagate_normalized;
    use crate::statistics::DetectionModel;

    const DIM: usize = 72;

    fn parity_config(observers: Vec<Observer>, t_end: f64, sample_dt: Option<f64>) -> TrajectoryConfig {
        let detection = DetectionConfig::new(0.1, 0.15, 10.0).unwrap();
        TrajectoryConfig {
            params: OscillatorParams::new(0.0, 1.0, 2.0).unwrap(),
            kick: KickPair::parity(DIM).unwrap(),
            detection,
            observers,
            t_end,
            sample_dt,
            initial: None,
            check_states: false,
        }
    }

    fn observers() -> Vec<Observer> {
        let cfg = DetectionConfig::new(0.1, 0.15, 10.0).unwrap();
        vec![Observer::bob(&cfg), Observer::chuck(&cfg), Observer::doris(&cfg), Observer::alice(&cfg)]
    }

    fn published_clicks() -> Vec<ClickRecord> {
        let down = [38.51, 44.80, 49.52, 53.07, 72.05, 76.41, 76.75];
        let up = [3.88, 85.81, 86.09, 94.12, 94.90];
        let mut clicks: Vec<ClickRecord> = down
            .iter()
            .map(|&rt| ClickRecord { time: rt / 10.0, branch: Branch::Down, detected: true })
            .chain(up.iter().map(|&rt| ClickRecord { time: rt / 10.0, branch: Branch::Up, detected: true }))
            .collect();
        clicks.sort_by(|a, b| a.time.total_cmp(&b.time));
        clicks
    }

    fn moments_at(s: &ObserverSeries, t: f64) -> (f64, f64) {
        let i = s.times.iter().position(|&x| (x - t).abs() < 1e-9).unwrap();
        (s.parity[i], s.number[i])
    }

    #[test]
    fn published_click_list_replay() {
        let mut cfg = parity_config(observers(), 10.0, Some(0.005));
        cfg.check_states = true;
        let sim = Simulator::new(cfg).unwrap();
        let series = sim.replay(&published_clicks()).unwrap();
        let names: Vec<&str> = series.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, ["bob", "chuck", "doris", "alice"]);
        // diagonal population oracle integrated with scipy expm at rt = 60
        let exact = [(0.304151256, 1.598632403), (0.192573241, 1.784552917), (0.300094528, 1.388349560)];
        for (s, (parity, number)) in series.iter().zip(exact) {
            let (p, n) = moments_at(s, 6.0);
            assert!((p - parity).abs() < 1e-8, "{}: parity {p}", s.name);
            assert!((n - number).abs() < 1e-8, "{}: number {n}", s.name);
        }
        // quoted four-digit values: up-only observer at rt = 60, down-attending ones at rt = 60.05
        let (p, n) = moments_at(&series[0], 6.0);
        assert!((p - 0.3042).abs() < 1e-4 && (n - 1.599).abs() < 1e-3);
        let (p, n) = moments_at(&series[1], 6.005);
        assert!((p - 0.1920).abs() < 2e-4 && (n - 1.787).abs() < 1e-3);
        let (p, n) = moments_at(&series[2], 6.005);
        assert!((p - 0.2995).abs() < 2e-4 && (n - 1.390).abs() < 1e-3);
        for s in &series {
            assert!(s.no_click.iter().all(|&p| p > 0.0 && p <= 1.0 + 1e-12), "{}", s.name);
        }
    }

    #[test]
    fn no_click_probability_decreases_between_clicks() {
        let sim = Simulator::new(parity_config(observers(), 10.0, Some(0.01))).unwrap();
        let clicks = published_clicks();
        let series = sim.replay(&clicks).unwrap();
        let bob = &series[0];
        let up_times: Vec<f64> = clicks.iter().filter(|c| c.branch == Branch::Up).map(|c| c.time).collect();
        for (i, w) in bob.no_click.windows(2).enumerate() {
            let (t0, t1) = (bob.times[i], bob.times[i + 1]);
            let reset = up_times.iter().any(|&c| c > t0 - 1e-9 && c <= t1 + 1e-9);
            if !reset {
                assert!(w[1] < w[0], "no-click probability rose at t = {t1}");
            }
        }
    }

    #[test]
    fn runs_are_reproducible() {
        let sim = Simulator::new(parity_config(observers(), 10.0, Some(0.5))).unwrap();
        let a = sim.run(42, 3).unwrap();
        let b = sim.run(42, 3).unwrap();
        assert_eq!(a, b);
        let c = sim.run(42, 4).unwrap();
        assert_ne!(a.clicks, c.clicks);
        for w in a.clicks.windows(2) {
            assert!(w[1].time > w[0].time);
        }
        assert_eq!(a.rng, RNG_ALGORITHM);
    }

    #[test]
    fn perfect_detection_tracks_the_omniscient_state() {
        let cfg = DetectionConfig::new(1.0, 1.0, 10.0).unwrap();
        let mut tc = parity_config(vec![Observer::doris(&cfg)], 3.0, Some(0.1));
        tc.detection = cfg;
        tc.check_states = true;
        let sim = Simulator::new(tc).unwrap();
        let r = sim.run(7, 0).unwrap();
        assert!(r.clicks.iter().all(|c| c.detected));
        let o = &r.observer_series[0];
        for i in 0..o.times.len() {
            assert!((o.parity[i] - r.omniscient.parity[i]).abs() < 1e-9);
            assert!((o.number[i] - r.omniscient.number[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn alice_reduction_uses_the_click_operator() {
        let cfg = DetectionConfig::new(0.1, 0.15, 10.0).unwrap();
        let sim = Simulator::new(parity_config(vec![Observer::alice(&cfg)], 1.0, Some(0.5))).unwrap();
        let clicks = [ClickRecord { time: 0.5, branch: Branch::Down, detected: true }];
        let s = &sim.replay(&clicks).unwrap()[0];
        let model = DetectionModel::new(
            &OscillatorParams::new(0.0, 1.0, 2.0).unwrap(),
            KickPair::parity(DIM).unwrap(),
            cfg,
        )
        .unwrap();
        let l0 = scully_lamb(&OscillatorParams::new(0.0, 1.0, 2.0).unwrap(), model.kick(), 10.0, DIM).unwrap();
        let leta = conditional_liouvillian(&l0, &cfg, model.kick()).unwrap();
        let (rho, _) = propagate_normalized(&leta, model.steady_state(), 0.5).unwrap();
        let c = click_operator(&cfg, model.kick()).unwrap().apply(rho.as_operator()).unwrap();
        let tr = c.trace().re;
        let after = c.scale(c64::new(1.0 / tr, 0.0));
        let n = expectation(&number(DIM).unwrap(), &after).unwrap().re;
        assert!((s.number[1] - n).abs() < 1e-10, "{} vs {n}", s.number[1]);
        assert!(s.parity[1] > 0.0 && s.parity[1] < 1.0);
    }

    #[test]
    fn zero_rate_is_pure_decay() {
        let dim = 24;
        let p = OscillatorParams::new(0.0, 1.0, 0.3).unwrap();
        let detection = DetectionConfig::new(0.5, 0.5, 1e-12).unwrap();
        let start = DensityMatrix::fock(4, dim).unwrap();
        let cfg = TrajectoryConfig {
            params: p,
            kick: KickPair::jc(1.0, dim).unwrap(),
            detection,
            observers: vec![],
            t_end: 3.0,
            sample_dt: Some(0.5),
            initial: Some(start.clone()),
            check_states: true,
        };
        let sim = Simulator::new(cfg).unwrap();
        let avg = ensemble_average(&sim, 1, 4, Account::Omniscient, Observable::Number).unwrap();
        let l = build_liouvillian(&p, dim).unwrap();
        for (t, m) in avg.times.iter().zip(&avg.mean) {
            let want = 0.3 + (4.0 - 0.3) * (-t).exp();
            let exact = expectation(&number(dim).unwrap(), &l.propagate(start.as_operator(), *t).unwrap()).unwrap().re;
            assert!((m - exact).abs() < 1e-9);
            assert!((m - want).abs() < 1e-6, "truncation at dim {dim}");
        }
        assert!(avg.stderr.iter().all(|&s| s < 1e-12));
    }

    #[test]
    fn omniscient_average_follows_scully_lamb() {
        let dim = 24;
        let p = OscillatorParams::new(0.0, 1.0, 0.1).unwrap();
        let kick = KickPair::jc(1.2, dim).unwrap();
        let detection = DetectionConfig::new(0.5, 0.5, 4.0).unwrap();
        let start = DensityMatrix::fock(0, dim).unwrap();
        let cfg = TrajectoryConfig {
            params: p,
            kick: kick.clone(),
            detection,
            observers: vec![],
            t_end: 2.0,
            sample_dt: Some(0.25),
            initial: Some(start.clone()),
            check_states: false,
        };
        let sim = Simulator::new(cfg).unwrap();
        let avg = ensemble_average(&sim, 2024, 400, Account::Omniscient, Observable::Number).unwrap();
        let l0 = scully_lamb(&p, &kick, 4.0, dim).unwrap();
        let n = number(dim).unwrap();
        for j in 1..avg.times.len() {
            let want = expectation(&n, &l0.propagate(start.as_operator(), avg.times[j]).unwrap()).unwrap().re;
            assert!((avg.mean[j] - want).abs() < 3.0 * avg.stderr[j].max(1e-3), "t={}", avg.times[j]);
        }
    }

    #[test]
    fn observer_series_stay_valid_states() {
        let mut cfg = parity_config(observers(), 10.0, Some(0.2));
        cfg.check_states = true;
        let sim = Simulator::new(cfg).unwrap();
        for s in 0..3 {
            sim.run(99, s).unwrap();
        }
    }

    fn mean_and_stderr(x: &[f64]) -> (f64, f64) {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, (var / n).sqrt())
    }

    #[test]
    fn detected_counts_and_branch_frequencies() {
        let sim = Simulator::new(parity_config(vec![], 10.0, None)).unwrap();
        let runs = run_ensemble(&sim, 20240601, 500).unwrap();
        for b in [Branch::Down, Branch::Up] {
            let counts: Vec<f64> = runs.iter().map(|r| r.detected(b) as f64).collect();
            let (m, se) = mean_and_stderr(&counts);
            assert!((m - 6.0).abs() < 3.0 * se, "{b}: {m} +- {se}");
        }
        let fractions: Vec<f64> = runs
            .iter()
            .map(|r| r.atoms(Branch::Down) as f64 / r.clicks.len() as f64)
            .collect();
        let (m, se) = mean_and_stderr(&fractions);
        assert!((m - 0.6).abs() < 3.0 * se, "down fraction {m} +- {se}");
        let atoms: Vec<f64> = runs.iter().map(|r| r.clicks.len() as f64).collect();
        let (m, se) = mean_and_stderr(&atoms);
        assert!((m - 100.0).abs() < 3.0 * se);
    }

    fn long_run() -> &'static TrajectoryResult {
        static RUN: std::sync::OnceLock<TrajectoryResult> = std::sync::OnceLock::new();
        RUN.get_or_init(|| Simulator::new(parity_config(vec![], 3500.0, None)).unwrap().run(7, 11).unwrap())
    }

    fn detected_times(r: &TrajectoryResult, b: Branch) -> Vec<f64> {
        r.clicks.iter().filter(|c| c.detected && c.branch == b).map(|c| c.time).collect()
    }

    fn model(cfg: DetectionConfig) -> DetectionModel {
        DetectionModel::new(&OscillatorParams::new(0.0, 1.0, 2.0).unwrap(), KickPair::parity(DIM).unwrap(), cfg).unwrap()
    }

    #[test]
    fn single_detector_waiting_times_pass_ks() {
        let times = detected_times(long_run(), Branch::Down);
        let mut gaps: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).take(2000).collect();
        assert_eq!(gaps.len(), 2000);
        gaps.sort_by(f64::total_cmp);
        let m = model(DetectionConfig::new(0.1, 0.0, 10.0).unwrap());
        let n = gaps.len() as f64;
        let mut d: f64 = 0.0;
        for (i, &g) in gaps.iter().enumerate() {
            let cdf = 1.0 - m.no_click_after(Branch::Down, Branch::Down, g).unwrap();
            d = d.max((cdf - i as f64 / n).abs()).max((cdf - (i + 1) as f64 / n).abs());
        }
        assert!(d < 1.628 / n.sqrt(), "KS statistic {d}");
    }

    #[test]
    fn post_click_rates_follow_the_correlation_function() {
        let r = long_run();
        let downs = detected_times(r, Branch::Down);
        let cfg = DetectionConfig::new(0.1, 0.15, 10.0).unwrap();
        let m = model(cfg);
        let density = cfg.rate * cfg.eta_down * m.branch_probability(Branch::Down);
        let width = 0.1;
        for lag in [0.0, 0.1, 0.3, 1.0] {
            let starts: Vec<f64> = downs.iter().copied().filter(|&t| t + lag + width <= r.clicks.last().unwrap().time).collect();
            let observed = starts
                .iter()
                .map(|&t| downs.iter().filter(|&&u| u > t + lag && u <= t + lag + width).count())
                .sum::<usize>() as f64;
            let grid: Vec<f64> = (0..=20).map(|i| lag + width * i as f64 / 20.0).collect();
            let g = m.correlation(Branch::Down, Branch::Down, &grid).unwrap().values;
            let integral = width / 60.0 * (g[0] + g[20] + 4.0 * g[1..20].iter().step_by(2).sum::<f64>() + 2.0 * g[2..20].iter().step_by(2).sum::<f64>());
            let expected = starts.len() as f64 * density * integral;
            assert!((observed - expected).abs() < 3.0 * expected.sqrt(), "lag {lag}: {observed} vs {expected}");
        }
    }

    #[test]
    fn rejects_bad_configurations() {
        let det = DetectionConfig::new(0.1, 0.15, 10.0).unwrap();
        let mut o = Observer::bob(&det);
        o.eta_down_eff = 0.1;
        assert!(Simulator::new(parity_config(vec![o], 1.0, None)).is_err());
        assert!(Simulator::new(parity_config(vec![], -1.0, None)).is_err());
        let sim = Simulator::new(parity_config(observers(), 1.0, None)).unwrap();
        assert!(ensemble_average(&sim, 0, 1, Account::Omniscient, Observable::Parity).is_err());
        let bad = [
            ClickRecord { time: 0.5, branch: Branch::Down, detected: true },
            ClickRecord { time: 0.5, branch: Branch::Up, detected: true },
        ];
        assert!(sim.replay(&bad).is_err());
    }
}
