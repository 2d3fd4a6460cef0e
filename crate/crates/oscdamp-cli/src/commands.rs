//! One function per subcommand, each returning the tables it emits.

use oscdamp::fock::{self, number, parity};
use oscdamp::liouvillian::{build_liouvillian, eigenvalue};
use oscdamp::micromaser::{cycle_average, cyclic_steady_state, one_photon_kick, periodic_kick_evolve, scully_lamb};
use oscdamp::statistics::DetectionModel;
use oscdamp::trajectory::{Observer, Simulator, TrajectoryConfig, RNG_ALGORITHM};
use oscdamp::{Branch, DensityMatrix, FockOperator, SuperOperator};

use crate::config::{Command, KickSection, ScenarioConfig};
use crate::error::CliError;
use crate::output::{Cell, Table};

/// Tables from one command, with the RNG identity and seed when randomness was used.
#[derive(Clone, Debug)]
pub struct CommandOutput {
    pub tables: Vec<Table>,
    pub rng: Option<String>,
    pub seed: Option<u64>,
}

impl CommandOutput {
    fn deterministic(tables: Vec<Table>) -> Self {
        Self { tables, rng: None, seed: None }
    }
}

pub fn run(cmd: Command, cfg: &ScenarioConfig, seed: Option<u64>) -> Result<CommandOutput, CliError> {
    let errs = cfg.validate(cmd);
    if !errs.is_empty() {
        return Err(CliError::Config(errs));
    }
    match cmd {
        Command::Spectrum => cmd_spectrum(cfg).map(CommandOutput::deterministic),
        Command::Steady => cmd_steady(cfg).map(CommandOutput::deterministic),
        Command::Correlations => cmd_correlations(cfg).map(CommandOutput::deterministic),
        Command::Waiting => cmd_waiting(cfg).map(CommandOutput::deterministic),
        Command::Counting => cmd_counting(cfg).map(CommandOutput::deterministic),
        Command::Fano => cmd_fano(cfg).map(CommandOutput::deterministic),
        Command::Kicked => cmd_kicked(cfg).map(CommandOutput::deterministic),
        Command::Trajectory => cmd_trajectory(cfg, seed),
    }
}

const BRANCHES: [Branch; 2] = [Branch::Down, Branch::Up];

fn model(cfg: &ScenarioConfig) -> Result<DetectionModel, CliError> {
    Ok(DetectionModel::new(&cfg.params()?, cfg.kick_pair()?, cfg.detection_config()?)?)
}

fn diagonal_moments(rho: &FockOperator) -> Result<(f64, f64), CliError> {
    let d = rho.dim();
    Ok((fock::expectation(&number(d)?, rho)?.re, fock::expectation(&parity(d)?, rho)?.re))
}

/// `lambda_n^(k)` for `n <= n_max`, `|k| <= k_max`.
pub fn cmd_spectrum(cfg: &ScenarioConfig) -> Result<Vec<Table>, CliError> {
    let p = cfg.params()?;
    let mut t = Table::new("spectrum", &["n", "k", "lambda_re_per_A", "lambda_im_per_A"]);
    for n in 0..=cfg.spectrum.n_max {
        let k_max = cfg.spectrum.k_max as i64;
        for k in -k_max..=k_max {
            let l = eigenvalue(n, k, &p);
            t.push(vec![n.into(), k.into(), l.re.into(), l.im.into()]);
        }
    }
    Ok(vec![t])
}

/// Photon-number distribution of the steady state. Two-outcome kicks use the
/// Scully-Lamb generator when a detection rate is configured; one-photon kicks use
/// the period average of the cyclically steady state.
pub fn cmd_steady(cfg: &ScenarioConfig) -> Result<Vec<Table>, CliError> {
    let p = cfg.params()?;
    let dim = cfg.fock_dim;
    let l = build_liouvillian(&p, dim)?;
    let (rho, source) = match (&cfg.kick, &cfg.kicked, &cfg.detection) {
        (KickSection::OnePhoton { p: prob }, Some(k), _) => {
            let kick = one_photon_kick(*prob, dim)?;
            let css = cyclic_steady_state(&l, &kick, k.period_at)?;
            (cycle_average(&l, &kick, k.period_at, css.as_operator())?, "period average of the cyclic steady state")
        }
        (_, _, Some(d)) => {
            let g = scully_lamb(&p, &cfg.kick_pair()?, d.rate_per_a, dim)?;
            (DensityMatrix::normalized(&g.steady_state()?)?.into_operator(), "Scully-Lamb steady state")
        }
        _ => (DensityMatrix::normalized(&l.steady_state()?)?.into_operator(), "damping steady state"),
    };
    let (mean, par) = diagonal_moments(&rho)?;
    let mut t = Table::new("steady", &["n", "population"]);
    for n in 0..dim {
        t.push(vec![n.into(), rho.get(n, n).re.into()]);
    }
    t.note("state", source);
    t.note("mean_number", mean);
    t.note("mean_parity", par);
    Ok(vec![t])
}

/// Normalised correlations `G_xy(At)` for all four branch pairs.
pub fn cmd_correlations(cfg: &ScenarioConfig) -> Result<Vec<Table>, CliError> {
    let m = model(cfg)?;
    let grid = cfg.time_grid();
    let mut columns = vec![grid.clone()];
    let mut names = vec!["At".to_string()];
    for from in BRANCHES {
        for to in BRANCHES {
            columns.push(m.correlation(from, to, &grid)?.values);
            names.push(format!("G_{from}_{to}"));
        }
    }
    Ok(vec![columns_table("correlations", &names, &columns)])
}

/// Waiting-time densities `P_next(At)` for every pair whose target detector is active.
pub fn cmd_waiting(cfg: &ScenarioConfig) -> Result<Vec<Table>, CliError> {
    let m = model(cfg)?;
    let grid = cfg.time_grid();
    let mut columns = vec![grid.clone()];
    let mut names = vec!["At".to_string()];
    for from in BRANCHES {
        for to in BRANCHES {
            if m.config().eta(to) > 0.0 && m.branch_probability(from) > 0.0 {
                columns.push(m.waiting_time(from, to, &grid)?.values);
                names.push(format!("P_next_{from}_{to}"));
            }
        }
    }
    Ok(vec![columns_table("waiting", &names, &columns)])
}

/// Counting distributions `w_n(At)` in long format.
pub fn cmd_counting(cfg: &ScenarioConfig) -> Result<Vec<Table>, CliError> {
    let m = model(cfg)?;
    let branch: Branch = cfg.counting.branch.into();
    let mut t = Table::new("counting", &["At", "n", "w_n"]);
    let mut worst: f64 = 0.0;
    for at in cfg.time_grid() {
        let d = m.counting_distribution(branch, at, cfg.counting.n_max)?;
        worst = worst.max(d.truncation_mass);
        for (n, w) in d.probs.iter().enumerate() {
            t.push(vec![at.into(), n.into(), (*w).into()]);
        }
    }
    t.note("branch", branch);
    t.note("max_truncated_mass", worst);
    Ok(vec![t])
}

/// Fano-Mandel factor for every active detector.
pub fn cmd_fano(cfg: &ScenarioConfig) -> Result<Vec<Table>, CliError> {
    let m = model(cfg)?;
    let grid = cfg.time_grid();
    let mut columns = vec![grid.clone()];
    let mut names = vec!["At".to_string()];
    for b in BRANCHES {
        if m.config().eta(b) > 0.0 {
            columns.push(m.fano(b, &grid)?.values);
            names.push(format!("Q_{b}"));
        }
    }
    Ok(vec![columns_table("fano", &names, &columns)])
}

/// Periodically kicked evolution from a Fock state.
pub fn cmd_kicked(cfg: &ScenarioConfig) -> Result<Vec<Table>, CliError> {
    let p = cfg.params()?;
    let dim = cfg.fock_dim;
    let k = cfg.kicked.as_ref().expect("validated");
    let l = build_liouvillian(&p, dim)?;
    let kick: SuperOperator = match &cfg.kick {
        KickSection::OnePhoton { p } => one_photon_kick(*p, dim)?,
        _ => cfg.kick_pair()?.net()?,
    };
    let rho0 = DensityMatrix::fock(k.initial_fock, dim)?;
    let series = periodic_kick_evolve(&l, &kick, k.period_at, &rho0, k.periods, k.samples_per_period)?;
    let n = series.expectation(&number(dim)?)?;
    let par = series.expectation(&parity(dim)?)?;
    let mut t = Table::new("kicked", &["At", "mean_number", "mean_parity"]);
    for i in 0..series.times.len() {
        t.push(vec![series.times[i].into(), n[i].into(), par[i].into()]);
    }
    let css = cyclic_steady_state(&l, &kick, k.period_at)?;
    let avg = cycle_average(&l, &kick, k.period_at, css.as_operator())?;
    let (mean, _) = diagonal_moments(&avg)?;
    t.note("cycle_averaged_steady_mean_number", mean);
    Ok(vec![t])
}

/// Monte-Carlo runs with observer accounts and click logs.
pub fn cmd_trajectory(cfg: &ScenarioConfig, seed: Option<u64>) -> Result<CommandOutput, CliError> {
    let tc = cfg.trajectory.as_ref().expect("validated");
    let det = cfg.detection_config()?;
    let master = seed.unwrap_or(tc.seed);
    let observers = tc
        .observers
        .iter()
        .map(|name| match name.as_str() {
            "alice" => Observer::alice(&det),
            "bob" => Observer::bob(&det),
            "chuck" => Observer::chuck(&det),
            _ => Observer::doris(&det),
        })
        .collect();
    let sim = Simulator::new(TrajectoryConfig {
        params: cfg.params()?,
        kick: cfg.kick_pair()?,
        detection: det,
        observers,
        t_end: tc.end_at,
        sample_dt: Some(tc.sample_at),
        initial: None,
        check_states: true,
    })?;
    let runs = oscdamp::trajectory::run_ensemble(&sim, master, tc.seeds)?;
    let mut series = Table::new(
        "trajectory_series",
        &["stream", "At", "observer", "mean_parity", "mean_number", "no_click_probability"],
    );
    let mut clicks = Table::new("trajectory_clicks", &["stream", "At", "branch", "detected"]);
    for r in &runs {
        for s in std::iter::once(&r.omniscient).chain(&r.observer_series) {
            for i in 0..s.times.len() {
                series.push(vec![
                    r.stream.into(),
                    s.times[i].into(),
                    s.name.as_str().into(),
                    s.parity[i].into(),
                    s.number[i].into(),
                    s.no_click[i].into(),
                ]);
            }
        }
        for c in &r.clicks {
            clicks.push(vec![r.stream.into(), c.time.into(), c.branch.to_string().into(), (c.detected as usize).into()]);
        }
    }
    Ok(CommandOutput { tables: vec![series, clicks], rng: Some(RNG_ALGORITHM.to_string()), seed: Some(master) })
}

impl From<u64> for Cell {
    fn from(i: u64) -> Self {
        Cell::Int(i as i64)
    }
}

fn columns_table(name: &str, names: &[String], columns: &[Vec<f64>]) -> Table {
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut t = Table::new(name, &refs);
    for i in 0..columns[0].len() {
        t.push(columns.iter().map(|c| Cell::Num(c[i])).collect());
    }
    t
}
