use crate::config::{ModeKind, RunConfig, SelectionKind};
use crate::output::{tag, Cell, Table, Writer};
use complexmarket::arbitrage_boundary::boundary_point;
use complexmarket::economy::{sample_economy_stream, ModelConfig};
use complexmarket::equilibrium::{ensemble_statistics_with, EnsembleOptions};
use complexmarket::hedging::{
    analytic_interbank, analytic_premium, endogenous_trajectory, hedge_ensemble, trajectory_grid, HedgeMode,
    Selection,
};
use complexmarket::saddlepoint::{consumption_density, consumption_quantile, SaddleSolution, SaddleSolver};
use complexmarket::Error;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

/// A point that failed numerically; the run still writes everything else.
#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub point: serde_json::Value,
    pub kind: &'static str,
    pub message: String,
    pub residual: Option<f64>,
    pub trace_tail: Vec<f64>,
}

impl Failure {
    fn from_error(point: serde_json::Value, e: &Error) -> Self {
        let trace_tail = match e {
            Error::NonConvergence { trace, .. } => trace[trace.len().saturating_sub(20)..].to_vec(),
            _ => Vec::new(),
        };
        Failure { point, kind: kind_of(e), message: e.to_string(), residual: e.residual(), trace_tail }
    }

    fn tolerance(point: serde_json::Value, residual: f64, tolerance: f64) -> Self {
        Failure {
            point,
            kind: "tolerance",
            message: format!("residual {residual:e} exceeds tolerance {tolerance:e}"),
            residual: Some(residual),
            trace_tail: Vec::new(),
        }
    }
}

fn kind_of(e: &Error) -> &'static str {
    match e {
        Error::Config(_) => "config",
        Error::Unbounded { .. } => "unbounded",
        Error::NonConvergence { .. } => "non_convergence",
        Error::IllConditioned(_) => "ill_conditioned",
        Error::RankDeficient { .. } => "rank_deficient",
        Error::Domain(_) => "domain",
        Error::Bracket(_) => "bracket",
        Error::Precondition(_) => "precondition",
        Error::EmptyStatistics(_) => "empty_statistics",
    }
}

pub enum CommandError {
    /// Invalid input discovered while running.
    Usage(String),
    Io(std::io::Error),
}

impl From<std::io::Error> for CommandError {
    fn from(e: std::io::Error) -> Self {
        CommandError::Io(e)
    }
}

pub type Outcome = Result<Vec<Failure>, CommandError>;

fn usage_or_failure(e: Error, point: serde_json::Value, failures: &mut Vec<Failure>) -> Result<(), CommandError> {
    if e.is_numerical() {
        failures.push(Failure::from_error(point, &e));
        Ok(())
    } else {
        Err(CommandError::Usage(e.to_string()))
    }
}

fn solver(cfg: &RunConfig) -> Result<SaddleSolver, CommandError> {
    SaddleSolver::new(cfg.model.crra_exponent, cfg.model.price_spread, cfg.quadrature_order)
        .map_err(|e| CommandError::Usage(e.to_string()))
}

fn model_params(cfg: &RunConfig) -> serde_json::Value {
    json!({
        "crra_exponent": cfg.model.crra_exponent,
        "price_spread": cfg.model.price_spread,
        "quadrature_order": cfg.quadrature_order,
        "tolerance": cfg.tolerance,
    })
}

const SADDLE_COLUMNS: &[&str] = &[
    "n", "epsilon", "lambda", "nu", "sigma", "G", "chi", "kappa", "phi", "emm_distance", "R", "V", "converged",
    "residual",
];

fn saddle_row(n: f64, epsilon: f64, s: Option<&SaddleSolution>, converged: bool) -> Vec<Cell> {
    let nan = f64::NAN;
    let v = |f: &dyn Fn(&SaddleSolution) -> f64| Cell::from(s.map_or(nan, f));
    vec![
        n.into(),
        epsilon.into(),
        v(&|s| s.params.lambda),
        v(&|s| s.params.nu),
        v(&|s| s.params.sigma),
        v(&|s| s.params.big_g),
        v(&|s| s.params.chi),
        v(&|s| s.params.kappa),
        v(&|s| s.completeness),
        v(&|s| s.emm_distance),
        v(&|s| s.revenue),
        v(&|s| s.volume),
        converged.into(),
        v(&|s| s.residual),
    ]
}

pub fn solve(cfg: &RunConfig, w: &mut Writer) -> Outcome {
    let sv = solver(cfg)?;
    let mut failures = Vec::new();
    let mut table = Table::new("solve", SADDLE_COLUMNS, model_params(cfg));
    let mut solutions = Vec::new();
    for &eps in &cfg.epsilon_values {
        for &n in &cfg.n_values {
            let point = json!({ "n": n, "epsilon": eps });
            let s = match sv.solve(n, eps, None) {
                Ok(s) => s,
                Err(e) => {
                    table.push(saddle_row(n, eps, None, false));
                    usage_or_failure(e, point, &mut failures)?;
                    continue;
                }
            };
            let converged = s.residual <= cfg.tolerance;
            if !converged {
                failures.push(Failure::tolerance(point, s.residual, cfg.tolerance));
            }
            table.push(saddle_row(n, eps, Some(&s), converged));
            density_table(cfg, &s, w, &mut failures);
            solutions.push(s);
        }
    }
    w.table("solve", &table);
    w.json("solution.json", &solutions);
    Ok(failures)
}

const DENSITY_COLUMNS: &[&str] = &["c", "density"];

fn density_table(cfg: &RunConfig, s: &SaddleSolution, w: &mut Writer, failures: &mut Vec<Failure>) {
    let point = json!({ "n": s.n, "epsilon": s.epsilon, "output": "density" });
    let bounds = consumption_quantile(s, 1e-4).and_then(|lo| Ok((lo, consumption_quantile(s, 1.0 - 1e-4)?)));
    let (lo, hi) = match bounds {
        Ok(b) => b,
        Err(e) => return failures.push(Failure::from_error(point, &e)),
    };
    let m = cfg.density_points;
    let grid: Vec<f64> = (0..m).map(|k| lo + (hi - lo) * k as f64 / (m - 1) as f64).collect();
    let d = match consumption_density(s, &grid) {
        Ok(d) => d,
        Err(e) => return failures.push(Failure::from_error(point, &e)),
    };
    let mut params = model_params(cfg);
    params["n"] = json!(s.n);
    params["epsilon"] = json!(s.epsilon);
    params["covered_mass"] = json!(d.covered_mass);
    params["atoms"] = json!(d.atoms);
    let mut t = Table::new("density", DENSITY_COLUMNS, params);
    for (c, f) in d.grid.iter().zip(&d.density) {
        t.push(vec![(*c).into(), (*f).into()]);
    }
    w.table(&format!("density_n{}_eps{}", tag(s.n), tag(s.epsilon)), &t);
}

pub fn sweep(cfg: &RunConfig, w: &mut Writer) -> Outcome {
    let sv = solver(cfg)?;
    let curves: Vec<_> = cfg
        .epsilon_values
        .par_iter()
        .map(|&eps| (eps, sv.sweep(&cfg.n_values, eps)))
        .collect();
    let mut failures = Vec::new();
    for (eps, curve) in curves {
        let curve = curve.map_err(|e| CommandError::Usage(e.to_string()))?;
        let mut params = model_params(cfg);
        params["epsilon"] = json!(eps);
        let mut t = Table::new("sweep", SADDLE_COLUMNS, params);
        for p in curve {
            let point = json!({ "n": p.n, "epsilon": eps });
            match &p.result {
                Ok(s) => {
                    let converged = s.residual <= cfg.tolerance;
                    if !converged {
                        failures.push(Failure::tolerance(point, s.residual, cfg.tolerance));
                    }
                    t.push(saddle_row(p.n, eps, Some(s), converged));
                }
                Err(e) => {
                    if e.is_numerical() {
                        failures.push(Failure::from_error(point, e));
                    }
                    t.push(saddle_row(p.n, eps, None, false));
                }
            }
        }
        w.table(&format!("sweep_eps{}", tag(eps)), &t);
    }
    Ok(failures)
}

const BOUNDARY_COLUMNS: &[&str] = &["epsilon", "n_critical", "xi", "t0", "residual_1", "residual_2", "stationary_points"];

pub fn boundary(cfg: &RunConfig, w: &mut Writer) -> Outcome {
    if let Some(bad) = cfg.epsilon_values.iter().find(|&&e| !(e < 0.0)) {
        return Err(CommandError::Usage(format!("the arbitrage boundary needs ε < 0, got {bad}")));
    }
    let points: Vec<_> = cfg.epsilon_values.par_iter().map(|&e| (e, boundary_point(e))).collect();
    let mut failures = Vec::new();
    let mut t = Table::new("boundary", BOUNDARY_COLUMNS, json!({}));
    for (eps, p) in points {
        match p {
            Ok(p) => t.push(vec![
                eps.into(),
                p.n_critical.into(),
                p.xi.into(),
                p.t0.into(),
                p.residual_1.into(),
                p.residual_2.into(),
                p.stationary_points.len().into(),
            ]),
            Err(e) => {
                usage_or_failure(e, json!({ "epsilon": eps }), &mut failures)?;
                let nan = f64::NAN;
                t.push(vec![eps.into(), nan.into(), nan.into(), nan.into(), nan.into(), nan.into(), 0usize.into()]);
            }
        }
    }
    w.table("boundary", &t);
    Ok(failures)
}

const TRAJECTORY_COLUMNS: &[&str] = &["n", "epsilon", "phi", "chi", "V", "g", "chi_w", "gamma", "converged", "residual"];

pub fn trajectory(cfg: &RunConfig, w: &mut Writer) -> Outcome {
    let sv = solver(cfg)?;
    let runs: Vec<_> = cfg
        .gamma_values
        .par_iter()
        .map(|&gamma| {
            let grid = if cfg.n_values.is_empty() {
                trajectory_grid(&sv, gamma, cfg.dn, &cfg.phi_targets)
            } else {
                Ok(cfg.n_values.clone())
            };
            (gamma, grid.and_then(|g| endogenous_trajectory(&sv, &g, gamma)))
        })
        .collect();
    let mut failures = Vec::new();
    for (gamma, run) in runs {
        let entries = match run {
            Ok(e) => e,
            Err(e) => {
                usage_or_failure(e, json!({ "gamma": gamma }), &mut failures)?;
                continue;
            }
        };
        let mut params = model_params(cfg);
        params["bank_risk_aversion"] = json!(gamma);
        let mut t = Table::new("trajectory", TRAJECTORY_COLUMNS, params);
        for entry in entries {
            let nan = f64::NAN;
            match entry.result {
                Ok(p) => {
                    let residual = p.saddle.residual.max(p.fixed_point_residual);
                    let converged = residual <= cfg.tolerance;
                    if !converged {
                        failures.push(Failure::tolerance(json!({ "n": p.n, "gamma": gamma }), residual, cfg.tolerance));
                    }
                    t.push(vec![
                        p.n.into(),
                        p.epsilon_endogenous.into(),
                        p.completeness.into(),
                        p.chi_consumer.into(),
                        p.volume_consumer.into(),
                        p.interbank_volume.into(),
                        p.chi_interbank.into(),
                        gamma.into(),
                        converged.into(),
                        residual.into(),
                    ]);
                }
                Err(e) => {
                    if e.is_numerical() {
                        failures.push(Failure::from_error(json!({ "n": entry.n, "gamma": gamma }), &e));
                    }
                    t.push(vec![
                        entry.n.into(),
                        nan.into(),
                        nan.into(),
                        nan.into(),
                        nan.into(),
                        nan.into(),
                        nan.into(),
                        gamma.into(),
                        false.into(),
                        nan.into(),
                    ]);
                }
            }
        }
        w.table(&format!("trajectory_gamma{}", tag(gamma)), &t);
    }
    Ok(failures)
}

fn point_config(cfg: &RunConfig, n: f64, eps: f64) -> ModelConfig {
    ModelConfig { n_ratio: n, epsilon: eps, ..cfg.model.clone() }
}

const ENSEMBLE_COLUMNS: &[&str] = &[
    "n", "epsilon", "omega", "samples", "used", "phi", "phi_se", "sigma_q", "sigma_q_se", "R", "R_se", "chi", "chi_se",
    "utility", "utility_se", "arbitrage_count", "failure_count",
];
const HISTOGRAM_COLUMNS: &[&str] = &["bin_left", "bin_right", "density"];

pub fn simulate(cfg: &RunConfig, w: &mut Writer, dump_economy: bool) -> Outcome {
    let mut failures = Vec::new();
    let mut params = model_params(cfg);
    params["seed"] = json!(cfg.model.seed);
    params["omega"] = json!(cfg.model.omega_count);
    let mut t = Table::new("ensemble", ENSEMBLE_COLUMNS, params.clone());
    let opts = EnsembleOptions { histogram_bins: cfg.bins, histogram_range: None };
    for &eps in &cfg.epsilon_values {
        for &n in &cfg.n_values {
            let pc = point_config(cfg, n, eps);
            let point = json!({ "n": n, "epsilon": eps });
            if dump_economy {
                let e = sample_economy_stream(&pc, 0).map_err(|e| CommandError::Usage(e.to_string()))?;
                w.json(&format!("economy_n{}_eps{}.json", tag(n), tag(eps)), &e.to_json());
            }
            let s = match ensemble_statistics_with(&pc, cfg.samples, &opts) {
                Ok(s) => s,
                Err(e) => {
                    usage_or_failure(e, point, &mut failures)?;
                    continue;
                }
            };
            if s.failure_count > 0 {
                failures.push(Failure {
                    point,
                    kind: "sample_failures",
                    message: format!("{} of {} samples failed to solve", s.failure_count, s.samples),
                    residual: None,
                    trace_tail: Vec::new(),
                });
            }
            t.push(vec![
                n.into(),
                eps.into(),
                s.omega.into(),
                s.samples.into(),
                s.used.into(),
                s.completeness.mean.into(),
                s.completeness.std_error.into(),
                s.sigma_q.mean.into(),
                s.sigma_q.std_error.into(),
                s.revenue.mean.into(),
                s.revenue.std_error.into(),
                s.susceptibility.mean.into(),
                s.susceptibility.std_error.into(),
                s.utility.mean.into(),
                s.utility.std_error.into(),
                s.arbitrage_count.into(),
                s.failure_count.into(),
            ]);
            let mut hp = params.clone();
            hp["n"] = json!(n);
            hp["epsilon"] = json!(eps);
            hp["quantity"] = json!("consumption");
            let mut h = Table::new("histogram", HISTOGRAM_COLUMNS, hp);
            let hist = &s.histogram;
            for (k, d) in hist.density.iter().enumerate() {
                h.push(vec![hist.edges[k].into(), hist.edges[k + 1].into(), (*d).into()]);
            }
            w.table(&format!("histogram_n{}_eps{}", tag(n), tag(eps)), &h);
        }
    }
    w.table("ensemble", &t);
    Ok(failures)
}

const HEDGE_COLUMNS: &[&str] = &[
    "n", "epsilon", "omega", "samples", "used", "gamma", "phi", "phi_se", "g", "g_se", "chi_w", "chi_w_se",
    "residual_risk", "residual_risk_se", "net_position", "g_analytic", "chi_w_analytic", "premium_analytic",
];

pub fn hedge(cfg: &RunConfig, w: &mut Writer) -> Outcome {
    let selection = match (cfg.selection, cfg.phi) {
        (SelectionKind::Equilibrium, _) => Selection::Equilibrium,
        (SelectionKind::Random, Some(phi)) => Selection::Random { phi },
        (SelectionKind::Random, None) => return Err(CommandError::Usage("random selection needs --phi".into())),
    };
    let mode = match cfg.mode {
        ModeKind::ZeroNet => HedgeMode::ZeroNet,
        ModeKind::Unconstrained => HedgeMode::Unconstrained,
    };
    let mut failures = Vec::new();
    let mut params = model_params(cfg);
    params["seed"] = json!(cfg.model.seed);
    params["selection"] = json!(cfg.selection);
    params["mode"] = json!(cfg.mode);
    let mut t = Table::new("hedge", HEDGE_COLUMNS, params);
    for &gamma in &cfg.gamma_values {
        for &eps in &cfg.epsilon_values {
            for &n in &cfg.n_values {
                let pc = point_config(cfg, n, eps);
                let point = json!({ "n": n, "epsilon": eps, "gamma": gamma });
                let h = match hedge_ensemble(&pc, cfg.samples, selection, mode, gamma) {
                    Ok(h) => h,
                    Err(e) => {
                        usage_or_failure(e, point, &mut failures)?;
                        continue;
                    }
                };
                let phi = h.completeness.mean;
                let (g, chi_w) = analytic_interbank(phi, gamma).unwrap_or((f64::NAN, f64::NAN));
                t.push(vec![
                    n.into(),
                    eps.into(),
                    pc.omega_count.into(),
                    h.samples.into(),
                    h.used.into(),
                    gamma.into(),
                    phi.into(),
                    h.completeness.std_error.into(),
                    h.interbank_volume.mean.into(),
                    h.interbank_volume.std_error.into(),
                    h.chi_w.mean.into(),
                    h.chi_w.std_error.into(),
                    h.residual_risk.mean.into(),
                    h.residual_risk.std_error.into(),
                    h.net_position.mean.into(),
                    g.into(),
                    chi_w.into(),
                    analytic_premium(phi, gamma).unwrap_or(f64::NAN).into(),
                ]);
            }
        }
    }
    w.table("hedge", &t);
    Ok(failures)
}
