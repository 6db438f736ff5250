//! Single-scenario execution: oracle, constants, certificate, integration
//! and diagnostics, with CSV and JSON renderings of the results.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{convergence_metrics, estimate_constants, min_k_star, Constants, MetricsRow, SampleRegion};
use crate::dynamics::{Flow, FlowKind};
use crate::error::{Error, Result};
use crate::graph::{strong_coupling_holds, strong_coupling_threshold};
use crate::par::Parallelism;
use crate::solver::{integrate, nash_oracle_unconstrained, nash_oracle_vi, vi_step, OracleResult};

use super::config::{Scenario, ScenarioConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    NotConverged,
    Diverged,
}

impl RunStatus {
    /// CLI exit code.
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Converged => 0,
            RunStatus::Diverged => 3,
            RunStatus::NotConverged => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub name: String,
    pub config_hash: String,
    pub seed: u64,
    pub flow: FlowKind,
    /// Set for flows without a convergence guarantee.
    pub experimental: bool,
    pub status: RunStatus,
    pub converged: bool,
    pub converge_threshold: f64,
    pub final_time: f64,
    pub final_ne_error: f64,
    pub final_consensus_error: f64,
    pub final_avg_error: f64,
    pub final_gains: Option<Vec<f64>>,
    pub diverged_at: Option<f64>,
    pub x_star: Vec<f64>,
    pub oracle_residual: f64,
    pub oracle_iterations: usize,
    pub constants: Constants,
    pub lambda2: Option<f64>,
    pub coupling_threshold: Option<f64>,
    pub condition_held: Option<bool>,
    pub min_k_star: Option<f64>,
    pub k_star: Option<f64>,
    pub logged_rows: usize,
    pub wall_time_s: f64,
}

/// Logged trajectory with its diagnostics, one row per logged time.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub name: String,
    pub config_hash: String,
    pub seed: u64,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl TrajectoryLog {
    /// CSV with `#` header lines; every number uses 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# scenario: {}", self.name);
        let _ = writeln!(out, "# config_hash: {}", self.config_hash);
        let _ = writeln!(out, "# seed: {}", self.seed);
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{v:.16e}");
            }
            out.push('\n');
        }
        out
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub log: TrajectoryLog,
    pub summary: Summary,
    pub metrics: Vec<MetricsRow>,
}

/// Ground-truth equilibrium: extragradient on the variational inequality
/// for constrained games, a root solve otherwise.
pub fn oracle(config: &ScenarioConfig, scenario: &Scenario, constants: &Constants) -> Result<OracleResult> {
    let game = &scenario.game;
    let x0 = vec![0.0; game.total_dim()];
    let spec = &config.oracle;
    let result = if game.constraints().is_some() {
        let tau = spec.vi_step.unwrap_or_else(|| default_vi_step(constants));
        nash_oracle_vi(game, &x0, tau, spec.tol, spec.max_iter)?
    } else {
        nash_oracle_unconstrained(game, &x0, spec.tol, spec.max_iter)?
    };
    if !result.converged {
        return Err(Error::Construction(format!(
            "equilibrium oracle stopped at residual {:e} after {} iterations",
            result.residual, result.iterations
        )));
    }
    Ok(result)
}

fn default_vi_step(c: &Constants) -> f64 {
    if c.mu > 0.0 {
        vi_step(c.mu, c.ell_f)
    } else {
        0.9 / c.ell_f
    }
}

pub fn scenario_constants(config: &ScenarioConfig, scenario: &Scenario) -> Result<Constants> {
    let region = SampleRegion {
        center: vec![0.0; scenario.game.total_dim()],
        radius: config.diagnostics.sample_radius,
    };
    estimate_constants(
        &scenario.game,
        &region,
        config.diagnostics.constant_samples,
        config.seed,
        Parallelism::Sequential,
    )
}

fn columns(flow: &Flow<'_>) -> Vec<String> {
    let n = flow.game.n_players();
    let m = flow.game.total_dim();
    let mut cols = vec!["t".to_string()];
    if flow.kind.is_networked() {
        for i in 1..=n {
            cols.extend((1..=m).map(|c| format!("x[{i}.{c}]")));
        }
    } else {
        cols.extend((1..=m).map(|c| format!("x[{c}]")));
    }
    if flow.kind.is_adaptive() {
        cols.extend((1..=n).map(|i| format!("k[{i}]")));
    }
    cols.extend(["ne_error", "consensus_error", "avg_error", "W"].map(String::from));
    cols
}

/// Run one scenario end to end. Divergence is reported in the summary,
/// not as an error.
pub fn run_scenario(config: &ScenarioConfig) -> Result<RunOutput> {
    let started = Instant::now();
    let scenario = config.build()?;
    let config_hash = config.hash()?;
    let constants = scenario_constants(config, &scenario)?;
    let oracle = oracle(config, &scenario, &constants)?;
    let x_star = &oracle.x_star;

    let lambda2 = scenario.graph.as_ref().map(|g| g.laplacian().lambda2());
    let positive_mu = constants.mu > 0.0;
    let coupling_threshold = (lambda2.is_some() && positive_mu).then(|| strong_coupling_threshold(constants.ell, constants.mu));
    let condition_held = lambda2.and_then(|l2| strong_coupling_holds(l2, constants.ell, constants.mu).ok());
    let min_k = lambda2.and_then(|l2| min_k_star(&constants, l2).ok());
    let k_star = min_k.map(|k| k * config.diagnostics.k_star_margin);

    let flow = Flow::new(config.flow, &scenario.game, scenario.graph.as_ref(), scenario.params.as_ref())?;
    let own = if config.flow.is_projected() { flow.own_blocks() } else { Vec::new() };
    let run = integrate(|y| flow.rhs_flat(y), &scenario.y0, &scenario.integrator, &own)?;
    let traj = &run.trajectory;

    // W needs a reference gain only when the state carries gains
    let w_gain = if config.flow.is_adaptive() { k_star } else { Some(0.0) };
    let metrics = convergence_metrics(traj, &flow, x_star, w_gain)?;

    let rows: Vec<Vec<f64>> = traj
        .times
        .iter()
        .zip(&traj.states)
        .zip(&metrics)
        .map(|((t, y), m)| {
            let mut row = Vec::with_capacity(y.len() + 5);
            row.push(*t);
            row.extend(y.iter().copied());
            row.extend([m.ne_error, m.consensus_error, m.avg_error, m.w.unwrap_or(f64::NAN)]);
            row
        })
        .collect();

    let last = metrics.last().ok_or_else(|| Error::Construction("empty trajectory".into()))?;
    let threshold = config.diagnostics.converge_threshold;
    let converged = run.diverged_at.is_none() && last.ne_error < threshold;
    let status = match (run.diverged_at, converged) {
        (Some(_), _) => RunStatus::Diverged,
        (None, true) => RunStatus::Converged,
        (None, false) => RunStatus::NotConverged,
    };

    let summary = Summary {
        name: config.name.clone(),
        config_hash: config_hash.clone(),
        seed: config.seed,
        flow: config.flow,
        experimental: config.flow.is_experimental(),
        status,
        converged,
        converge_threshold: threshold,
        final_time: last.t,
        final_ne_error: last.ne_error,
        final_consensus_error: last.consensus_error,
        final_avg_error: last.avg_error,
        final_gains: last.gains.clone(),
        diverged_at: run.diverged_at,
        x_star: x_star.clone(),
        oracle_residual: oracle.residual,
        oracle_iterations: oracle.iterations,
        constants,
        lambda2,
        coupling_threshold,
        condition_held,
        min_k_star: min_k,
        k_star,
        logged_rows: rows.len(),
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    let log = TrajectoryLog {
        name: config.name.clone(),
        config_hash,
        seed: config.seed,
        columns: columns(&flow),
        rows,
    };
    Ok(RunOutput { log, summary, metrics })
}

/// Write `<name>.csv` and `<name>.summary.json` into `dir`.
pub fn write_outputs(output: &RunOutput, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let csv = dir.join(format!("{}.csv", output.summary.name));
    let json = dir.join(format!("{}.summary.json", output.summary.name));
    std::fs::write(&csv, output.log.to_csv())?;
    let text = serde_json::to_string_pretty(&output.summary).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(&json, text + "\n")?;
    Ok((csv, json))
}
