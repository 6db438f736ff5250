//! Fixed-step integrators for the smooth and projected flows, and the
//! equilibrium oracles used as ground truth.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::Game;
use crate::sets::ConvexSet;

type Vector = DVector<f64>;

/// Runs abort once any state entry exceeds this magnitude.
pub const DIVERGENCE_BOUND: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rk4,
    Euler,
    ProjectedEuler,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorSpec {
    pub method: Method,
    pub step: f64,
    pub t_end: f64,
    pub log_every: usize,
}

impl IntegratorSpec {
    pub fn new(method: Method, step: f64, t_end: f64, log_every: usize) -> Result<Self> {
        let spec = Self {
            method,
            step,
            t_end,
            log_every,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::Input(format!("step must be positive, got {}", self.step)));
        }
        if !(self.t_end >= self.step) || !self.t_end.is_finite() {
            return Err(Error::Input(format!(
                "horizon {} must be at least one step ({})",
                self.t_end, self.step
            )));
        }
        if self.log_every == 0 {
            return Err(Error::Input("log_every must be positive".into()));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.step).round() as usize
    }
}

/// Logged samples of a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vector>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<(f64, &Vector)> {
        Some((*self.times.last()?, self.states.last()?))
    }

    fn push(&mut self, t: f64, y: &Vector) {
        self.times.push(t);
        self.states.push(y.clone());
    }
}

/// A finished run: the log plus the last finite time if the state blew up.
#[derive(Debug, Clone, PartialEq)]
pub struct Integration {
    pub trajectory: Trajectory,
    pub diverged_at: Option<f64>,
}

fn escaped(y: &Vector) -> bool {
    y.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_BOUND)
}

/// Run any method. `own_blocks` lists the slices re-projected after each
/// `ProjectedEuler` step; other methods ignore it.
pub fn integrate<F>(
    rhs: F,
    y0: &Vector,
    spec: &IntegratorSpec,
    own_blocks: &[(Range<usize>, &ConvexSet)],
) -> Result<Integration>
where
    F: Fn(&[f64]) -> Result<Vector>,
{
    spec.validate()?;
    let h = spec.step;
    let n = spec.n_steps();
    let mut y = y0.clone();
    if spec.method == Method::ProjectedEuler {
        reproject(&mut y, own_blocks)?;
    }
    let mut log = Trajectory::default();
    log.push(0.0, &y);

    for step in 1..=n {
        let next = match spec.method {
            Method::Euler => &y + rhs(y.as_slice())? * h,
            Method::Rk4 => {
                let k1 = rhs(y.as_slice())?;
                let k2 = rhs((&y + &k1 * (h / 2.0)).as_slice())?;
                let k3 = rhs((&y + &k2 * (h / 2.0)).as_slice())?;
                let k4 = rhs((&y + &k3 * h).as_slice())?;
                &y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
            }
            Method::ProjectedEuler => {
                let mut z = &y + rhs(y.as_slice())? * h;
                if !escaped(&z) {
                    reproject(&mut z, own_blocks)?;
                }
                z
            }
        };
        let t_prev = (step - 1) as f64 * h;
        if escaped(&next) {
            if log.times.last() != Some(&t_prev) {
                log.push(t_prev, &y);
            }
            return Ok(Integration {
                trajectory: log,
                diverged_at: Some(t_prev),
            });
        }
        y = next;
        if step % spec.log_every == 0 || step == n {
            log.push(step as f64 * h, &y);
        }
    }
    Ok(Integration {
        trajectory: log,
        diverged_at: None,
    })
}

fn reproject(y: &mut Vector, own_blocks: &[(Range<usize>, &ConvexSet)]) -> Result<()> {
    for (range, set) in own_blocks {
        let p = set.project(&y.as_slice()[range.clone()])?;
        y.as_mut_slice()[range.clone()].copy_from_slice(p.as_slice());
    }
    Ok(())
}

/// Classical RK4 or explicit Euler on a smooth right-hand side.
pub fn integrate_smooth<F>(rhs: F, y0: &Vector, spec: &IntegratorSpec) -> Result<Trajectory>
where
    F: Fn(&[f64]) -> Result<Vector>,
{
    if spec.method == Method::ProjectedEuler {
        return Err(Error::Input("projected Euler needs integrate_projected".into()));
    }
    finish(integrate(rhs, y0, spec, &[])?)
}

/// Euler step on the projected right-hand side followed by projection of
/// every own block back onto its set.
pub fn integrate_projected<F>(
    rhs: F,
    own_blocks: &[(Range<usize>, &ConvexSet)],
    y0: &Vector,
    spec: &IntegratorSpec,
) -> Result<Trajectory>
where
    F: Fn(&[f64]) -> Result<Vector>,
{
    if spec.method != Method::ProjectedEuler {
        return Err(Error::Input("integrate_projected needs method projected_euler".into()));
    }
    for (range, set) in own_blocks {
        set.admit(&y0.as_slice()[range.clone()])?;
    }
    finish(integrate(rhs, y0, spec, own_blocks)?)
}

fn finish(run: Integration) -> Result<Trajectory> {
    match run.diverged_at {
        Some(time) => Err(Error::Divergence { time }),
        None => Ok(run.trajectory),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult {
    pub x_star: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Solve `F(x) = 0`. Quadratic games use a direct linear solve; otherwise a
/// damped Newton iteration with a central-difference Jacobian.
pub fn nash_oracle_unconstrained(
    game: &Game,
    x0: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<OracleResult> {
    let mut x = Vector::from_column_slice(x0);
    let mut f = game.pseudo_gradient(x.as_slice())?;
    let mut residual = f.amax();
    if residual <= tol {
        return Ok(OracleResult {
            x_star: x.as_slice().to_vec(),
            residual,
            iterations: 0,
            converged: true,
        });
    }

    if let Some(q) = game.quadratic() {
        let lu = q.a().clone().lu();
        let mut iterations = 0;
        // direct solve, then refinement sweeps on the residual
        while residual > tol && iterations < max_iter.max(1).min(5) {
            let dx = lu
                .solve(&(-&f))
                .ok_or_else(|| Error::Input("pseudo-gradient matrix is singular".into()))?;
            x += dx;
            f = game.pseudo_gradient(x.as_slice())?;
            residual = f.amax();
            iterations += 1;
        }
        return Ok(OracleResult {
            x_star: x.as_slice().to_vec(),
            residual,
            iterations,
            converged: residual <= tol,
        });
    }

    let mut best = (residual, x.clone());
    let mut iterations = 0;
    while iterations < max_iter && residual > tol {
        iterations += 1;
        let jac = finite_difference_jacobian(game, &x)?;
        let Some(dx) = jac.lu().solve(&(-&f)) else { break };
        let norm0 = f.norm();
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial = &x + &dx * alpha;
            let ft = game.pseudo_gradient(trial.as_slice())?;
            if ft.norm() < norm0 || ft.amax() <= tol {
                x = trial;
                f = ft;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
        residual = f.amax();
        if residual < best.0 {
            best = (residual, x.clone());
        }
    }
    Ok(OracleResult {
        x_star: best.1.as_slice().to_vec(),
        residual: best.0,
        iterations,
        converged: best.0 <= tol,
    })
}

fn finite_difference_jacobian(game: &Game, x: &Vector) -> Result<DMatrix<f64>> {
    let mut jac = DMatrix::zeros(x.len(), x.len());
    let mut probe = x.clone();
    for j in 0..x.len() {
        let h = 1e-6 * x[j].abs().max(1.0);
        probe[j] = x[j] + h;
        let up = game.pseudo_gradient(probe.as_slice())?;
        probe[j] = x[j] - h;
        let down = game.pseudo_gradient(probe.as_slice())?;
        probe[j] = x[j];
        jac.set_column(j, &((up - down) / (2.0 * h)));
    }
    Ok(jac)
}

/// Step `mu / ell^2` for the VI oracle: inside `(0, 2 mu / ell^2)` and below
/// the extragradient limit `1 / ell`.
pub fn vi_step(mu: f64, ell: f64) -> f64 {
    mu / (ell * ell)
}

/// Natural-map residual `||x - proj(x - tau F(x))||_inf`.
pub fn vi_residual(game: &Game, x: &[f64], tau: f64) -> Result<f64> {
    let f = game.pseudo_gradient(x)?;
    let xv = Vector::from_column_slice(x);
    let moved = &xv - f * tau;
    Ok((xv - game.project_profile(moved.as_slice())?).amax())
}

/// Extragradient iteration for the variational inequality over the product
/// of the players' constraint sets.
pub fn nash_oracle_vi(
    game: &Game,
    x0: &[f64],
    tau: f64,
    tol: f64,
    max_iter: usize,
) -> Result<OracleResult> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Input(format!("VI step must be positive, got {tau}")));
    }
    let mut x = game.project_profile(x0)?;
    let mut iterations = 0;
    let mut residual = vi_residual(game, x.as_slice(), tau)?;
    while residual > tol && iterations < max_iter {
        let y = game.project_profile((&x - game.pseudo_gradient(x.as_slice())? * tau).as_slice())?;
        x = game.project_profile((&x - game.pseudo_gradient(y.as_slice())? * tau).as_slice())?;
        iterations += 1;
        residual = vi_residual(game, x.as_slice(), tau)?;
        if !residual.is_finite() {
            break;
        }
    }
    Ok(OracleResult {
        x_star: x.as_slice().to_vec(),
        residual,
        iterations,
        converged: residual <= tol,
    })
}
