//! Certificates and convergence diagnostics: monotonicity and Lipschitz
//! constants, the reference gain `k*` with its 2x2 certificate matrix, the
//! Lyapunov function `W` and its derivative along a flow, and per-sample
//! error metrics.
//!
//! `k*` is analysis-only. It parameterizes `W` and never enters a flow.

use nalgebra::{DVector, Matrix2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dynamics::{ExtendedState, Flow};
use crate::error::{Error, Result};
use crate::game::{stack_consensus, Game};
use crate::graph::consensus_projector_norm;
use crate::par::{map_indices, Parallelism};
use crate::solver::Trajectory;

type Vector = DVector<f64>;

/// Pairs closer than this are skipped when sampling ratios.
const DEGENERATE_PAIR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Constants {
    /// Strong monotonicity of `F`.
    pub mu: f64,
    /// Lipschitz constant of `F`.
    pub ell_f: f64,
    /// Lipschitz constant of the extended pseudo-gradient.
    pub ell_bold: f64,
    /// `max(ell_f, ell_bold)`.
    pub ell: f64,
    pub exact: bool,
}

/// Axis-aligned sampling box `center +- radius` (per coordinate).
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRegion {
    pub center: Vec<f64>,
    pub radius: f64,
}

/// Exact constants for quadratic games, sampled ones otherwise.
pub fn estimate_constants(
    game: &Game,
    region: &SampleRegion,
    n_samples: usize,
    seed: u64,
    mode: Parallelism,
) -> Result<Constants> {
    match game.quadratic() {
        Some(q) => {
            let mu = q.strong_monotonicity();
            let ell_f = q.lipschitz();
            let ell_bold = q.extended_lipschitz();
            Ok(Constants {
                mu,
                ell_f,
                ell_bold,
                ell: ell_f.max(ell_bold),
                exact: true,
            })
        }
        None => sample_constants(game, region, n_samples, seed, mode),
    }
}

/// Ratio sampling over random pairs in the region. Pair `p` draws from its
/// own ChaCha stream, so results do not depend on the execution mode.
pub fn sample_constants(
    game: &Game,
    region: &SampleRegion,
    n_samples: usize,
    seed: u64,
    mode: Parallelism,
) -> Result<Constants> {
    if n_samples < 2 {
        return Err(Error::Input(format!("need at least 2 samples, got {n_samples}")));
    }
    let m = game.total_dim();
    if region.center.len() != m {
        return Err(Error::dim("sampling center", m, region.center.len()));
    }
    if !(region.radius > 0.0) {
        return Err(Error::Input(format!("sampling radius must be positive, got {}", region.radius)));
    }
    let n = game.n_players();
    let stacked_center = stack_consensus(&region.center, n);

    let draws = map_indices(n_samples, mode, |p| -> Result<(f64, f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(p as u64);
        let mut around = |c: &[f64]| -> Vector {
            Vector::from_iterator(
                c.len(),
                c.iter().map(|ci| ci + rng.random_range(-region.radius..=region.radius)),
            )
        };
        let x = around(&region.center);
        let y = around(&region.center);
        let xs = around(stacked_center.as_slice());
        let ys = around(stacked_center.as_slice());

        let (mut mono, mut lip, mut lip_bold) = (f64::INFINITY, 0.0, 0.0);
        let d = &x - &y;
        if d.norm() >= DEGENERATE_PAIR {
            let df = game.pseudo_gradient(x.as_slice())? - game.pseudo_gradient(y.as_slice())?;
            mono = d.dot(&df) / d.norm_squared();
            lip = df.norm() / d.norm();
        }
        let ds = &xs - &ys;
        if ds.norm() >= DEGENERATE_PAIR {
            let df = game.extended_pseudo_gradient(xs.as_slice())?
                - game.extended_pseudo_gradient(ys.as_slice())?;
            lip_bold = df.norm() / ds.norm();
        }
        Ok((mono, lip, lip_bold))
    });

    let (mut mu, mut ell_f, mut ell_bold) = (f64::INFINITY, 0.0f64, 0.0f64);
    for draw in draws {
        let (a, b, c) = draw?;
        mu = mu.min(a);
        ell_f = ell_f.max(b);
        ell_bold = ell_bold.max(c);
    }
    if !mu.is_finite() {
        return Err(Error::Input("every sampled pair was degenerate".into()));
    }
    Ok(Constants {
        mu,
        ell_f,
        ell_bold,
        ell: ell_f.max(ell_bold),
        exact: false,
    })
}

/// `k*` together with the certificate matrix
/// `[[-ell_bold + k* lambda2^2, ell], [ell, mu]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certificate {
    pub k_star: f64,
    pub m_matrix: Matrix2<f64>,
    pub pd: bool,
    pub lambda2: f64,
}

impl Certificate {
    pub fn new(constants: &Constants, lambda2: f64, k_star: f64) -> Self {
        let m = Matrix2::new(
            -constants.ell_bold + k_star * lambda2 * lambda2,
            constants.ell,
            constants.ell,
            constants.mu,
        );
        let pd = m[(0, 0)] > 0.0 && m.determinant() > 0.0;
        Self {
            k_star,
            m_matrix: m,
            pd,
            lambda2,
        }
    }
}

/// Infimum of the `k*` making the certificate matrix positive definite:
/// `(ell_bold + ell^2 / mu) / lambda2^2`.
pub fn min_k_star(constants: &Constants, lambda2: f64) -> Result<f64> {
    if !(constants.mu > 0.0) || !(lambda2 > 0.0) || !(constants.ell > 0.0) {
        return Err(Error::Input(format!(
            "k* needs positive mu, ell and lambda2 (got {}, {}, {lambda2})",
            constants.mu, constants.ell
        )));
    }
    Ok((constants.ell_bold + constants.ell * constants.ell / constants.mu) / (lambda2 * lambda2))
}

/// `V(X, Y) = 1/2 ||X - Y||^2`.
pub fn storage_v(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::dim("storage function", x.len(), y.len()));
    }
    Ok(0.5 * x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
}

fn equilibrium_point(state: &ExtendedState, x_star: &[f64]) -> Result<Vector> {
    let m = x_star.len();
    if m == 0 || state.x.len() % m != 0 {
        return Err(Error::dim("state vs equilibrium", m, state.x.len()));
    }
    Ok(stack_consensus(x_star, state.x.len() / m))
}

/// `W = 1/2 ||X - 1 (x) x*||^2 + 1/2 sum_i (k_i - k*)^2 / gamma_i`. The
/// gain term is dropped when the state carries no gains.
pub fn lyapunov_w(state: &ExtendedState, x_star: &[f64], k_star: f64, gamma: &[f64]) -> Result<f64> {
    let bar = equilibrium_point(state, x_star)?;
    let mut w = storage_v(state.x.as_slice(), bar.as_slice())?;
    if let Some(k) = &state.k {
        if k.len() != gamma.len() {
            return Err(Error::dim("gamma", k.len(), gamma.len()));
        }
        w += 0.5
            * k.iter()
                .zip(gamma)
                .map(|(ki, g)| (ki - k_star) * (ki - k_star) / g)
                .sum::<f64>();
    }
    Ok(w)
}

/// `grad W . rhs` at `state` for the given flow.
pub fn w_dot_along(flow: &Flow<'_>, state: &ExtendedState, x_star: &[f64], k_star: f64) -> Result<f64> {
    let bar = equilibrium_point(state, x_star)?;
    let rate = flow.rhs(state)?;
    let mut wdot = (&state.x - bar).dot(&rate.x);
    if let (Some(k), Some(kdot)) = (&state.k, &rate.k) {
        let gamma = flow
            .params
            .ok_or_else(|| Error::Input("adaptive flow without parameters".into()))?
            .gamma();
        for i in 0..k.len() {
            wdot += (k[i] - k_star) / gamma[i] * kdot[i];
        }
    }
    Ok(wdot)
}

/// Diagnostics at one logged time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub t: f64,
    /// `||X - 1 (x) x*||_inf`.
    pub ne_error: f64,
    /// `||(P_N (x) I_M) X||`.
    pub consensus_error: f64,
    /// `||avg(X) - x*||`.
    pub avg_error: f64,
    pub gains: Option<Vec<f64>>,
    pub w: Option<f64>,
}

/// Per-sample metrics along a trajectory of `flow`. `W` is reported when a
/// reference gain is supplied.
pub fn convergence_metrics(
    traj: &Trajectory,
    flow: &Flow<'_>,
    x_star: &[f64],
    k_star: Option<f64>,
) -> Result<Vec<MetricsRow>> {
    let gamma: Vec<f64> = flow
        .params
        .map(|p| p.gamma().as_slice().to_vec())
        .unwrap_or_default();
    traj.times
        .iter()
        .zip(&traj.states)
        .map(|(&t, flat)| {
            let state = flow.split(flat.as_slice())?;
            state_metrics(t, &state, x_star, k_star, &gamma)
        })
        .collect()
}

pub fn state_metrics(
    t: f64,
    state: &ExtendedState,
    x_star: &[f64],
    k_star: Option<f64>,
    gamma: &[f64],
) -> Result<MetricsRow> {
    let bar = equilibrium_point(state, x_star)?;
    let n = state.x.len() / x_star.len();
    let ne_error = (&state.x - &bar).amax();
    let (consensus_error, avg) = consensus_projector_norm(state.x.as_slice(), n)?;
    let avg_error = (avg - Vector::from_column_slice(x_star)).norm();
    let w = match k_star {
        Some(ks) if state.k.is_none() || gamma.len() == state.k.as_ref().map_or(0, |k| k.len()) => {
            Some(lyapunov_w(state, x_star, ks, gamma)?)
        }
        _ => None,
    };
    Ok(MetricsRow {
        t,
        ne_error,
        consensus_error,
        avg_error,
        gains: state.k.as_ref().map(|k| k.as_slice().to_vec()),
        w,
    })
}

/// Least-squares fit of `ln y = a + b t`. Returns `(b, a, r_squared)`.
pub fn log_linear_fit(t: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    if t.len() != y.len() || t.len() < 3 {
        return Err(Error::Input("log-linear fit needs at least 3 paired samples".into()));
    }
    if y.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Input("log-linear fit needs positive values".into()));
    }
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = t.len() as f64;
    let mt = t.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = t.iter().map(|ti| (ti - mt).powi(2)).sum();
    let sxy: f64 = t.iter().zip(&ly).map(|(ti, yi)| (ti - mt) * (yi - my)).sum();
    let syy: f64 = ly.iter().map(|yi| (yi - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mt;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok((slope, intercept, r2))
}
