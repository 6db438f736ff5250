//! Right-hand sides of the seeking flows.
//!
//! Stacked estimates `X = col(x^1, ..., x^N)` are viewed as an `M x N`
//! matrix whose column `i` is agent `i`'s estimate. With that view
//! `(L (x) I_M) X` is `X L` (the Laplacian is symmetric), so every coupling
//! term is one small matrix product:
//!
//! * local averages `rho = -(L (x) I) X` are `-X L`;
//! * the averaging-integral coupling `u = (L (x) I)(K (x) I) rho` is `(rho K) L`;
//! * the local-gain variant uses `u^i = k_i rho^i`, i.e. `rho K`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::Game;
use crate::graph::Graph;

type Vector = DVector<f64>;

/// Which closed loop to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowKind {
    FullInfo,
    StaticConsensus,
    Dai,
    /// Local-gain coupling `u^i = k_i rho^i`. No convergence guarantee.
    DaiLocal,
    ProjectedDai,
}

impl FlowKind {
    pub const ALL: [FlowKind; 5] = [
        FlowKind::FullInfo,
        FlowKind::StaticConsensus,
        FlowKind::Dai,
        FlowKind::DaiLocal,
        FlowKind::ProjectedDai,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FlowKind::FullInfo => "full_info",
            FlowKind::StaticConsensus => "static_consensus",
            FlowKind::Dai => "dai",
            FlowKind::DaiLocal => "dai_local",
            FlowKind::ProjectedDai => "projected_dai",
        }
    }

    pub fn is_experimental(self) -> bool {
        self == FlowKind::DaiLocal
    }

    /// True for flows carrying integral gains `k`.
    pub fn is_adaptive(self) -> bool {
        matches!(self, FlowKind::Dai | FlowKind::DaiLocal | FlowKind::ProjectedDai)
    }

    /// True for flows over stacked estimates (everything but full information).
    pub fn is_networked(self) -> bool {
        self != FlowKind::FullInfo
    }

    pub fn is_projected(self) -> bool {
        self == FlowKind::ProjectedDai
    }
}

impl std::fmt::Display for FlowKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Stacked estimates and, for adaptive flows, the gain vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedState {
    pub x: Vector,
    pub k: Option<Vector>,
}

impl ExtendedState {
    pub fn new(x: Vector, k: Option<Vector>) -> Self {
        Self { x, k }
    }

    /// `[X; k]` as one vector.
    pub fn to_flat(&self) -> Vector {
        match &self.k {
            None => self.x.clone(),
            Some(k) => {
                let mut out = Vector::zeros(self.x.len() + k.len());
                out.rows_mut(0, self.x.len()).copy_from(&self.x);
                out.rows_mut(self.x.len(), k.len()).copy_from(k);
                out
            }
        }
    }

    pub fn from_flat(flat: &[f64], x_len: usize, with_gains: bool) -> Result<Self> {
        if flat.len() < x_len || (!with_gains && flat.len() != x_len) {
            return Err(Error::dim("flat state", x_len, flat.len()));
        }
        let x = Vector::from_column_slice(&flat[..x_len]);
        let k = with_gains.then(|| Vector::from_column_slice(&flat[x_len..]));
        Ok(Self { x, k })
    }

    fn gains(&self, n: usize) -> Result<&Vector> {
        let k = self
            .k
            .as_ref()
            .ok_or_else(|| Error::Input("adaptive flow needs a gain vector".into()))?;
        if k.len() != n {
            return Err(Error::dim("gain vector", n, k.len()));
        }
        Ok(k)
    }
}

/// Integral-loop rates `gamma_i > 0` and initial gains.
#[derive(Debug, Clone, PartialEq)]
pub struct DaiParams {
    gamma: Vector,
    k_init: Vector,
}

impl DaiParams {
    pub fn new(gamma: Vec<f64>, k_init: Vec<f64>) -> Result<Self> {
        if gamma.len() != k_init.len() {
            return Err(Error::dim("initial gains", gamma.len(), k_init.len()));
        }
        if let Some(g) = gamma.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
            return Err(Error::Input(format!("every gamma_i must be positive, got {g}")));
        }
        if k_init.iter().any(|k| !k.is_finite()) {
            return Err(Error::Input("initial gains must be finite".into()));
        }
        Ok(Self {
            gamma: Vector::from_vec(gamma),
            k_init: Vector::from_vec(k_init),
        })
    }

    /// `gamma_i = gamma`, `k_i(0) = 0`.
    pub fn uniform(n: usize, gamma: f64) -> Result<Self> {
        Self::new(vec![gamma; n], vec![0.0; n])
    }

    pub fn gamma(&self) -> &Vector {
        &self.gamma
    }

    pub fn k_init(&self) -> &Vector {
        &self.k_init
    }
}

fn as_columns(x: &Vector, n: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(x.len() / n, n, x.as_slice())
}

fn flatten(m: DMatrix<f64>) -> Vector {
    Vector::from_column_slice(m.as_slice())
}

fn check_network(game: &Game, graph: &Graph, x: &Vector) -> Result<()> {
    if graph.n_nodes() != game.n_players() {
        return Err(Error::dim("graph nodes", game.n_players(), graph.n_nodes()));
    }
    game.selection().check_stacked(x.len())
}

/// `-F(x)`.
pub fn rhs_full_info(game: &Game, x: &[f64]) -> Result<Vector> {
    Ok(-game.pseudo_gradient(x)?)
}

/// `rho = -(L (x) I_M) X`; block `i` equals `sum_j a_ij (x^j - x^i)`.
pub fn local_average(graph: &Graph, x: &Vector) -> Result<Vector> {
    let n = graph.n_nodes();
    if x.len() % n != 0 {
        return Err(Error::Input(format!(
            "stacked length {} is not a multiple of {n}",
            x.len()
        )));
    }
    Ok(flatten(-(as_columns(x, n) * graph.laplacian().matrix())))
}

/// `-R' F(X) - (L (x) I_M) X`.
pub fn rhs_static_consensus(game: &Game, graph: &Graph, x: &Vector) -> Result<Vector> {
    check_network(game, graph, x)?;
    let drift = game
        .selection()
        .embed_stacked(game.extended_pseudo_gradient(x.as_slice())?.as_slice())?;
    Ok(local_average(graph, x)? - drift)
}

fn gain_rates(params: &DaiParams, rho: &DMatrix<f64>) -> Result<Vector> {
    if params.gamma.len() != rho.ncols() {
        return Err(Error::dim("gamma", rho.ncols(), params.gamma.len()));
    }
    Ok(Vector::from_fn(rho.ncols(), |i, _| {
        params.gamma[i] * rho.column(i).norm_squared()
    }))
}

#[derive(Clone, Copy)]
enum Coupling {
    Averaging,
    Local,
}

/// Returns the pieces shared by the adaptive flows: `(-R'F(X), u, kdot)`.
fn adaptive_terms(
    game: &Game,
    graph: &Graph,
    params: &DaiParams,
    state: &ExtendedState,
    coupling: Coupling,
) -> Result<(Vector, Vector, Vector)> {
    check_network(game, graph, &state.x)?;
    let n = game.n_players();
    let k = state.gains(n)?;
    let lap = graph.laplacian().matrix();
    let rho = -(as_columns(&state.x, n) * lap);
    let weighted = &rho * DMatrix::from_diagonal(k);
    let u = match coupling {
        Coupling::Averaging => weighted * lap,
        Coupling::Local => weighted,
    };
    let kdot = gain_rates(params, &rho)?;
    let drift = -game
        .selection()
        .embed_stacked(game.extended_pseudo_gradient(state.x.as_slice())?.as_slice())?;
    Ok((drift, flatten(u), kdot))
}

/// Averaging-integral closed loop:
/// `Xdot = -R'F(X) - (L K L (x) I_M) X`, `kdot_i = gamma_i ||rho^i||^2`.
pub fn rhs_dai(
    game: &Game,
    graph: &Graph,
    params: &DaiParams,
    state: &ExtendedState,
) -> Result<(Vector, Vector)> {
    let (drift, u, kdot) = adaptive_terms(game, graph, params, state, Coupling::Averaging)?;
    Ok((drift + u, kdot))
}

/// Local-gain variant `u^i = k_i rho^i` with the same gain law. Experimental.
pub fn rhs_dai_local(
    game: &Game,
    graph: &Graph,
    params: &DaiParams,
    state: &ExtendedState,
) -> Result<(Vector, Vector)> {
    let (drift, u, kdot) = adaptive_terms(game, graph, params, state, Coupling::Local)?;
    Ok((drift + u, kdot))
}

/// Projected averaging-integral loop. Agent `i`'s own block moves along
/// `Pi_{Omega_i}(x_i, -dJ_i/dx_i(x^i) + u^i_i)`; its estimates of the other
/// players follow `u^i_j` unprojected. Gains are never projected.
pub fn rhs_projected_dai(
    game: &Game,
    graph: &Graph,
    params: &DaiParams,
    state: &ExtendedState,
) -> Result<(Vector, Vector)> {
    let sets = game.constraints().ok_or_else(|| {
        Error::Unsupported("projected flow needs constraint sets on every player".into())
    })?;
    let (drift, u, kdot) = adaptive_terms(game, graph, params, state, Coupling::Averaging)?;
    let sel = game.selection();
    let mut xdot = u;
    for (i, set) in sets.iter().enumerate() {
        let own = sel.own_range(i);
        let drive: Vec<f64> = own.clone().map(|r| drift[r] + xdot[r]).collect();
        let moved = set.tangent_projection(&state.x.as_slice()[own.clone()], &drive)?;
        xdot.as_mut_slice()[own].copy_from_slice(moved.as_slice());
    }
    Ok((xdot, kdot))
}

/// Evaluate the selected flow. For `FullInfo` the state's `x` is a profile
/// in `R^M` and no graph is used.
pub fn evaluate(
    kind: FlowKind,
    game: &Game,
    graph: Option<&Graph>,
    params: Option<&DaiParams>,
    state: &ExtendedState,
) -> Result<ExtendedState> {
    let need_graph = || graph.ok_or_else(|| Error::Input(format!("flow `{kind}` needs a graph")));
    let need_params =
        || params.ok_or_else(|| Error::Input(format!("flow `{kind}` needs integral-loop parameters")));
    Ok(match kind {
        FlowKind::FullInfo => ExtendedState::new(rhs_full_info(game, state.x.as_slice())?, None),
        FlowKind::StaticConsensus => {
            ExtendedState::new(rhs_static_consensus(game, need_graph()?, &state.x)?, None)
        }
        FlowKind::Dai => {
            let (x, k) = rhs_dai(game, need_graph()?, need_params()?, state)?;
            ExtendedState::new(x, Some(k))
        }
        FlowKind::DaiLocal => {
            let (x, k) = rhs_dai_local(game, need_graph()?, need_params()?, state)?;
            ExtendedState::new(x, Some(k))
        }
        FlowKind::ProjectedDai => {
            let (x, k) = rhs_projected_dai(game, need_graph()?, need_params()?, state)?;
            ExtendedState::new(x, Some(k))
        }
    })
}

/// `||(Xdot, kdot)||_inf` of the selected flow.
pub fn equilibrium_residual(
    kind: FlowKind,
    game: &Game,
    graph: Option<&Graph>,
    params: Option<&DaiParams>,
    state: &ExtendedState,
) -> Result<f64> {
    let rate = evaluate(kind, game, graph, params, state)?;
    let kmax = rate.k.as_ref().map_or(0.0, |k| k.amax());
    Ok(rate.x.amax().max(kmax))
}

/// A flow bound to its game, graph and parameters, evaluated on flat
/// `[X; k]` vectors for the integrators.
#[derive(Debug, Clone)]
pub struct Flow<'a> {
    pub kind: FlowKind,
    pub game: &'a Game,
    pub graph: Option<&'a Graph>,
    pub params: Option<&'a DaiParams>,
}

impl<'a> Flow<'a> {
    pub fn new(
        kind: FlowKind,
        game: &'a Game,
        graph: Option<&'a Graph>,
        params: Option<&'a DaiParams>,
    ) -> Result<Self> {
        if kind.is_networked() {
            let g = graph.ok_or_else(|| Error::Input(format!("flow `{kind}` needs a graph")))?;
            if g.n_nodes() != game.n_players() {
                return Err(Error::dim("graph nodes", game.n_players(), g.n_nodes()));
            }
        }
        if kind.is_adaptive() {
            let p = params
                .ok_or_else(|| Error::Input(format!("flow `{kind}` needs integral-loop parameters")))?;
            if p.gamma.len() != game.n_players() {
                return Err(Error::dim("gamma", game.n_players(), p.gamma.len()));
            }
        }
        if kind.is_projected() && game.constraints().is_none() {
            return Err(Error::Unsupported(
                "projected flow needs constraint sets on every player".into(),
            ));
        }
        Ok(Self {
            kind,
            game,
            graph,
            params,
        })
    }

    /// Length of the estimate part of the state.
    pub fn x_len(&self) -> usize {
        if self.kind.is_networked() {
            self.game.selection().stacked_len()
        } else {
            self.game.total_dim()
        }
    }

    pub fn state_len(&self) -> usize {
        self.x_len() + if self.kind.is_adaptive() { self.game.n_players() } else { 0 }
    }

    pub fn split(&self, flat: &[f64]) -> Result<ExtendedState> {
        if flat.len() != self.state_len() {
            return Err(Error::dim("flat state", self.state_len(), flat.len()));
        }
        ExtendedState::from_flat(flat, self.x_len(), self.kind.is_adaptive())
    }

    pub fn rhs(&self, state: &ExtendedState) -> Result<ExtendedState> {
        evaluate(self.kind, self.game, self.graph, self.params, state)
    }

    pub fn rhs_flat(&self, flat: &[f64]) -> Result<Vector> {
        Ok(self.rhs(&self.split(flat)?)?.to_flat())
    }

    pub fn residual(&self, state: &ExtendedState) -> Result<f64> {
        equilibrium_residual(self.kind, self.game, self.graph, self.params, state)
    }

    /// Flat offsets of each player's own block with its constraint set, for
    /// re-projection after a step.
    pub fn own_blocks(&self) -> Vec<(std::ops::Range<usize>, &'a crate::sets::ConvexSet)> {
        let sel = self.game.selection();
        match self.game.constraints() {
            None => Vec::new(),
            Some(sets) => sets
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let r = if self.kind.is_networked() { sel.own_range(i) } else { sel.range(i) };
                    (r, s)
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{stack_consensus, QuadraticGame};
    use crate::sets::ConvexSet;
    use approx::assert_abs_diff_eq;
    use nalgebra::dmatrix;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn decoupled() -> Game {
        QuadraticGame::decoupled(&[1.0, -1.0], 1.0, &[1, 1]).unwrap().to_game()
    }

    fn zero_game(dims: &[usize]) -> Game {
        let m: usize = dims.iter().sum();
        QuadraticGame::new(DMatrix::zeros(m, m), Vector::zeros(m), dims).unwrap().to_game()
    }

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    /// Blockwise `u^i = -sum_j a_ij (k_j rho^j - k_i rho^i)`.
    fn blockwise_dai_coupling(graph: &Graph, x: &Vector, k: &Vector, m: usize) -> Vector {
        let n = graph.n_nodes();
        let block = |v: &Vector, i: usize| v.rows(i * m, m).into_owned();
        let rho: Vec<Vector> = (0..n)
            .map(|i| {
                (0..n).fold(Vector::zeros(m), |acc, j| {
                    acc + (block(x, j) - block(x, i)) * graph.weight(i, j)
                })
            })
            .collect();
        let mut u = Vector::zeros(n * m);
        for i in 0..n {
            let ui = (0..n).fold(Vector::zeros(m), |acc, j| {
                acc - (&rho[j] * k[j] - &rho[i] * k[i]) * graph.weight(i, j)
            });
            u.rows_mut(i * m, m).copy_from(&ui);
        }
        u
    }

    #[test]
    fn full_info_examples() {
        let g = decoupled();
        assert_eq!(rhs_full_info(&g, &[0.0, 0.0]).unwrap().as_slice(), &[2.0, -2.0]);
        assert_eq!(rhs_full_info(&g, &[1.0, -1.0]).unwrap().as_slice(), &[0.0, 0.0]);
        let q = QuadraticGame::new(DMatrix::identity(2, 2) * 2.0, v(&[-2.0, 2.0]), &[1, 1])
            .unwrap()
            .to_game();
        assert_eq!(rhs_full_info(&q, &[0.0, 0.0]).unwrap().as_slice(), &[2.0, -2.0]);
    }

    #[test]
    fn local_average_examples() {
        let edge = Graph::path(2, 1.0).unwrap();
        let rho = local_average(&edge, &v(&[3.0, 4.0, 3.0, 4.0])).unwrap();
        assert_eq!(rho.as_slice(), &[0.0; 4]);
        let rho = local_average(&edge, &v(&[0.0, 0.0, 1.0, 1.0])).unwrap();
        assert_eq!(rho.as_slice(), &[1.0, 1.0, -1.0, -1.0]);
        let path = Graph::path(3, 1.0).unwrap();
        let x = [0.0, 1.0, 3.0];
        let rho = local_average(&path, &v(&x)).unwrap();
        let blockwise: Vec<f64> = (0..3)
            .map(|i| (0..3).map(|j| path.weight(i, j) * (x[j] - x[i])).sum())
            .collect();
        assert_eq!(rho.as_slice(), blockwise.as_slice());
        assert_eq!(rho.as_slice(), &[1.0, 1.0, -2.0]);
    }

    #[test]
    fn static_consensus_examples() {
        let g = decoupled();
        let edge = Graph::path(2, 1.0).unwrap();
        let eq = stack_consensus(&[1.0, -1.0], 2);
        assert_eq!(rhs_static_consensus(&g, &edge, &eq).unwrap().amax(), 0.0);
        let r = rhs_static_consensus(&g, &edge, &Vector::zeros(4)).unwrap();
        assert_eq!(r.as_slice(), &[2.0, 0.0, 0.0, -2.0]);
        let z = zero_game(&[1, 1]);
        let r = rhs_static_consensus(&z, &edge, &v(&[0.0, 0.0, 1.0, 1.0])).unwrap();
        assert_eq!(r.as_slice(), &[1.0, 1.0, -1.0, -1.0]);
    }

    #[test]
    fn dai_examples() {
        let g = decoupled();
        let edge = Graph::path(2, 1.0).unwrap();
        let p = DaiParams::uniform(2, 1.0).unwrap();
        let eq = ExtendedState::new(stack_consensus(&[1.0, -1.0], 2), Some(v(&[3.0, 7.0])));
        let (xd, kd) = rhs_dai(&g, &edge, &p, &eq).unwrap();
        assert_eq!(xd.amax(), 0.0);
        assert_eq!(kd.amax(), 0.0);

        let s = ExtendedState::new(v(&[0.3, 2.0, -1.0, 4.0]), Some(Vector::zeros(2)));
        let (xd, _) = rhs_dai(&g, &edge, &p, &s).unwrap();
        let pure = -g
            .selection()
            .embed_stacked(g.extended_pseudo_gradient(s.x.as_slice()).unwrap().as_slice())
            .unwrap();
        assert_eq!(xd, pure);

        // zero game, two scalar players, each estimate coordinate sees rho = (1, -1)
        let edge = Graph::path(2, 1.0).unwrap();
        let s = ExtendedState::new(v(&[0.0, 0.0, 1.0, 1.0]), Some(v(&[1.0, 2.0])));
        let (xd, kd) = rhs_dai(&zero_game(&[1, 1]), &edge, &p, &s).unwrap();
        assert_eq!(xd.as_slice(), &[3.0, 3.0, -3.0, -3.0]);
        assert_eq!(kd.as_slice(), &[2.0, 2.0]);
    }

    #[test]
    fn dai_scalar_edge_hand_example() {
        // M = 1 with two agents has no matching game, so check the operator directly
        let edge = Graph::path(2, 1.0).unwrap();
        let x = v(&[0.0, 1.0]);
        let k = v(&[1.0, 2.0]);
        let u = blockwise_dai_coupling(&edge, &x, &k, 1);
        assert_eq!(u.as_slice(), &[3.0, -3.0]);
        let lap = edge.laplacian().matrix();
        let matrix_form = -(lap * DMatrix::from_diagonal(&k) * lap) * &x;
        assert_eq!(matrix_form, u);
    }

    #[test]
    fn dai_local_examples() {
        let edge = Graph::path(2, 1.0).unwrap();
        let p = DaiParams::uniform(2, 1.0).unwrap();
        let g = decoupled();
        let eq = ExtendedState::new(stack_consensus(&[1.0, -1.0], 2), Some(v(&[1.0, 1.0])));
        let (xd, kd) = rhs_dai_local(&g, &edge, &p, &eq).unwrap();
        assert_eq!((xd.amax(), kd.amax()), (0.0, 0.0));

        let s = ExtendedState::new(v(&[0.0, 0.0, 1.0, 1.0]), Some(v(&[1.0, 2.0])));
        let (xd, kd) = rhs_dai_local(&zero_game(&[1, 1]), &edge, &p, &s).unwrap();
        // rho = (1, -1) per coordinate, u^i = k_i rho^i
        assert_eq!(xd.as_slice(), &[1.0, 1.0, -2.0, -2.0]);
        assert_eq!(kd.as_slice(), &[2.0, 2.0]);
    }

    fn boxed_game() -> Game {
        QuadraticGame::decoupled(&[1.0, -1.0], 1.0, &[1, 1])
            .unwrap()
            .to_game()
            .with_constraints(vec![
                ConvexSet::boxed(vec![-0.5], vec![0.5]).unwrap(),
                ConvexSet::boxed(vec![-0.5], vec![0.5]).unwrap(),
            ])
            .unwrap()
    }

    #[test]
    fn projected_interior_matches_unprojected() {
        let g = boxed_game();
        let edge = Graph::path(2, 1.0).unwrap();
        let p = DaiParams::uniform(2, 1.0).unwrap();
        let s = ExtendedState::new(v(&[0.1, 0.2, -0.3, 0.0]), Some(Vector::zeros(2)));
        let (xp, kp) = rhs_projected_dai(&g, &edge, &p, &s).unwrap();
        let (xd, kd) = rhs_dai(&g, &edge, &p, &s).unwrap();
        assert_eq!(xp, xd);
        assert_eq!(kp, kd);
    }

    #[test]
    fn projected_equilibrium_vanishes() {
        let g = boxed_game();
        let edge = Graph::path(2, 1.0).unwrap();
        let p = DaiParams::uniform(2, 1.0).unwrap();
        let s = ExtendedState::new(stack_consensus(&[0.5, -0.5], 2), Some(v(&[4.0, 0.5])));
        let (xp, kp) = rhs_projected_dai(&g, &edge, &p, &s).unwrap();
        assert_eq!(xp.amax(), 0.0);
        assert_eq!(kp.amax(), 0.0);
    }

    #[test]
    fn projected_boundary_block_stops() {
        // one player on [0, 1] sitting at 0 with drive -3
        let q = QuadraticGame::new(dmatrix![1.0, 0.0; 0.0, 1.0], v(&[3.0, 0.0]), &[1, 1])
            .unwrap()
            .to_game()
            .with_constraints(vec![
                ConvexSet::boxed(vec![0.0], vec![1.0]).unwrap(),
                ConvexSet::full_space(1),
            ])
            .unwrap();
        let edge = Graph::path(2, 1.0).unwrap();
        let p = DaiParams::uniform(2, 1.0).unwrap();
        let s = ExtendedState::new(v(&[0.0, 0.0, 0.0, 0.0]), Some(Vector::zeros(2)));
        let (xp, _) = rhs_projected_dai(&q, &edge, &p, &s).unwrap();
        assert_eq!(xp[0], 0.0);
    }

    #[test]
    fn projected_membership_violation() {
        let g = boxed_game();
        let edge = Graph::path(2, 1.0).unwrap();
        let p = DaiParams::uniform(2, 1.0).unwrap();
        let s = ExtendedState::new(v(&[0.9, 0.0, 0.0, 0.0]), Some(Vector::zeros(2)));
        assert!(matches!(
            rhs_projected_dai(&g, &edge, &p, &s),
            Err(Error::Membership { .. })
        ));
        assert!(rhs_projected_dai(&decoupled(), &edge, &p, &s).is_err());
    }

    #[test]
    fn projected_full_space_reduces_to_dai() {
        let q = QuadraticGame::new(dmatrix![2.0, 1.0; -1.0, 2.0], v(&[0.5, -0.5]), &[1, 1]).unwrap();
        let free = q
            .to_game()
            .with_constraints(vec![ConvexSet::full_space(1), ConvexSet::full_space(1)])
            .unwrap();
        let edge = Graph::path(2, 0.7).unwrap();
        let p = DaiParams::new(vec![0.5, 2.0], vec![0.0, 0.0]).unwrap();
        let s = ExtendedState::new(v(&[1.0, -2.0, 0.3, 4.0]), Some(v(&[0.2, 1.5])));
        assert_eq!(
            rhs_projected_dai(&free, &edge, &p, &s).unwrap(),
            rhs_dai(&q.to_game(), &edge, &p, &s).unwrap()
        );
    }

    #[test]
    fn residual_examples() {
        let g = decoupled();
        let edge = Graph::path(2, 1.0).unwrap();
        let p = DaiParams::uniform(2, 1.0).unwrap();
        let eq = ExtendedState::new(stack_consensus(&[1.0, -1.0], 2), Some(v(&[2.0, 2.0])));
        for kind in [FlowKind::StaticConsensus, FlowKind::Dai, FlowKind::DaiLocal] {
            assert_eq!(equilibrium_residual(kind, &g, Some(&edge), Some(&p), &eq).unwrap(), 0.0);
        }
        // affine scaling toward equilibrium
        let off = ExtendedState::new(stack_consensus(&[2.0, -1.0], 2), Some(v(&[0.0, 0.0])));
        let half = ExtendedState::new(stack_consensus(&[1.5, -1.0], 2), Some(v(&[0.0, 0.0])));
        let r1 = equilibrium_residual(FlowKind::StaticConsensus, &g, Some(&edge), None, &off).unwrap();
        let r2 = equilibrium_residual(FlowKind::StaticConsensus, &g, Some(&edge), None, &half).unwrap();
        assert_abs_diff_eq!(r1, 2.0 * r2, epsilon = 1e-15);
        assert!(r1 > 0.0);
        let full = ExtendedState::new(v(&[2.0, -1.0]), None);
        assert_eq!(equilibrium_residual(FlowKind::FullInfo, &g, None, None, &full).unwrap(), 2.0);
    }

    #[test]
    fn flow_validation() {
        let g = decoupled();
        assert!(Flow::new(FlowKind::Dai, &g, None, None).is_err());
        let edge = Graph::path(2, 1.0).unwrap();
        assert!(Flow::new(FlowKind::Dai, &g, Some(&edge), None).is_err());
        assert!(Flow::new(FlowKind::ProjectedDai, &g, Some(&edge), None).is_err());
        let tri = Graph::path(3, 1.0).unwrap();
        assert!(Flow::new(FlowKind::StaticConsensus, &g, Some(&tri), None).is_err());
        let f = Flow::new(FlowKind::FullInfo, &g, None, None).unwrap();
        assert_eq!(f.state_len(), 2);
        assert!(DaiParams::new(vec![1.0, 0.0], vec![0.0, 0.0]).is_err());
    }

    fn random_setup(seed: u64) -> (Game, Graph, Vector, Vector) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let dims = [1usize, 2, 1, 1];
        let m: usize = dims.iter().sum();
        let a = DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0)) + DMatrix::identity(m, m) * 3.0;
        let b = Vector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
        let game = QuadraticGame::new(a, b, &dims).unwrap().to_game();
        let graph = Graph::erdos_renyi(4, 0.6, seed).unwrap();
        let x = Vector::from_fn(4 * m, |_, _| rng.random_range(-3.0..3.0));
        let k = Vector::from_fn(4, |_, _| rng.random_range(0.0..5.0));
        (game, graph, x, k)
    }

    #[test]
    fn blockwise_and_matrix_coupling_agree() {
        for seed in 0..50 {
            let (game, graph, x, k) = random_setup(seed);
            let m = game.total_dim();
            let p = DaiParams::uniform(4, 1.0).unwrap();
            let s = ExtendedState::new(x.clone(), Some(k.clone()));
            let (xd, _) = rhs_dai(&game, &graph, &p, &s).unwrap();
            let drift = -game
                .selection()
                .embed_stacked(game.extended_pseudo_gradient(x.as_slice()).unwrap().as_slice())
                .unwrap();
            let blockwise = blockwise_dai_coupling(&graph, &x, &k, m);
            assert!((&xd - &drift - &blockwise).amax() < 1e-10);
            // Kronecker matrix form
            let lap = graph.laplacian().matrix();
            let lkl = lap * DMatrix::from_diagonal(&k) * lap;
            let kron = lkl.kronecker(&DMatrix::<f64>::identity(m, m));
            assert!((&xd - &drift + kron * &x).amax() < 1e-10);
        }
    }

    proptest! {
        #[test]
        fn gain_rates_nonnegative_and_zero_only_at_consensus(seed in 0u64..200, consensus in any::<bool>()) {
            let (game, graph, x, k) = random_setup(seed);
            let m = game.total_dim();
            let x = if consensus { stack_consensus(&x.as_slice()[..m], 4) } else { x };
            let p = DaiParams::new(vec![0.5, 1.0, 2.0, 3.0], vec![0.0; 4]).unwrap();
            let (_, kd) = rhs_dai(&game, &graph, &p, &ExtendedState::new(x, Some(k))).unwrap();
            prop_assert!(kd.iter().all(|&r| r >= 0.0));
            if consensus {
                prop_assert!(kd.amax() < 1e-20);
            } else {
                prop_assert!(kd.amax() > 1e-6);
            }
        }

        #[test]
        fn coupling_preserves_the_average(seed in 0u64..200) {
            let (game, graph, x, k) = random_setup(seed);
            let m = game.total_dim();
            let p = DaiParams::uniform(4, 1.0).unwrap();
            let zero = zero_game(game.dims());
            let (xd, _) = rhs_dai(&zero, &graph, &p, &ExtendedState::new(x, Some(k))).unwrap();
            let mut total = Vector::zeros(m);
            for i in 0..4 {
                total += xd.rows(i * m, m);
            }
            prop_assert!(total.amax() < 1e-10);
        }

        #[test]
        fn consensus_reduces_to_full_information(seed in 0u64..200) {
            let (game, graph, x, k) = random_setup(seed);
            let m = game.total_dim();
            let profile = x.rows(0, m).into_owned();
            let stacked = stack_consensus(profile.as_slice(), 4);
            let p = DaiParams::uniform(4, 1.0).unwrap();
            let (xd, _) = rhs_dai(&game, &graph, &p, &ExtendedState::new(stacked, Some(k))).unwrap();
            let full = rhs_full_info(&game, profile.as_slice()).unwrap();
            let sel = game.selection();
            for i in 0..4 {
                let own = sel.own_range(i);
                let r = sel.range(i);
                prop_assert!((xd.rows(own.start, own.len()) - full.rows(r.start, r.len())).amax() < 1e-12);
            }
        }
    }
}
