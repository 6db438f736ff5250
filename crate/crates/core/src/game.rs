//! N-player games: cost gradients, the pseudo-gradient and its extended
//! (estimate-based) counterpart, and the block selection algebra used to
//! move between a strategy profile in `R^M` and stacked estimates in
//! `R^{N*M}`.

use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::sets::ConvexSet;

pub type Vector = DVector<f64>;

/// Player gradient `x -> dJ_i/dx_i (x)`. Receives the full profile (length
/// `M`) and returns a vector of length `n_i`.
pub type GradientFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Player cost `x -> J_i(x)` over the full profile.
pub type CostFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Offset table for the player blocks of a profile.
///
/// `select(i, v)` is `R_i v` and `embed(i, w)` is `R_i^T w`. The stacked
/// versions act block-diagonally on `col(x^1, ..., x^N)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    dims: Vec<usize>,
    offsets: Vec<usize>,
    total: usize,
}

impl Selection {
    pub fn new(dims: &[usize]) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::Input("a game needs at least one player".into()));
        }
        if let Some(i) = dims.iter().position(|&d| d == 0) {
            return Err(Error::Input(format!("player {} has zero dimension", i + 1)));
        }
        let mut offsets = Vec::with_capacity(dims.len());
        let mut acc = 0;
        for &d in dims {
            offsets.push(acc);
            acc += d;
        }
        Ok(Self {
            dims: dims.to_vec(),
            offsets,
            total: acc,
        })
    }

    pub fn n_players(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// `M`, the profile length.
    pub fn total(&self) -> usize {
        self.total
    }

    /// `N * M`, the stacked estimate length.
    pub fn stacked_len(&self) -> usize {
        self.total * self.dims.len()
    }

    pub fn range(&self, i: usize) -> Range<usize> {
        self.offsets[i]..self.offsets[i] + self.dims[i]
    }

    /// Index of player `i`'s own block inside the stacked vector.
    pub fn own_range(&self, i: usize) -> Range<usize> {
        let base = i * self.total;
        base + self.offsets[i]..base + self.offsets[i] + self.dims[i]
    }

    pub fn select<'a>(&self, i: usize, profile: &'a [f64]) -> &'a [f64] {
        &profile[self.range(i)]
    }

    pub fn embed(&self, i: usize, block: &[f64]) -> Vector {
        let mut out = Vector::zeros(self.total);
        out.as_mut_slice()[self.range(i)].copy_from_slice(block);
        out
    }

    /// `R X = col(R_1 x^1, ..., R_N x^N)`.
    pub fn select_stacked(&self, stacked: &[f64]) -> Result<Vector> {
        self.check_stacked(stacked.len())?;
        let mut out = Vector::zeros(self.total);
        for i in 0..self.n_players() {
            out.as_mut_slice()[self.range(i)].copy_from_slice(&stacked[self.own_range(i)]);
        }
        Ok(out)
    }

    /// `R^T f`: places block `i` of `f` at agent `i`'s own block, zeros elsewhere.
    pub fn embed_stacked(&self, f: &[f64]) -> Result<Vector> {
        if f.len() != self.total {
            return Err(Error::dim("embed_stacked", self.total, f.len()));
        }
        let mut out = Vector::zeros(self.stacked_len());
        for i in 0..self.n_players() {
            out.as_mut_slice()[self.own_range(i)].copy_from_slice(&f[self.range(i)]);
        }
        Ok(out)
    }

    /// Agent `i`'s estimate vector `x^i` inside the stacked vector.
    pub fn agent<'a>(&self, i: usize, stacked: &'a [f64]) -> &'a [f64] {
        &stacked[i * self.total..(i + 1) * self.total]
    }

    pub(crate) fn check_profile(&self, len: usize) -> Result<()> {
        if len != self.total {
            return Err(Error::dim("strategy profile", self.total, len));
        }
        Ok(())
    }

    pub(crate) fn check_stacked(&self, len: usize) -> Result<()> {
        if len != self.stacked_len() {
            return Err(Error::dim("stacked estimates", self.stacked_len(), len));
        }
        Ok(())
    }
}

/// `1_N (x) x`.
pub fn stack_consensus(x: &[f64], n_players: usize) -> Vector {
    let m = x.len();
    Vector::from_fn(n_players * m, |r, _| x[r % m])
}

/// Affine game with pseudo-gradient `F(x) = A x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticGame {
    a: DMatrix<f64>,
    b: Vector,
    selection: Selection,
}

impl QuadraticGame {
    pub fn new(a: DMatrix<f64>, b: Vector, dims: &[usize]) -> Result<Self> {
        let selection = Selection::new(dims)?;
        let m = selection.total();
        if a.nrows() != m || a.ncols() != m {
            return Err(Error::Input(format!(
                "matrix A is {}x{}, expected {m}x{m}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.len() != m {
            return Err(Error::dim("offset b", m, b.len()));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite entry in A or b".into()));
        }
        Ok(Self { a, b, selection })
    }

    /// `J_i = w * ||x_i - d_i||^2`, so `F(x) = 2w (x - d)`.
    pub fn decoupled(target: &[f64], weight: f64, dims: &[usize]) -> Result<Self> {
        if !(weight > 0.0) {
            return Err(Error::Input(format!("weight must be positive, got {weight}")));
        }
        let m = target.len();
        let a = DMatrix::identity(m, m) * (2.0 * weight);
        let b = Vector::from_iterator(m, target.iter().map(|d| -2.0 * weight * d));
        Self::new(a, b, dims)
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &Vector {
        &self.b
    }

    pub fn selection(&self) -> &Selection {
        &self.selection
    }

    pub fn affine_map(&self, x: &[f64]) -> Vector {
        &self.a * Vector::from_column_slice(x) + &self.b
    }

    /// Smallest eigenvalue of the symmetric part of `A`.
    pub fn strong_monotonicity(&self) -> f64 {
        let sym = (&self.a + self.a.transpose()) * 0.5;
        sym.symmetric_eigenvalues().min()
    }

    /// Largest singular value of `A`.
    pub fn lipschitz(&self) -> f64 {
        spectral_norm(&self.a)
    }

    /// Lipschitz constant of the extended pseudo-gradient. It is block
    /// diagonal with row-blocks `A_i` (the rows of player `i`), so its norm is
    /// the largest spectral norm among them.
    pub fn extended_lipschitz(&self) -> f64 {
        (0..self.selection.n_players())
            .map(|i| {
                let r = self.selection.range(i);
                spectral_norm(&self.a.rows(r.start, r.len()).into_owned())
            })
            .fold(0.0, f64::max)
    }

    /// Unconstrained equilibrium `A x = -b`.
    pub fn nash_equilibrium(&self) -> Result<Vector> {
        self.a
            .clone()
            .lu()
            .solve(&(-&self.b))
            .ok_or_else(|| Error::Input("matrix A is singular".into()))
    }

    /// Build the generic game. Cost values are attached when every diagonal
    /// block `A_ii` is symmetric, since only then is
    /// `J_i = 1/2 x_i' A_ii x_i + x_i' (sum_{j != i} A_ij x_j + b_i)` a
    /// potential for player `i`'s gradient.
    pub fn to_game(&self) -> Game {
        let sel = self.selection.clone();
        let n = sel.n_players();
        let shared = Arc::new(self.clone());
        let gradients: Vec<GradientFn> = (0..n)
            .map(|i| {
                let q = Arc::clone(&shared);
                let g: GradientFn = Arc::new(move |x: &[f64]| {
                    let r = q.selection.range(i);
                    let xv = Vector::from_column_slice(x);
                    let rows = q.a.rows(r.start, r.len());
                    (rows * xv + q.b.rows(r.start, r.len())).iter().copied().collect()
                });
                g
            })
            .collect();

        let symmetric_blocks = (0..n).all(|i| {
            let r = sel.range(i);
            let blk = self.a.view((r.start, r.start), (r.len(), r.len()));
            (blk - blk.transpose()).amax() <= 1e-14 * (1.0 + blk.amax())
        });
        let costs = symmetric_blocks.then(|| {
            (0..n)
                .map(|i| {
                    let q = Arc::clone(&shared);
                    let c: CostFn = Arc::new(move |x: &[f64]| {
                        let r = q.selection.range(i);
                        let xi = &x[r.clone()];
                        let mut cost = 0.0;
                        for (p, row) in r.clone().enumerate() {
                            let mut lin = q.b[row];
                            for (col, xc) in x.iter().enumerate() {
                                if r.contains(&col) {
                                    lin += 0.5 * q.a[(row, col)] * xc;
                                } else {
                                    lin += q.a[(row, col)] * xc;
                                }
                            }
                            cost += xi[p] * lin;
                        }
                        cost
                    });
                    c
                })
                .collect()
        });

        Game {
            selection: sel,
            gradients,
            costs,
            constraints: None,
            quadratic: Some(shared),
        }
    }
}

pub(crate) fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().singular_values().max()
}

/// An N-player game described by its players' gradients.
#[derive(Clone)]
pub struct Game {
    selection: Selection,
    gradients: Vec<GradientFn>,
    costs: Option<Vec<CostFn>>,
    constraints: Option<Vec<ConvexSet>>,
    quadratic: Option<Arc<QuadraticGame>>,
}

impl fmt::Debug for Game {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Game")
            .field("dims", &self.selection.dims())
            .field("has_costs", &self.costs.is_some())
            .field("constraints", &self.constraints)
            .field("quadratic", &self.quadratic.is_some())
            .finish()
    }
}

impl Game {
    pub fn new(dims: &[usize], gradients: Vec<GradientFn>) -> Result<Self> {
        let selection = Selection::new(dims)?;
        if gradients.len() != dims.len() {
            return Err(Error::dim("player gradients", dims.len(), gradients.len()));
        }
        Ok(Self {
            selection,
            gradients,
            costs: None,
            constraints: None,
            quadratic: None,
        })
    }

    pub fn with_costs(mut self, costs: Vec<CostFn>) -> Result<Self> {
        if costs.len() != self.n_players() {
            return Err(Error::dim("player costs", self.n_players(), costs.len()));
        }
        self.costs = Some(costs);
        Ok(self)
    }

    /// Attach local constraint sets `Omega_i`. `FullSpace` marks a free block;
    /// polyhedra must be bounded.
    pub fn with_constraints(mut self, sets: Vec<ConvexSet>) -> Result<Self> {
        if sets.len() != self.n_players() {
            return Err(Error::dim("constraint sets", self.n_players(), sets.len()));
        }
        for (i, s) in sets.iter().enumerate() {
            if s.dim() != self.selection.dims()[i] {
                return Err(Error::Input(format!(
                    "constraint set of player {} has dimension {}, expected {}",
                    i + 1,
                    s.dim(),
                    self.selection.dims()[i]
                )));
            }
            if let ConvexSet::Polyhedron { .. } = s {
                if !s.is_bounded() {
                    return Err(Error::Construction(format!(
                        "polyhedron of player {} is unbounded",
                        i + 1
                    )));
                }
            }
        }
        self.constraints = Some(sets);
        Ok(self)
    }

    pub fn n_players(&self) -> usize {
        self.selection.n_players()
    }

    pub fn dims(&self) -> &[usize] {
        self.selection.dims()
    }

    pub fn total_dim(&self) -> usize {
        self.selection.total()
    }

    pub fn selection(&self) -> &Selection {
        &self.selection
    }

    pub fn constraints(&self) -> Option<&[ConvexSet]> {
        self.constraints.as_deref()
    }

    pub fn quadratic(&self) -> Option<&QuadraticGame> {
        self.quadratic.as_deref()
    }

    pub fn has_costs(&self) -> bool {
        self.costs.is_some()
    }

    fn player_gradient_unchecked(&self, i: usize, x: &[f64]) -> Result<Vec<f64>> {
        let g = (self.gradients[i])(x);
        if g.len() != self.selection.dims()[i] {
            return Err(Error::dim("player gradient output", self.selection.dims()[i], g.len()));
        }
        Ok(g)
    }

    /// `dJ_i/dx_i (x)`.
    pub fn player_gradient(&self, i: usize, x: &[f64]) -> Result<Vector> {
        self.selection.check_profile(x.len())?;
        if i >= self.n_players() {
            return Err(Error::Input(format!("no player with index {i}")));
        }
        Ok(Vector::from_vec(self.player_gradient_unchecked(i, x)?))
    }

    pub fn cost(&self, i: usize, x: &[f64]) -> Result<f64> {
        self.selection.check_profile(x.len())?;
        let costs = self
            .costs
            .as_ref()
            .ok_or_else(|| Error::Unsupported("game has no cost functions".into()))?;
        Ok((costs[i])(x))
    }

    /// `F(x) = col(dJ_1/dx_1(x), ..., dJ_N/dx_N(x))`.
    pub fn pseudo_gradient(&self, x: &[f64]) -> Result<Vector> {
        self.selection.check_profile(x.len())?;
        let mut out = Vector::zeros(self.total_dim());
        for i in 0..self.n_players() {
            let g = self.player_gradient_unchecked(i, x)?;
            out.as_mut_slice()[self.selection.range(i)].copy_from_slice(&g);
        }
        Ok(out)
    }

    /// Each agent evaluates its own gradient at its own estimate `x^i`.
    pub fn extended_pseudo_gradient(&self, stacked: &[f64]) -> Result<Vector> {
        self.selection.check_stacked(stacked.len())?;
        let mut out = Vector::zeros(self.total_dim());
        for i in 0..self.n_players() {
            let g = self.player_gradient_unchecked(i, self.selection.agent(i, stacked))?;
            out.as_mut_slice()[self.selection.range(i)].copy_from_slice(&g);
        }
        Ok(out)
    }

    /// Max abs difference between the analytic gradients and central
    /// differences of the costs.
    pub fn check_gradient(&self, x: &[f64], h: f64) -> Result<f64> {
        if !(h > 0.0) {
            return Err(Error::Input(format!("finite-difference step must be positive, got {h}")));
        }
        self.selection.check_profile(x.len())?;
        let costs = self
            .costs
            .as_ref()
            .ok_or_else(|| Error::Unsupported("gradient check needs cost functions".into()))?;
        let mut worst: f64 = 0.0;
        let mut probe = x.to_vec();
        for i in 0..self.n_players() {
            let analytic = self.player_gradient_unchecked(i, x)?;
            for (p, coord) in self.selection.range(i).enumerate() {
                probe[coord] = x[coord] + h;
                let up = (costs[i])(&probe);
                probe[coord] = x[coord] - h;
                let down = (costs[i])(&probe);
                probe[coord] = x[coord];
                let fd = (up - down) / (2.0 * h);
                worst = worst.max((fd - analytic[p]).abs());
            }
        }
        Ok(worst)
    }

    /// Blockwise projection onto the product of the constraint sets.
    /// Identity when the game is unconstrained.
    pub fn project_profile(&self, x: &[f64]) -> Result<Vector> {
        self.selection.check_profile(x.len())?;
        let mut out = Vector::from_column_slice(x);
        if let Some(sets) = &self.constraints {
            for (i, set) in sets.iter().enumerate() {
                let r = self.selection.range(i);
                let p = set.project(&x[r.clone()])?;
                out.as_mut_slice()[r].copy_from_slice(p.as_slice());
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::dmatrix;
    use proptest::prelude::*;

    fn decoupled() -> Game {
        QuadraticGame::decoupled(&[1.0, -1.0], 1.0, &[1, 1]).unwrap().to_game()
    }

    fn coupled() -> Game {
        let a = dmatrix![2.0, 0.5; 0.5, 2.0];
        QuadraticGame::new(a, Vector::zeros(2), &[1, 1]).unwrap().to_game()
    }

    #[test]
    fn pseudo_gradient_examples() {
        let g = decoupled();
        assert_eq!(g.pseudo_gradient(&[0.0, 0.0]).unwrap().as_slice(), &[-2.0, 2.0]);

        let q = QuadraticGame::new(DMatrix::identity(2, 2) * 2.0, Vector::zeros(2), &[1, 1])
            .unwrap()
            .to_game();
        assert_eq!(q.pseudo_gradient(&[3.0, -1.0]).unwrap().as_slice(), &[6.0, -2.0]);

        assert_eq!(coupled().pseudo_gradient(&[1.0, 1.0]).unwrap().as_slice(), &[2.5, 2.5]);
    }

    #[test]
    fn pseudo_gradient_dimension_mismatch() {
        let err = decoupled().pseudo_gradient(&[1.0]).unwrap_err();
        assert!(matches!(err, Error::Dimension { expected: 2, got: 1, .. }));
    }

    #[test]
    fn extended_uses_own_estimates() {
        let g = decoupled();
        let f = g.extended_pseudo_gradient(&[0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(f.as_slice(), &[-2.0, 2.0]);
        let f = g.extended_pseudo_gradient(&[2.0, 9.0, 9.0, 3.0]).unwrap();
        assert_eq!(f.as_slice(), &[2.0, 8.0]);
        assert!(g.extended_pseudo_gradient(&[0.0; 3]).is_err());
    }

    #[test]
    fn stack_consensus_examples() {
        assert_eq!(stack_consensus(&[1.0, -1.0], 2).as_slice(), &[1.0, -1.0, 1.0, -1.0]);
        assert_eq!(stack_consensus(&[0.0; 3], 2).as_slice(), &[0.0; 6]);
        assert_eq!(
            stack_consensus(&[2.0, 3.0, 5.0], 3).as_slice(),
            &[2.0, 3.0, 5.0, 2.0, 3.0, 5.0, 2.0, 3.0, 5.0]
        );
    }

    #[test]
    fn gradient_check_quadratics() {
        let g = decoupled();
        assert!(g.check_gradient(&[0.3, 7.0], 1e-5).unwrap() < 1e-6);

        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let a = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0))
            + DMatrix::identity(3, 3) * 3.0;
        // symmetric diagonal blocks (scalar players) so costs exist
        let q = QuadraticGame::new(a, Vector::from_vec(vec![0.5, -1.0, 2.0]), &[1, 1, 1])
            .unwrap()
            .to_game();
        assert!(q.has_costs());
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
        assert!(q.check_gradient(&x, 1e-5).unwrap() < 1e-6);
    }

    #[test]
    fn gradient_check_detects_corruption() {
        let q = QuadraticGame::decoupled(&[1.0, -1.0], 1.0, &[1, 1]).unwrap();
        let base = q.to_game();
        let good = base.gradients.clone();
        let bad: GradientFn = {
            let g0 = Arc::clone(&good[0]);
            Arc::new(move |x: &[f64]| {
                let mut v = g0(x);
                v[0] += 1.0;
                v
            })
        };
        let corrupted = Game::new(&[1, 1], vec![bad, Arc::clone(&good[1])])
            .unwrap()
            .with_costs(base.costs.clone().unwrap())
            .unwrap();
        assert!(corrupted.check_gradient(&[0.2, 0.4], 1e-5).unwrap() >= 0.5);
    }

    #[test]
    fn gradient_check_needs_costs() {
        let g = Game::new(&[1], vec![Arc::new(|x: &[f64]| vec![x[0]])]).unwrap();
        assert!(matches!(g.check_gradient(&[1.0], 1e-5), Err(Error::Unsupported(_))));
    }

    #[test]
    fn nonsymmetric_blocks_have_no_costs() {
        let a = dmatrix![2.0, 1.0; 0.0, 2.0];
        let q = QuadraticGame::new(a, Vector::zeros(2), &[2]).unwrap();
        assert!(!q.to_game().has_costs());
    }

    #[test]
    fn heterogeneous_blocks() {
        let mut a = DMatrix::from_fn(3, 3, |r, c| if r == c { 3.0 } else { 0.5 * (r as f64 - c as f64) });
        a[(0, 1)] = 0.4;
        a[(1, 0)] = 0.4;
        let q = QuadraticGame::new(a, Vector::from_vec(vec![1.0, 2.0, 3.0]), &[2, 1]).unwrap();
        let g = q.to_game();
        let x = [0.5, -1.0, 2.0];
        let f = g.pseudo_gradient(&x).unwrap();
        assert_abs_diff_eq!(f, q.affine_map(&x), epsilon = 1e-15);
        assert!(g.check_gradient(&x, 1e-5).unwrap() < 1e-6);
        let sel = g.selection();
        assert_eq!(sel.own_range(0), 0..2);
        assert_eq!(sel.own_range(1), 5..6);
    }

    #[test]
    fn quadratic_constants() {
        let q = QuadraticGame::new(dmatrix![2.0, 1.0; 0.0, 2.0], Vector::zeros(2), &[1, 1]).unwrap();
        assert_abs_diff_eq!(q.strong_monotonicity(), 1.5, epsilon = 1e-12);
        // sigma_max of [[2,1],[0,2]]: sqrt of largest eigenvalue of A'A = [[4,2],[2,5]]
        let expected = ((9.0 + 17f64.sqrt()) / 2.0).sqrt();
        assert_abs_diff_eq!(q.lipschitz(), expected, epsilon = 1e-12);
        // rows (2,1) and (0,2)
        assert_abs_diff_eq!(q.extended_lipschitz(), 5f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn quadratic_validation() {
        assert!(QuadraticGame::new(DMatrix::identity(2, 3), Vector::zeros(2), &[1, 1]).is_err());
        assert!(QuadraticGame::new(DMatrix::identity(2, 2), Vector::zeros(3), &[1, 1]).is_err());
        assert!(QuadraticGame::new(DMatrix::identity(2, 2), Vector::zeros(2), &[1, 2]).is_err());
        assert!(QuadraticGame::decoupled(&[1.0], 0.0, &[1]).is_err());
        assert!(Selection::new(&[]).is_err());
        assert!(Selection::new(&[1, 0]).is_err());
    }

    #[test]
    fn wrong_gradient_length_is_reported() {
        let g = Game::new(&[2], vec![Arc::new(|_: &[f64]| vec![0.0])]).unwrap();
        assert!(matches!(g.pseudo_gradient(&[0.0, 0.0]), Err(Error::Dimension { .. })));
    }

    proptest! {
        #[test]
        fn extended_on_consensus_matches_pseudo_gradient(
            xs in proptest::collection::vec(-10.0f64..10.0, 3)
        ) {
            let a = dmatrix![3.0, 0.5, -1.0; -0.5, 2.0, 0.3; 1.0, 0.2, 4.0];
            let g = QuadraticGame::new(a, Vector::from_vec(vec![1.0, 0.0, -1.0]), &[1, 2])
                .unwrap()
                .to_game();
            let f = g.pseudo_gradient(&xs).unwrap();
            let fe = g.extended_pseudo_gradient(stack_consensus(&xs, 2).as_slice()).unwrap();
            prop_assert!((f - fe).amax() == 0.0);
        }

        #[test]
        fn sampled_monotonicity_ratio_bounded_below(
            x in proptest::collection::vec(-10.0f64..10.0, 3),
            y in proptest::collection::vec(-10.0f64..10.0, 3),
        ) {
            let a = dmatrix![3.0, 2.0, -1.0; -2.0, 2.0, 0.3; 1.0, 0.2, 4.0];
            let q = QuadraticGame::new(a, Vector::zeros(3), &[1, 1, 1]).unwrap();
            let mu = q.strong_monotonicity();
            let d = Vector::from_vec(x.clone()) - Vector::from_vec(y.clone());
            prop_assume!(d.norm() > 1e-6);
            let df = q.affine_map(&x) - q.affine_map(&y);
            prop_assert!(d.dot(&df) / d.norm_squared() >= mu - 1e-9);
        }

        #[test]
        fn selection_algebra(v in proptest::collection::vec(-5.0f64..5.0, 3 * 4)) {
            let sel = Selection::new(&[2, 1, 1]).unwrap();
            let r = sel.select_stacked(&v).unwrap();
            prop_assert!(r.norm() <= Vector::from_vec(v.clone()).norm() + 1e-12);
            let back = sel.select_stacked(sel.embed_stacked(r.as_slice()).unwrap().as_slice()).unwrap();
            prop_assert_eq!(back, r);
        }
    }
}
