//! Undirected weighted communication graphs and their Laplacians.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const ER_MAX_RETRIES: usize = 1000;

/// Symmetric nonnegative adjacency with zero diagonal. Always connected.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    weights: DMatrix<f64>,
    laplacian: Laplacian,
}

impl Graph {
    pub fn from_weights(weights: DMatrix<f64>) -> Result<Self> {
        let n = weights.nrows();
        if weights.ncols() != n {
            return Err(Error::Construction(format!(
                "adjacency must be square, got {}x{}",
                n,
                weights.ncols()
            )));
        }
        if n < 2 {
            return Err(Error::Construction("a graph needs at least two nodes".into()));
        }
        for i in 0..n {
            if weights[(i, i)] != 0.0 {
                return Err(Error::Construction(format!("nonzero self-loop at node {}", i + 1)));
            }
            for j in 0..n {
                let w = weights[(i, j)];
                if !w.is_finite() || w < 0.0 {
                    return Err(Error::Construction(format!(
                        "invalid weight {w} on edge ({}, {})",
                        i + 1,
                        j + 1
                    )));
                }
                if w != weights[(j, i)] {
                    return Err(Error::Construction(format!(
                        "asymmetric weights on edge ({}, {})",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        if !is_connected(&weights) {
            return Err(Error::Construction("graph is not connected".into()));
        }
        let laplacian = Laplacian::of(&weights);
        Ok(Self { weights, laplacian })
    }

    pub fn n_nodes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[(i, j)]
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.weights.row(i).sum()
    }

    fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>, w: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::Construction(format!("need at least 2 nodes, got {n}")));
        }
        if !(w > 0.0) || !w.is_finite() {
            return Err(Error::Construction(format!("edge weight must be positive, got {w}")));
        }
        let mut a = DMatrix::zeros(n, n);
        for (i, j) in edges {
            a[(i, j)] = w;
            a[(j, i)] = w;
        }
        Self::from_weights(a)
    }

    pub fn path(n: usize, w: f64) -> Result<Self> {
        Self::from_edges(n, (0..n.saturating_sub(1)).map(|i| (i, i + 1)), w)
    }

    pub fn cycle(n: usize, w: f64) -> Result<Self> {
        Self::from_edges(n, (0..n).map(|i| (i, (i + 1) % n)).filter(|(i, j)| i != j), w)
    }

    /// Node 0 is the center.
    pub fn star(n: usize, w: f64) -> Result<Self> {
        Self::from_edges(n, (1..n).map(|i| (0, i)), w)
    }

    pub fn complete(n: usize, w: f64) -> Result<Self> {
        Self::from_edges(
            n,
            (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))),
            w,
        )
    }

    /// G(n, p) with unit weights, resampled until connected.
    pub fn erdos_renyi(n: usize, p: f64, seed: u64) -> Result<Self> {
        if n < 2 {
            return Err(Error::Construction(format!("need at least 2 nodes, got {n}")));
        }
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::Construction(format!("edge probability must be in (0, 1], got {p}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..ER_MAX_RETRIES {
            let mut a = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in (i + 1)..n {
                    if rng.random_bool(p) {
                        a[(i, j)] = 1.0;
                        a[(j, i)] = 1.0;
                    }
                }
            }
            if is_connected(&a) {
                return Self::from_weights(a);
            }
        }
        Err(Error::Construction(format!(
            "no connected G({n}, {p}) sample after {ER_MAX_RETRIES} retries"
        )))
    }

    pub fn laplacian(&self) -> &Laplacian {
        &self.laplacian
    }
}

fn is_connected(weights: &DMatrix<f64>) -> bool {
    let n = weights.nrows();
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(u) = queue.pop_front() {
        for v in 0..n {
            if !seen[v] && weights[(u, v)] > 0.0 {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// `L = D - A` with its cached algebraic connectivity.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian {
    matrix: DMatrix<f64>,
    lambda2: f64,
}

impl Laplacian {
    fn of(weights: &DMatrix<f64>) -> Self {
        let mut l = -weights.clone();
        for i in 0..l.nrows() {
            l[(i, i)] = weights.row(i).sum();
        }
        let lambda2 = algebraic_connectivity(&l);
        Laplacian { matrix: l, lambda2 }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn lambda2(&self) -> f64 {
        self.lambda2
    }

    pub fn largest_eigenvalue(&self) -> f64 {
        self.matrix.symmetric_eigenvalues().max()
    }
}

/// Second-smallest eigenvalue of a symmetric PSD matrix.
pub fn algebraic_connectivity(l: &DMatrix<f64>) -> f64 {
    let mut ev: Vec<f64> = l.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev.get(1).copied().unwrap_or(0.0)
}

/// `lambda2 > ell + ell^2 / mu`.
pub fn strong_coupling_holds(lambda2: f64, ell: f64, mu: f64) -> Result<bool> {
    if !(ell > 0.0) || !(mu > 0.0) {
        return Err(Error::Input(format!(
            "coupling test needs positive constants, got ell = {ell}, mu = {mu}"
        )));
    }
    Ok(lambda2 > strong_coupling_threshold(ell, mu))
}

pub fn strong_coupling_threshold(ell: f64, mu: f64) -> f64 {
    ell + ell * ell / mu
}

/// Returns `(||(P_N (x) I_M) X||, avg(X))` where `P_N = I - 11'/N`.
pub fn consensus_projector_norm(stacked: &[f64], n: usize) -> Result<(f64, DVector<f64>)> {
    if n == 0 || stacked.len() % n != 0 {
        return Err(Error::Input(format!(
            "stacked length {} is not a multiple of {n}",
            stacked.len()
        )));
    }
    let m = stacked.len() / n;
    let mut avg = DVector::zeros(m);
    for block in stacked.chunks(m) {
        for (a, v) in avg.iter_mut().zip(block) {
            *a += v;
        }
    }
    avg /= n as f64;
    let mut sq = 0.0;
    for block in stacked.chunks(m) {
        for (a, v) in avg.iter().zip(block) {
            sq += (v - a) * (v - a);
        }
    }
    Ok((sq.sqrt(), avg))
}
