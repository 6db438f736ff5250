//! Convex constraint sets with exact Euclidean projection and projection
//! onto the tangent cone.
//!
//! Polyhedra `{y : G y <= h}` are handled through least-distance
//! programming: projecting `x` is the problem `min ||z||` subject to
//! `-G z >= G x - h`, which reduces to a nonnegative least-squares solve
//! (Lawson-Hanson). The same routine projects onto the polyhedral tangent
//! cone `{w : g_j' w <= 0, j active}`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A constraint row is active when within this distance of equality.
pub const ACTIVE_TOL: f64 = 1e-9;
/// Points this close to a set are silently re-projected; farther is an error.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

type Vector = DVector<f64>;

#[derive(Debug, Clone, PartialEq)]
pub enum ConvexSet {
    Box { lower: Vector, upper: Vector },
    Ball { center: Vector, radius: f64 },
    /// `{x : g x <= h}`, one row per inequality.
    Polyhedron { g: DMatrix<f64>, h: Vector },
    FullSpace(usize),
}

impl ConvexSet {
    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::Construction(format!(
                "box bounds have lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        for (k, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !(l.is_finite() && u.is_finite() && l <= u) {
                return Err(Error::Construction(format!(
                    "box component {k}: need finite lower <= upper, got [{l}, {u}]"
                )));
            }
        }
        Ok(ConvexSet::Box {
            lower: Vector::from_vec(lower),
            upper: Vector::from_vec(upper),
        })
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() || center.iter().any(|c| !c.is_finite()) {
            return Err(Error::Construction("ball center must be finite and nonempty".into()));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Construction(format!("ball radius must be positive, got {radius}")));
        }
        Ok(ConvexSet::Ball {
            center: Vector::from_vec(center),
            radius,
        })
    }

    /// Checks nonemptiness with a feasibility solve.
    pub fn polyhedron(g: DMatrix<f64>, h: Vec<f64>) -> Result<Self> {
        if g.nrows() != h.len() || g.nrows() == 0 || g.ncols() == 0 {
            return Err(Error::Construction(format!(
                "polyhedron has {} rows in G, {} entries in h",
                g.nrows(),
                h.len()
            )));
        }
        if g.iter().chain(h.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Construction("non-finite polyhedron data".into()));
        }
        let h = Vector::from_vec(h);
        let origin = Vector::zeros(g.ncols());
        if project_polyhedron(&g, &h, &origin).is_none() {
            return Err(Error::Construction("polyhedron is empty".into()));
        }
        Ok(ConvexSet::Polyhedron { g, h })
    }

    pub fn full_space(dim: usize) -> Self {
        ConvexSet::FullSpace(dim)
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexSet::Box { lower, .. } => lower.len(),
            ConvexSet::Ball { center, .. } => center.len(),
            ConvexSet::Polyhedron { g, .. } => g.ncols(),
            ConvexSet::FullSpace(d) => *d,
        }
    }

    /// Compactness test. A polyhedron is bounded iff its recession cone
    /// `{d : G d <= 0}` is trivial, i.e. every `+-e_k` projects to zero on it.
    pub fn is_bounded(&self) -> bool {
        match self {
            ConvexSet::Box { .. } | ConvexSet::Ball { .. } => true,
            ConvexSet::FullSpace(_) => false,
            ConvexSet::Polyhedron { g, .. } => {
                let n = g.ncols();
                let zero = Vector::zeros(g.nrows());
                (0..n).all(|k| {
                    [1.0, -1.0].iter().all(|s| {
                        let mut e = Vector::zeros(n);
                        e[k] = *s;
                        project_polyhedron(g, &zero, &e)
                            .map(|p| p.amax() <= 1e-9)
                            .unwrap_or(false)
                    })
                })
            }
        }
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::dim("convex set point", self.dim(), len));
        }
        Ok(())
    }

    /// Euclidean projection.
    pub fn project(&self, x: &[f64]) -> Result<Vector> {
        self.check_dim(x.len())?;
        let xv = Vector::from_column_slice(x);
        Ok(match self {
            ConvexSet::Box { lower, upper } => {
                Vector::from_fn(x.len(), |k, _| x[k].clamp(lower[k], upper[k]))
            }
            ConvexSet::Ball { center, radius } => {
                let d = &xv - center;
                let norm = d.norm();
                if norm <= *radius {
                    xv
                } else {
                    center + d * (*radius / norm)
                }
            }
            ConvexSet::Polyhedron { g, h } => project_polyhedron(g, h, &xv)
                .ok_or_else(|| Error::Construction("polyhedron became infeasible".into()))?,
            ConvexSet::FullSpace(_) => xv,
        })
    }

    /// Distance from `x` to the set.
    pub fn distance(&self, x: &[f64]) -> Result<f64> {
        let p = self.project(x)?;
        Ok((p - Vector::from_column_slice(x)).norm())
    }

    /// Validate membership of `x` within `MEMBERSHIP_TOL` and return the
    /// point snapped onto the set.
    pub fn admit(&self, x: &[f64]) -> Result<Vector> {
        let p = self.project(x)?;
        let dist = (&p - Vector::from_column_slice(x)).norm();
        if dist > MEMBERSHIP_TOL {
            return Err(Error::Membership {
                distance: dist,
                tolerance: MEMBERSHIP_TOL,
            });
        }
        if dist == 0.0 {
            Ok(Vector::from_column_slice(x))
        } else {
            Ok(p)
        }
    }

    /// Projection of `v` onto the tangent cone of the set at `x`.
    pub fn tangent_projection(&self, x: &[f64], v: &[f64]) -> Result<Vector> {
        self.check_dim(v.len())?;
        let x = self.admit(x)?;
        let vv = Vector::from_column_slice(v);
        Ok(match self {
            ConvexSet::Box { lower, upper } => Vector::from_fn(v.len(), |k, _| {
                let at_lower = x[k] - lower[k] <= ACTIVE_TOL;
                let at_upper = upper[k] - x[k] <= ACTIVE_TOL;
                if (at_lower && v[k] < 0.0) || (at_upper && v[k] > 0.0) {
                    0.0
                } else {
                    v[k]
                }
            }),
            ConvexSet::Ball { center, radius } => {
                let d = &x - center;
                let norm = d.norm();
                if norm < radius - ACTIVE_TOL || norm == 0.0 {
                    vv
                } else {
                    let normal = d / norm;
                    let outward = vv.dot(&normal);
                    if outward > 0.0 {
                        vv - normal * outward
                    } else {
                        vv
                    }
                }
            }
            ConvexSet::Polyhedron { g, h } => {
                let slack = h - g * &x;
                let active: Vec<usize> = (0..g.nrows()).filter(|&j| slack[j] <= ACTIVE_TOL).collect();
                if active.is_empty() {
                    vv
                } else {
                    let ga = g.select_rows(active.iter());
                    let zero = Vector::zeros(active.len());
                    project_polyhedron(&ga, &zero, &vv)
                        .ok_or_else(|| Error::Construction("tangent cone solve failed".into()))?
                }
            }
            ConvexSet::FullSpace(_) => vv,
        })
    }

    /// Finite-difference surrogate `(proj(x + delta v) - x) / delta` of the
    /// tangent-cone projection.
    pub fn tangent_projection_numeric(&self, x: &[f64], v: &[f64], delta: f64) -> Result<Vector> {
        if !(delta > 0.0) {
            return Err(Error::Input(format!("delta must be positive, got {delta}")));
        }
        self.check_dim(v.len())?;
        let xv = Vector::from_column_slice(x);
        let moved = &xv + Vector::from_column_slice(v) * delta;
        Ok((self.project(moved.as_slice())? - xv) / delta)
    }
}

/// Project `x` onto `{y : g y <= h}`; `None` when the set is empty.
fn project_polyhedron(g: &DMatrix<f64>, h: &Vector, x: &Vector) -> Option<Vector> {
    let residual = h - g * x;
    if residual.iter().all(|&r| r >= 0.0) {
        return Some(x.clone());
    }
    // min ||z|| s.t. (-g) z >= g x - h
    let z = least_distance(&(-g), &(-residual))?;
    Some(x + z)
}

/// Least-distance programming: `min ||z||` s.t. `e z >= f`, via NNLS on
/// `[e'; f'] u ~ e_{n+1}`. Returns `None` when infeasible.
fn least_distance(e: &DMatrix<f64>, f: &Vector) -> Option<Vector> {
    // the solution is positively homogeneous in f, so solve at unit scale
    let scale = f.amax();
    if scale == 0.0 {
        return Some(Vector::zeros(e.ncols()));
    }
    let (m, n) = e.shape();
    let mut lhs = DMatrix::zeros(n + 1, m);
    lhs.rows_mut(0, n).copy_from(&e.transpose());
    lhs.row_mut(n).copy_from(&(f / scale).transpose());
    let mut rhs = Vector::zeros(n + 1);
    rhs[n] = 1.0;
    let u = nnls(&lhs, &rhs);
    let r = &lhs * u - rhs;
    if r.norm() <= 1e-12 || r[n].abs() <= 1e-14 {
        return None;
    }
    Some(Vector::from_fn(n, |j, _| -scale * r[j] / r[n]))
}

/// Lawson-Hanson active-set solver for `min ||a u - b||`, `u >= 0`.
pub(crate) fn nnls(a: &DMatrix<f64>, b: &Vector) -> Vector {
    let n = a.ncols();
    let mut u = Vector::zeros(n);
    let mut passive = vec![false; n];
    let scale = a.amax().max(b.amax()).max(1.0);
    let tol = 1e-13 * scale * scale * (n.max(1) as f64);
    let max_outer = 3 * n + 10;

    for _ in 0..max_outer {
        let w = a.transpose() * (b - a * &u);
        let candidate = (0..n)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(t) = candidate else { break };
        passive[t] = true;

        loop {
            let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
            let z_p = solve_least_squares(&a.select_columns(idx.iter()), b);
            if z_p.iter().all(|&z| z > 0.0) {
                for (k, &j) in idx.iter().enumerate() {
                    u[j] = z_p[k];
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            for (k, &j) in idx.iter().enumerate() {
                if z_p[k] <= 0.0 {
                    let denom = u[j] - z_p[k];
                    if denom > 0.0 {
                        alpha = alpha.min(u[j] / denom);
                    }
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            for (k, &j) in idx.iter().enumerate() {
                u[j] += alpha * (z_p[k] - u[j]);
                if u[j] <= 1e-15 * scale {
                    u[j] = 0.0;
                    passive[j] = false;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    u
}

fn solve_least_squares(a: &DMatrix<f64>, b: &Vector) -> Vector {
    if a.nrows() >= a.ncols() {
        let qr = a.clone().qr();
        let r = qr.r();
        let diag = r.diagonal().abs();
        if diag.min() > 1e-12 * diag.max() {
            let qtb = qr.q().transpose() * b;
            if let Some(z) = r.solve_upper_triangular(&qtb) {
                return z;
            }
        }
    }
    let svd = a.clone().svd(true, true);
    let eps = 1e-14 * svd.singular_values.max().max(1.0);
    svd.solve(b, eps).unwrap_or_else(|_| Vector::zeros(a.ncols()))
}
