//! Algebraic connectivity against a deflated power iteration and closed forms.

use std::f64::consts::PI;

use dai_nash::Graph;
use nalgebra::{DMatrix, DVector};

/// Second-smallest Laplacian eigenvalue: power iteration on `c I - L` with
/// the consensus direction projected out, read off by Rayleigh quotient.
fn deflated_power_lambda2(l: &DMatrix<f64>) -> f64 {
    let n = l.nrows();
    let c = 2.0 * (0..n).map(|i| l[(i, i)]).fold(0.0, f64::max) + 1.0;
    let b = DMatrix::identity(n, n) * c - l;
    let mut v = DVector::from_fn(n, |i, _| ((i * 7 + 3) as f64).sin());
    let mut estimate = f64::NAN;
    for _ in 0..200_000 {
        let mean = v.mean();
        v.add_scalar_mut(-mean);
        v /= v.norm();
        let w = &b * &v;
        let next = c - v.dot(&w);
        if (next - estimate).abs() < 1e-15 {
            return next;
        }
        estimate = next;
        v = w;
    }
    estimate
}

fn graphs() -> Vec<(String, Graph)> {
    let mut out = Vec::new();
    for n in [2usize, 3, 5, 8, 13, 20] {
        out.push((format!("path {n}"), Graph::path(n, 1.0).unwrap()));
        out.push((format!("star {n}"), Graph::star(n, 0.7).unwrap()));
        out.push((format!("complete {n}"), Graph::complete(n, 1.3).unwrap()));
        if n >= 3 {
            out.push((format!("cycle {n}"), Graph::cycle(n, 2.0).unwrap()));
        }
        for seed in 0..3 {
            out.push((format!("er {n}/{seed}"), Graph::erdos_renyi(n, 0.4, seed).unwrap()));
        }
    }
    out
}

#[test]
fn lambda2_matches_deflated_power_iteration() {
    for (name, g) in graphs() {
        let l = g.laplacian();
        let reference = deflated_power_lambda2(l.matrix());
        assert!((l.lambda2() - reference).abs() < 1e-8, "{name}: {} vs {reference}", l.lambda2());
    }
}

#[test]
fn lambda2_closed_forms() {
    for n in [3usize, 6, 11, 20] {
        let nf = n as f64;
        let path = 2.0 - 2.0 * (PI / nf).cos();
        let cycle = 2.0 * (2.0 - 2.0 * (2.0 * PI / nf).cos());
        assert!((Graph::path(n, 1.0).unwrap().laplacian().lambda2() - path).abs() < 1e-10);
        assert!((Graph::cycle(n, 2.0).unwrap().laplacian().lambda2() - cycle).abs() < 1e-10);
        assert!((Graph::complete(n, 1.5).unwrap().laplacian().lambda2() - 1.5 * nf).abs() < 1e-10);
        assert!((Graph::star(n, 1.0).unwrap().laplacian().lambda2() - 1.0).abs() < 1e-10);
    }
}
