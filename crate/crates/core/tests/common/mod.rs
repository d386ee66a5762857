//! Oracles shared by the integration and acceptance tests.

#![allow(dead_code)]

use ham_core::bregman::BregmanSpec;
use ham_core::regression::{min_norm_solution, RegressionProblem};
use ham_core::ParamVector;
use nalgebra::{DMatrix, SVD};

pub fn pv(v: &[f64]) -> ParamVector {
    ParamVector::from(v)
}

/// Minimize `R_α` over `{x : Zx = y}` by coarse-to-fine grid search in
/// null-space coordinates around the minimum-norm solution.
pub fn manifold_scan(p: &RegressionProblem, alpha: f64) -> ParamVector {
    let n = p.n();
    let spec = BregmanSpec::centered(alpha, n).unwrap();
    let xp = min_norm_solution(&p.z, &p.y).unwrap();
    let zn = p.z.to_nalgebra();
    let gram_inv = (&zn * zn.transpose()).try_inverse().unwrap();
    let proj = DMatrix::identity(n, n) - zn.transpose() * gram_inv * &zn;
    let svd = SVD::new(proj, true, false);
    let u = svd.u.unwrap();
    let basis: Vec<Vec<f64>> = (0..n)
        .filter(|&j| svd.singular_values[j] > 0.5)
        .map(|j| (0..n).map(|i| u[(i, j)]).collect())
        .collect();
    assert_eq!(basis.len(), n - p.d());
    let point = |t: &[f64]| -> ParamVector {
        (0..n)
            .map(|i| xp[i] + basis.iter().zip(t).map(|(b, c)| b[i] * c).sum::<f64>())
            .collect()
    };
    let dims = basis.len();
    let pts = 21usize;
    let mut center = vec![0.0; dims];
    let mut radius = 3.0 * xp.l2();
    while radius > 1e-7 {
        let mut best = (f64::INFINITY, center.clone());
        for flat in 0..pts.pow(dims as u32) {
            let mut rem = flat;
            let t: Vec<f64> = (0..dims)
                .map(|a| {
                    let idx = rem % pts;
                    rem /= pts;
                    center[a] - radius + 2.0 * radius * idx as f64 / (pts - 1) as f64
                })
                .collect();
            let v = spec.value(&point(&t)).unwrap();
            if v < best.0 {
                best = (v, t);
            }
        }
        center = best.1;
        radius /= 5.0;
    }
    point(&center)
}

/// Solution of `x' = −(1 + αx)x` from `x0 > 0`: `x/(1+αx) = x0/(1+αx0)·e^{−t}`.
pub fn ham_quadratic_flow(alpha: f64, x0: f64, t: f64) -> f64 {
    let c = x0 / (1.0 + alpha * x0) * (-t).exp();
    c / (1.0 - alpha * c)
}

pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// `R_α(x)` for a centered scalar potential as `∫₀^|x| ∫₀^s dr/(1+αr) ds`.
pub fn nested_quadrature(alpha: f64, x: f64) -> f64 {
    simpson(|s| simpson(|r| 1.0 / (1.0 + alpha * r), 0.0, s, 400), 0.0, x.abs(), 400)
}
