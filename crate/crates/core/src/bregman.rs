//! The HAM potential `R_α`, its derivatives and convex conjugate, the induced
//! Bregman divergence, and the small/large-α limit shapes.

use crate::error::{Error, Result};
use crate::numcore::{sign, ParamVector};

/// `R_α` anchored at `x0`, so that `∇R_α(x0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct BregmanSpec {
    pub alpha: f64,
    pub x0: ParamVector,
}

/// `(1+u)ln(1+u) − u`, accurate down to `u ≈ 0` where it behaves like `u²/2`.
pub fn phi(u: f64) -> f64 {
    if u.abs() < 1e-4 {
        // alternating series Σ_{k≥2} (−u)^k / (k(k−1))
        let u2 = u * u;
        u2 * (0.5 - u / 6.0 + u2 / 12.0 - u2 * u / 20.0)
    } else {
        (1.0 + u) * u.ln_1p() - u
    }
}

impl BregmanSpec {
    pub fn new(alpha: f64, x0: ParamVector) -> Result<Self> {
        if alpha == 0.0 || !alpha.is_finite() {
            return Err(Error::invalid(format!("alpha must be finite and nonzero, got {alpha}")));
        }
        x0.check_finite("bregman reference point")?;
        let spec = BregmanSpec { alpha, x0 };
        spec.check_domain(&spec.x0)?;
        Ok(spec)
    }

    /// Reference point at the origin, where `R_α` is even.
    pub fn centered(alpha: f64, n: usize) -> Result<Self> {
        Self::new(alpha, ParamVector::zeros(n))
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    fn check_domain(&self, x: &ParamVector) -> Result<()> {
        x.ensure_len(self.dim())?;
        for (index, &v) in x.iter().enumerate() {
            let m = 1.0 + self.alpha * v.abs();
            if !(m > 0.0) {
                return Err(Error::Positivity { index, value: m });
            }
        }
        Ok(())
    }

    /// `sign(x0ᵢ)·ln(1+α|x0ᵢ|)/α`, the linear correction that zeroes `∇R_α(x0)`.
    fn anchor(&self, i: usize) -> f64 {
        let a = self.alpha;
        sign(self.x0[i]) * (a * self.x0[i].abs()).ln_1p() / a
    }

    pub fn value(&self, x: &ParamVector) -> Result<f64> {
        self.check_domain(x)?;
        let a = self.alpha;
        Ok((0..x.len())
            .map(|i| phi(a * x[i].abs()) / (a * a) - x[i] * self.anchor(i))
            .sum())
    }

    pub fn gradient(&self, x: &ParamVector) -> Result<ParamVector> {
        self.check_domain(x)?;
        let a = self.alpha;
        Ok((0..x.len())
            .map(|i| sign(x[i]) * (a * x[i].abs()).ln_1p() / a - self.anchor(i))
            .collect())
    }

    /// Diagonal of `∇²R_α`, the HAM metric `1/(1+α|x|)`.
    pub fn hessian_diag(&self, x: &ParamVector) -> Result<ParamVector> {
        self.check_domain(x)?;
        Ok(x.map(|v| 1.0 / (1.0 + self.alpha * v.abs())))
    }

    /// `∇R*_α(θ) = sign(θ)(e^{α|θ|} − 1)/α`, the inverse of [`Self::gradient`]
    /// for a centered spec with `α > 0`.
    pub fn conjugate_gradient(&self, theta: &ParamVector) -> Result<ParamVector> {
        self.require_centered_positive()?;
        theta.ensure_len(self.dim())?;
        let a = self.alpha;
        let out = theta.map(|t| sign(t) * (a * t.abs()).exp_m1() / a);
        if let Some(index) = out.first_non_finite() {
            return Err(Error::NonFinite {
                context: "conjugate gradient overflow",
                index,
            });
        }
        Ok(out)
    }

    /// Derivative of [`Self::conjugate_gradient`], `e^{α|θ|}` per coordinate.
    pub fn conjugate_hessian_diag(&self, theta: &ParamVector) -> Result<ParamVector> {
        self.require_centered_positive()?;
        theta.ensure_len(self.dim())?;
        let a = self.alpha;
        let out = theta.map(|t| (a * t.abs()).exp());
        if let Some(index) = out.first_non_finite() {
            return Err(Error::NonFinite {
                context: "conjugate hessian overflow",
                index,
            });
        }
        Ok(out)
    }

    fn require_centered_positive(&self) -> Result<()> {
        if !(self.alpha > 0.0) || self.x0.iter().any(|&v| v != 0.0) {
            return Err(Error::invalid("conjugate map needs alpha > 0 and x0 = 0"));
        }
        Ok(())
    }

    /// `D(x, y) = R(x) − R(y) − ⟨∇R(y), x − y⟩`.
    pub fn divergence(&self, x: &ParamVector, y: &ParamVector) -> Result<f64> {
        if !(self.alpha > 0.0) {
            return Err(Error::invalid("bregman divergence needs alpha > 0"));
        }
        let gy = self.gradient(y)?;
        Ok(self.value(x)? - self.value(y)? - gy.dot(&x.sub(y)?)?)
    }
}

/// `R_α(x)` for a centered spec, scaled by the limit-shape constant: `2R` for
/// `α ≤ 1` (compare with `‖x‖²`), `(α/ln α)R` for `α > 1` (compare with `‖x‖₁`).
pub fn normalized_value(alpha: f64, x: &ParamVector) -> Result<f64> {
    let r = BregmanSpec::centered(alpha, x.len())?.value(x)?;
    if alpha <= 1.0 {
        Ok(2.0 * r)
    } else {
        Ok(alpha / alpha.ln() * r)
    }
}

fn max_relative(grid: &[ParamVector], f: impl Fn(&ParamVector) -> Result<(f64, f64)>) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for x in grid {
        let (approx, exact) = f(x)?;
        if exact == 0.0 {
            continue;
        }
        worst = worst.max(((approx - exact) / exact).abs());
    }
    Ok(worst)
}

/// Largest relative gap between `2R_α(x)` and `‖x‖²` over the grid; the origin is skipped.
pub fn l2_shape_error(alpha: f64, grid: &[ParamVector]) -> Result<f64> {
    max_relative(grid, |x| {
        let r = BregmanSpec::centered(alpha, x.len())?.value(x)?;
        Ok((2.0 * r, x.dot(x)?))
    })
}

/// Largest relative gap between `(α/ln α)R_α(x)` and `‖x‖₁` over the grid; the origin is skipped.
pub fn l1_shape_error(alpha: f64, grid: &[ParamVector]) -> Result<f64> {
    if !(alpha > 1.0) {
        return Err(Error::invalid(format!("l1 limit shape needs alpha > 1, got {alpha}")));
    }
    max_relative(grid, |x| {
        let r = BregmanSpec::centered(alpha, x.len())?.value(x)?;
        Ok((alpha / alpha.ln() * r, x.l1()))
    })
}

/// Both limit-shape errors; fails when `α ≤ 1` because the l1 normalization is undefined.
pub fn limit_shape_error(alpha: f64, grid: &[ParamVector]) -> Result<(f64, f64)> {
    Ok((l2_shape_error(alpha, grid)?, l1_shape_error(alpha, grid)?))
}

/// Tensor grid with `pts` equispaced values per axis on `[−half_width, half_width]^dim`.
pub fn box_grid(half_width: f64, pts: usize, dim: usize) -> Result<Vec<ParamVector>> {
    if pts < 2 || dim == 0 || !(half_width > 0.0) {
        return Err(Error::invalid(
            "grid needs pts >= 2, dim >= 1 and a positive half width",
        ));
    }
    let axis: Vec<f64> = (0..pts)
        .map(|i| -half_width + 2.0 * half_width * i as f64 / (pts - 1) as f64)
        .collect();
    let total = pts.pow(dim as u32);
    Ok((0..total)
        .map(|mut flat| {
            let mut x = vec![0.0; dim];
            for slot in x.iter_mut().rev() {
                *slot = axis[flat % pts];
                flat /= pts;
            }
            ParamVector::from(x)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flows::{metric_inverse, MetricKind};
    use crate::numcore::Rng;
    use proptest::prelude::*;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::from(v)
    }

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    /// `∫₀^|x| ∫₀^s dr/(1+α r) ds`, evaluated by nested Simpson quadrature.
    fn nested_quadrature(alpha: f64, x: f64) -> f64 {
        simpson(|s| simpson(|r| 1.0 / (1.0 + alpha * r), 0.0, s, 400), 0.0, x.abs(), 400)
    }

    #[test]
    fn phi_branches_agree() {
        for u in [9.99e-5, -9.99e-5, 1e-7] {
            let series = (u * u) * (0.5 - u / 6.0 + u * u / 12.0 - u * u * u / 20.0);
            assert!((phi(u) - series).abs() <= 1e-15 * series);
        }
        // the closed form loses about eps/u relative digits near the switch
        let (below, above) = (phi(1e-4 * (1.0 - 1e-12)), phi(1e-4 * (1.0 + 1e-12)));
        assert!(((below - above) / below).abs() < 1e-10);
        assert_eq!(phi(0.0), 0.0);
    }

    #[test]
    fn value_matches_quadrature() {
        let spec = BregmanSpec::centered(2.0, 1).unwrap();
        let r = spec.value(&pv(&[1.0])).unwrap();
        assert!((r - nested_quadrature(2.0, 1.0)).abs() < 1e-8);
        for (alpha, x) in [(0.3, -0.7), (10.0, 0.25), (-0.4, 1.5)] {
            let r = BregmanSpec::centered(alpha, 1).unwrap().value(&pv(&[x])).unwrap();
            assert!((r - nested_quadrature(alpha, x)).abs() < 1e-8, "alpha {alpha}");
        }
    }

    #[test]
    fn origin_and_symmetry() {
        let spec = BregmanSpec::centered(3.0, 3).unwrap();
        assert_eq!(spec.value(&ParamVector::zeros(3)).unwrap(), 0.0);
        let x = pv(&[0.4, -1.2, 2.0]);
        assert_eq!(spec.value(&x).unwrap(), spec.value(&x.scale(-1.0)).unwrap());
    }

    #[test]
    fn gradient_vanishes_at_reference() {
        let mut rng = Rng::new(11);
        for alpha in [1e-6, 0.5, 10.0, 1e4] {
            let x0 = rng.normal_vector(5);
            let spec = BregmanSpec::new(alpha, x0.clone()).unwrap();
            assert!(spec.gradient(&x0).unwrap().linf() < 1e-14);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = Rng::new(5);
        let h = 1e-5;
        for _ in 0..100 {
            let alpha = rng.uniform_in(0.1, 5.0);
            let x0 = rng.normal_vector(3);
            let spec = BregmanSpec::new(alpha, x0).unwrap();
            let mut x = rng.normal_vector(3);
            for v in x.as_mut_slice() {
                if v.abs() < 0.05 {
                    *v += 0.1;
                }
            }
            let g = spec.gradient(&x).unwrap();
            let hd = spec.hessian_diag(&x).unwrap();
            for i in 0..3 {
                let (mut p, mut m) = (x.clone(), x.clone());
                p[i] += h;
                m[i] -= h;
                let fd = (spec.value(&p).unwrap() - spec.value(&m).unwrap()) / (2.0 * h);
                assert!((fd - g[i]).abs() <= 1e-6 * g[i].abs().max(1.0));
                let fd2 = (spec.gradient(&p).unwrap()[i] - spec.gradient(&m).unwrap()[i]) / (2.0 * h);
                assert!((fd2 - hd[i]).abs() <= 1e-6 * hd[i]);
            }
        }
    }

    #[test]
    fn small_alpha_gradient_is_shift() {
        let spec = BregmanSpec::new(1e-8, pv(&[0.3, -0.2])).unwrap();
        let x = pv(&[1.0, 0.5]);
        let g = spec.gradient(&x).unwrap();
        assert!(g.max_abs_diff(&x.sub(&spec.x0).unwrap()).unwrap() < 1e-6);
    }

    #[test]
    fn hessian_is_inverse_metric() {
        let mut rng = Rng::new(8);
        let spec = BregmanSpec::centered(2.5, 4).unwrap();
        assert_eq!(spec.hessian_diag(&ParamVector::zeros(4)).unwrap().as_slice(), &[1.0; 4]);
        for _ in 0..100 {
            let x = rng.normal_vector(4);
            let h = spec.hessian_diag(&x).unwrap();
            let m = metric_inverse(MetricKind::Ham { alpha: 2.5 }, &x).unwrap();
            for i in 0..4 {
                assert_eq!(h[i], 1.0 / m[i]);
            }
        }
    }

    #[test]
    fn conjugate_round_trip() {
        let spec = BregmanSpec::centered(1.0, 1).unwrap();
        let v = spec.conjugate_gradient(&pv(&[2f64.ln()])).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-15);
        assert_eq!(spec.conjugate_gradient(&pv(&[0.0])).unwrap()[0], 0.0);
        let mut rng = Rng::new(2);
        for alpha in [0.01, 1.0, 50.0] {
            let spec = BregmanSpec::centered(alpha, 6).unwrap();
            let x = rng.normal_vector(6);
            let back = spec.conjugate_gradient(&spec.gradient(&x).unwrap()).unwrap();
            assert!(back.max_abs_diff(&x).unwrap() < 1e-10);
        }
    }

    #[test]
    fn conjugate_errors() {
        let spec = BregmanSpec::centered(10.0, 1).unwrap();
        assert!(matches!(
            spec.conjugate_gradient(&pv(&[1e3])),
            Err(Error::NonFinite { .. })
        ));
        let shifted = BregmanSpec::new(1.0, pv(&[0.5])).unwrap();
        assert!(shifted.conjugate_gradient(&pv(&[0.1])).is_err());
    }

    #[test]
    fn domain_errors() {
        let spec = BregmanSpec::centered(-0.5, 2).unwrap();
        assert!(matches!(
            spec.value(&pv(&[0.1, 3.0])),
            Err(Error::Positivity { index: 1, .. })
        ));
        assert!(BregmanSpec::centered(0.0, 2).is_err());
    }

    #[test]
    fn divergence_nonnegative_and_strict() {
        let mut rng = Rng::new(21);
        let spec = BregmanSpec::new(3.0, pv(&[0.2, -0.5, 1.0])).unwrap();
        let mut smallest = f64::INFINITY;
        for _ in 0..1000 {
            let x = rng.normal_vector(3);
            let y = rng.normal_vector(3);
            let d = spec.divergence(&x, &y).unwrap();
            assert!(d >= -1e-12);
            smallest = smallest.min(d);
            assert_eq!(spec.divergence(&x, &x).unwrap(), 0.0);
        }
        assert!(smallest > 0.0);
    }

    #[test]
    fn legendre_boundary_growth() {
        let spec = BregmanSpec::centered(1.0, 1).unwrap();
        let at_1e3 = spec.gradient(&pv(&[1e3])).unwrap().l2();
        let mut prev = 0.0;
        for k in 0..=60 {
            let r = 10f64.powf(k as f64 / 10.0);
            let n = spec.gradient(&pv(&[r])).unwrap().l2();
            assert!(n > prev);
            prev = n;
        }
        assert!(prev > at_1e3);
    }

    #[test]
    fn limit_shapes() {
        let grid = box_grid(1.0, 41, 2).unwrap();
        assert_eq!(grid.len(), 41 * 41);
        assert!(l2_shape_error(1e-4, &grid).unwrap() < 1e-3);
        assert!(l1_shape_error(0.5, &grid).is_err());
        assert_eq!(normalized_value(1e-4, &ParamVector::zeros(2)).unwrap(), 0.0);
        assert_eq!(normalized_value(1e6, &ParamVector::zeros(2)).unwrap(), 0.0);
    }

    #[test]
    fn l1_shape_error_decays_like_inverse_log() {
        // (α/ln α)R_α(x) = |x|(1 + (ln|x| − 1)/ln α) + o(1/ln α)
        let grid = vec![pv(&[1.0, 1.0]), pv(&[0.5, -0.25])];
        let mut prev = f64::INFINITY;
        for alpha in [1e3, 1e6, 1e12, 1e24, 1e48] {
            let err = l1_shape_error(alpha, &grid).unwrap();
            let predicted = grid
                .iter()
                .map(|x| (x.iter().map(|v| v.abs() * (v.abs().ln() - 1.0)).sum::<f64>() / x.l1()).abs())
                .fold(0.0, f64::max)
                / alpha.ln();
            assert!(err < prev);
            assert!(
                (err - predicted).abs() < 0.05 * predicted,
                "alpha {alpha}: {err} vs {predicted}"
            );
            prev = err;
        }
    }

    proptest! {
        #[test]
        fn strictly_convex_hessian(alpha in 1e-3f64..1e3, x in proptest::collection::vec(-100.0f64..100.0, 1..6)) {
            let spec = BregmanSpec::centered(alpha, x.len()).unwrap();
            let h = spec.hessian_diag(&ParamVector::from(x)).unwrap();
            prop_assert!(h.iter().all(|&v| v > 0.0));
        }

        #[test]
        fn gradient_monotone_per_coordinate(alpha in 1e-3f64..1e3, a in -10.0f64..10.0, b in -10.0f64..10.0) {
            let spec = BregmanSpec::centered(alpha, 1).unwrap();
            let (ga, gb) = (spec.gradient(&pv(&[a])).unwrap()[0], spec.gradient(&pv(&[b])).unwrap()[0]);
            prop_assert!((ga - gb) * (a - b) >= 0.0);
        }
    }
}
