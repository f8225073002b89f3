use super::{grad, no_grad, Tensor};
use crate::error::Result;

/// Comparison of a backward-pass gradient with central differences.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub max_abs_err: f64,
    /// Max of `|a - n| / max(|a|, |n|, 1e-3)` over coordinates.
    pub max_rel_err: f64,
    pub passed: bool,
}

/// Checks the gradient of the scalar function `f` at `x`.
///
/// Points where `f` is not differentiable (a ReLU exactly at its kink, say)
/// will show a mismatch; callers should keep test points away from them.
pub fn finite_diff_check<F>(f: F, x: &Tensor, h: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&Tensor) -> Result<Tensor>,
{
    let leaf = x.requiring_grad();
    let out = f(&leaf)?;
    let analytic = grad(&out, &[leaf], false)?.remove(0).to_vec();

    let _guard = no_grad();
    let base = x.to_vec();
    let mut numeric = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        let mut plus = base.clone();
        plus[i] += h;
        let mut minus = base.clone();
        minus[i] -= h;
        let fp = f(&Tensor::from_vec(plus, x.shape())?)?.item();
        let fm = f(&Tensor::from_vec(minus, x.shape())?)?.item();
        numeric.push((fp - fm) / (2.0 * h));
    }

    let mut max_abs_err = 0.0f64;
    let mut max_rel_err = 0.0f64;
    for (a, n) in analytic.iter().zip(&numeric) {
        let abs = (a - n).abs();
        let rel = abs / a.abs().max(n.abs()).max(1e-3);
        max_abs_err = max_abs_err.max(abs);
        max_rel_err = max_rel_err.max(rel);
    }
    Ok(GradCheckReport {
        analytic,
        numeric,
        max_abs_err,
        max_rel_err,
        passed: max_rel_err < tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_sum_passes() {
        let x = Tensor::from_vec(vec![-1.3, 0.2, 2.5, 0.0], &[4]).unwrap();
        let r = finite_diff_check(|t| t.sigmoid()?.sum(), &x, 1e-5, 1e-6).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn linear_is_exact() {
        let x = Tensor::from_vec(vec![1.0, -2.0, 4.0], &[3]).unwrap();
        let w = Tensor::from_vec(vec![0.5, 0.25, -1.0], &[3]).unwrap();
        let r = finite_diff_check(|t| t.mul(&w)?.sum(), &x, 0.5, 1e-12).unwrap();
        assert!(r.max_abs_err < 1e-14, "{r:?}");
    }

    #[test]
    fn relu_kink_is_a_known_exclusion() {
        // Subgradient at 0 is defined as 0; central differences see 0.5.
        let x = Tensor::from_vec(vec![0.0], &[1]).unwrap();
        let r = finite_diff_check(|t| t.relu()?.sum(), &x, 1e-5, 1e-6).unwrap();
        assert_eq!(r.analytic[0], 0.0);
        assert!((r.numeric[0] - 0.5).abs() < 1e-12);
        assert!(!r.passed);
    }
}
