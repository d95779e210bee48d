//! Closed-form Dirichlet Green function of `-Δ` in the strip `ℝ × (0, π)`.
//!
//! With `a = y₁ − x₁` the kernel is
//!
//! ```text
//! G_S(y, x) = −(1/4π) ln(cosh a − cos(y₂ − x₂)) + (1/4π) ln(cosh a − cos(y₂ + x₂))
//! ```
//!
//! Both arguments of the logarithms are evaluated through the identity
//! `cosh a − cos c = 2 (sinh²(a/2) + sin²(c/2))`, which keeps full relative
//! precision near coincident points. Their difference is exactly
//! `2 sin x₂ sin y₂`, which gives the `ln1p` form used at large separation.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

const INV_4PI: f64 = 0.25 / PI;
const INV_2PI: f64 = 0.5 / PI;

/// Separation `|y₁ − x₁|` beyond which the `ln1p` form is used.
pub const FAR_BRANCH_SEPARATION: f64 = 40.0;

/// Smallest separation for which [`gs_far_field`] is certified.
pub const FAR_FIELD_MIN_SEPARATION: f64 = 5.0;

/// Off-diagonal regular-part guard.
const REGULAR_PART_GUARD: f64 = 1e-8;

/// A point of the closed strip `ℝ × [0, π]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StripPoint {
    pub x1: f64,
    pub x2: f64,
}

impl StripPoint {
    pub const fn new(x1: f64, x2: f64) -> Self {
        Self { x1, x2 }
    }

    pub fn is_interior(&self) -> bool {
        self.x1.is_finite() && self.x2 > 0.0 && self.x2 < PI
    }

    pub fn distance(&self, other: &StripPoint) -> f64 {
        (self.x1 - other.x1).hypot(self.x2 - other.x2)
    }

    pub fn offset(&self, v: [f64; 2], s: f64) -> StripPoint {
        StripPoint::new(self.x1 + s * v[0], self.x2 + s * v[1])
    }

    fn check_interior(&self, name: &str) -> Result<()> {
        if self.is_interior() {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "{name} = ({}, {}) is not an interior strip point",
                self.x1, self.x2
            )))
        }
    }
}

/// `sinh²(z)` without cancellation for small `|z|`; `+∞` on overflow.
#[inline]
fn sinh_sq(z: f64) -> f64 {
    let z = z.abs();
    if z > 350.0 {
        return f64::INFINITY;
    }
    let u = z.exp_m1();
    let s = u * (u + 2.0) / (2.0 * (u + 1.0));
    s * s
}

#[inline]
fn half_sin_sq(c: f64) -> f64 {
    let s = (0.5 * c).sin();
    s * s
}

fn check_pair(y: &StripPoint, x: &StripPoint) -> Result<()> {
    y.check_interior("y")?;
    x.check_interior("x")?;
    if y == x {
        return Err(Error::Singular(format!(
            "coincident points ({}, {})",
            x.x1, x.x2
        )));
    }
    Ok(())
}

/// Strip Green function `G_S(y, x)`.
pub fn gs(y: StripPoint, x: StripPoint) -> Result<f64> {
    check_pair(&y, &x)?;
    Ok(gs_unchecked(y, x))
}

/// [`gs`] without domain checks. The caller guarantees `y ≠ x`, both interior.
#[inline]
pub fn gs_unchecked(y: StripPoint, x: StripPoint) -> f64 {
    let a = y.x1 - x.x1;
    let sh = sinh_sq(0.5 * a);
    if !sh.is_finite() {
        return 0.0;
    }
    if a.abs() > FAR_BRANCH_SEPARATION {
        let d_minus = sh + half_sin_sq(y.x2 - x.x2);
        INV_4PI * (y.x2.sin() * x.x2.sin() / d_minus).ln_1p()
    } else {
        let d_minus = sh + half_sin_sq(y.x2 - x.x2);
        let d_plus = sh + half_sin_sq(y.x2 + x.x2);
        INV_4PI * (d_plus.ln() - d_minus.ln())
    }
}

/// Gradient of `G_S(y, x)` with respect to `y`.
pub fn grad_gs(y: StripPoint, x: StripPoint) -> Result<[f64; 2]> {
    check_pair(&y, &x)?;
    Ok(grad_gs_unchecked(y, x))
}

/// [`grad_gs`] without domain checks.
#[inline]
pub fn grad_gs_unchecked(y: StripPoint, x: StripPoint) -> [f64; 2] {
    let a = y.x1 - x.x1;
    if a.abs() > 700.0 {
        return [0.0, 0.0];
    }
    let sh = sinh_sq(0.5 * a);
    let cm = y.x2 - x.x2;
    let cp = y.x2 + x.x2;
    let d_minus = sh + half_sin_sq(cm);
    let d_plus = sh + half_sin_sq(cp);
    let sxsy = y.x2.sin() * x.x2.sin();
    // 1/D₊ − 1/D₋ = −sin x₂ sin y₂ / (D₊ D₋)
    let d1 = -INV_4PI * 0.5 * a.sinh() * sxsy / (d_plus * d_minus);
    let d2 = INV_4PI * 0.5 * (cp.sin() / d_plus - cm.sin() / d_minus);
    [d1, d2]
}

/// Diagonal regular part `H_S(x, x) = −(1/2π) ln(2 sin x₂)`.
pub fn hs_robin(x: StripPoint) -> Result<f64> {
    if !(x.x2 > 0.0 && x.x2 < PI) {
        return Err(Error::Domain(format!("x₂ = {} outside (0, π)", x.x2)));
    }
    Ok(hs_robin_unchecked(x))
}

#[inline]
pub fn hs_robin_unchecked(x: StripPoint) -> f64 {
    -INV_2PI * (2.0 * x.x2.sin()).ln()
}

/// Off-diagonal regular part `H_S(y, x) = (1/2π) ln(1/|y − x|) − G_S(y, x)`.
///
/// Returns the diagonal value when `|y − x| < 1e-8`.
pub fn hs_regular(y: StripPoint, x: StripPoint) -> Result<f64> {
    y.check_interior("y")?;
    x.check_interior("x")?;
    let r = y.distance(&x);
    if r < REGULAR_PART_GUARD {
        return Ok(hs_robin_unchecked(x));
    }
    Ok(-INV_2PI * r.ln() - gs_unchecked(y, x))
}

/// Gradient in `x` of `H_S(y, x)` evaluated on the diagonal `y = x`.
///
/// Equals half of `∇ hs_robin`, i.e. `(0, −cot(x₂)/4π)`.
#[inline]
pub fn hs_regular_diag_gradient(x: StripPoint) -> [f64; 2] {
    [0.0, -INV_4PI / x.x2.tan()]
}

/// Leading far-field term `sin x₂ sin y₂ / (π e^{|x₁ − y₁|})`.
pub fn gs_far_field(y: StripPoint, x: StripPoint) -> Result<f64> {
    y.check_interior("y")?;
    x.check_interior("x")?;
    let sep = (x.x1 - y.x1).abs();
    if sep < FAR_FIELD_MIN_SEPARATION {
        return Err(Error::Precondition(format!(
            "far-field expansion needs |x₁ − y₁| ≥ {FAR_FIELD_MIN_SEPARATION}, got {sep}"
        )));
    }
    Ok(x.x2.sin() * y.x2.sin() / (PI * sep.exp()))
}

/// Outward normal derivative of `G_S(y, ·)` on the top wall at `(x₁, π)`.
///
/// Equals `−(1/2π) sin y₂ / (cosh(x₁ − y₁) + cos y₂)`; its integral over
/// `x₁ ∈ ℝ` is `−y₂/π`.
#[inline]
pub fn top_wall_normal_derivative(y: StripPoint, x1: f64) -> f64 {
    let a = x1 - y.x1;
    // cosh a + cos y₂ = 2 (sinh²(a/2) + cos²(y₂/2))
    let c = (0.5 * y.x2).cos();
    let den = 2.0 * (sinh_sq(0.5 * a) + c * c);
    -INV_2PI * y.x2.sin() / den
}

/// Outward normal derivative of `G_S(y, ·)` on the bottom wall at `(x₁, 0)`.
///
/// Its integral over `x₁ ∈ ℝ` is `−(π − y₂)/π`.
#[inline]
pub fn bottom_wall_normal_derivative(y: StripPoint, x1: f64) -> f64 {
    let a = x1 - y.x1;
    let den = 2.0 * (sinh_sq(0.5 * a) + half_sin_sq(y.x2));
    -INV_2PI * y.x2.sin() / den
}

/// Strip point with trigonometric data cached for repeated kernel sums.
#[derive(Debug, Clone, Copy)]
pub struct KernelPoint {
    pub p: StripPoint,
    sin: f64,
    sin_half: f64,
    cos_half: f64,
}

impl KernelPoint {
    pub fn new(p: StripPoint) -> Self {
        let (sin_half, cos_half) = (0.5 * p.x2).sin_cos();
        Self {
            p,
            sin: p.x2.sin(),
            sin_half,
            cos_half,
        }
    }

    /// `G_S(self, other)` through the `ln1p` form; caller guarantees distinct points.
    #[inline]
    pub fn gs(&self, other: &KernelPoint) -> f64 {
        let a = 0.5 * (self.p.x1 - other.p.x1);
        if a.abs() > 350.0 {
            return 0.0;
        }
        let sh = sinh_sq(a);
        let s = self.sin_half * other.cos_half - self.cos_half * other.sin_half;
        let d_minus = sh + s * s;
        INV_4PI * (self.sin * other.sin / d_minus).ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(x1: f64, x2: f64) -> StripPoint {
        StripPoint::new(x1, x2)
    }

    #[test]
    fn vanishes_on_bottom_wall() {
        let v = gs(p(1.0, 1e-9), p(0.0, PI / 2.0)).unwrap();
        assert!(v.abs() < 1e-8, "{v}");
    }

    #[test]
    fn symmetric_pair() {
        let y = p(0.3, 1.0);
        let x = p(1.2, 2.0);
        let a = gs(y, x).unwrap();
        let b = gs(x, y).unwrap();
        assert!((a - b).abs() <= 1e-14, "{a} {b}");
    }

    #[test]
    fn far_field_leading_term_at_separation_ten() {
        let v = gs(p(0.0, PI / 2.0), p(10.0, PI / 2.0)).unwrap();
        let scaled = v * PI * 10f64.exp();
        assert!((scaled - 1.0).abs() < 1e-4, "{scaled}");
    }

    #[test]
    fn gradient_matches_central_differences() {
        let y = p(0.4, 1.1);
        let x = p(1.0, 2.2);
        let g = grad_gs(y, x).unwrap();
        let h = 1e-6;
        let fd1 = (gs(p(y.x1 + h, y.x2), x).unwrap() - gs(p(y.x1 - h, y.x2), x).unwrap()) / (2.0 * h);
        let fd2 = (gs(p(y.x1, y.x2 + h), x).unwrap() - gs(p(y.x1, y.x2 - h), x).unwrap()) / (2.0 * h);
        assert!((g[0] - fd1).abs() < 1e-6);
        assert!((g[1] - fd2).abs() < 1e-6);
    }

    #[test]
    fn horizontal_derivative_is_odd_in_separation() {
        let x = p(0.0, 1.3);
        let g_right = grad_gs(p(0.7, 1.3), x).unwrap();
        let g_left = grad_gs(p(-0.7, 1.3), x).unwrap();
        assert!((g_right[0] + g_left[0]).abs() < 1e-15);
    }

    #[test]
    fn tangential_derivative_along_wall_vanishes() {
        let x = p(0.2, 1.7);
        for &y1 in &[-1.0, 0.0, 0.5, 3.0] {
            let g = grad_gs(p(y1, 1e-10), x).unwrap();
            assert!(g[0].abs() < 1e-9, "{y1}: {}", g[0]);
        }
    }

    #[test]
    fn robin_values() {
        let v = hs_robin(p(0.0, PI / 2.0)).unwrap();
        assert!((v + 2f64.ln() / (2.0 * PI)).abs() < 1e-15);
        assert!((v + 0.1103178).abs() < 1e-7);
        assert!(hs_robin(p(0.0, PI / 6.0)).unwrap().abs() < 1e-15);
        let d: f64 = 1e-3;
        let diff = INV_2PI * (1.0 / (2.0 * d)).ln() - hs_robin(p(0.0, d)).unwrap();
        assert!(diff.abs() < 1e-3);
        assert!(hs_robin(p(0.0, 0.0)).is_err());
        assert!(hs_robin(p(0.0, 4.0)).is_err());
    }

    #[test]
    fn errors_on_bad_input() {
        assert!(matches!(gs(p(0.0, 1.0), p(0.0, 1.0)), Err(Error::Singular(_))));
        assert!(matches!(gs(p(0.0, -0.1), p(0.0, 1.0)), Err(Error::Domain(_))));
        assert!(matches!(gs(p(0.0, 1.0), p(0.0, 3.5)), Err(Error::Domain(_))));
        assert!(matches!(
            gs_far_field(p(0.0, 1.0), p(4.0, 1.0)),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn far_field_relative_error_at_separation_eight() {
        let y = p(0.0, 1.0);
        let x = p(8.0, 2.0);
        let exact = gs(y, x).unwrap();
        let lead = gs_far_field(y, x).unwrap();
        assert!((exact - lead).abs() / exact < (-8f64).exp() * 10.0);
    }

    #[test]
    fn far_field_linear_in_height_near_wall() {
        let x = p(9.0, 1.2);
        let a = gs_far_field(p(0.0, 1e-4), x).unwrap();
        let b = gs_far_field(p(0.0, 2e-4), x).unwrap();
        assert!((b / a - 2.0).abs() < 1e-6);
    }

    #[test]
    fn branches_agree_at_switch() {
        let x = p(0.0, 0.8);
        for &sep in &[39.999, 40.0, 40.001] {
            let y = p(sep, 2.1);
            let near = {
                let a = y.x1 - x.x1;
                let sh = sinh_sq(0.5 * a);
                INV_4PI * ((sh + half_sin_sq(y.x2 + x.x2)).ln() - (sh + half_sin_sq(y.x2 - x.x2)).ln())
            };
            let far = {
                let sh = sinh_sq(0.5 * sep);
                INV_4PI * (y.x2.sin() * x.x2.sin() / (sh + half_sin_sq(y.x2 - x.x2))).ln_1p()
            };
            // the near form loses relative accuracy here; the far form does not
            assert!((near - far).abs() < 1e-15);
            assert!(far > 0.0);
        }
    }

    #[test]
    fn cached_kernel_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let y = p(rng.random_range(-5.0..5.0), rng.random_range(0.01..PI - 0.01));
            let x = p(rng.random_range(-5.0..5.0), rng.random_range(0.01..PI - 0.01));
            let a = gs(y, x).unwrap();
            let b = KernelPoint::new(y).gs(&KernelPoint::new(x));
            assert!((a - b).abs() <= 1e-13 * (1.0 + a.abs()), "{a} {b}");
        }
    }

    #[test]
    fn wall_flux_integrals() {
        let y = p(0.3, 1.2);
        let (mut top, mut bottom) = (0.0, 0.0);
        let step = 0.01;
        let mut x1 = -40.0;
        while x1 <= 40.0 {
            top += top_wall_normal_derivative(y, x1) * step;
            bottom += bottom_wall_normal_derivative(y, x1) * step;
            x1 += step;
        }
        assert!((top + y.x2 / PI).abs() < 1e-9, "{top}");
        assert!((bottom + (PI - y.x2) / PI).abs() < 1e-9, "{bottom}");
    }

    #[test]
    fn wall_derivative_matches_finite_difference() {
        let y = p(-0.2, 0.9);
        let x1 = 0.7;
        let h = 1e-6;
        let fd_top = (gs(y, p(x1, PI - h)).unwrap() - 0.0) / h * -1.0;
        // one-sided: G vanishes on the wall, outward normal is +x₂
        assert!((fd_top - top_wall_normal_derivative(y, x1)).abs() < 1e-5);
        let fd_bot = -(gs(y, p(x1, h)).unwrap()) / h;
        assert!((fd_bot - bottom_wall_normal_derivative(y, x1)).abs() < 1e-5);
    }
}
