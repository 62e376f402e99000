//! Stable normal special functions.
//!
//! The Gaussian selection formulas need φ/Φ (the inverse Mills ratio) and the
//! curvature factor c(Δ) = −Δ·φ/Φ − (φ/Φ)² far into the lower tail, where the
//! naive quotient underflows. Below a cutoff both are evaluated through a
//! continued fraction for Φ(x)/φ(x), which stays accurate for arbitrarily
//! negative arguments.

use libm::erfc;

/// 1/√(2π).
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
/// ln √(2π).
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;
/// √2.
const SQRT_2: f64 = std::f64::consts::SQRT_2;
/// Below this argument, tail quantities switch to the continued fraction.
const TAIL_CUTOFF: f64 = -8.0;

/// Standard normal density φ(x).
#[inline]
#[must_use]
pub fn normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal distribution function Φ(x), via the complementary error
/// function so the lower tail keeps full relative precision down to the
/// underflow threshold.
#[inline]
#[must_use]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Continued fraction for the scaled tail ratio R(t) = Φ(−t)/φ(t), t > 0:
/// R(t) = 1/(t + 1/(t + 2/(t + 3/(t + …)))), evaluated bottom-up.
fn tail_ratio(t: f64) -> f64 {
    debug_assert!(t > 0.0);
    // At t ≥ 8 the truncation error of 96 levels is far below f64 epsilon.
    let mut value = 0.0;
    for k in (1..=96).rev() {
        value = k as f64 / (t + value);
    }
    1.0 / (t + value)
}

/// log Φ(x), accurate for arbitrarily negative x where Φ itself underflows.
#[must_use]
pub fn log_normal_cdf(x: f64) -> f64 {
    if x < TAIL_CUTOFF {
        // Φ(x) = φ(x)·R(−x)  ⇒  log Φ = −x²/2 − ln√(2π) + ln R(−x).
        -0.5 * x * x - LN_SQRT_2PI + tail_ratio(-x).ln()
    } else {
        normal_cdf(x).ln()
    }
}

/// Inverse Mills ratio r(x) = φ(x)/Φ(x).
///
/// Strictly positive, decreasing, r(x) → −x as x → −∞ and r(x) → 0 as
/// x → +∞. The deep lower tail uses the continued fraction; elsewhere the
/// direct quotient is exact enough.
#[must_use]
pub fn mills_ratio(x: f64) -> f64 {
    if x < TAIL_CUTOFF {
        1.0 / tail_ratio(-x)
    } else {
        normal_pdf(x) / normal_cdf(x)
    }
}

/// Curvature factor of the log selection probability,
/// c(x) = −x·r(x) − r(x)² with r = φ/Φ.
///
/// Equal to d r(x)/dx; always in (−1, 0], with c(0) = −2/π, c(x) → −1 as
/// x → −∞ and c(x) → 0⁻ as x → +∞.
#[must_use]
pub fn c_factor(x: f64) -> f64 {
    let r = mills_ratio(x);
    // -r·(x + r): in the lower tail r ≈ −x + 1/x, so x + r ≈ 1/x and the
    // subtraction happens between O(|x|) and O(|x|) values already joined by
    // the continued fraction — no catastrophic cancellation in practice.
    -r * (x + r)
}
