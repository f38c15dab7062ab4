//! Closed-form theory for the feedback schemes.
//!
//! The achievable rate `ϱ(σ_W², P_X², σ̄_V)` is the non-negative root of
//!
//! ```text
//! σ_W √(2^{2ϱ} − 1) = P_X − σ̄_V (1 + 2^ϱ)
//! ```
//!
//! (zero when `4σ̄_V² > P_X²`). The left side increases in `ϱ` and the right
//! side decreases, so the root is bracketed by `[0, ½ log₂(1 + P_X²/σ_W²)]` and
//! found by bisection. The bisection runs to full `f64` resolution: near
//! `ϱ = 0` the square root makes the equation steep, and a `1e-12` bracket
//! would still leave residuals around `1e-9`.
//!
//! The remaining functions are the second-moment, tail and error-probability
//! bounds of the schemes, plus the backward-link design selector `Γ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inputs of the rate function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateQuery {
    sigma_w2: f64,
    p_x2: f64,
    sigma_v_bar: f64,
}

impl RateQuery {
    pub fn new(sigma_w2: f64, p_x2: f64, sigma_v_bar: f64) -> Result<Self> {
        if !sigma_w2.is_finite() || sigma_w2 <= 0.0 {
            return Err(Error::InvalidParameter(format!("σ_W² must be finite and > 0, got {sigma_w2}")));
        }
        if !p_x2.is_finite() || p_x2 <= 0.0 {
            return Err(Error::InvalidParameter(format!("P_X² must be finite and > 0, got {p_x2}")));
        }
        if !sigma_v_bar.is_finite() || sigma_v_bar < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "σ̄_V must be finite and >= 0, got {sigma_v_bar}"
            )));
        }
        Ok(Self {
            sigma_w2,
            p_x2,
            sigma_v_bar,
        })
    }

    pub fn sigma_w2(&self) -> f64 {
        self.sigma_w2
    }

    pub fn p_x2(&self) -> f64 {
        self.p_x2
    }

    pub fn sigma_v_bar(&self) -> f64 {
        self.sigma_v_bar
    }

    /// Perfect-feedback rate `½ log₂(1 + P_X²/σ_W²)`, the bracket's upper end.
    pub fn rate_ceiling(&self) -> f64 {
        0.5 * (self.p_x2 / self.sigma_w2).ln_1p() / std::f64::consts::LN_2
    }

    /// `σ_W √(2^{2ϱ} − 1) − P_X + σ̄_V (1 + 2^ϱ)`, increasing in `ϱ`.
    pub fn balance(&self, rho: f64) -> f64 {
        let sigma_w = self.sigma_w2.sqrt();
        let p_x = self.p_x2.sqrt();
        let growth = (2.0 * rho * std::f64::consts::LN_2).exp_m1().max(0.0);
        sigma_w * growth.sqrt() - p_x + self.sigma_v_bar * (1.0 + rho.exp2())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateSolution {
    pub value: f64,
    pub iterations: u32,
    /// `|balance(value)|`; zero on the `4σ̄_V² > P_X²` branch.
    pub residual: f64,
}

/// Upper limit on halvings. Bisection runs until the bracket ends are
/// adjacent floats, which takes at most ~1075 steps even for subnormal roots.
pub const RHO_MAX_ITERATIONS: u32 = 1100;

/// Achievable rate `ϱ(σ_W², P_X², σ̄_V)`.
pub fn rho(q: &RateQuery) -> RateSolution {
    if 4.0 * q.sigma_v_bar * q.sigma_v_bar > q.p_x2 {
        return RateSolution {
            value: 0.0,
            iterations: 0,
            residual: 0.0,
        };
    }
    let mut lo = 0.0f64;
    let mut hi = q.rate_ceiling();
    let f_lo = q.balance(lo);
    if f_lo >= 0.0 {
        return RateSolution {
            value: 0.0,
            iterations: 0,
            residual: f_lo.abs(),
        };
    }
    let mut iterations = 0;
    while iterations < RHO_MAX_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        iterations += 1;
        if q.balance(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Pick whichever bracket end balances better.
    let (value, residual) = {
        let (rl, rh) = (q.balance(lo).abs(), q.balance(hi).abs());
        if rl <= rh {
            (lo, rl)
        } else {
            (hi, rh)
        }
    };
    RateSolution {
        value,
        iterations,
        residual,
    }
}

/// Design selector `Γ = (P_X + σ_W) σ̄_S / (P_Q − σ̄_S)`.
pub fn gamma_select(sigma_w: f64, sigma_s_bar: f64, p_x: f64, p_q: f64) -> Result<f64> {
    for (name, v) in [("σ_W", sigma_w), ("σ̄_S", sigma_s_bar), ("P_X", p_x), ("P_Q", p_q)] {
        if !v.is_finite() || v <= 0.0 {
            return Err(Error::InvalidParameter(format!("{name} must be finite and > 0, got {v}")));
        }
    }
    if p_q <= sigma_s_bar {
        return Err(Error::BackwardPower { p_q, sigma_s_bar });
    }
    Ok((p_x + sigma_w) * sigma_s_bar / (p_q - sigma_s_bar))
}

/// Rate under the `Γ` selection, `ϱ(σ_W², P_X², Γ(σ_W, σ̄_S, P_X, P_Q))`.
pub fn rho_composed(sigma_w2: f64, p_x2: f64, sigma_s_bar: f64, p_q: f64) -> Result<f64> {
    let sigma_v_bar = gamma_select(sigma_w2.sqrt(), sigma_s_bar, p_x2.sqrt(), p_q)?;
    let q = RateQuery::new(sigma_w2, p_x2, sigma_v_bar)?;
    Ok(rho(&q).value)
}

/// Offset `γ` and spread `β²` of the Gaussian tail bound on `X_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailConstants {
    pub gamma: f64,
    pub beta2: f64,
}

impl TailConstants {
    pub fn new(r_bar: f64, sigma_v_bar: f64, sigma_w2: f64) -> Self {
        let g = r_bar.exp2();
        Self {
            gamma: (g + 1.0) * sigma_v_bar + g - 1.0 / g,
            beta2: (2.0 * r_bar).exp2_m1() * sigma_w2,
        }
    }
}

trait Exp2M1 {
    fn exp2_m1(self) -> f64;
}

impl Exp2M1 for f64 {
    fn exp2_m1(self) -> f64 {
        (self * std::f64::consts::LN_2).exp_m1()
    }
}

fn spread(r_bar: f64) -> f64 {
    r_bar.exp2() - (-r_bar).exp2()
}

/// Second-moment bound on `X_t`:
/// `(σ_W √(2^{2r̄}−1) + σ̄_V (2^{r̄}+1) + 2^{−r̄t}(2^{r̄}−2^{−r̄}))²`.
pub fn power_bound_x(t: usize, r_bar: f64, sigma_w2: f64, sigma_v_bar: f64) -> f64 {
    let steady = power_bound_x_steady_amplitude(r_bar, sigma_w2, sigma_v_bar);
    let transient = (-r_bar * t as f64).exp2() * spread(r_bar);
    (steady + transient).powi(2)
}

/// Limit of [`power_bound_x`] as `t → ∞`.
pub fn power_bound_x_steady(r_bar: f64, sigma_w2: f64, sigma_v_bar: f64) -> f64 {
    power_bound_x_steady_amplitude(r_bar, sigma_w2, sigma_v_bar).powi(2)
}

fn power_bound_x_steady_amplitude(r_bar: f64, sigma_w2: f64, sigma_v_bar: f64) -> f64 {
    sigma_w2.sqrt() * (2.0 * r_bar).exp2_m1().sqrt() + sigma_v_bar * (r_bar.exp2() + 1.0)
}

/// Simplified second-moment bound `(P_X + 2^{−r̄t}(2^{r̄}−2^{−r̄}))²`, valid
/// whenever `r̄ < ϱ`.
pub fn power_bound_x_constrained(t: usize, r_bar: f64, p_x: f64) -> f64 {
    (p_x + (-r_bar * t as f64).exp2() * spread(r_bar)).powi(2)
}

/// Second-moment bound on the backward-channel input under the `Γ` selection:
/// `(P_Q + 2^{−r̄t} ((P_Q−σ̄_S)/(P_X+σ_W)) (2^{r̄}−2^{−r̄}))²`.
pub fn power_bound_q(t: usize, r_bar: f64, p_q: f64, sigma_s_bar: f64, p_x: f64, sigma_w: f64) -> f64 {
    let transient = (-r_bar * t as f64).exp2() * (p_q - sigma_s_bar) / (p_x + sigma_w) * spread(r_bar);
    (p_q + transient).powi(2)
}

/// Markov-type error bound `2^{−2(r̄−r)n} E[X_n²] / (4 (2^{r̄}−2^{−r̄})²)`.
pub fn error_bound_markov(n: usize, rate: f64, r_bar: f64, e_xn2: f64) -> f64 {
    let decay = (-2.0 * (r_bar - rate) * n as f64).exp2();
    decay * e_xn2 / (4.0 * spread(r_bar).powi(2))
}

/// Gaussian-noise error bound
/// `exp(−(2(2^{r̄}−2^{−r̄}) 2^{(r̄−r)n} − γ)² / 2β²)`, or `1` when the argument
/// does not exceed `γ`.
pub fn error_bound_gaussian(n: usize, rate: f64, r_bar: f64, tc: &TailConstants) -> f64 {
    let alpha = 2.0 * spread(r_bar) * ((r_bar - rate) * n as f64).exp2();
    tail_bound(alpha, tc)
}

/// `Prob(|X_t| ≥ α) ≤ exp(−(α−γ)²/2β²)` for `α > γ`, and `1` otherwise.
pub fn tail_bound(alpha: f64, tc: &TailConstants) -> f64 {
    if alpha > tc.gamma {
        (-(alpha - tc.gamma).powi(2) / (2.0 * tc.beta2)).exp()
    } else {
        1.0
    }
}

/// Smallest `|X_n|` that can cause a decoding error:
/// `2^{r̄n − Θ(rn) − 1} (2^{r̄} − 2^{−r̄})`.
///
/// Follows from `X_n = 2^{r̄n}(2^{r̄}−2^{−r̄})(Ẑ_n − Z)` and the decision cells
/// of half-width `2^{−(Θ(rn)+1)}`.
pub fn decoding_threshold(n: usize, rate: f64, r_bar: f64) -> f64 {
    let bits = (rate * n as f64).floor();
    (r_bar * n as f64 - bits - 1.0).exp2() * spread(r_bar)
}

/// Gaussian tail bound evaluated at [`decoding_threshold`].
pub fn error_bound_gaussian_exact(n: usize, rate: f64, r_bar: f64, tc: &TailConstants) -> f64 {
    tail_bound(decoding_threshold(n, rate, r_bar), tc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn q(sw2: f64, px2: f64, sv: f64) -> RateQuery {
        RateQuery::new(sw2, px2, sv).unwrap()
    }

    #[test]
    fn rho_examples() {
        let half_log5 = 0.5 * 5f64.log2();
        assert_relative_eq!(rho(&q(1.0, 4.0, 0.0)).value, half_log5, epsilon = 1e-11);
        assert_relative_eq!(half_log5, 1.160964047, epsilon = 1e-9);

        // With x = 2^ϱ the defining equation squares to 15x² + 14x − 65 = 0.
        let x = (-14.0 + (14.0f64 * 14.0 + 4.0 * 15.0 * 65.0).sqrt()) / 30.0;
        assert_relative_eq!(x, 5.0 / 3.0, epsilon = 1e-14);
        let s = rho(&q(1.0, 4.0, 0.25));
        assert_relative_eq!(s.value, (5.0f64 / 3.0).log2(), epsilon = 1e-11);
        assert_relative_eq!(s.value, 0.736965594, epsilon = 1e-9);
        assert!(s.residual < 1e-9);

        assert_eq!(rho(&q(1.0, 4.0, 1.0)).value, 0.0);
        assert_eq!(rho(&q(1.0, 4.0, 2.0)).value, 0.0);
    }

    #[test]
    fn query_validation() {
        assert!(RateQuery::new(0.0, 4.0, 0.1).is_err());
        assert!(RateQuery::new(1.0, -4.0, 0.1).is_err());
        assert!(RateQuery::new(1.0, 4.0, -0.1).is_err());
        assert!(RateQuery::new(1.0, f64::NAN, 0.1).is_err());
    }

    #[test]
    fn gamma_examples() {
        assert_relative_eq!(gamma_select(1.0, 0.1, 2.0, 2.0).unwrap(), 0.3 / 1.9, epsilon = 1e-15);
        assert_relative_eq!(gamma_select(1.0, 0.1, 2.0, 2.0).unwrap(), 0.15789474, epsilon = 1e-8);
        assert_relative_eq!(gamma_select(1.0, 0.5, 2.0, 8.0).unwrap(), 0.2, epsilon = 1e-15);
        assert!(matches!(
            gamma_select(1.0, 0.1, 2.0, 0.05),
            Err(Error::BackwardPower { .. })
        ));
    }

    #[test]
    fn tail_constant_examples() {
        let tc = TailConstants::new(1.0, 0.25, 1.0);
        assert_relative_eq!(tc.gamma, 2.25, epsilon = 1e-15);
        assert_relative_eq!(tc.beta2, 3.0, epsilon = 1e-15);
        assert_relative_eq!(TailConstants::new(1.0, 0.0, 1.0).gamma, 1.5, epsilon = 1e-15);
        assert_relative_eq!(TailConstants::new(1.0, 0.0, 2.0).beta2, 6.0, epsilon = 1e-14);
    }

    #[test]
    fn power_bound_x_examples() {
        assert_relative_eq!(
            power_bound_x(0, 1.0, 1.0, 0.0),
            (3f64.sqrt() + 1.5).powi(2),
            max_relative = 1e-14
        );
        assert_relative_eq!(power_bound_x(0, 1.0, 1.0, 0.0), 10.4462, epsilon = 1e-4);
        assert_relative_eq!(
            power_bound_x(2000, 0.6, 1.0, 0.25),
            power_bound_x_steady(0.6, 1.0, 0.25),
            max_relative = 1e-15
        );
        // At r̄ = ϱ the steady-state bound balances the power constraint.
        let s = rho(&q(1.0, 4.0, 0.25));
        assert_relative_eq!(power_bound_x_steady(s.value, 1.0, 0.25), 4.0, max_relative = 1e-10);
    }

    #[test]
    fn power_bound_q_examples() {
        assert_relative_eq!(power_bound_q(0, 1.0, 2.0, 0.1, 2.0, 1.0), 8.7025, max_relative = 1e-14);
        assert_relative_eq!(power_bound_q(5000, 1.0, 2.0, 0.1, 2.0, 1.0), 4.0, max_relative = 1e-15);
        let near_edge = power_bound_q(0, 1.0, 2.0, 2.0 - 1e-12, 2.0, 1.0);
        assert_relative_eq!(near_edge, 4.0, max_relative = 1e-11);
    }

    #[test]
    fn markov_examples() {
        assert_eq!(error_bound_markov(30, 0.5, 0.6, 0.0), 0.0);
        let s = 0.6f64.exp2() - (-0.6f64).exp2();
        assert_relative_eq!(s, 0.85593, epsilon = 1e-4);
        let b = error_bound_markov(30, 0.5, 0.6, 4.0);
        assert_relative_eq!(b, 2f64.powi(-6) * 4.0 / (4.0 * s * s), max_relative = 1e-14);
        assert_relative_eq!(b, 0.02133, epsilon = 1e-5);
        let ratio = error_bound_markov(60, 0.5, 0.6, 4.0) / b;
        assert_relative_eq!(ratio, (-2.0 * 0.1 * 30.0f64).exp2(), max_relative = 1e-12);
    }

    #[test]
    fn gaussian_examples() {
        let tc = TailConstants::new(0.6, 0.25, 1.0);
        assert_relative_eq!(tc.gamma, 1.48487, epsilon = 1e-4);
        assert_relative_eq!(tc.beta2, 1.29740, epsilon = 1e-4);
        let b = error_bound_gaussian(30, 0.5, 0.6, &tc);
        let arg = 2.0 * (0.6f64.exp2() - (-0.6f64).exp2()) * 8.0;
        assert_relative_eq!(arg, 13.695, epsilon = 1e-3);
        assert_relative_eq!(b, (-(arg - tc.gamma).powi(2) / (2.0 * tc.beta2)).exp(), max_relative = 1e-12);
        assert!(b > 1.0e-25 && b < 1.2e-25, "{b}");

        // Vacuous branch.
        assert_eq!(error_bound_gaussian(1, 0.05, 0.1, &TailConstants::new(0.1, 1.0, 1.0)), 1.0);
        assert!(error_bound_gaussian(200, 0.5, 0.6, &tc) < 1e-300);
    }

    #[test]
    fn tail_examples() {
        let tc = TailConstants { gamma: 2.25, beta2: 3.0 };
        assert_relative_eq!(tail_bound(5.0, &tc), (-(2.75f64.powi(2)) / 6.0).exp(), max_relative = 1e-15);
        assert_relative_eq!(tail_bound(5.0, &tc), 0.28354, epsilon = 1e-4);
        assert_eq!(tail_bound(2.0, &tc), 1.0);
        assert_eq!(tail_bound(2.25, &tc), 1.0);
        assert!(tail_bound(1e3, &tc) < 1e-300);
    }

    #[test]
    fn composed_examples() {
        let gamma = gamma_select(1.0, 0.1, 2.0, 2.0).unwrap();
        assert_eq!(
            rho_composed(1.0, 4.0, 0.1, 2.0).unwrap(),
            rho(&q(1.0, 4.0, gamma)).value
        );
        assert_relative_eq!(
            rho_composed(1.0, 4.0, 1e-9, 2.0).unwrap(),
            0.5 * 5f64.log2(),
            epsilon = 1e-6
        );
        for i in 1..100 {
            let s = i as f64 / 100.0;
            assert!(rho_composed(1.0, 4.0, s, 8.0).unwrap() >= rho_composed(1.0, 4.0, s, 1.0).unwrap());
        }
        assert!(rho_composed(1.0, 4.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn decoding_threshold_matches_cells() {
        // n = 30, r = 0.5, r̄ = 0.6: 2^{18 − 15 − 1} (2^0.6 − 2^−0.6) = 4 · 0.85593.
        let thr = decoding_threshold(30, 0.5, 0.6);
        assert_relative_eq!(thr, 4.0 * (0.6f64.exp2() - (-0.6f64).exp2()), max_relative = 1e-14);
        // A quarter of the argument used by `error_bound_gaussian` when rn is an integer.
        assert_relative_eq!(thr, 2.0 * (0.6f64.exp2() - (-0.6f64).exp2()) * 8.0 / 4.0, max_relative = 1e-14);
    }
}
