//! Uniform quantizer and the scaled backward-channel link.
//!
//! [`Quantizer`] is the mid-tread uniform quantizer with sensitivity `b`
//! (cells of width `2b` centred on multiples of `2b`). [`BackwardChannel`]
//! carries a quantized, rescaled copy of the forward channel output over an
//! additive channel with noise bounded by `σ̄_S`. Re-quantizing the received
//! value and rescaling reproduces `Φ_σ̄V(Y_t)` exactly whenever `|S_t| < σ̄_S`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform quantizer `Φ_b(y) = 2b ⌊(y + b) / 2b⌋`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantizer {
    b: f64,
}

impl Quantizer {
    pub fn new(sensitivity: f64) -> Result<Self> {
        if !sensitivity.is_finite() || sensitivity <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "quantizer sensitivity must be finite and > 0, got {sensitivity}"
            )));
        }
        Ok(Self { b: sensitivity })
    }

    pub fn sensitivity(&self) -> f64 {
        self.b
    }

    /// Cell index `⌊(y + b) / 2b⌋` as a float.
    ///
    /// Evaluated as one division then a floor; there is no nudging at cell
    /// edges. Kept in `f64` so huge inputs never overflow an integer type.
    pub fn cell(&self, y: f64) -> f64 {
        ((y + self.b) / (2.0 * self.b)).floor()
    }

    pub fn quantize(&self, y: f64) -> f64 {
        2.0 * self.b * self.cell(y)
    }

    /// Quantization error `Δ_b(y) = Φ_b(y) - y`, bounded by `b` in magnitude.
    pub fn error(&self, y: f64) -> f64 {
        self.quantize(y) - y
    }
}

/// Backward link of the bounded-noise scheme: `Q_t = Φ_σ̄S((σ̄_S/σ̄_V) Y_t)`
/// is sent, `S_t + Q_t` is received.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackwardChannel {
    sigma_s_bar: f64,
    sigma_v_bar: f64,
    p_q2: f64,
}

impl BackwardChannel {
    pub fn new(sigma_s_bar: f64, sigma_v_bar: f64, p_q2: f64) -> Result<Self> {
        for (name, v) in [("σ̄_S", sigma_s_bar), ("σ̄_V", sigma_v_bar), ("P_Q²", p_q2)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be finite and > 0, got {v}"
                )));
            }
        }
        let p_q = p_q2.sqrt();
        if p_q <= sigma_s_bar {
            return Err(Error::BackwardPower { p_q, sigma_s_bar });
        }
        Ok(Self {
            sigma_s_bar,
            sigma_v_bar,
            p_q2,
        })
    }

    pub fn sigma_s_bar(&self) -> f64 {
        self.sigma_s_bar
    }

    pub fn sigma_v_bar(&self) -> f64 {
        self.sigma_v_bar
    }

    pub fn p_q2(&self) -> f64 {
        self.p_q2
    }

    pub fn p_q(&self) -> f64 {
        self.p_q2.sqrt()
    }

    fn channel_quantizer(&self) -> Quantizer {
        Quantizer { b: self.sigma_s_bar }
    }

    /// Channel input `Q_t`, an integer multiple of `2σ̄_S`.
    pub fn encode(&self, y: f64) -> f64 {
        self.channel_quantizer()
            .quantize(self.sigma_s_bar / self.sigma_v_bar * y)
    }

    /// Encoder-side reconstruction `(σ̄_V/σ̄_S) Φ_σ̄S(received)`.
    ///
    /// Computed as `2σ̄_V` times the received cell index, which equals the
    /// rescaled requantization without the extra rounding of a ratio. The
    /// input is not checked to really be `S + Q`.
    pub fn decode(&self, received: f64) -> f64 {
        2.0 * self.sigma_v_bar * self.channel_quantizer().cell(received)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn quantize_examples() {
        let q1 = Quantizer::new(1.0).unwrap();
        assert_eq!(q1.quantize(0.5), 0.0);
        assert_eq!(q1.quantize(-1.0), 0.0);
        assert_eq!(Quantizer::new(0.5).unwrap().quantize(1.3), 1.0);
        assert!(Quantizer::new(0.0).is_err());
        assert!(Quantizer::new(f64::NAN).is_err());
    }

    #[test]
    fn error_examples() {
        let q1 = Quantizer::new(1.0).unwrap();
        assert_eq!(q1.error(0.5), -0.5);
        assert_eq!(q1.error(-1.0), 1.0);
        assert_relative_eq!(Quantizer::new(0.5).unwrap().error(1.3), -0.3, epsilon = 1e-15);
    }

    #[test]
    fn encode_examples() {
        let ch = BackwardChannel::new(0.1, 0.4, 4.0).unwrap();
        assert_relative_eq!(ch.encode(1.0), 0.2, epsilon = 1e-15);
        assert_eq!(ch.encode(0.0), 0.0);
        let ch = BackwardChannel::new(0.1, 0.1, 4.0).unwrap();
        assert_relative_eq!(ch.encode(0.35), 0.4, epsilon = 1e-15);
    }

    #[test]
    fn decode_examples() {
        let ch = BackwardChannel::new(0.1, 0.4, 4.0).unwrap();
        let q = ch.encode(1.0);
        let phi_v = Quantizer::new(0.4).unwrap().quantize(1.0);
        assert_relative_eq!(phi_v, 0.8, epsilon = 1e-15);
        assert_relative_eq!(ch.decode(q + 0.05), 0.8, epsilon = 1e-15);
        assert_eq!(ch.decode(q), phi_v);
    }

    #[test]
    fn decode_boundary_atom_shifts_one_cell() {
        // y = 0.4 lands on the edge-adjacent cell: Q = Φ_0.1(0.1) = 0.2.
        let ch = BackwardChannel::new(0.1, 0.4, 4.0).unwrap();
        let q = ch.encode(0.4);
        assert_relative_eq!(q, 0.2, epsilon = 1e-15);
        let clean = ch.decode(q);
        // S = +σ̄_S puts the received value exactly on the upper cell edge.
        let shifted = ch.decode(q + 0.1);
        assert_relative_eq!(shifted - clean, 2.0 * 0.4, epsilon = 1e-12);
        // Strictly inside the cell there is no shift.
        assert_eq!(ch.decode(q + 0.0999), clean);
        assert_eq!(ch.decode(q - 0.0999), clean);
    }

    #[test]
    fn backward_power_must_cover_noise() {
        assert!(matches!(
            BackwardChannel::new(0.1, 0.4, 0.0025),
            Err(Error::BackwardPower { .. })
        ));
        assert!(BackwardChannel::new(0.1, 0.4, 0.01).is_err());
        assert!(BackwardChannel::new(0.1, 0.4, 0.0101).is_ok());
    }
}
