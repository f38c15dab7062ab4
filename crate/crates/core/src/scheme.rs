//! Message maps and the linear feedback encoder/decoder pair.
//!
//! The encoder transmits `X_t` built from the message point `Z` and the
//! delayed feedback `U_{t-1}`; the decoder accumulates the channel outputs and
//! feedback corruption into the running estimate `Ẑ_t`. Closed-loop simulation
//! always uses the one-step recursions below. The direct-sum forms
//! [`closed_form_x`] and [`stable_form_x`] exist only as bounded-horizon
//! oracles, since `2^{r̄t}Z` overflows long before practical horizons end.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Horizon up to which the exponentially growing direct sum is trusted.
pub const ORACLE_MAX_T: usize = 25;

/// Largest message payload, in bits, that keeps the decoding threshold far
/// above unit roundoff.
pub const MAX_MESSAGE_BITS: u32 = 40;

/// Block length, target rate and operator rate of one coding scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeParams {
    n: usize,
    rate: f64,
    r_bar: f64,
}

impl SchemeParams {
    pub fn new(n: usize, rate: f64, r_bar: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("block length n must be >= 1".into()));
        }
        if !rate.is_finite() || rate <= 0.0 {
            return Err(Error::InvalidParameter(format!("rate r must be > 0, got {rate}")));
        }
        if !r_bar.is_finite() || r_bar <= rate {
            return Err(Error::InvalidParameter(format!(
                "requires 0 < r < r̄ (r = {rate}, r̄ = {r_bar})"
            )));
        }
        let params = Self { n, rate, r_bar };
        let bits = (rate * n as f64).floor();
        if bits < 1.0 {
            return Err(Error::InvalidParameter(format!(
                "Θ(rn) = {bits}: the message must carry at least one bit"
            )));
        }
        if bits > MAX_MESSAGE_BITS as f64 {
            return Err(Error::InvalidParameter(format!(
                "Θ(rn) = {bits} exceeds the {MAX_MESSAGE_BITS}-bit precision cap"
            )));
        }
        Ok(params)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn r_bar(&self) -> f64 {
        self.r_bar
    }

    /// `Θ(r t)`, the number of message bits resolved by time `t`.
    pub fn bits_at(&self, t: usize) -> u32 {
        (self.rate * t as f64).floor() as u32
    }

    /// `Θ(r n)`.
    pub fn message_bits(&self) -> u32 {
        self.bits_at(self.n)
    }

    /// Codebook size `2^Θ(rn)`.
    pub fn message_count(&self) -> u64 {
        1u64 << self.message_bits()
    }

    /// `2^r̄`, the open-loop gain of the encoder recursion.
    pub fn gain(&self) -> f64 {
        self.r_bar.exp2()
    }

    /// `2^{-r̄} - 2^{r̄}` (negative).
    pub fn input_coefficient(&self) -> f64 {
        (-self.r_bar).exp2() - self.r_bar.exp2()
    }

    /// `2^{r̄} - 2^{-r̄}` (positive).
    pub fn spread(&self) -> f64 {
        -self.input_coefficient()
    }
}

/// Message index in `1..=2^Θ(rn)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message(u64);

impl Message {
    pub fn new(m: u64, params: &SchemeParams) -> Result<Self> {
        let max = params.message_count();
        if m == 0 || m > max {
            return Err(Error::MessageOutOfRange { m, max });
        }
        Ok(Self(m))
    }

    pub fn get(self) -> u64 {
        self.0
    }
}

/// `Z = (m - 1/2) 2^{-Θ(rn)}`, always inside `(0, 1)`.
pub fn message_to_point(m: Message, params: &SchemeParams) -> f64 {
    let scale = (-(params.message_bits() as f64)).exp2();
    (m.0 as f64 - 0.5) * scale
}

/// `M̂_t = ⌈2^{Θ(rt)} Ẑ_t⌉`, unclamped.
///
/// Out-of-range results are decoding errors, not failures. Non-finite or
/// astronomically large estimates saturate to the `i64` range.
pub fn point_to_message(z_hat: f64, t: usize, params: &SchemeParams) -> i64 {
    let scaled = (params.bits_at(t) as f64).exp2() * z_hat;
    scaled.ceil() as i64
}

/// Encoder state: step index and current channel input `X_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderState {
    pub t: usize,
    pub x: f64,
}

/// Decoder state: step index and current estimate `Ẑ_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoderState {
    pub t: usize,
    pub z_hat: f64,
}

impl Default for DecoderState {
    fn default() -> Self {
        Self { t: 0, z_hat: 0.0 }
    }
}

/// `X_0 = (2^{-r̄} - 2^{r̄}) Z`.
pub fn encoder_init(z: f64, params: &SchemeParams) -> Result<EncoderState> {
    if !(z > 0.0 && z < 1.0) {
        return Err(Error::Domain(format!("message point must lie in (0, 1), got {z}")));
    }
    Ok(EncoderState {
        t: 0,
        x: params.input_coefficient() * z,
    })
}

/// `X_{t+1} = 2^{r̄} X_t + (2^{-r̄} - 2^{r̄}) U_t`.
pub fn encoder_step(state: EncoderState, u: f64, params: &SchemeParams) -> EncoderState {
    EncoderState {
        t: state.t + 1,
        x: params.gain() * state.x + params.input_coefficient() * u,
    }
}

/// `Ẑ_{t+1} = Ẑ_t - 2^{-r̄(t+1)} (V_t + Y_t)`.
pub fn decoder_step(state: DecoderState, y: f64, v: f64, params: &SchemeParams) -> DecoderState {
    let weight = (-params.r_bar * (state.t + 1) as f64).exp2();
    DecoderState {
        t: state.t + 1,
        z_hat: state.z_hat - weight * (v + y),
    }
}

/// Direct open-loop sum for `X_t` from `Z` and `U_0..U_{t-1}`.
pub fn closed_form_x(z: f64, u_history: &[f64], t: usize, params: &SchemeParams) -> Result<f64> {
    if t > ORACLE_MAX_T {
        return Err(Error::OracleRange { t, max: ORACLE_MAX_T });
    }
    if u_history.len() < t {
        return Err(Error::Domain(format!(
            "need {t} feedback samples, got {}",
            u_history.len()
        )));
    }
    let r_bar = params.r_bar();
    let sum: f64 = u_history[..t]
        .iter()
        .enumerate()
        .map(|(i, u)| (r_bar * (t - i - 1) as f64).exp2() * u)
        .sum();
    Ok(params.input_coefficient() * (sum + (r_bar * t as f64).exp2() * z))
}

/// Closed-loop form of `X_t` when `U_t = X_t + V_t + W_t`: a stable filter of
/// the noise plus the decaying image of `Z`.
pub fn stable_form_x(
    z: f64,
    w_history: &[f64],
    v_history: &[f64],
    t: usize,
    params: &SchemeParams,
) -> Result<f64> {
    if w_history.len() < t || v_history.len() < t {
        return Err(Error::Domain(format!(
            "need {t} noise samples, got W: {}, V: {}",
            w_history.len(),
            v_history.len()
        )));
    }
    let r_bar = params.r_bar();
    let sum: f64 = (0..t)
        .map(|i| (-r_bar * (t - i - 1) as f64).exp2() * (w_history[i] + v_history[i]))
        .sum();
    Ok(params.input_coefficient() * (sum + (-r_bar * t as f64).exp2() * z))
}
