//! Closed-loop Monte Carlo over the three feedback schemes.
//!
//! Every scheme shares the same forward path: the encoder emits `X_t`, the
//! channel adds white noise `W_t` and the decoder observes `Y_t = X_t + W_t`.
//! They differ in how the feedback `U_t = Y_t + V_t` reaches the encoder:
//!
//! - [`SchemeKind::SideInfo`]: `V_t` is drawn from a bounded law and also
//!   handed to the decoder.
//! - [`SchemeKind::QuantizedFeedback`]: `U_t = Φ_σ̄V(Y_t)`; the decoder
//!   recomputes `V_t = Δ_σ̄V(Y_t)` from `Y_t`.
//! - [`SchemeKind::ScaledBackward`]: `Q_t` crosses a bounded-noise backward
//!   channel and the encoder requantizes what it receives; the decoder again
//!   recomputes `V_t` from `Y_t`.
//!
//! Feedback is delayed by one step, so `U_t` first affects `X_{t+1}`.
//!
//! Each trial draws from its own [`RngStream`] (`stream_id` = trial index),
//! and trials are aggregated in fixed-size chunks merged in order. Reports are
//! therefore identical for any worker count.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{self, RateQuery, TailConstants};
use crate::backward::{BackwardChannel, Quantizer};
use crate::error::{Error, Result};
use crate::numerics::{BoundedNoiseSpec, ForwardNoiseSpec, Lane, RngStream};
use crate::scheme::{self, DecoderState, Message, SchemeParams, ORACLE_MAX_T};
use rand::Rng;

/// Trials per aggregation chunk. Fixed so sums are merged in the same order
/// whatever the thread count.
const CHUNK: u64 = 1024;

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    SideInfo,
    QuantizedFeedback,
    ScaledBackward,
}

/// Where the one-step delay sits relative to the encoder-side feedback
/// decoder of the backward link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DelayPlacement {
    #[default]
    AfterFeedbackDecoder,
    BeforeFeedbackDecoder,
}

/// Backward channel amplitude bound and input power constraint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackwardLink {
    pub sigma_s_bar: f64,
    pub p_q2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub scheme: SchemeKind,
    pub params: SchemeParams,
    pub forward: ForwardNoiseSpec,
    /// `V_t` for side information, `S_t` for the backward channel; ignored
    /// by the quantized scheme.
    pub feedback_noise: BoundedNoiseSpec,
    /// `σ̄_V`. Required except for the backward scheme, where `None` selects `Γ`.
    pub sigma_v_bar: Option<f64>,
    /// Lets the backward scheme run with `σ̄_V ≠ Γ`.
    pub allow_sigma_v_override: bool,
    pub backward: Option<BackwardLink>,
    pub p_x2: f64,
    pub delay: DelayPlacement,
}

/// One violated hypothesis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Violation {
    MissingSensitivity,
    MissingBackwardLink,
    NonPositivePower { p_x2: f64 },
    BackwardPower { p_q: f64, sigma_s_bar: f64 },
    CorruptionTooLarge { sigma_v_bar: f64, p_x2: f64 },
    RateAboveRho { r_bar: f64, rho: f64 },
    SensitivityNotGamma { sigma_v_bar: f64, gamma: f64 },
    FeedbackNoiseTooLarge { bound: f64, limit: f64 },
    Invalid(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::MissingSensitivity => write!(f, "requires a quantizer sensitivity σ̄_V > 0"),
            Self::MissingBackwardLink => {
                write!(f, "requires backward channel parameters σ̄_S and P_Q²")
            }
            Self::NonPositivePower { p_x2 } => write!(f, "requires P_X² > 0 (P_X² = {p_x2})"),
            Self::BackwardPower { p_q, sigma_s_bar } => write!(
                f,
                "requires P_Q > σ̄_S (P_Q = {p_q}, σ̄_S = {sigma_s_bar})"
            ),
            Self::CorruptionTooLarge { sigma_v_bar, p_x2 } => write!(
                f,
                "requires 4σ̄_V² < P_X² (4σ̄_V² = {}, P_X² = {p_x2})",
                4.0 * sigma_v_bar * sigma_v_bar
            ),
            Self::RateAboveRho { r_bar, rho } => write!(
                f,
                "requires r̄ < ϱ, but r̄ ≥ ϱ (r̄ = {r_bar}, ϱ = {rho:.9})"
            ),
            Self::SensitivityNotGamma { sigma_v_bar, gamma } => write!(
                f,
                "requires σ̄_V = Γ(σ_W, σ̄_S, P_X, P_Q) (σ̄_V = {sigma_v_bar}, Γ = {gamma}); set the override flag to experiment"
            ),
            Self::FeedbackNoiseTooLarge { bound, limit } => write!(
                f,
                "requires the feedback noise amplitude to stay within {limit} (got {bound})"
            ),
            Self::Invalid(msg) => f.write_str(msg),
        }
    }
}

/// Every hypothesis a configuration failed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "hypothesis violated: {v}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ValidationReport {}

/// A configuration that satisfied [`validate_config`], with derived values.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidConfig {
    config: SchemeConfig,
    sigma_v_bar: f64,
    rho: f64,
    quantizer: Quantizer,
    backward: Option<BackwardChannel>,
}

impl ValidConfig {
    pub fn config(&self) -> &SchemeConfig {
        &self.config
    }

    pub fn params(&self) -> &SchemeParams {
        &self.config.params
    }

    pub fn sigma_v_bar(&self) -> f64 {
        self.sigma_v_bar
    }

    /// Achievable rate that bounds `r̄` for this scheme.
    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn backward(&self) -> Option<&BackwardChannel> {
        self.backward.as_ref()
    }

    pub fn tail_constants(&self) -> TailConstants {
        TailConstants::new(
            self.config.params.r_bar(),
            self.sigma_v_bar,
            self.config.forward.variance(),
        )
    }
}

/// Checks every hypothesis of the coding theorems for `cfg`.
pub fn validate_config(cfg: &SchemeConfig) -> std::result::Result<ValidConfig, ValidationReport> {
    let mut violations = Vec::new();
    if !cfg.p_x2.is_finite() || cfg.p_x2 <= 0.0 {
        violations.push(Violation::NonPositivePower { p_x2: cfg.p_x2 });
        return Err(ValidationReport { violations });
    }
    let p_x = cfg.p_x2.sqrt();
    let sigma_w = cfg.forward.std_dev();

    let mut backward_link = None;
    let sigma_v_bar = match cfg.scheme {
        SchemeKind::SideInfo | SchemeKind::QuantizedFeedback => match cfg.sigma_v_bar {
            Some(v) if v.is_finite() && v > 0.0 => Some(v),
            _ => {
                violations.push(Violation::MissingSensitivity);
                None
            }
        },
        SchemeKind::ScaledBackward => match cfg.backward {
            None => {
                violations.push(Violation::MissingBackwardLink);
                None
            }
            Some(link) => {
                let p_q = link.p_q2.sqrt();
                match analysis::gamma_select(sigma_w, link.sigma_s_bar, p_x, p_q) {
                    Err(Error::BackwardPower { p_q, sigma_s_bar }) => {
                        violations.push(Violation::BackwardPower { p_q, sigma_s_bar });
                        None
                    }
                    Err(e) => {
                        violations.push(Violation::Invalid(e.to_string()));
                        None
                    }
                    Ok(gamma) => {
                        backward_link = Some(link);
                        match cfg.sigma_v_bar {
                            None => Some(gamma),
                            Some(v) if !v.is_finite() || v <= 0.0 => {
                                violations.push(Violation::MissingSensitivity);
                                None
                            }
                            Some(v) => {
                                let matches = (v - gamma).abs() <= 1e-12 * gamma;
                                if !matches && !cfg.allow_sigma_v_override {
                                    violations.push(Violation::SensitivityNotGamma {
                                        sigma_v_bar: v,
                                        gamma,
                                    });
                                }
                                Some(v)
                            }
                        }
                    }
                }
            }
        },
    };

    let mut rho = 0.0;
    if let Some(v) = sigma_v_bar {
        if 4.0 * v * v >= cfg.p_x2 {
            violations.push(Violation::CorruptionTooLarge {
                sigma_v_bar: v,
                p_x2: cfg.p_x2,
            });
        }
        match RateQuery::new(cfg.forward.variance(), cfg.p_x2, v) {
            Ok(q) => {
                rho = analysis::rho(&q).value;
                if cfg.params.r_bar() >= rho {
                    violations.push(Violation::RateAboveRho {
                        r_bar: cfg.params.r_bar(),
                        rho,
                    });
                }
            }
            Err(e) => violations.push(Violation::Invalid(e.to_string())),
        }
    }

    let noise_limit = match cfg.scheme {
        SchemeKind::SideInfo => sigma_v_bar,
        SchemeKind::ScaledBackward => backward_link.map(|l| l.sigma_s_bar),
        SchemeKind::QuantizedFeedback => None,
    };
    if let Some(limit) = noise_limit {
        let bound = cfg.feedback_noise.effective_bound();
        if bound > limit {
            violations.push(Violation::FeedbackNoiseTooLarge { bound, limit });
        }
    }

    if !violations.is_empty() {
        return Err(ValidationReport { violations });
    }
    let sigma_v_bar = sigma_v_bar.expect("sensitivity resolved when no violation was recorded");
    let quantizer = Quantizer::new(sigma_v_bar).map_err(|e| ValidationReport {
        violations: vec![Violation::Invalid(e.to_string())],
    })?;
    let backward = match backward_link {
        Some(link) => Some(
            BackwardChannel::new(link.sigma_s_bar, sigma_v_bar, link.p_q2).map_err(|e| {
                ValidationReport {
                    violations: vec![Violation::Invalid(e.to_string())],
                }
            })?,
        ),
        None => None,
    };
    Ok(ValidConfig {
        config: cfg.clone(),
        sigma_v_bar,
        rho,
        quantizer,
        backward,
    })
}

/// Full per-step record of one closed-loop run, `t = 0..=n`.
///
/// `x` and `z_hat` hold `X_t` and `Ẑ_t`; the channel and feedback sequences
/// include the step at `t = n` even though `Ẑ_n` only uses `Y_0..Y_{n−1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialTrajectory {
    pub message: u64,
    pub decoded: i64,
    pub z: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub q: Option<Vec<f64>>,
    pub s: Option<Vec<f64>>,
    pub z_hat: Vec<f64>,
}

impl TrialTrajectory {
    pub fn is_error(&self) -> bool {
        self.decoded != self.message as i64
    }
}

/// Holds the encoder-side feedback for one step.
///
/// With the delay after the feedback decoder it stores decoded values; with
/// the delay before it stores raw received values and decodes on release.
struct DelayLine {
    placement: DelayPlacement,
    slot: f64,
}

impl DelayLine {
    fn new(placement: DelayPlacement) -> Self {
        Self { placement, slot: 0.0 }
    }

    fn push(&mut self, received: f64, decode: impl Fn(f64) -> f64) {
        self.slot = match self.placement {
            DelayPlacement::AfterFeedbackDecoder => decode(received),
            DelayPlacement::BeforeFeedbackDecoder => received,
        };
    }

    fn release(&self, decode: impl Fn(f64) -> f64) -> f64 {
        match self.placement {
            DelayPlacement::AfterFeedbackDecoder => self.slot,
            DelayPlacement::BeforeFeedbackDecoder => decode(self.slot),
        }
    }
}

type Injected<'a> = &'a mut dyn FnMut(usize, f64) -> f64;

fn closed_loop(
    cfg: &ValidConfig,
    message: Message,
    rng: &RngStream,
    mut injected: Option<Injected<'_>>,
) -> TrialTrajectory {
    let params = cfg.params();
    let n = params.n();
    let scheme = if injected.is_some() {
        SchemeKind::SideInfo
    } else {
        cfg.config.scheme
    };
    let z = scheme::message_to_point(message, params);
    let mut enc = scheme::encoder_init(z, params).expect("codebook points lie in (0, 1)");
    let mut dec = DecoderState::default();

    let mut fwd_rng = rng.lane(Lane::Forward);
    let mut fb_rng = rng.lane(Lane::Feedback);

    let len = n + 1;
    let mut tr = TrialTrajectory {
        message: message.get(),
        decoded: 0,
        z,
        x: Vec::with_capacity(len),
        y: Vec::with_capacity(len),
        u: Vec::with_capacity(len),
        v: Vec::with_capacity(len),
        q: (scheme == SchemeKind::ScaledBackward).then(|| Vec::with_capacity(len)),
        s: (scheme == SchemeKind::ScaledBackward).then(|| Vec::with_capacity(len)),
        z_hat: Vec::with_capacity(len),
    };
    tr.z_hat.push(dec.z_hat);

    let backward = cfg.backward;
    let decode = |received: f64| backward.map_or(received, |b| b.decode(received));
    let mut delay = DelayLine::new(cfg.config.delay);

    for t in 0..=n {
        let x = enc.x;
        let y = x + cfg.config.forward.draw(&mut fwd_rng);
        let v = match scheme {
            SchemeKind::SideInfo => {
                let v = match injected.as_mut() {
                    Some(source) => source(t, y),
                    None => cfg.config.feedback_noise.draw(&mut fb_rng),
                };
                delay.push(y + v, |r| r);
                v
            }
            SchemeKind::QuantizedFeedback => {
                delay.push(cfg.quantizer.quantize(y), |r| r);
                cfg.quantizer.error(y)
            }
            SchemeKind::ScaledBackward => {
                let link = backward.expect("validated backward scheme has a link");
                let q = link.encode(y);
                let s = cfg.config.feedback_noise.draw(&mut fb_rng);
                delay.push(q + s, decode);
                if let Some(qs) = tr.q.as_mut() {
                    qs.push(q);
                }
                if let Some(ss) = tr.s.as_mut() {
                    ss.push(s);
                }
                cfg.quantizer.error(y)
            }
        };
        let u = match scheme {
            SchemeKind::ScaledBackward => delay.release(decode),
            _ => delay.release(|r| r),
        };
        tr.x.push(x);
        tr.y.push(y);
        tr.u.push(u);
        tr.v.push(v);
        if t < n {
            dec = scheme::decoder_step(dec, y, v, params);
            tr.z_hat.push(dec.z_hat);
            enc = scheme::encoder_step(enc, u, params);
        }
    }
    tr.decoded = scheme::point_to_message(dec.z_hat, n, params);
    tr
}

/// Simulates one block for message `m`, drawing all noise from `rng`.
pub fn run_trial(cfg: &ValidConfig, m: Message, rng: &RngStream) -> TrialTrajectory {
    closed_loop(cfg, m, rng, None)
}

/// Side-information run where `V_t` comes from `source(t, Y_t)` instead of the
/// configured noise law. Forward noise is still drawn from `rng`.
pub fn run_trial_with_feedback(
    cfg: &ValidConfig,
    m: Message,
    rng: &RngStream,
    mut source: impl FnMut(usize, f64) -> f64,
) -> TrialTrajectory {
    closed_loop(cfg, m, rng, Some(&mut source))
}

/// Message used by trial `stream_id`: uniform over the codebook, drawn from
/// the stream's message lane.
pub fn trial_message(params: &SchemeParams, rng: &RngStream) -> Message {
    let mut lane = rng.lane(Lane::Message);
    let m = lane.random_range(1..=params.message_count());
    Message::new(m, params).expect("drawn inside the codebook")
}

/// Largest relative deviation from `X_t = 2^{r̄t}(2^{r̄}−2^{−r̄})(Ẑ_t − Z)`.
///
/// The deviation at each step is scaled by `max(|X_t|, |rhs|, |X_0|)`: the
/// loop is stable, so absolute roundoff stays proportional to the input scale
/// `|X_0|` even when `X_t` itself has decayed towards zero.
pub fn identity_residual(tr: &TrialTrajectory, params: &SchemeParams, z: f64) -> Result<f64> {
    let steps = tr.z_hat.len().min(tr.x.len());
    if steps == 0 {
        return Ok(0.0);
    }
    if steps - 1 > ORACLE_MAX_T {
        return Err(Error::OracleRange {
            t: steps - 1,
            max: ORACLE_MAX_T,
        });
    }
    let scale0 = tr.x[0].abs();
    let mut worst = 0.0f64;
    for t in 0..steps {
        let rhs = (params.r_bar() * t as f64).exp2() * params.spread() * (tr.z_hat[t] - z);
        let denom = tr.x[t].abs().max(rhs.abs()).max(scale0);
        if denom > 0.0 {
            worst = worst.max((tr.x[t] - rhs).abs() / denom);
        }
    }
    Ok(worst)
}

/// Wilson score interval for a binomial proportion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilsonInterval {
    pub lower: f64,
    pub upper: f64,
}

impl WilsonInterval {
    pub fn new(successes: u64, trials: u64, z: f64) -> Self {
        if trials == 0 {
            return Self { lower: 0.0, upper: 1.0 };
        }
        let n = trials as f64;
        let p = successes as f64 / n;
        let z2 = z * z;
        let denom = 1.0 + z2 / n;
        let centre = (p + z2 / (2.0 * n)) / denom;
        let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
        Self {
            lower: (centre - half).max(0.0),
            upper: (centre + half).min(1.0),
        }
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.upper - self.lower)
    }
}

/// Knobs for [`run_trials`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    /// Worker threads; 0 uses rayon's default.
    pub threads: usize,
    /// Send this message in every trial instead of drawing uniformly.
    pub fixed_message: Option<u64>,
    /// Levels `α` at which to count `|X_n| ≥ α`.
    pub tail_levels: Vec<f64>,
    /// Keep every trajectory in the report (memory grows with trials × n).
    pub keep_trajectories: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub alpha: f64,
    pub exceedances: u64,
    pub frequency: f64,
    pub wilson: WilsonInterval,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub scheme: SchemeKind,
    pub n: usize,
    pub rate: f64,
    pub r_bar: f64,
    pub message_bits: u32,
    pub sigma_v_bar: f64,
    pub rho: f64,
    pub tail_constants: TailConstants,
    pub trials: u64,
    pub errors: u64,
    pub error_rate: f64,
    pub error_rate_wilson95: WilsonInterval,
    pub empirical_power_x: Vec<f64>,
    pub empirical_power_q: Option<Vec<f64>>,
    pub bound_power_x: Vec<f64>,
    pub bound_power_q: Option<Vec<f64>>,
    pub bound_error_markov: f64,
    pub bound_error_gaussian: f64,
    pub decoding_threshold: f64,
    pub bound_error_gaussian_exact: f64,
    pub tail: Vec<TailEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectories: Option<Vec<TrialTrajectory>>,
}

#[derive(Debug, Clone)]
struct ChunkSummary {
    errors: u64,
    sum_x2: Vec<f64>,
    sum_q2: Option<Vec<f64>>,
    tail_counts: Vec<u64>,
    trajectories: Vec<TrialTrajectory>,
}

impl ChunkSummary {
    fn empty(len: usize, with_q: bool, levels: usize) -> Self {
        Self {
            errors: 0,
            sum_x2: vec![0.0; len],
            sum_q2: with_q.then(|| vec![0.0; len]),
            tail_counts: vec![0; levels],
            trajectories: Vec::new(),
        }
    }

    fn absorb(&mut self, tr: &TrialTrajectory, levels: &[f64]) {
        self.errors += tr.is_error() as u64;
        for (acc, x) in self.sum_x2.iter_mut().zip(&tr.x) {
            *acc += x * x;
        }
        if let (Some(acc), Some(qs)) = (self.sum_q2.as_mut(), tr.q.as_ref()) {
            for (a, q) in acc.iter_mut().zip(qs) {
                *a += q * q;
            }
        }
        let x_n = tr.x.last().copied().unwrap_or(0.0).abs();
        for (count, &alpha) in self.tail_counts.iter_mut().zip(levels) {
            *count += (x_n >= alpha) as u64;
        }
    }

    fn merge(&mut self, other: ChunkSummary) {
        self.errors += other.errors;
        for (a, b) in self.sum_x2.iter_mut().zip(&other.sum_x2) {
            *a += b;
        }
        if let (Some(a), Some(b)) = (self.sum_q2.as_mut(), other.sum_q2.as_ref()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.tail_counts.iter_mut().zip(&other.tail_counts) {
            *a += b;
        }
        self.trajectories.extend(other.trajectories);
    }
}

fn run_chunk(
    cfg: &ValidConfig,
    range: std::ops::Range<u64>,
    master_seed: u64,
    opts: &RunOptions,
    fixed: Option<Message>,
) -> ChunkSummary {
    let params = cfg.params();
    let with_q = cfg.config.scheme == SchemeKind::ScaledBackward;
    let mut summary = ChunkSummary::empty(params.n() + 1, with_q, opts.tail_levels.len());
    for trial in range {
        let rng = RngStream::new(master_seed, trial);
        let m = fixed.unwrap_or_else(|| trial_message(params, &rng));
        let tr = run_trial(cfg, m, &rng);
        summary.absorb(&tr, &opts.tail_levels);
        if opts.keep_trajectories {
            summary.trajectories.push(tr);
        }
    }
    summary
}

/// Runs `trials` independent blocks and aggregates errors, second moments
/// and tail frequencies next to the theoretical bounds.
pub fn run_trials(
    cfg: &ValidConfig,
    trials: u64,
    master_seed: u64,
    opts: &RunOptions,
) -> Result<MonteCarloReport> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be >= 1".into()));
    }
    let params = *cfg.params();
    let fixed = opts
        .fixed_message
        .map(|m| Message::new(m, &params))
        .transpose()?;

    let chunks: Vec<std::ops::Range<u64>> = (0..trials.div_ceil(CHUNK))
        .map(|c| c * CHUNK..((c + 1) * CHUNK).min(trials))
        .collect();
    let work = || -> Vec<ChunkSummary> {
        chunks
            .par_iter()
            .map(|r| run_chunk(cfg, r.clone(), master_seed, opts, fixed))
            .collect()
    };
    let summaries = if opts.threads == 0 {
        work()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(opts.threads)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?
            .install(work)
    };

    let with_q = cfg.config.scheme == SchemeKind::ScaledBackward;
    let mut total = ChunkSummary::empty(params.n() + 1, with_q, opts.tail_levels.len());
    for s in summaries {
        total.merge(s);
    }

    Ok(build_report(cfg, trials, total, opts))
}

fn build_report(cfg: &ValidConfig, trials: u64, total: ChunkSummary, opts: &RunOptions) -> MonteCarloReport {
    let params = cfg.params();
    let n = params.n();
    let (rate, r_bar) = (params.rate(), params.r_bar());
    let count = trials as f64;
    let sigma_w2 = cfg.config.forward.variance();
    let sigma_w = cfg.config.forward.std_dev();
    let p_x = cfg.config.p_x2.sqrt();
    let tc = cfg.tail_constants();

    let bound_power_x = (0..=n)
        .map(|t| analysis::power_bound_x(t, r_bar, sigma_w2, cfg.sigma_v_bar))
        .collect();
    let bound_power_q = cfg.backward.map(|b| {
        (0..=n)
            .map(|t| analysis::power_bound_q(t, r_bar, b.p_q(), b.sigma_s_bar(), p_x, sigma_w))
            .collect()
    });
    let tail = opts
        .tail_levels
        .iter()
        .zip(&total.tail_counts)
        .map(|(&alpha, &hits)| TailEstimate {
            alpha,
            exceedances: hits,
            frequency: hits as f64 / count,
            wilson: WilsonInterval::new(hits, trials, Z_95),
            bound: analysis::tail_bound(alpha, &tc),
        })
        .collect();

    MonteCarloReport {
        scheme: cfg.config.scheme,
        n,
        rate,
        r_bar,
        message_bits: params.message_bits(),
        sigma_v_bar: cfg.sigma_v_bar,
        rho: cfg.rho,
        tail_constants: tc,
        trials,
        errors: total.errors,
        error_rate: total.errors as f64 / count,
        error_rate_wilson95: WilsonInterval::new(total.errors, trials, Z_95),
        empirical_power_x: total.sum_x2.iter().map(|s| s / count).collect(),
        empirical_power_q: total.sum_q2.map(|v| v.iter().map(|s| s / count).collect()),
        bound_power_x,
        bound_power_q,
        bound_error_markov: analysis::error_bound_markov(
            n,
            rate,
            r_bar,
            analysis::power_bound_x_constrained(n, r_bar, p_x),
        ),
        bound_error_gaussian: analysis::error_bound_gaussian(n, rate, r_bar, &tc),
        decoding_threshold: analysis::decoding_threshold(n, rate, r_bar),
        bound_error_gaussian_exact: analysis::error_bound_gaussian_exact(n, rate, r_bar, &tc),
        tail,
        trajectories: opts.keep_trajectories.then_some(total.trajectories),
    }
}
