//! Invariant suite behind `nfc verify`.
//!
//! Each check draws its random inputs from the supplied seed and reports the
//! measured residual next to the tolerance it must stay under.

use rand::Rng;
use serde::Serialize;

use crate::analysis::{self, RateQuery, TailConstants};
use crate::backward::{BackwardChannel, Quantizer};
use crate::numerics::{
    ceil_int, floor_int, BoundedNoiseKind, BoundedNoiseSpec, ForwardNoiseKind, ForwardNoiseSpec,
    RngStream,
};
use crate::scheme::{self, DecoderState, Message, SchemeParams};
use crate::simulator::{
    self, BackwardLink, DelayPlacement, RunOptions, SchemeConfig, SchemeKind, WilsonInterval, Z_95,
};

#[derive(Debug, Clone, Default)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Mutation check: inflate the sensitivity on one side of the
    /// backward-link equivalence by 0.1%. The equivalence check must fail.
    pub corrupt_quantizer: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyCheck {
    pub module: &'static str,
    pub name: &'static str,
    pub passed: bool,
    pub measured: f64,
    pub tolerance: f64,
}

impl PropertyCheck {
    /// Passes when `measured <= tolerance`.
    fn at_most(module: &'static str, name: &'static str, measured: f64, tolerance: f64) -> Self {
        Self {
            module,
            name,
            passed: measured <= tolerance,
            measured,
            tolerance,
        }
    }

    /// Counts violations; passes only when none occurred.
    fn none(module: &'static str, name: &'static str, violations: usize) -> Self {
        Self::at_most(module, name, violations as f64, 0.0)
    }
}

impl std::fmt::Display for PropertyCheck {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {:<14} {:<48} measured={:.3e} tolerance={:.3e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.module,
            self.name,
            self.measured,
            self.tolerance
        )
    }
}

fn rel(a: f64, b: f64, scale: f64) -> f64 {
    let d = a.abs().max(b.abs()).max(scale);
    if d == 0.0 {
        0.0
    } else {
        (a - b).abs() / d
    }
}

/// Runs every check and returns them in a fixed order.
pub fn run_suite(opts: &VerifyOptions) -> Vec<PropertyCheck> {
    let mut out = Vec::new();
    numerics_checks(opts.seed, &mut out);
    scheme_checks(opts.seed, &mut out);
    backward_checks(opts, &mut out);
    analysis_checks(opts.seed, &mut out);
    simulator_checks(opts.seed, &mut out);
    out
}

fn numerics_checks(seed: u64, out: &mut Vec<PropertyCheck>) {
    let mut rng = RngStream::new(seed, 1_000);
    let mut bad = 0;
    for _ in 0..100_000 {
        let a: f64 = rng.random_range(-1e6..1e6);
        let (f, c) = (floor_int(a).unwrap(), ceil_int(a).unwrap());
        let ok = (f as f64) <= a
            && a < (f + 1) as f64
            && ((c - 1) as f64) < a
            && a <= c as f64
            && c == -floor_int(-a).unwrap();
        bad += usize::from(!ok);
    }
    out.push(PropertyCheck::none("core_numerics", "floor/ceil brackets and ceil = -floor(-a)", bad));

    let mut violations = 0;
    for (i, kind) in [
        BoundedNoiseKind::Uniform,
        BoundedNoiseKind::TruncatedGaussian,
        BoundedNoiseKind::Rademacher,
        BoundedNoiseKind::Constant,
        BoundedNoiseKind::Zero,
    ]
    .into_iter()
    .enumerate()
    {
        let spec = BoundedNoiseSpec::new(kind, 0.7, if i % 2 == 0 { 0.0 } else { 0.01 }).unwrap();
        let limit = spec.effective_bound();
        let mut r = RngStream::new(seed, 2_000 + i as u64);
        violations += (0..100_000).filter(|_| spec.draw(&mut r).abs() > limit).count();
    }
    out.push(PropertyCheck::none("core_numerics", "bounded noise support (5 kinds x 1e5)", violations));

    let mut worst: f64 = 0.0;
    for (i, kind) in [ForwardNoiseKind::Gaussian, ForwardNoiseKind::UniformWhite].into_iter().enumerate() {
        let spec = ForwardNoiseSpec::new(kind, 2.5).unwrap();
        let mut r = RngStream::new(seed, 3_000 + i as u64);
        let (mut s, mut s2) = (0.0, 0.0);
        let count = 1_000_000;
        for _ in 0..count {
            let w = spec.draw(&mut r);
            s += w;
            s2 += w * w;
        }
        let mean = s / count as f64;
        let var = s2 / count as f64 - mean * mean;
        worst = worst.max((var - 2.5).abs() / 2.5);
    }
    out.push(PropertyCheck::at_most("core_numerics", "forward variance (1e6 draws)", worst, 0.02));

    let spec = ForwardNoiseSpec::gaussian(1.0).unwrap();
    let replay = |id| {
        let mut r = RngStream::new(seed, id);
        (0..1000).map(|_| spec.draw(&mut r).to_bits()).collect::<Vec<u64>>()
    };
    let mismatches = replay(17).iter().zip(replay(17)).filter(|(a, b)| **a != *b).count();
    out.push(PropertyCheck::none("core_numerics", "stream replay is bit-identical", mismatches));
}

/// Random side-information configuration used by the identity checks.
fn random_loop(rng: &mut RngStream, n: usize) -> (SchemeParams, f64, Vec<f64>, Vec<f64>) {
    let r_bar: f64 = rng.random_range(0.1..0.9);
    let rate = (r_bar * rng.random_range(0.2..0.9)).max(0.04);
    let n = n.max((1.0 / rate).ceil() as usize);
    let params = SchemeParams::new(n, rate, r_bar).expect("rate and block length chosen valid");
    let m = rng.random_range(1..=params.message_count());
    let z = scheme::message_to_point(Message::new(m, &params).unwrap(), &params);
    let sigma_w = rng.random_range(0.1..2.0);
    let v_bar = rng.random_range(0.0..0.5);
    let w: Vec<f64> = (0..n).map(|_| sigma_w * rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
    let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0) * v_bar).collect();
    (params, z, w, v)
}

/// Closed loop with `U_t = X_t + V_t + W_t`; returns `(X_0..X_n, Ẑ_0..Ẑ_n)`.
pub fn closed_loop_sequences(params: &SchemeParams, z: f64, w: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut enc = scheme::encoder_init(z, params).expect("z in (0, 1)");
    let mut dec = DecoderState::default();
    let (mut xs, mut zs) = (vec![enc.x], vec![dec.z_hat]);
    for t in 0..w.len() {
        let y = enc.x + w[t];
        dec = scheme::decoder_step(dec, y, v[t], params);
        enc = scheme::encoder_step(enc, y + v[t], params);
        xs.push(enc.x);
        zs.push(dec.z_hat);
    }
    (xs, zs)
}

fn scheme_checks(seed: u64, out: &mut Vec<PropertyCheck>) {
    let mut rng = RngStream::new(seed, 4_000);

    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let (params, z, _, _) = random_loop(&mut rng, 25);
        let t = rng.random_range(0..=25usize);
        let u: Vec<f64> = (0..t).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mut enc = scheme::encoder_init(z, &params).unwrap();
        for &ui in &u {
            enc = scheme::encoder_step(enc, ui, &params);
        }
        let direct = scheme::closed_form_x(z, &u, t, &params).unwrap();
        worst = worst.max(rel(enc.x, direct, 0.0));
    }
    out.push(PropertyCheck::at_most("sk_scheme", "recursion = closed-form sum (t <= 25)", worst, 1e-9));

    let (mut stable, mut identity) = (0.0f64, 0.0f64);
    for _ in 0..500 {
        let (params, z, w, v) = random_loop(&mut rng, 25);
        let n = w.len().min(25);
        let (xs, zs) = closed_loop_sequences(&params, z, &w[..n], &v[..n]);
        for t in 0..=n {
            let sf = scheme::stable_form_x(z, &w, &v, t, &params).unwrap();
            stable = stable.max(rel(xs[t], sf, xs[0].abs()));
            let rhs = (params.r_bar() * t as f64).exp2() * params.spread() * (zs[t] - z);
            identity = identity.max(rel(xs[t], rhs, xs[0].abs()));
        }
    }
    out.push(PropertyCheck::at_most("sk_scheme", "closed loop = stable form", stable, 1e-9));
    out.push(PropertyCheck::at_most("sk_scheme", "X_t = 2^{r̄t}(2^r̄-2^-r̄)(Ẑ_t - Z)", identity, 1e-8));

    let mut wrong = 0;
    for _ in 0..2_000 {
        let (params, z, _, _) = random_loop(&mut rng, 25);
        let m = scheme::point_to_message(z, params.n(), &params);
        let half_cell = (-(params.message_bits() as f64 + 1.0)).exp2();
        let delta = rng.random_range(-0.999..0.999) * half_cell;
        wrong += usize::from(scheme::point_to_message(z + delta, params.n(), &params) != m);
    }
    out.push(PropertyCheck::none("sk_scheme", "|Z - Ẑ_n| < 2^-(Θ(rn)+1) decodes m", wrong));

    let mut worst: f64 = 0.0;
    let mut undecoded = 0;
    for _ in 0..200 {
        let (params, z, _, _) = random_loop(&mut rng, 10);
        let zeros = vec![0.0; params.n()];
        let (_, zs) = closed_loop_sequences(&params, z, &zeros, &zeros);
        let t = params.n();
        let expected = z * (1.0 - (-2.0 * params.r_bar() * t as f64).exp2());
        worst = worst.max(rel(zs[t], expected, 0.0));
        undecoded += usize::from(
            scheme::point_to_message(zs[t], t, &params) != scheme::point_to_message(z, t, &params),
        );
    }
    out.push(PropertyCheck::at_most("sk_scheme", "noiseless Ẑ_t = Z(1 - 2^-2r̄t)", worst, 1e-12));
    out.push(PropertyCheck::none("sk_scheme", "noiseless decoding is exact", undecoded));

    let params = SchemeParams::new(32, 0.5, 1.0).unwrap();
    let misses = (1..=params.message_count())
        .filter(|&m| {
            let z = scheme::message_to_point(Message::new(m, &params).unwrap(), &params);
            scheme::point_to_message(z, params.n(), &params) != m as i64
        })
        .count();
    out.push(PropertyCheck::none("sk_scheme", "message round trip (all 2^16)", misses));
}

fn backward_checks(opts: &VerifyOptions, out: &mut Vec<PropertyCheck>) {
    let mut rng = RngStream::new(opts.seed, 5_000);

    let (mut lattice, mut periodic, mut bound) = (0usize, 0.0f64, 0usize);
    let mut homogeneity = 0.0f64;
    for _ in 0..100_000 {
        let b = rng.random_range(0.01..3.0);
        let y = rng.random_range(-50.0..50.0);
        let q = Quantizer::new(b).unwrap();
        let phi = q.quantize(y);
        let k = phi / (2.0 * b);
        lattice += usize::from((k - k.round()).abs() > 1e-9);
        // Skip points within roundoff of a cell edge.
        let frac = (y + b) / (2.0 * b);
        if (frac - frac.round()).abs() > 1e-9 {
            periodic = periodic.max((q.quantize(y + 2.0 * b) - phi - 2.0 * b).abs() / b);
            let c = rng.random_range(0.1..10.0);
            let qc = Quantizer::new(c * b).unwrap();
            homogeneity = homogeneity.max(rel(qc.quantize(c * y), c * phi, c * b));
        }
        bound += usize::from(q.error(y).abs() > b * (1.0 + 1e-12));
    }
    out.push(PropertyCheck::none("backward_link", "Φ_b(y) is a multiple of 2b", lattice));
    out.push(PropertyCheck::at_most("backward_link", "Φ_b(y + 2b) = Φ_b(y) + 2b", periodic, 1e-9));
    out.push(PropertyCheck::none("backward_link", "|Δ_b(y)| <= b", bound));
    out.push(PropertyCheck::at_most("backward_link", "Φ_cb(cy) = cΦ_b(y)", homogeneity, 1e-12));

    let corrupt = if opts.corrupt_quantizer { 1.001 } else { 1.0 };
    let worst = remark_equivalence(&mut rng, corrupt, 10, 1_000);
    out.push(PropertyCheck::at_most(
        "backward_link",
        "(σ̄_V/σ̄_S)Φ_σ̄S(S + Q) = Φ_σ̄V(Y)",
        worst,
        1e-12,
    ));
}

/// Largest relative gap between the two sides of the backward-link
/// equivalence over random `(σ̄_S, σ̄_V)` pairs and `(y, s)` samples with
/// `|s| <= 0.99 σ̄_S`. `corrupt` scales the sensitivity of the reference side.
pub fn remark_equivalence(rng: &mut RngStream, corrupt: f64, pairs: usize, samples: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let sigma_s = rng.random_range(0.01..1.0);
        let sigma_v = rng.random_range(0.01..1.0);
        let link = BackwardChannel::new(sigma_s, sigma_v, (2.0 * sigma_s).powi(2)).unwrap();
        let reference = Quantizer::new(sigma_v * corrupt).unwrap();
        for _ in 0..samples {
            let y = rng.random_range(-20.0..20.0);
            let s = rng.random_range(-0.99..=0.99) * sigma_s;
            let lhs = link.decode(link.encode(y) + s);
            let rhs = reference.quantize(y);
            worst = worst.max(rel(lhs, rhs, 2.0 * sigma_v));
        }
    }
    worst
}

fn analysis_checks(seed: u64, out: &mut Vec<PropertyCheck>) {
    let mut rng = RngStream::new(seed, 6_000);

    let mut residual: f64 = 0.0;
    for _ in 0..10_000 {
        let sw2 = rng.random_range(0.01..10.0);
        let px2: f64 = rng.random_range(0.01..100.0);
        let sv = rng.random_range(0.0..=0.5) * px2.sqrt();
        let q = RateQuery::new(sw2, px2, sv).unwrap();
        residual = residual.max(q.balance(analysis::rho(&q).value).abs());
    }
    out.push(PropertyCheck::at_most("analysis", "ϱ solves its defining equation", residual, 1e-9));

    let mut bad = 0;
    for _ in 0..200 {
        let sw2 = rng.random_range(0.1..5.0);
        let px2: f64 = rng.random_range(0.5..20.0);
        let mut prev = f64::INFINITY;
        for k in 0..=50 {
            let sv = k as f64 / 50.0 * px2.sqrt();
            let r = analysis::rho(&RateQuery::new(sw2, px2, sv).unwrap()).value;
            bad += usize::from(r > prev);
            prev = r;
        }
        let sv = rng.random_range(0.0..0.5);
        let mut prev = -1.0;
        for k in 1..=50 {
            let px2 = (k as f64 / 5.0).powi(2);
            let r = analysis::rho(&RateQuery::new(sw2, px2, sv).unwrap()).value;
            bad += usize::from(r < prev);
            prev = r;
        }
    }
    out.push(PropertyCheck::none("analysis", "ϱ monotone in σ̄_V and P_X", bad));

    let mut gap: f64 = 0.0;
    let mut zero: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for _ in 0..1_000 {
        let sw2 = rng.random_range(0.1..5.0);
        let px2 = rng.random_range(0.1..50.0);
        let q = RateQuery::new(sw2, px2, 1e-9).unwrap();
        gap = gap.max((analysis::rho(&q).value - q.rate_ceiling()).abs());
        zero = zero.max(analysis::rho(&RateQuery::new(sw2, px2, px2.sqrt() / 2.0).unwrap()).value);
        let sv = rng.random_range(0.0..0.5) * px2.sqrt();
        let c: f64 = rng.random_range(0.1..10.0);
        let a = analysis::rho(&RateQuery::new(sw2, px2, sv).unwrap()).value;
        let b = analysis::rho(&RateQuery::new(c * c * sw2, c * c * px2, c * sv).unwrap()).value;
        scale = scale.max((a - b).abs());
    }
    out.push(PropertyCheck::at_most("analysis", "ϱ -> ½log2(1+P_X²/σ_W²) as σ̄_V -> 0", gap, 1e-6));
    out.push(PropertyCheck::at_most("analysis", "ϱ(σ_W², P_X², P_X/2) = 0", zero, 0.0));
    out.push(PropertyCheck::at_most("analysis", "ϱ invariant under joint scaling", scale, 1e-9));

    let r = analysis::rho(&RateQuery::new(1.0, 1e12, 1.0).unwrap()).value;
    let ratio = r / (1e6f64 / 2.0).log2();
    out.push(PropertyCheck::at_most("analysis", "high-power ϱ/log2(P_X/(σ_W+σ̄_V)) ≈ 1", (ratio - 1.0).abs(), 0.01));

    let mut bad = 0;
    for _ in 0..200 {
        let r_bar = rng.random_range(0.1..2.0);
        let rate = r_bar * rng.random_range(0.1..0.95);
        let tc = TailConstants::new(r_bar, rng.random_range(0.0..1.0), rng.random_range(0.1..4.0));
        let mut prev = f64::INFINITY;
        let mut past_vacuous = false;
        for n in 1..200 {
            let b = analysis::error_bound_gaussian(n, rate, r_bar, &tc);
            bad += usize::from(b > 1.0);
            if past_vacuous {
                bad += usize::from(b >= prev && b > 0.0);
            }
            past_vacuous |= b < 1.0;
            prev = b;
        }
    }
    out.push(PropertyCheck::none("analysis", "Gaussian bound <= 1, decreasing in n", bad));
}

fn simulator_checks(seed: u64, out: &mut Vec<PropertyCheck>) {
    let base = SchemeConfig {
        scheme: SchemeKind::QuantizedFeedback,
        params: SchemeParams::new(30, 0.5, 0.6).unwrap(),
        forward: ForwardNoiseSpec::gaussian(1.0).unwrap(),
        feedback_noise: BoundedNoiseSpec::zero(),
        sigma_v_bar: Some(0.25),
        allow_sigma_v_override: false,
        backward: None,
        p_x2: 4.0,
        delay: DelayPlacement::AfterFeedbackDecoder,
    };
    let mut backward = base.clone();
    backward.scheme = SchemeKind::ScaledBackward;
    backward.params = SchemeParams::new(30, 0.2, 0.6).unwrap();
    backward.sigma_v_bar = None;
    backward.backward = Some(BackwardLink { sigma_s_bar: 0.1, p_q2: 4.0 });
    backward.feedback_noise = BoundedNoiseSpec::new(BoundedNoiseKind::Uniform, 0.1, 0.0).unwrap();

    let before = {
        let mut c = backward.clone();
        c.delay = DelayPlacement::BeforeFeedbackDecoder;
        simulator::validate_config(&c).unwrap()
    };
    let after = simulator::validate_config(&backward).unwrap();
    let mut differing = 0;
    for trial in 0..100 {
        let rng = RngStream::new(seed, trial);
        let m = simulator::trial_message(after.params(), &rng);
        differing += usize::from(simulator::run_trial(&after, m, &rng) != simulator::run_trial(&before, m, &rng));
    }
    out.push(PropertyCheck::none("simulator", "delay placement after = before", differing));

    let quant = simulator::validate_config(&base).unwrap();
    let mut silent = backward.clone();
    silent.params = base.params;
    silent.feedback_noise = BoundedNoiseSpec::zero();
    silent.sigma_v_bar = Some(0.25);
    silent.allow_sigma_v_override = true;
    let silent = simulator::validate_config(&silent).unwrap();
    let mut side = base.clone();
    side.scheme = SchemeKind::SideInfo;
    let side = simulator::validate_config(&side).unwrap();
    let q = Quantizer::new(0.25).unwrap();
    let mut differing = 0;
    for trial in 0..200 {
        let rng = RngStream::new(seed, trial);
        let m = simulator::trial_message(quant.params(), &rng);
        let a = simulator::run_trial(&quant, m, &rng);
        let b = simulator::run_trial(&silent, m, &rng);
        let c = simulator::run_trial_with_feedback(&side, m, &rng, |_, y| q.error(y));
        let same = a.x == b.x && a.u == b.u && a.z_hat == b.z_hat && a.x == c.x && a.u == c.u && a.z_hat == c.z_hat;
        differing += usize::from(!same);
    }
    out.push(PropertyCheck::none("simulator", "side-info(Δ) = quantized = backward(S=0)", differing));

    let trials = 10_000;
    let rep = simulator::run_trials(&quant, trials, seed, &RunOptions::default()).unwrap();
    let worst = rep
        .empirical_power_x
        .iter()
        .zip(&rep.bound_power_x)
        .map(|(e, b)| e / b)
        .fold(0.0, f64::max);
    out.push(PropertyCheck::at_most("simulator", "E[X_t²] <= bound_x(t)·1.05", worst, 1.05));
    let wilson = WilsonInterval::new(rep.errors, trials, Z_95);
    out.push(PropertyCheck::at_most(
        "simulator",
        "error rate <= Markov bound (Wilson slack)",
        rep.error_rate - wilson.half_width(),
        rep.bound_error_markov,
    ));

    let brep = simulator::run_trials(&after, trials, seed, &RunOptions::default()).unwrap();
    let worst = brep
        .empirical_power_q
        .as_ref()
        .unwrap()
        .iter()
        .zip(brep.bound_power_q.as_ref().unwrap())
        .map(|(e, b)| e / b)
        .fold(0.0, f64::max);
    out.push(PropertyCheck::at_most("simulator", "E[Q_t²] <= bound_q(t)·1.05", worst, 1.05));

    let mut tail_cfg = base.clone();
    tail_cfg.scheme = SchemeKind::SideInfo;
    tail_cfg.feedback_noise = BoundedNoiseSpec::new(BoundedNoiseKind::Uniform, 0.25, 0.0).unwrap();
    let tail_cfg = simulator::validate_config(&tail_cfg).unwrap();
    let gamma = tail_cfg.tail_constants().gamma;
    let opts = RunOptions {
        tail_levels: vec![gamma + 0.5, gamma + 1.0, gamma + 2.0],
        ..Default::default()
    };
    let trep = simulator::run_trials(&tail_cfg, trials, seed, &opts).unwrap();
    let excess = trep
        .tail
        .iter()
        .map(|t| t.frequency - (t.bound * 1.1 + 3.0 * t.wilson.half_width()))
        .fold(f64::NEG_INFINITY, f64::max);
    out.push(PropertyCheck::at_most("simulator", "P(|X_n| >= α) <= tail_bound(α)", excess, 0.0));

    let mut worst: f64 = 0.0;
    for trial in 0..100 {
        let mut cfg = tail_cfg.config().clone();
        cfg.params = SchemeParams::new(20, 0.5, 0.6).unwrap();
        let cfg = simulator::validate_config(&cfg).unwrap();
        let rng = RngStream::new(seed, trial);
        let tr = simulator::run_trial(&cfg, simulator::trial_message(cfg.params(), &rng), &rng);
        worst = worst.max(simulator::identity_residual(&tr, cfg.params(), tr.z).unwrap());
    }
    out.push(PropertyCheck::at_most("simulator", "trajectory identity residual (n = 20)", worst, 1e-8));
}
