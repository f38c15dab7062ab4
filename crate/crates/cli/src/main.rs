//! `nfc`: rate sweeps, bound tables, Monte Carlo runs and the invariant suite
//! for Schalkwijk–Kailath coding over channels with corrupted feedback.

mod output;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use nfc_core::analysis::{self, RateQuery, TailConstants};
use nfc_core::numerics::{BoundedNoiseSpec, ForwardNoiseSpec};
use nfc_core::scheme::SchemeParams;
use nfc_core::simulator::{self, BackwardLink, MonteCarloReport, RunOptions, SchemeConfig};
use nfc_core::verify::{self, VerifyOptions};

use output::{sig12, RunManifest, Table};
use settings::{DelayArg, FeedbackNoiseArg, NoiseArg, SchemeArg, Settings};

#[derive(Parser)]
#[command(name = "nfc", version, about = "Feedback coding toolkit: rate curves, bounds, Monte Carlo, invariants")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// ϱ(σ_W², P_X², σ̄_V) over a linear grid of σ̄_V
    RateSweep(CommonArgs),
    /// ϱ under the Γ selection over a grid of σ̄_S, one curve per P_Q
    GammaSweep(CommonArgs),
    /// Monte Carlo run of one scheme, reported as JSON
    Simulate(CommonArgs),
    /// Error-probability and power bounds over a range of block lengths
    Bounds(CommonArgs),
    /// Run the invariant suite of every module
    Verify(VerifyArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Flat TOML config, or a manifest written by an earlier run
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    settings: Settings,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Perturb one side of the quantizer equivalence check (mutation test)
    #[arg(long, hide = true)]
    corrupt_quantizer: bool,
}

enum Failure {
    Validation(String),
    Io(anyhow::Error),
    Verify,
}

impl Failure {
    fn invalid(e: impl std::fmt::Display) -> Self {
        Failure::Validation(e.to_string())
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Io(e)
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::RateSweep(a) => resolve(a).and_then(rate_sweep),
        Command::GammaSweep(a) => resolve(a).and_then(gamma_sweep),
        Command::Simulate(a) => resolve(a).and_then(simulate),
        Command::Bounds(a) => resolve(a).and_then(bounds),
        Command::Verify(a) => {
            let corrupt = a.corrupt_quantizer;
            resolve(a.common).and_then(|s| run_verify(s, corrupt))
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(2)
        }
        Err(Failure::Io(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
        Err(Failure::Verify) => ExitCode::from(4),
    }
}

fn resolve(args: CommonArgs) -> Result<Settings, Failure> {
    let file = match &args.config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    Ok(file.overlay(args.settings))
}

struct Sweep {
    min: f64,
    max: f64,
    points: usize,
}

impl Sweep {
    fn new(min: f64, max: f64, points: usize) -> Result<Self, Failure> {
        if !min.is_finite() || !max.is_finite() || min >= max {
            return Err(Failure::invalid(format!("sweep requires finite min < max (min = {min}, max = {max})")));
        }
        if points < 2 {
            return Err(Failure::invalid(format!("sweep requires at least 2 points (points = {points})")));
        }
        Ok(Sweep { min, max, points })
    }

    /// Inclusive grid; the last point is `max` exactly.
    fn values(&self) -> impl Iterator<Item = f64> + '_ {
        let last = self.points - 1;
        (0..self.points).map(move |k| {
            if k == last {
                self.max
            } else {
                self.min + (self.max - self.min) * k as f64 / last as f64
            }
        })
    }
}

fn rate_sweep(s: Settings) -> Outcome {
    let resolved = Settings {
        sigma_w2: Some(s.sigma_w2.unwrap_or(1.0)),
        px2: Some(s.px2.unwrap_or(4.0)),
        min: Some(s.min.unwrap_or(0.0)),
        max: Some(s.max.unwrap_or(1.0)),
        points: Some(s.points.unwrap_or(1000)),
        out: s.out,
        ..Default::default()
    };
    let (sw2, px2) = (resolved.sigma_w2.unwrap(), resolved.px2.unwrap());
    let sweep = Sweep::new(resolved.min.unwrap(), resolved.max.unwrap(), resolved.points.unwrap())?;

    let mut table = Table::new(&["sigma_v_bar", "rho"]);
    for sv in sweep.values() {
        let q = RateQuery::new(sw2, px2, sv).map_err(Failure::invalid)?;
        table.row(&[sig12(sv), sig12(analysis::rho(&q).value)]);
    }
    output::emit(&RunManifest::new("rate-sweep", resolved), &table.into_string())?;
    Ok(())
}

fn gamma_sweep(s: Settings) -> Outcome {
    let resolved = Settings {
        sigma_w2: Some(s.sigma_w2.unwrap_or(1.0)),
        px2: Some(s.px2.unwrap_or(4.0)),
        min: Some(s.min.unwrap_or(1e-6)),
        max: Some(s.max.unwrap_or(0.99)),
        points: Some(s.points.unwrap_or(1000)),
        pq: Some(s.pq.unwrap_or_else(|| vec![1.0, 2.0, 4.0, 8.0])),
        out: s.out,
        ..Default::default()
    };
    let (sw2, px2) = (resolved.sigma_w2.unwrap(), resolved.px2.unwrap());
    let sweep = Sweep::new(resolved.min.unwrap(), resolved.max.unwrap(), resolved.points.unwrap())?;
    if sweep.min < 0.0 {
        return Err(Failure::invalid(format!("σ̄_S must be >= 0 (min = {})", sweep.min)));
    }
    let pqs = resolved.pq.clone().unwrap();
    if pqs.is_empty() || pqs.iter().any(|p| !p.is_finite() || *p <= 0.0) {
        return Err(Failure::invalid("P_Q values must be finite and > 0"));
    }

    let mut table = Table::new(&["sigma_s_bar", "pq", "rho_composed", "gamma_undefined"]);
    for &pq in &pqs {
        for ss in sweep.values() {
            let (rho, undefined) = if pq <= ss {
                (0.0, 1)
            } else if ss == 0.0 {
                // Γ vanishes with σ̄_S: the noiseless-feedback rate.
                let q = RateQuery::new(sw2, px2, 0.0).map_err(Failure::invalid)?;
                (analysis::rho(&q).value, 0)
            } else {
                (analysis::rho_composed(sw2, px2, ss, pq).map_err(Failure::invalid)?, 0)
            };
            table.row(&[sig12(ss), sig12(pq), sig12(rho), undefined.to_string()]);
        }
    }
    output::emit(&RunManifest::new("gamma-sweep", resolved), &table.into_string())?;
    Ok(())
}

/// Fills every simulation default and builds the scheme configuration.
fn scheme_config(s: &Settings) -> Result<(Settings, SchemeConfig), Failure> {
    let scheme = s.scheme.unwrap_or(SchemeArg::Quantized);
    let backward = scheme == SchemeArg::ScaledBackward;
    let resolved = Settings {
        scheme: Some(scheme),
        sigma_w2: Some(s.sigma_w2.unwrap_or(1.0)),
        px2: Some(s.px2.unwrap_or(4.0)),
        sigma_v: if backward { s.sigma_v } else { Some(s.sigma_v.unwrap_or(0.25)) },
        sigma_s: backward.then(|| s.sigma_s.unwrap_or(0.1)),
        pq2: backward.then(|| s.pq2.unwrap_or(4.0)),
        sigma_v_override: backward.then(|| s.sigma_v_override.unwrap_or(false)),
        rate: Some(s.rate.unwrap_or(0.5)),
        rbar: Some(s.rbar.unwrap_or(0.6)),
        n: Some(s.n.unwrap_or(30)),
        noise: Some(s.noise.unwrap_or(NoiseArg::Gaussian)),
        feedback_noise: (scheme != SchemeArg::Quantized)
            .then(|| s.feedback_noise.unwrap_or(FeedbackNoiseArg::Uniform)),
        delay: backward.then(|| s.delay.unwrap_or(DelayArg::After)),
        ..Default::default()
    };

    let params = SchemeParams::new(resolved.n.unwrap(), resolved.rate.unwrap(), resolved.rbar.unwrap())
        .map_err(Failure::invalid)?;
    let forward = ForwardNoiseSpec::new(resolved.noise.unwrap().into(), resolved.sigma_w2.unwrap())
        .map_err(Failure::invalid)?;
    let noise_bound = match scheme {
        SchemeArg::SideInfo => resolved.sigma_v,
        SchemeArg::ScaledBackward => resolved.sigma_s,
        SchemeArg::Quantized => None,
    };
    let feedback_noise = match (resolved.feedback_noise, noise_bound) {
        (Some(kind), Some(bound)) => {
            BoundedNoiseSpec::with_default_margin(kind.into(), bound).map_err(Failure::invalid)?
        }
        _ => BoundedNoiseSpec::zero(),
    };
    let cfg = SchemeConfig {
        scheme: scheme.into(),
        params,
        forward,
        feedback_noise,
        sigma_v_bar: resolved.sigma_v,
        allow_sigma_v_override: resolved.sigma_v_override.unwrap_or(false),
        backward: backward.then(|| BackwardLink {
            sigma_s_bar: resolved.sigma_s.unwrap(),
            p_q2: resolved.pq2.unwrap(),
        }),
        p_x2: resolved.px2.unwrap(),
        delay: resolved.delay.unwrap_or(DelayArg::After).into(),
    };
    Ok((resolved, cfg))
}

#[derive(Serialize)]
struct SimulateOutput<'a> {
    manifest: &'a RunManifest,
    report: &'a MonteCarloReport,
}

fn simulate(s: Settings) -> Outcome {
    let (mut resolved, cfg) = scheme_config(&s)?;
    resolved.trials = Some(s.trials.unwrap_or(10_000));
    resolved.seed = Some(s.seed.unwrap_or(42));
    resolved.message = s.message;
    resolved.tail_levels = s.tail_levels.clone();
    resolved.out = s.out.clone();

    let valid = simulator::validate_config(&cfg).map_err(Failure::invalid)?;
    let opts = RunOptions {
        threads: threads_from_env()?,
        fixed_message: resolved.message,
        tail_levels: resolved.tail_levels.clone().unwrap_or_default(),
        keep_trajectories: false,
    };
    let report = simulator::run_trials(&valid, resolved.trials.unwrap(), resolved.seed.unwrap(), &opts)
        .map_err(Failure::invalid)?;

    let manifest = RunManifest::new("simulate", resolved);
    let mut body = serde_json::to_string_pretty(&SimulateOutput {
        manifest: &manifest,
        report: &report,
    })
    .map_err(anyhow::Error::from)?;
    body.push('\n');
    output::emit(&manifest, &body)?;
    Ok(())
}

fn threads_from_env() -> Result<usize, Failure> {
    match std::env::var("NFC_THREADS") {
        Err(_) => Ok(0),
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Failure::invalid(format!("NFC_THREADS must be a non-negative integer, got {v:?}"))),
    }
}

fn bounds(s: Settings) -> Outcome {
    let scheme = s.scheme.unwrap_or(SchemeArg::Quantized);
    let backward = scheme == SchemeArg::ScaledBackward;
    let resolved = Settings {
        scheme: Some(scheme),
        sigma_w2: Some(s.sigma_w2.unwrap_or(1.0)),
        px2: Some(s.px2.unwrap_or(4.0)),
        sigma_v: if backward { s.sigma_v } else { Some(s.sigma_v.unwrap_or(0.25)) },
        sigma_s: backward.then(|| s.sigma_s.unwrap_or(0.1)),
        pq2: Some(s.pq2.unwrap_or(4.0)),
        rate: Some(s.rate.unwrap_or(0.5)),
        rbar: Some(s.rbar.unwrap_or(0.6)),
        n_min: Some(s.n_min.unwrap_or(1)),
        n_max: Some(s.n_max.unwrap_or(60)),
        out: s.out,
        ..Default::default()
    };
    let (sw2, px2, pq2) = (resolved.sigma_w2.unwrap(), resolved.px2.unwrap(), resolved.pq2.unwrap());
    let (rate, r_bar) = (resolved.rate.unwrap(), resolved.rbar.unwrap());
    let (n_min, n_max) = (resolved.n_min.unwrap(), resolved.n_max.unwrap());
    for (name, v) in [("σ_W²", sw2), ("P_X²", px2), ("P_Q²", pq2), ("r", rate)] {
        if !v.is_finite() || v <= 0.0 {
            return Err(Failure::invalid(format!("{name} must be finite and > 0, got {v}")));
        }
    }
    if !r_bar.is_finite() || rate >= r_bar {
        return Err(Failure::invalid(format!("requires r < r̄ (r = {rate}, r̄ = {r_bar})")));
    }
    if n_min < 1 || n_min > n_max {
        return Err(Failure::invalid(format!("requires 1 <= n-min <= n-max (n-min = {n_min}, n-max = {n_max})")));
    }
    let sigma_v_bar = match resolved.sigma_v {
        Some(v) => v,
        None => analysis::gamma_select(sw2.sqrt(), resolved.sigma_s.unwrap(), px2.sqrt(), pq2.sqrt())
            .map_err(Failure::invalid)?,
    };
    if !sigma_v_bar.is_finite() || sigma_v_bar < 0.0 {
        return Err(Failure::invalid(format!("σ̄_V must be finite and >= 0, got {sigma_v_bar}")));
    }

    let tc = TailConstants::new(r_bar, sigma_v_bar, sw2);
    let px_steady = analysis::power_bound_x_steady(r_bar, sw2, sigma_v_bar);
    let mut table = Table::new(&[
        "n",
        "markov_bound",
        "gaussian_bound",
        "power_bound_x_steady",
        "power_bound_q_steady",
    ]);
    for n in n_min..=n_max {
        let e_xn2 = analysis::power_bound_x_constrained(n, r_bar, px2.sqrt());
        table.row(&[
            n.to_string(),
            sig12(analysis::error_bound_markov(n, rate, r_bar, e_xn2)),
            sig12(analysis::error_bound_gaussian(n, rate, r_bar, &tc)),
            sig12(px_steady),
            sig12(pq2),
        ]);
    }
    output::emit(&RunManifest::new("bounds", resolved), &table.into_string())?;
    Ok(())
}

fn run_verify(s: Settings, corrupt_quantizer: bool) -> Outcome {
    let resolved = Settings {
        seed: Some(s.seed.unwrap_or(1)),
        out: s.out,
        ..Default::default()
    };
    let checks = verify::run_suite(&VerifyOptions {
        seed: resolved.seed.unwrap(),
        corrupt_quantizer,
    });
    let mut text = String::new();
    for c in &checks {
        text.push_str(&c.to_string());
        text.push('\n');
    }
    if resolved.out.is_some() {
        print!("{text}");
    }
    output::emit(&RunManifest::new("verify", resolved), &text)?;
    if checks.iter().all(|c| c.passed) {
        Ok(())
    } else {
        Err(Failure::Verify)
    }
}
