//! Scalar primitives: integer floor/ceiling, splittable random streams and
//! the forward/bounded noise families used by the simulator.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest magnitude accepted by [`floor_int`] / [`ceil_int`].
const INT_RANGE: f64 = 9.0e18;

/// Greatest integer not exceeding `a`.
pub fn floor_int(a: f64) -> Result<i64> {
    if !a.is_finite() {
        return Err(Error::NonFinite(a));
    }
    let f = a.floor();
    if f.abs() > INT_RANGE {
        return Err(Error::Domain(format!("floor of {a} does not fit in i64")));
    }
    Ok(f as i64)
}

/// Least integer not below `a`.
pub fn ceil_int(a: f64) -> Result<i64> {
    if !a.is_finite() {
        return Err(Error::NonFinite(a));
    }
    let c = a.ceil();
    if c.abs() > INT_RANGE {
        return Err(Error::Domain(format!("ceiling of {a} does not fit in i64")));
    }
    Ok(c as i64)
}

/// Independent sub-sequences carved out of one trial stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lane {
    Message = 0,
    Forward = 1,
    Feedback = 2,
}

// Lanes are spaced 2^60 words apart inside one ChaCha stream.
const LANE_SPACING: u128 = 1 << 60;

/// Deterministic random stream addressed by `(master_seed, stream_id)`.
///
/// The same pair always yields the same sequence; different `stream_id`s
/// select disjoint ChaCha streams under the same key.
#[derive(Debug, Clone)]
pub struct RngStream {
    master_seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(stream_id);
        Self {
            master_seed,
            stream_id,
            rng,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Fresh stream positioned at the start of `lane`.
    pub fn lane(&self, lane: Lane) -> Self {
        let mut fork = Self::new(self.master_seed, self.stream_id);
        fork.rng.set_word_pos(lane as u128 * LANE_SPACING);
        fork
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForwardNoiseKind {
    Gaussian,
    UniformWhite,
}

/// White forward-channel noise `W_t` with variance `σ_W²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForwardNoiseSpec {
    kind: ForwardNoiseKind,
    variance: f64,
}

impl ForwardNoiseSpec {
    pub fn new(kind: ForwardNoiseKind, variance: f64) -> Result<Self> {
        if !variance.is_finite() || variance <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "forward noise variance must be finite and > 0, got {variance}"
            )));
        }
        Ok(Self { kind, variance })
    }

    pub fn gaussian(variance: f64) -> Result<Self> {
        Self::new(ForwardNoiseKind::Gaussian, variance)
    }

    pub fn kind(&self) -> ForwardNoiseKind {
        self.kind
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    /// One sample of `W_t`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            ForwardNoiseKind::Gaussian => {
                let z: f64 = rng.sample(StandardNormal);
                self.std_dev() * z
            }
            ForwardNoiseKind::UniformWhite => {
                let half_width = (3.0 * self.variance).sqrt();
                rng.random_range(-half_width..=half_width)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundedNoiseKind {
    Uniform,
    TruncatedGaussian,
    Rademacher,
    Constant,
    Zero,
}

impl BoundedNoiseKind {
    /// Default interior margin: kinds with an atom on the bound stay off it.
    pub fn default_margin(self) -> f64 {
        match self {
            Self::Rademacher | Self::Constant => 2f64.powi(-20),
            Self::Uniform | Self::TruncatedGaussian | Self::Zero => 0.0,
        }
    }
}

/// Noise that stays inside `[-b(1-ε), b(1-ε)]` with probability one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundedNoiseSpec {
    kind: BoundedNoiseKind,
    bound: f64,
    interior_margin: f64,
}

impl BoundedNoiseSpec {
    pub fn new(kind: BoundedNoiseKind, bound: f64, interior_margin: f64) -> Result<Self> {
        if !bound.is_finite() || bound < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "bounded noise amplitude must be finite and >= 0, got {bound}"
            )));
        }
        if !(0.0..1.0).contains(&interior_margin) {
            return Err(Error::InvalidParameter(format!(
                "interior margin must lie in [0, 1), got {interior_margin}"
            )));
        }
        Ok(Self {
            kind,
            bound,
            interior_margin,
        })
    }

    /// Spec with the kind's default interior margin.
    pub fn with_default_margin(kind: BoundedNoiseKind, bound: f64) -> Result<Self> {
        Self::new(kind, bound, kind.default_margin())
    }

    pub fn zero() -> Self {
        Self {
            kind: BoundedNoiseKind::Zero,
            bound: 0.0,
            interior_margin: 0.0,
        }
    }

    pub fn kind(&self) -> BoundedNoiseKind {
        self.kind
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn interior_margin(&self) -> f64 {
        self.interior_margin
    }

    /// Amplitude actually reachable by samples, `b(1-ε)`.
    pub fn effective_bound(&self) -> f64 {
        self.bound * (1.0 - self.interior_margin)
    }

    /// One bounded sample. `Zero` consumes no randomness.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let c = self.effective_bound();
        match self.kind {
            BoundedNoiseKind::Zero => 0.0,
            BoundedNoiseKind::Constant => c,
            BoundedNoiseKind::Rademacher => {
                if rng.random::<bool>() {
                    c
                } else {
                    -c
                }
            }
            BoundedNoiseKind::Uniform => {
                if c == 0.0 {
                    return 0.0;
                }
                rng.random_range(-c..=c)
            }
            BoundedNoiseKind::TruncatedGaussian => {
                if c == 0.0 {
                    return 0.0;
                }
                let sigma = self.bound / 3.0;
                // Acceptance probability is at least erf(3/√2 · (1-ε)) > 0.
                loop {
                    let z: f64 = rng.sample(StandardNormal);
                    let s = sigma * z;
                    if s.abs() <= c {
                        return s;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floor_examples() {
        assert_eq!(floor_int(2.3).unwrap(), 2);
        assert_eq!(floor_int(-0.2).unwrap(), -1);
        assert_eq!(floor_int(2.0).unwrap(), 2);
        assert!(floor_int(f64::NAN).is_err());
        assert!(floor_int(f64::INFINITY).is_err());
        assert!(floor_int(1e300).is_err());
    }

    #[test]
    fn ceil_examples() {
        assert_eq!(ceil_int(2.3).unwrap(), 3);
        assert_eq!(ceil_int(0.52).unwrap(), 1);
        assert_eq!(ceil_int(-1.5).unwrap(), -1);
        assert!(ceil_int(f64::NEG_INFINITY).is_err());
    }

    #[test]
    fn forward_rejects_nonpositive_variance() {
        assert!(ForwardNoiseSpec::gaussian(0.0).is_err());
        assert!(ForwardNoiseSpec::gaussian(-1.0).is_err());
        assert!(ForwardNoiseSpec::new(ForwardNoiseKind::UniformWhite, f64::NAN).is_err());
    }

    #[test]
    fn forward_is_reproducible() {
        let spec = ForwardNoiseSpec::gaussian(1.0).unwrap();
        let a: Vec<f64> = {
            let mut rng = RngStream::new(7, 3);
            (0..16).map(|_| spec.draw(&mut rng)).collect()
        };
        let b: Vec<f64> = {
            let mut rng = RngStream::new(7, 3);
            (0..16).map(|_| spec.draw(&mut rng)).collect()
        };
        assert_eq!(a, b);
        let c: Vec<f64> = {
            let mut rng = RngStream::new(7, 4);
            (0..16).map(|_| spec.draw(&mut rng)).collect()
        };
        assert_ne!(a, c);
    }

    #[test]
    fn uniform_white_support() {
        let spec = ForwardNoiseSpec::new(ForwardNoiseKind::UniformWhite, 1.0).unwrap();
        let mut rng = RngStream::new(1, 0);
        for _ in 0..10_000 {
            let w = spec.draw(&mut rng);
            assert!(w.abs() <= 1.732_050_81);
        }
    }

    #[test]
    fn bounded_examples() {
        let mut rng = RngStream::new(11, 0);
        assert_eq!(BoundedNoiseSpec::zero().draw(&mut rng), 0.0);

        let rad = BoundedNoiseSpec::new(BoundedNoiseKind::Rademacher, 0.5, 0.0).unwrap();
        for _ in 0..100 {
            let s = rad.draw(&mut rng);
            assert!(s == 0.5 || s == -0.5);
        }

        let uni = BoundedNoiseSpec::new(BoundedNoiseKind::Uniform, 1.0, 0.01).unwrap();
        for _ in 0..10_000 {
            assert!(uni.draw(&mut rng).abs() <= 0.99);
        }
    }

    #[test]
    fn default_margins() {
        let rad = BoundedNoiseSpec::with_default_margin(BoundedNoiseKind::Rademacher, 1.0).unwrap();
        assert_eq!(rad.interior_margin(), 2f64.powi(-20));
        let uni = BoundedNoiseSpec::with_default_margin(BoundedNoiseKind::Uniform, 1.0).unwrap();
        assert_eq!(uni.interior_margin(), 0.0);
        assert!(BoundedNoiseSpec::new(BoundedNoiseKind::Uniform, 1.0, 1.0).is_err());
        assert!(BoundedNoiseSpec::new(BoundedNoiseKind::Uniform, -1.0, 0.0).is_err());
    }

    #[test]
    fn lanes_are_distinct_and_stable() {
        let base = RngStream::new(5, 9);
        let mut a = base.lane(Lane::Forward);
        let mut b = base.lane(Lane::Feedback);
        let mut a2 = RngStream::new(5, 9).lane(Lane::Forward);
        let xa = a.next_u64();
        assert_eq!(xa, a2.next_u64());
        assert_ne!(xa, b.next_u64());
    }
}
