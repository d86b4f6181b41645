//! Microscopic interaction rules between individual prey and predator groups.
//!
//! All functions take the rates they should apply; the Monte Carlo layer passes the
//! quasi-invariant rates from [`ModelParams::scaled`].

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use thiserror::Error;

use crate::params::ModelParams;

/// Post-interaction sizes below this (relative) level are treated as rounding noise around zero.
const ROUNDING_SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MicrodynError {
    #[error("{species} size became negative ({value:e}); the noise draw violated its lower bound")]
    PositivityViolation { species: Species, value: f64 },
    #[error("environment shape must be positive, got {0}")]
    InvalidEnvironment(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Species {
    Prey,
    Predator,
}

impl std::fmt::Display for Species {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Species::Prey => f.write_str("prey"),
            Species::Predator => f.write_str("predator"),
        }
    }
}

/// Holling type II predation response `beta y / (1 + y)`.
pub fn holling_phi(y: f64, params: &ModelParams) -> f64 {
    params.beta * y / (1.0 + y)
}

/// Holling type II predator growth response `gamma (x - mu) / (1 + x)`.
pub fn holling_psi(x: f64, params: &ModelParams) -> f64 {
    params.gamma * (x - params.mu) / (1.0 + x)
}

/// Intraspecific competition response `(alpha / K) x* / (1 + x*)`.
pub fn competition_response(x_star: f64, params: &ModelParams) -> f64 {
    params.competition_rate() * x_star / (1.0 + x_star)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InteractionOutcome {
    pub new_size: f64,
    /// The noise contribution actually added, `size^p * eta` or zero below the cutoff.
    pub applied_noise: f64,
    /// True when the size was below the positivity threshold and the noise was switched off.
    pub cutoff_active: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum NoiseLaw {
    /// `+-sqrt(v)` with equal probability.
    #[default]
    TwoPoint,
    /// Uniform on `[-sqrt(3v), sqrt(3v)]`.
    TruncatedUniform,
}

/// Law of a single noise draw.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    pub law: NoiseLaw,
    /// Required second moment.
    pub variance_scale: f64,
    /// Smallest admissible value (nonpositive), keeping the interaction positivity preserving.
    pub lower_bound: f64,
}

fn threshold_factor(params: &ModelParams) -> f64 {
    let p = params.p.value();
    ((1.0 - p) * params.s0).powf(1.0 - p)
}

impl NoiseSpec {
    /// Noise on a prey meeting a predator of size `y`.
    pub fn prey(y: f64, params: &ModelParams) -> Self {
        Self {
            law: NoiseLaw::default(),
            variance_scale: params.sigma1 * y / (1.0 + y),
            lower_bound: -(1.0 - params.beta) * threshold_factor(params),
        }
    }

    /// Noise on a predator meeting a prey of size `x`.
    pub fn predator(x: f64, params: &ModelParams) -> Self {
        Self {
            law: NoiseLaw::default(),
            variance_scale: params.sigma2 * x / (1.0 + x),
            lower_bound: -(1.0 - params.gamma * params.mu) * threshold_factor(params),
        }
    }

    /// Noise on a prey competing with a prey of size `x_star` (noise exponent one half).
    pub fn intraspecific(x_star: f64, params: &ModelParams) -> Self {
        Self {
            law: NoiseLaw::default(),
            variance_scale: params.sigma1 * x_star / (1.0 + x_star),
            lower_bound: -(1.0 - params.competition_rate()) * (params.s0 / 2.0).sqrt(),
        }
    }

    pub fn with_law(mut self, law: NoiseLaw) -> Self {
        self.law = law;
        self
    }

    /// Whether the nominal law fits above the lower bound.
    pub fn fits(&self) -> bool {
        let v = self.variance_scale;
        let reach = match self.law {
            NoiseLaw::TwoPoint => v.sqrt(),
            NoiseLaw::TruncatedUniform => (3.0 * v).sqrt(),
        };
        reach <= -self.lower_bound
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseDraw {
    pub value: f64,
    /// The nominal law did not fit above the lower bound and the fallback law was used.
    pub fallback: bool,
}

/// Zero-mean draw with second moment `spec.variance_scale`, never below `spec.lower_bound`.
///
/// When the nominal law would cross the bound, an asymmetric two-point law on
/// `{-L, v/L}` (with `L = -lower_bound`) keeps the mean and variance exact. If the bound is
/// zero no centred law exists and the draw is zero.
pub fn sample_noise<R: Rng + ?Sized>(spec: &NoiseSpec, rng: &mut R) -> NoiseDraw {
    let v = spec.variance_scale;
    if v <= 0.0 {
        return NoiseDraw {
            value: 0.0,
            fallback: false,
        };
    }
    if spec.fits() {
        let value = match spec.law {
            NoiseLaw::TwoPoint => {
                if rng.random::<bool>() {
                    v.sqrt()
                } else {
                    -v.sqrt()
                }
            }
            NoiseLaw::TruncatedUniform => {
                let r = (3.0 * v).sqrt();
                rng.random_range(-r..=r)
            }
        };
        return NoiseDraw {
            value,
            fallback: false,
        };
    }
    let l = -spec.lower_bound;
    if l <= 0.0 {
        return NoiseDraw {
            value: 0.0,
            fallback: true,
        };
    }
    let p_low = v / (l * l + v);
    let value = if rng.random::<f64>() < p_low {
        -l
    } else {
        v / l
    };
    NoiseDraw {
        value,
        fallback: true,
    }
}

fn settle(species: Species, raw: f64, scale: f64) -> Result<f64, MicrodynError> {
    if raw >= 0.0 {
        Ok(raw)
    } else if raw >= -ROUNDING_SLACK * scale.max(1.0) {
        Ok(0.0)
    } else {
        Err(MicrodynError::PositivityViolation {
            species,
            value: raw,
        })
    }
}

fn noise_term(size: f64, eta: f64, threshold: f64, params: &ModelParams) -> (f64, bool) {
    if size >= threshold {
        (size.powf(params.p.value()) * eta, false)
    } else {
        (0.0, true)
    }
}

/// Prey update after meeting a predator of size `y`.
pub fn prey_update(
    x: f64,
    y: f64,
    eta1: f64,
    params: &ModelParams,
) -> Result<InteractionOutcome, MicrodynError> {
    let threshold = (1.0 - params.p.value()) * params.s0;
    let (noise, cutoff_active) = noise_term(x, eta1, threshold, params);
    let new_size = settle(Species::Prey, x - holling_phi(y, params) * x + noise, x)?;
    Ok(InteractionOutcome {
        new_size,
        applied_noise: noise,
        cutoff_active,
    })
}

/// Predator update after meeting a prey of size `x`.
pub fn predator_update(
    y: f64,
    x: f64,
    eta2: f64,
    params: &ModelParams,
) -> Result<InteractionOutcome, MicrodynError> {
    let threshold = (1.0 - params.p.value()) * params.s0;
    let (noise, cutoff_active) = noise_term(y, eta2, threshold, params);
    let new_size = settle(Species::Predator, y + holling_psi(x, params) * y + noise, y)?;
    Ok(InteractionOutcome {
        new_size,
        applied_noise: noise,
        cutoff_active,
    })
}

/// Binary prey-predator interaction `(x, y) -> (x', y')`.
pub fn prey_predator_step(
    x: f64,
    y: f64,
    (eta1, eta2): (f64, f64),
    params: &ModelParams,
) -> Result<(InteractionOutcome, InteractionOutcome), MicrodynError> {
    Ok((
        prey_update(x, y, eta1, params)?,
        predator_update(y, x, eta2, params)?,
    ))
}

/// Competition between a prey of size `x` and another prey of size `x_star`.
/// Always uses the square-root noise with cutoff `s0 / 2`.
pub fn intraspecific_step(
    x: f64,
    x_star: f64,
    eta: f64,
    params: &ModelParams,
) -> Result<InteractionOutcome, MicrodynError> {
    let (noise, cutoff_active) = if x >= params.s0 / 2.0 {
        (x.sqrt() * eta, false)
    } else {
        (0.0, true)
    };
    let new_size = settle(
        Species::Prey,
        x - competition_response(x_star, params) * x + noise,
        x,
    )?;
    Ok(InteractionOutcome {
        new_size,
        applied_noise: noise,
        cutoff_active,
    })
}

/// Exchange with the environment: `x + alpha (z - chi x)` for prey, `y + nu (z - theta y)`
/// for predators.
pub fn redistribution_step(size: f64, z: f64, params: &ModelParams, species: Species) -> f64 {
    match species {
        Species::Prey => size + params.alpha * (z - params.chi * size),
        Species::Predator => size + params.nu * (z - params.theta * size),
    }
}

/// Law of the environment resource `z` given its prescribed mean.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum Environment {
    /// `z` equal to its mean.
    #[default]
    Dirac,
    /// Gamma distributed `z` with the given shape and the prescribed mean.
    Gamma { shape: f64 },
}

impl Environment {
    pub fn validate(&self) -> Result<(), MicrodynError> {
        match *self {
            Environment::Gamma { shape } if !(shape > 0.0 && shape.is_finite()) => {
                Err(MicrodynError::InvalidEnvironment(shape))
            }
            _ => Ok(()),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, mean: f64, rng: &mut R) -> f64 {
        match *self {
            Environment::Dirac => mean,
            Environment::Gamma { shape } => {
                if mean <= 0.0 {
                    return 0.0;
                }
                Gamma::new(shape, mean / shape)
                    .expect("shape validated positive")
                    .sample(rng)
            }
        }
    }

    /// `E[z^2]` for the given mean.
    pub fn second_moment(&self, mean: f64) -> f64 {
        match *self {
            Environment::Dirac => mean * mean,
            Environment::Gamma { shape } => mean * mean * (1.0 + 1.0 / shape),
        }
    }
}

/// Prescribed environment means `((chi + 1) m1, (theta + 1) m2)`.
pub fn environment_means(m1: f64, m2: f64, params: &ModelParams) -> (f64, f64) {
    ((params.chi + 1.0) * m1, (params.theta + 1.0) * m2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::NoiseExponent;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn reference() -> ModelParams {
        ModelParams::reference()
    }

    #[test]
    fn holling_limits() {
        let p = reference();
        assert_eq!(holling_phi(0.0, &p), 0.0);
        assert!((holling_phi(1e12, &p) - p.beta).abs() < 1e-9);
        assert_eq!(holling_psi(p.mu, &p), 0.0);
        assert!((holling_psi(0.0, &p) + p.gamma * p.mu).abs() < 1e-15);
    }

    #[test]
    fn zero_prey_stays_zero() {
        let p = reference();
        for y in [0.0, 1.0, 50.0] {
            let out = prey_update(0.0, y, -0.01, &p).unwrap();
            assert_eq!(out.new_size, 0.0);
            assert!(out.cutoff_active);
        }
    }

    #[test]
    fn deterministic_skeleton_p_one() {
        let p = ModelParams {
            p: NoiseExponent::One,
            ..reference()
        };
        let (a, b) = prey_predator_step(2.0, 3.0, (0.0, 0.0), &p).unwrap();
        assert!((a.new_size - 2.0 * (1.0 - holling_phi(3.0, &p))).abs() < 1e-15);
        assert!((b.new_size - 3.0 * (1.0 + holling_psi(2.0, &p))).abs() < 1e-15);
    }

    #[test]
    fn cutoff_suppresses_noise() {
        let p = reference();
        let x = 0.4 * p.s0 * 0.5;
        let out = prey_update(x, 2.0, 0.05, &p).unwrap();
        assert!(out.cutoff_active);
        assert_eq!(out.applied_noise, 0.0);
        assert!((out.new_size - x * (1.0 - holling_phi(2.0, &p))).abs() < 1e-16);
    }

    #[test]
    fn intraspecific_examples() {
        let p = reference().with_carrying_capacity(10.0);
        let out = intraspecific_step(2.0, 0.0, 0.0, &p).unwrap();
        assert_eq!(out.new_size, 2.0);
        let out = intraspecific_step(2.0, 1e15, 0.0, &p).unwrap();
        assert!((out.new_size - 2.0 * (1.0 - 0.1)).abs() < 1e-12);
        let x = p.s0 / 4.0;
        let out = intraspecific_step(x, 3.0, 0.2, &p).unwrap();
        assert!(out.cutoff_active);
        assert!((out.new_size - x * (1.0 - competition_response(3.0, &p))).abs() < 1e-16);
    }

    #[test]
    fn redistribution_examples() {
        let p = reference();
        assert_eq!(redistribution_step(2.0, 1.0, &p, Species::Prey), 3.0);
        let q = ModelParams {
            alpha: 0.01,
            chi: 0.5,
            ..reference()
        };
        assert!((redistribution_step(2.0, 0.0, &q, Species::Prey) - 1.99).abs() < 1e-15);
        assert_eq!(redistribution_step(2.0, 1.0, &q, Species::Prey), 2.0);
    }

    #[test]
    fn zero_variance_noise_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = NoiseSpec::prey(0.0, &reference());
        assert_eq!(sample_noise(&spec, &mut rng).value, 0.0);
    }

    #[test]
    fn two_point_law_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = reference();
        let spec = NoiseSpec::prey(2.0, &p);
        let v = p.sigma1 * 2.0 / 3.0;
        let n = 1_000_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let d = sample_noise(&spec, &mut rng);
            assert!(!d.fallback);
            assert!((d.value.abs() - v.sqrt()).abs() < 1e-15);
            s += d.value;
            s2 += d.value * d.value;
        }
        let mean = s / n as f64;
        assert!(mean.abs() < 4.0 * v.sqrt() / 1000.0);
        assert!((s2 / n as f64 - v).abs() < 0.01 * v);
    }

    #[test]
    fn fallback_law_keeps_moments_and_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = NoiseSpec {
            law: NoiseLaw::TwoPoint,
            variance_scale: 0.09,
            lower_bound: -0.1,
        };
        assert!(!spec.fits());
        let n = 400_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let d = sample_noise(&spec, &mut rng);
            assert!(d.fallback);
            assert!(d.value >= -0.1);
            s += d.value;
            s2 += d.value * d.value;
        }
        let sd = (0.09f64 / n as f64).sqrt();
        assert!((s / n as f64).abs() < 5.0 * sd);
        assert!((s2 / n as f64 - 0.09).abs() < 0.03 * 0.09);
    }

    #[test]
    fn uniform_law_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = NoiseSpec::predator(1.0, &reference().scaled(0.01))
            .with_law(NoiseLaw::TruncatedUniform);
        let v = spec.variance_scale;
        let n = 400_000;
        let s2: f64 = (0..n)
            .map(|_| sample_noise(&spec, &mut rng).value.powi(2))
            .sum();
        assert!((s2 / n as f64 - v).abs() < 0.01 * v);
    }

    #[test]
    fn environment_laws() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        assert_eq!(Environment::Dirac.sample(2.5, &mut rng), 2.5);
        let env = Environment::Gamma { shape: 4.0 };
        let n = 200_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let z = env.sample(2.0, &mut rng);
            s += z;
            s2 += z * z;
        }
        assert!((s / n as f64 - 2.0).abs() < 0.01);
        assert!((s2 / n as f64 - env.second_moment(2.0)).abs() < 0.03);
        assert!(Environment::Gamma { shape: 0.0 }.validate().is_err());
    }
}
