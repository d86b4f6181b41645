//! Monte Carlo particle solver of the Boltzmann-type system in the quasi-invariant regime.
//!
//! Interactions and redistribution act with the microscopic rates of
//! [`ModelParams::scaled`] and fire at frequency `kappa / epsilon` per unit of macroscopic time,
//! so that the means follow the Lotka-Volterra system for every `epsilon` and the densities
//! approach the Fokker-Planck solution as `epsilon -> 0`.
//!
//! Two schemes are available. [`Scheme::EventDriven`] simulates the jump process exactly by
//! uniformization: candidate events arrive at a constant total rate computed from the running
//! kernel majorants and are thinned by `kappa / majorant`. [`Scheme::TimeStepped`] is a
//! one-sided Nanbu scheme on a fixed step, parallel over particles with counter-based random
//! streams, whose results do not depend on the thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma};
use rayon::prelude::*;
use thiserror::Error;

use crate::fokker_planck::{DensityField, Grid};
use crate::microdyn::{
    self, environment_means, intraspecific_step, predator_update, prey_update, redistribution_step,
    sample_noise, Environment, MicrodynError, NoiseLaw, NoiseSpec, Species,
};
use crate::moments::{MomentState, VarianceModel};
use crate::params::{ModelParams, NoiseExponent, Variant};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum McError {
    #[error("acceptance probability {prob} exceeds one; reduce dt below {max_dt:e}")]
    StepTooLarge { prob: f64, max_dt: f64 },
    #[error("epsilon must lie in (0, 1], got {0}")]
    InvalidEpsilon(f64),
    #[error("ensemble needs at least two particles per species")]
    TooFewParticles,
    #[error("logistic variant requires a carrying capacity and the noise exponent 1/2")]
    InvalidLogistic,
    #[error("invalid initial moments: mean {mean}, variance {variance}")]
    InvalidInitialMoments { mean: f64, variance: f64 },
    #[error(transparent)]
    Micro(#[from] MicrodynError),
}

/// Two weighted samples, one per species, each particle carrying weight `1/N`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleEnsemble {
    pub preys: Vec<f64>,
    pub predators: Vec<f64>,
    pub t: f64,
    pub epsilon: f64,
    pub rng_seed: u64,
}

impl ParticleEnsemble {
    /// Independent Gamma samples with the given means and variances. A zero variance gives a
    /// point mass.
    pub fn from_gamma(
        n: usize,
        prey: (f64, f64),
        predator: (f64, f64),
        epsilon: f64,
        seed: u64,
    ) -> Result<Self, McError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let mut draw = |(mean, variance): (f64, f64)| -> Result<Vec<f64>, McError> {
            if !(mean > 0.0 && variance >= 0.0) {
                return Err(McError::InvalidInitialMoments { mean, variance });
            }
            if variance == 0.0 {
                return Ok(vec![mean; n]);
            }
            let law = Gamma::new(mean * mean / variance, variance / mean)
                .map_err(|_| McError::InvalidInitialMoments { mean, variance })?;
            Ok((0..n).map(|_| law.sample(&mut rng)).collect())
        };
        Ok(Self {
            preys: draw(prey)?,
            predators: draw(predator)?,
            t: 0.0,
            epsilon,
            rng_seed: seed,
        })
    }

    pub fn sizes(&self, species: Species) -> &[f64] {
        match species {
            Species::Prey => &self.preys,
            Species::Predator => &self.predators,
        }
    }
}

/// Running upper bounds of the interaction kernel `kappa(s) = 1 + s`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelMajorant {
    pub prey: f64,
    pub predator: f64,
}

impl KernelMajorant {
    pub fn of(ensemble: &ParticleEnsemble) -> Self {
        let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
        Self {
            prey: 1.0 + max(&ensemble.preys),
            predator: 1.0 + max(&ensemble.predators),
        }
    }
}

pub fn kernel(s: f64) -> f64 {
    1.0 + s
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Scheme {
    #[default]
    EventDriven,
    TimeStepped,
}

#[derive(Clone, Debug, PartialEq)]
pub struct McConfig {
    /// Macroscopic parameters; the microscopic rates are derived with `epsilon`.
    pub params: ModelParams,
    pub variant: Variant,
    pub epsilon: f64,
    pub scheme: Scheme,
    pub environment: Environment,
    pub noise_law: NoiseLaw,
    pub seed: u64,
}

impl McConfig {
    pub fn new(params: ModelParams, variant: Variant, epsilon: f64, seed: u64) -> Self {
        Self {
            params,
            variant,
            epsilon,
            scheme: Scheme::default(),
            environment: Environment::default(),
            noise_law: NoiseLaw::default(),
            seed,
        }
    }
}

/// Counters of exceptional events.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct McStats {
    /// Candidate events proposed (event-driven) or particle updates attempted (time-stepped).
    pub candidates: u64,
    /// Interactions and redistributions actually applied.
    pub accepted: u64,
    /// Noise draws that needed the asymmetric fallback law.
    pub noise_fallbacks: u64,
}

pub struct McSimulator {
    cfg: McConfig,
    micro: ModelParams,
    pub ensemble: ParticleEnsemble,
    rng: ChaCha8Rng,
    step_index: u64,
    pub stats: McStats,
}

impl McSimulator {
    pub fn new(cfg: McConfig, mut ensemble: ParticleEnsemble) -> Result<Self, McError> {
        if !(cfg.epsilon > 0.0 && cfg.epsilon <= 1.0) {
            return Err(McError::InvalidEpsilon(cfg.epsilon));
        }
        if ensemble.preys.len() < 2 || ensemble.predators.len() < 2 {
            return Err(McError::TooFewParticles);
        }
        if cfg.variant == Variant::Logistic
            && (cfg.params.carrying_capacity.is_none() || cfg.params.p != NoiseExponent::Half)
        {
            return Err(McError::InvalidLogistic);
        }
        cfg.environment.validate()?;
        ensemble.epsilon = cfg.epsilon;
        ensemble.rng_seed = cfg.seed;
        Ok(Self {
            micro: cfg.params.scaled(cfg.epsilon),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
            ensemble,
            step_index: 0,
            stats: McStats::default(),
        })
    }

    pub fn config(&self) -> &McConfig {
        &self.cfg
    }

    /// Microscopic rates in use.
    pub fn micro_params(&self) -> &ModelParams {
        &self.micro
    }

    pub fn t(&self) -> f64 {
        self.ensemble.t
    }

    /// Advances by `dt` with the configured scheme.
    pub fn step(&mut self, dt: f64) -> Result<(), McError> {
        match self.cfg.scheme {
            Scheme::EventDriven => self.advance_to(self.ensemble.t + dt),
            Scheme::TimeStepped => self.mc_step(dt),
        }
    }

    /// Runs to `t_end`, calling `observe` at the start and every `checkpoint` time units.
    /// With the time-stepped scheme each checkpoint interval is split into steps of at most
    /// `dt`.
    pub fn run(
        &mut self,
        t_end: f64,
        checkpoint: f64,
        dt: f64,
        mut observe: impl FnMut(&McSimulator),
    ) -> Result<(), McError> {
        let t0 = self.ensemble.t;
        let n_checks = (((t_end - t0) / checkpoint) - 1e-9).ceil().max(0.0) as usize;
        observe(self);
        for k in 0..n_checks {
            let target = if k + 1 == n_checks {
                t_end
            } else {
                t0 + (k + 1) as f64 * checkpoint
            };
            match self.cfg.scheme {
                Scheme::EventDriven => self.advance_to(target)?,
                Scheme::TimeStepped => {
                    let span = target - self.ensemble.t;
                    let n = (span / dt - 1e-9).ceil().max(1.0) as usize;
                    let h = span / n as f64;
                    for _ in 0..n {
                        self.mc_step(h)?;
                    }
                    self.ensemble.t = target;
                }
            }
            observe(self);
        }
        Ok(())
    }

    /// Exact simulation of the jump process up to time `target`.
    pub fn advance_to(&mut self, target: f64) -> Result<(), McError> {
        let micro = &self.micro;
        let logistic = self.cfg.variant == Variant::Logistic;
        let env = self.cfg.environment;
        let law = self.cfg.noise_law;
        let inv_eps = 1.0 / self.cfg.epsilon;
        let ens = &mut self.ensemble;
        let rng = &mut self.rng;
        let stats = &mut self.stats;
        let (n1, n2) = (ens.preys.len(), ens.predators.len());
        let (n1f, n2f) = (n1 as f64, n2 as f64);
        let mut maj = KernelMajorant::of(ens);
        let mut sum1: f64 = ens.preys.iter().sum();
        let mut sum2: f64 = ens.predators.iter().sum();
        let mut t = ens.t;

        loop {
            let r_prey = n1f * maj.predator;
            let r_pred = n2f * maj.prey;
            let r_comp = if logistic { n1f * maj.prey } else { 0.0 };
            let total = r_prey + r_pred + n1f + n2f + r_comp;
            let wait: f64 = Exp1.sample(rng);
            t += wait / (total * inv_eps);
            if t >= target {
                break;
            }
            stats.candidates += 1;
            let mut u = rng.random::<f64>() * total;
            if u < r_prey {
                let i = rng.random_range(0..n1);
                let y = ens.predators[rng.random_range(0..n2)];
                if rng.random::<f64>() * maj.predator < kernel(y) {
                    let draw = sample_noise(&NoiseSpec::prey(y, micro).with_law(law), rng);
                    stats.noise_fallbacks += draw.fallback as u64;
                    let x = ens.preys[i];
                    let new = prey_update(x, y, draw.value, micro)?.new_size;
                    sum1 += new - x;
                    ens.preys[i] = new;
                    maj.prey = maj.prey.max(kernel(new));
                    stats.accepted += 1;
                }
                continue;
            }
            u -= r_prey;
            if u < r_pred {
                let j = rng.random_range(0..n2);
                let x = ens.preys[rng.random_range(0..n1)];
                if rng.random::<f64>() * maj.prey < kernel(x) {
                    let draw = sample_noise(&NoiseSpec::predator(x, micro).with_law(law), rng);
                    stats.noise_fallbacks += draw.fallback as u64;
                    let y = ens.predators[j];
                    let new = predator_update(y, x, draw.value, micro)?.new_size;
                    sum2 += new - y;
                    ens.predators[j] = new;
                    maj.predator = maj.predator.max(kernel(new));
                    stats.accepted += 1;
                }
                continue;
            }
            u -= r_pred;
            if u < n1f {
                let i = rng.random_range(0..n1);
                let (zm, _) = environment_means(sum1 / n1f, 0.0, micro);
                let z = env.sample(zm, rng);
                let x = ens.preys[i];
                let new = redistribution_step(x, z, micro, Species::Prey);
                sum1 += new - x;
                ens.preys[i] = new;
                maj.prey = maj.prey.max(kernel(new));
                stats.accepted += 1;
                continue;
            }
            u -= n1f;
            if u < n2f {
                let j = rng.random_range(0..n2);
                let (_, zm) = environment_means(0.0, sum2 / n2f, micro);
                let z = env.sample(zm, rng);
                let y = ens.predators[j];
                let new = redistribution_step(y, z, micro, Species::Predator);
                sum2 += new - y;
                ens.predators[j] = new;
                maj.predator = maj.predator.max(kernel(new));
                stats.accepted += 1;
                continue;
            }
            // intraspecific competition with a distinct prey
            let i = rng.random_range(0..n1);
            let mut k = rng.random_range(0..n1 - 1);
            if k >= i {
                k += 1;
            }
            let x_star = ens.preys[k];
            if rng.random::<f64>() * maj.prey < kernel(x_star) {
                let draw =
                    sample_noise(&NoiseSpec::intraspecific(x_star, micro).with_law(law), rng);
                stats.noise_fallbacks += draw.fallback as u64;
                let x = ens.preys[i];
                let new = intraspecific_step(x, x_star, draw.value, micro)?.new_size;
                sum1 += new - x;
                ens.preys[i] = new;
                maj.prey = maj.prey.max(kernel(new));
                stats.accepted += 1;
            }
        }
        ens.t = target;
        Ok(())
    }

    /// One Nanbu step of length `dt` on the pre-step snapshot.
    pub fn mc_step(&mut self, dt: f64) -> Result<(), McError> {
        let eps = self.cfg.epsilon;
        let maj = KernelMajorant::of(&self.ensemble);
        let logistic = self.cfg.variant == Variant::Logistic;
        let worst = maj.prey.max(maj.predator) * dt / eps;
        if worst > 1.0 {
            return Err(McError::StepTooLarge {
                prob: worst,
                max_dt: eps / maj.prey.max(maj.predator),
            });
        }
        let micro = &self.micro;
        let env = self.cfg.environment;
        let law = self.cfg.noise_law;
        let seed = self.cfg.seed;
        let step = self.step_index;
        let old_prey = &self.ensemble.preys;
        let old_pred = &self.ensemble.predators;
        let (n1, n2) = (old_prey.len(), old_pred.len());
        let m1 = old_prey.iter().sum::<f64>() / n1 as f64;
        let m2 = old_pred.iter().sum::<f64>() / n2 as f64;
        let (z1, z2) = environment_means(m1, m2, micro);
        let p_redistribute = dt / eps;

        let new_prey: Vec<Result<(f64, u64), MicrodynError>> = (0..n1)
            .into_par_iter()
            .map(|i| {
                let mut rng = lane_rng(seed, step, Species::Prey, i as u64);
                let mut x = old_prey[i];
                let mut fallbacks = 0;
                let y = old_pred[rng.random_range(0..n2)];
                if rng.random::<f64>() < dt * kernel(y) / eps {
                    let draw = sample_noise(&NoiseSpec::prey(y, micro).with_law(law), &mut rng);
                    fallbacks += draw.fallback as u64;
                    x = prey_update(x, y, draw.value, micro)?.new_size;
                }
                if logistic {
                    let mut k = rng.random_range(0..n1 - 1);
                    if k >= i {
                        k += 1;
                    }
                    let x_star = old_prey[k];
                    if rng.random::<f64>() < dt * kernel(x_star) / eps {
                        let draw = sample_noise(
                            &NoiseSpec::intraspecific(x_star, micro).with_law(law),
                            &mut rng,
                        );
                        fallbacks += draw.fallback as u64;
                        x = intraspecific_step(x, x_star, draw.value, micro)?.new_size;
                    }
                }
                if rng.random::<f64>() < p_redistribute {
                    x = redistribution_step(x, env.sample(z1, &mut rng), micro, Species::Prey);
                }
                Ok((x, fallbacks))
            })
            .collect();
        let new_pred: Vec<Result<(f64, u64), MicrodynError>> = (0..n2)
            .into_par_iter()
            .map(|j| {
                let mut rng = lane_rng(seed, step, Species::Predator, j as u64);
                let mut y = old_pred[j];
                let mut fallbacks = 0;
                let x = old_prey[rng.random_range(0..n1)];
                if rng.random::<f64>() < dt * kernel(x) / eps {
                    let draw = sample_noise(&NoiseSpec::predator(x, micro).with_law(law), &mut rng);
                    fallbacks += draw.fallback as u64;
                    y = predator_update(y, x, draw.value, micro)?.new_size;
                }
                if rng.random::<f64>() < p_redistribute {
                    y = redistribution_step(y, env.sample(z2, &mut rng), micro, Species::Predator);
                }
                Ok((y, fallbacks))
            })
            .collect();

        let mut unpack = |v: Vec<Result<(f64, u64), MicrodynError>>| -> Result<Vec<f64>, McError> {
            let mut out = Vec::with_capacity(v.len());
            for r in v {
                let (s, f) = r?;
                self.stats.noise_fallbacks += f;
                out.push(s);
            }
            Ok(out)
        };
        let preys = unpack(new_prey)?;
        let predators = unpack(new_pred)?;
        self.stats.candidates += (n1 + n2) as u64;
        self.ensemble.preys = preys;
        self.ensemble.predators = predators;
        self.ensemble.t += dt;
        self.step_index += 1;
        Ok(())
    }
}

/// Independent random stream per (seed, step, species, particle).
fn lane_rng(seed: u64, step: u64, species: Species, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&step.to_le_bytes());
    key[16..24].copy_from_slice(&index.to_le_bytes());
    key[24] = match species {
        Species::Prey => 1,
        Species::Predator => 2,
    };
    ChaCha8Rng::from_seed(key)
}

/// Sample moments with their standard errors `sqrt(v / N)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentEstimate {
    pub state: MomentState,
    pub se1: f64,
    pub se2: f64,
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let ss: f64 = v.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, if v.len() > 1 { ss / (n - 1.0) } else { 0.0 })
}

/// Sample means and unbiased sample variances per species.
pub fn estimate_moments(ensemble: &ParticleEnsemble) -> MomentState {
    moment_estimate(ensemble).state
}

pub fn moment_estimate(ensemble: &ParticleEnsemble) -> MomentEstimate {
    let (m1, v1) = mean_var(&ensemble.preys);
    let (m2, v2) = mean_var(&ensemble.predators);
    MomentEstimate {
        state: MomentState::new(ensemble.t, m1, m2, v1, v2),
        se1: (v1 / ensemble.preys.len() as f64).sqrt(),
        se2: (v2 / ensemble.predators.len() as f64).sqrt(),
    }
}

/// Estimated right-hand side of the (non-closed) Boltzmann variance equations, in
/// macroscopic time. `leading` survives the quasi-invariant limit; `collisional` multiplies
/// `epsilon` and collects the second moments of the jumps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoltzmannVarianceRhs {
    pub leading: (f64, f64),
    pub collisional: (f64, f64),
    pub epsilon: f64,
}

impl BoltzmannVarianceRhs {
    pub fn total(&self) -> (f64, f64) {
        (
            self.leading.0 + self.epsilon * self.collisional.0,
            self.leading.1 + self.epsilon * self.collisional.1,
        )
    }
}

fn mean_of(v: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    v.iter().map(|&s| f(s)).sum::<f64>() / v.len() as f64
}

/// Evaluates every integral of the Boltzmann variance equations by averaging over the
/// ensemble. `params` are macroscopic; the cutoff uses the microscopic threshold
/// `epsilon * s0`.
pub fn boltzmann_variance_rhs_estimate(
    ensemble: &ParticleEnsemble,
    params: &ModelParams,
    model: VarianceModel,
    environment: Environment,
) -> BoltzmannVarianceRhs {
    let eps = ensemble.epsilon;
    let ModelParams {
        alpha,
        beta,
        gamma,
        mu,
        nu,
        sigma1,
        sigma2,
        chi,
        theta,
        ..
    } = *params;
    let xs = &ensemble.preys;
    let ys = &ensemble.predators;
    let (m1, v1) = mean_var(xs);
    let (m2, v2) = mean_var(ys);
    let e_x2 = v1 + m1 * m1;
    let e_y2 = v2 + m2 * m2;
    let p = match model {
        VarianceModel::POne => NoiseExponent::One,
        _ => NoiseExponent::Half,
    };
    let threshold = (1.0 - p.value()) * eps * params.s0;
    let active_moment = |v: &[f64]| {
        mean_of(v, |s| {
            if s >= threshold {
                s.powf(p.diffusion_power())
            } else {
                0.0
            }
        })
    };
    let (z1, z2) = environment_means(m1, m2, params);

    let mut prey_lead = -2.0 * (beta * m2 + alpha * chi) * v1 + sigma1 * m2 * active_moment(xs);
    let mut prey_coll = beta * beta * e_x2 * mean_of(ys, |y| y * y / (1.0 + y))
        + alpha
            * alpha
            * (environment.second_moment(z1) - 2.0 * chi * (chi + 1.0) * m1 * m1
                + chi * chi * e_x2);
    if model == VarianceModel::Logistic {
        let k = params.competition_rate();
        let cut = eps * params.s0 / 2.0;
        prey_lead +=
            -2.0 * k * m1 * v1 + sigma1 * m1 * mean_of(xs, |x| if x >= cut { x } else { 0.0 });
        prey_coll += k * k * e_x2 * mean_of(xs, |x| x * x / (1.0 + x));
    }
    let pred_lead = -2.0 * (gamma * (mu - m1) + nu * theta) * v2 + sigma2 * m1 * active_moment(ys);
    let pred_coll = gamma * gamma * e_y2 * mean_of(xs, |x| (x - mu) * (x - mu) / (1.0 + x))
        + nu * nu
            * (environment.second_moment(z2) - 2.0 * theta * (theta + 1.0) * m2 * m2
                + theta * theta * e_y2);
    BoltzmannVarianceRhs {
        leading: (prey_lead, pred_lead),
        collisional: (prey_coll, pred_coll),
        epsilon: eps,
    }
}

/// Second-order approximation of `E[g(s)]` for a size with mean `m` and variance `v`.
fn smooth_mean(g: impl Fn(f64) -> f64, g2: impl Fn(f64) -> f64, m: f64, v: f64) -> f64 {
    g(m) + 0.5 * g2(m) * v
}

/// Per-particle noise intensity `N d<M_i>/dt` of the empirical means, where `<.>` is the
/// quadratic variation: the summed squared jumps of every interaction channel.
fn mean_noise_intensity(
    s: &MomentState,
    params: &ModelParams,
    model: VarianceModel,
    environment: Environment,
    epsilon: f64,
) -> (f64, f64) {
    let ModelParams {
        alpha,
        beta,
        gamma,
        mu,
        nu,
        sigma1,
        sigma2,
        chi,
        theta,
        ..
    } = *params;
    let (m1, m2, v1, v2) = (s.m1, s.m2, s.v1, s.v2);
    let e_x2 = v1 + m1 * m1;
    let e_y2 = v2 + m2 * m2;
    // s^2 / (1 + s) and (s - mu)^2 / (1 + s) with their second derivatives
    let sat = |u: f64| u * u / (1.0 + u);
    let sat2 = |u: f64| 2.0 / (1.0 + u).powi(3);
    let shifted = |u: f64| (u - mu) * (u - mu) / (1.0 + u);
    let shifted2 = |u: f64| 2.0 * (1.0 + mu) * (1.0 + mu) / (1.0 + u).powi(3);
    let (noise_x, noise_y) = match model {
        VarianceModel::POne => (e_x2, e_y2),
        _ => (m1, m2),
    };
    let (z1, z2) = environment_means(m1, m2, params);
    let mut q1 = sigma1 * m2 * noise_x
        + epsilon
            * (beta * beta * e_x2 * smooth_mean(sat, sat2, m2, v2)
                + alpha
                    * alpha
                    * (environment.second_moment(z1) - 2.0 * chi * (chi + 1.0) * m1 * m1
                        + chi * chi * e_x2));
    if model == VarianceModel::Logistic {
        let k = params.competition_rate();
        q1 += sigma1 * m1 * m1 + epsilon * k * k * e_x2 * smooth_mean(sat, sat2, m1, v1);
    }
    let q2 = sigma2 * m1 * noise_y
        + epsilon
            * (gamma * gamma * e_y2 * smooth_mean(shifted, shifted2, m1, v1)
                + nu * nu
                    * (environment.second_moment(z2) - 2.0 * theta * (theta + 1.0) * m2 * m2
                        + theta * theta * e_y2));
    (q1, q2)
}

/// Jacobian of the mean system.
fn mean_jacobian(m1: f64, m2: f64, params: &ModelParams, variant: Variant) -> [[f64; 2]; 2] {
    let k = match variant {
        Variant::Malthusian => 0.0,
        Variant::Logistic => params.competition_rate(),
    };
    [
        [
            params.alpha - params.beta * m2 - 2.0 * k * m1,
            -params.beta * m1,
        ],
        [params.gamma * m2, params.gamma * m1 - params.delta()],
    ]
}

/// Standard errors of the empirical means of an `n`-particle run, from the linear noise
/// approximation of the particle system.
///
/// The empirical means follow the mean system exactly in expectation and fluctuate by
/// `O(n^(-1/2))`. Their covariance `S / n` solves `S' = J S + S J^T + Q`, where `J` is the
/// Jacobian of the mean system along `traj` and `Q` the noise intensity of every jump
/// channel evaluated from the moments in `traj`. Unlike `sqrt(v / n)`, this accounts for the
/// fluctuations that the mean-field coupling passes from particle to particle and that the
/// neutral Lotka-Volterra flow never damps. `initial` is the covariance of the initial means
/// times `n`, i.e. the initial variances for independent draws.
pub fn mean_standard_errors(
    traj: &[MomentState],
    params: &ModelParams,
    model: VarianceModel,
    environment: Environment,
    epsilon: f64,
    n: usize,
    initial: (f64, f64),
) -> Vec<(f64, f64)> {
    let variant = model.variant();
    // state: [S11, S12, S22]
    let rhs = |s: &MomentState, c: &[f64; 3]| -> [f64; 3] {
        let j = mean_jacobian(s.m1, s.m2, params, variant);
        let (q1, q2) = mean_noise_intensity(s, params, model, environment, epsilon);
        [
            2.0 * (j[0][0] * c[0] + j[0][1] * c[1]) + q1,
            j[0][0] * c[1] + j[0][1] * c[2] + j[1][0] * c[0] + j[1][1] * c[1],
            2.0 * (j[1][0] * c[1] + j[1][1] * c[2]) + q2,
        ]
    };
    let nf = n as f64;
    let se = |c: &[f64; 3]| ((c[0].max(0.0) / nf).sqrt(), (c[2].max(0.0) / nf).sqrt());
    let mut out = Vec::with_capacity(traj.len());
    let mut c = [initial.0, 0.0, initial.1];
    if traj.is_empty() {
        return out;
    }
    out.push(se(&c));
    for w in traj.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let h = b.t - a.t;
        let mid = MomentState::new(
            (a.t + b.t) / 2.0,
            (a.m1 + b.m1) / 2.0,
            (a.m2 + b.m2) / 2.0,
            (a.v1 + b.v1) / 2.0,
            (a.v2 + b.v2) / 2.0,
        );
        let shift = |k: &[f64; 3], f: f64| [c[0] + f * k[0], c[1] + f * k[1], c[2] + f * k[2]];
        let k1 = rhs(a, &c);
        let k2 = rhs(&mid, &shift(&k1, h / 2.0));
        let k3 = rhs(&mid, &shift(&k2, h / 2.0));
        let k4 = rhs(b, &shift(&k3, h));
        for i in 0..3 {
            c[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out.push(se(&c));
    }
    out
}

/// Histogram of one species normalized by the particle count, together with the fraction of
/// particles outside the grid.
pub fn empirical_density(
    ensemble: &ParticleEnsemble,
    grid: Grid,
    species: Species,
) -> (DensityField, f64) {
    let sizes = ensemble.sizes(species);
    let mut field = DensityField::zeros(grid, species);
    let w = 1.0 / (sizes.len() as f64 * grid.dx());
    let mut outside = 0usize;
    for &s in sizes {
        match grid.locate(s) {
            Some(i) => field.values[i] += w,
            None => outside += 1,
        }
    }
    (field, outside as f64 / sizes.len() as f64)
}

/// Whether the microdynamics layer accepts the current noise scale without fallback laws,
/// for reporting.
pub fn noise_fits(params: &ModelParams, epsilon: f64, max_partner: f64) -> bool {
    let micro = params.scaled(epsilon);
    microdyn::NoiseSpec::prey(max_partner, &micro).fits()
        && microdyn::NoiseSpec::predator(max_partner, &micro).fits()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> ModelParams {
        ModelParams::reference()
    }

    #[test]
    fn degenerate_and_two_point_moments() {
        let e = ParticleEnsemble {
            preys: vec![2.0; 10],
            predators: vec![1.0, 3.0],
            t: 0.0,
            epsilon: 0.1,
            rng_seed: 0,
        };
        let m = estimate_moments(&e);
        assert_eq!((m.m1, m.v1), (2.0, 0.0));
        assert_eq!((m.m2, m.v2), (2.0, 2.0));
    }

    #[test]
    fn zero_rates_leave_ensemble_invariant() {
        let p = ModelParams {
            alpha: 0.0,
            beta: 0.0,
            gamma: 0.0,
            nu: 0.0,
            sigma1: 0.0,
            sigma2: 0.0,
            ..reference()
        };
        let e = ParticleEnsemble::from_gamma(500, (4.0, 0.1), (3.0, 0.1), 0.1, 1).unwrap();
        for scheme in [Scheme::EventDriven, Scheme::TimeStepped] {
            let mut cfg = McConfig::new(p.clone(), Variant::Malthusian, 0.1, 9);
            cfg.scheme = scheme;
            let mut sim = McSimulator::new(cfg, e.clone()).unwrap();
            for _ in 0..20 {
                sim.step(0.01).unwrap();
            }
            assert_eq!(sim.ensemble.preys, e.preys);
            assert_eq!(sim.ensemble.predators, e.predators);
        }
    }

    #[test]
    fn counts_preserved_and_positive() {
        let e = ParticleEnsemble::from_gamma(1000, (4.0, 0.1), (3.0, 0.1), 0.1, 2).unwrap();
        let mut cfg = McConfig::new(reference(), Variant::Malthusian, 0.1, 3);
        cfg.scheme = Scheme::TimeStepped;
        let mut sim = McSimulator::new(cfg, e).unwrap();
        for _ in 0..10_000 {
            sim.mc_step(1e-3).unwrap();
        }
        assert_eq!(sim.ensemble.preys.len(), 1000);
        assert_eq!(sim.ensemble.predators.len(), 1000);
        assert!(sim.ensemble.preys.iter().all(|&x| x >= 0.0));
        assert!(sim.ensemble.predators.iter().all(|&y| y >= 0.0));
        assert!((sim.t() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn step_too_large_rejected() {
        let e = ParticleEnsemble::from_gamma(100, (4.0, 0.1), (3.0, 0.1), 0.01, 2).unwrap();
        let mut cfg = McConfig::new(reference(), Variant::Malthusian, 0.01, 3);
        cfg.scheme = Scheme::TimeStepped;
        let mut sim = McSimulator::new(cfg, e).unwrap();
        assert!(matches!(
            sim.mc_step(0.01),
            Err(McError::StepTooLarge { .. })
        ));
    }

    #[test]
    fn same_seed_same_trajectory() {
        let e = ParticleEnsemble::from_gamma(300, (4.0, 0.1), (3.0, 0.1), 0.05, 5).unwrap();
        let run = |scheme| {
            let mut cfg = McConfig::new(reference(), Variant::Malthusian, 0.05, 17);
            cfg.scheme = scheme;
            let mut sim = McSimulator::new(cfg, e.clone()).unwrap();
            sim.run(1.0, 0.25, 1e-3, |_| {}).unwrap();
            sim.ensemble
        };
        for scheme in [Scheme::EventDriven, Scheme::TimeStepped] {
            assert_eq!(run(scheme), run(scheme));
        }
    }

    #[test]
    fn density_histogram_normalization() {
        let e = ParticleEnsemble {
            preys: vec![0.55, 1.2, 1.3, 9.0],
            predators: vec![1.0, 1.0],
            t: 0.0,
            epsilon: 0.1,
            rng_seed: 0,
        };
        let g = Grid::new(0.0, 2.0, 20).unwrap();
        let (f, out) = empirical_density(&e, g, Species::Prey);
        assert!((out - 0.25).abs() < 1e-15);
        assert!((f.mass() + out - 1.0).abs() < 1e-15);
        assert!((f.values[5] - 0.25 / 0.1).abs() < 1e-12);
    }

    #[test]
    fn variance_rhs_estimate_without_dynamics_is_zero() {
        let p = ModelParams {
            alpha: 0.0,
            beta: 0.0,
            gamma: 0.0,
            nu: 0.0,
            sigma1: 0.0,
            sigma2: 0.0,
            ..reference()
        };
        let e = ParticleEnsemble::from_gamma(100, (4.0, 0.1), (3.0, 0.1), 0.1, 1).unwrap();
        let r = boltzmann_variance_rhs_estimate(&e, &p, VarianceModel::PHalf, Environment::Dirac);
        assert_eq!(r.total(), (0.0, 0.0));
    }

    #[test]
    fn degenerate_ensemble_gives_source_terms() {
        let p = reference();
        let (a, b) = p.m_star();
        let e = ParticleEnsemble::from_gamma(10, (a, 0.0), (b, 0.0), 1e-3, 1).unwrap();
        let r = boltzmann_variance_rhs_estimate(&e, &p, VarianceModel::PHalf, Environment::Dirac);
        assert!((r.leading.0 - p.sigma1 * a * b).abs() < 1e-15);
        assert!((r.leading.1 - p.sigma2 * a * b).abs() < 1e-15);
    }

    #[test]
    fn standard_errors_match_replica_spread() {
        let p = reference();
        let (n, eps, t_end) = (400, 0.05, 4.0);
        let v0 = (0.1, 0.1);
        let oracle = crate::moments::integrate_moments(
            MomentState::new(0.0, 4.0, 3.0, v0.0, v0.1),
            &p,
            VarianceModel::PHalf,
            &crate::moments::StepConfig::new(1e-3, t_end),
        )
        .unwrap();
        let se = mean_standard_errors(
            &oracle,
            &p,
            VarianceModel::PHalf,
            Environment::Dirac,
            eps,
            n,
            v0,
        );
        let end = oracle.last().unwrap();
        let reps = 80;
        let dev: Vec<(f64, f64)> = (0..reps)
            .map(|r| {
                let e = ParticleEnsemble::from_gamma(n, (4.0, v0.0), (3.0, v0.1), eps, 100 + r)
                    .unwrap();
                let mut sim = McSimulator::new(
                    McConfig::new(p.clone(), Variant::Malthusian, eps, 100 + r),
                    e,
                )
                .unwrap();
                sim.advance_to(t_end).unwrap();
                let m = estimate_moments(&sim.ensemble);
                (m.m1 - end.m1, m.m2 - end.m2)
            })
            .collect();
        let rms = |f: &dyn Fn(&(f64, f64)) -> f64| {
            (dev.iter().map(|d| f(d).powi(2)).sum::<f64>() / reps as f64).sqrt()
        };
        let (s1, s2) = *se.last().unwrap();
        // the naive iid error sqrt(v / n) underestimates the spread
        assert!(s1 > 1.5 * (end.v1 / n as f64).sqrt());
        assert!(
            (rms(&|d| d.0) / s1 - 1.0).abs() < 0.35,
            "{} vs {}",
            rms(&|d| d.0),
            s1
        );
        assert!(
            (rms(&|d| d.1) / s2 - 1.0).abs() < 0.35,
            "{} vs {}",
            rms(&|d| d.1),
            s2
        );
    }
}
