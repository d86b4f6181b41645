//! Plain-text `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored. Keys are the model parameters (`alpha`, `beta`,
//! `gamma`, `mu`, `nu`, `sigma1`, `sigma2`, `chi`, `theta`, `p`, `s0`, `K`, `xbar`, `ybar`)
//! and the run settings listed on [`RunSettings`]. Unknown or repeated keys are errors; missing
//! keys keep their defaults.

use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::boltzmann_mc::Scheme;
use crate::fokker_planck::CouplingMode;
use crate::microdyn::{Environment, NoiseLaw};
use crate::moments::MomentState;
use crate::params::{ModelParams, NoiseExponent, Variant, REFERENCE_SIZE};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` given twice")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: invalid value `{value}` for `{key}`")]
    InvalidValue {
        line: usize,
        key: String,
        value: String,
    },
    #[error("line {line}: `{key}` is fixed to 1")]
    ReferenceSize { line: usize, key: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Settings of a run beyond the model parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSettings {
    pub variant: Variant,
    /// ODE and Fokker-Planck step (`dt`).
    pub dt: f64,
    pub t_end: f64,
    pub n_particles: usize,
    pub epsilon: f64,
    pub n_cells: usize,
    /// Right end of the Fokker-Planck grid; derived from the orbit range when absent.
    pub x_max: Option<f64>,
    pub coupling_mode: CouplingMode,
    /// Initial means and variances (`m1_0`, `m2_0`, `v1_0`, `v2_0`).
    pub initial: MomentState,
    pub seed: u64,
    pub scheme: Scheme,
    /// Nanbu step of the time-stepped scheme (`mc_dt`).
    pub mc_dt: f64,
    /// Spacing of the Monte Carlo moment checkpoints (`checkpoint`).
    pub checkpoint: f64,
    /// `environment = dirac | gamma`, with `environment_shape` for the latter.
    pub environment: Environment,
    /// `noise_law = two_point | uniform`.
    pub noise_law: NoiseLaw,
    /// Keep every n-th integration step in the outputs (`output_every`).
    pub output_every: usize,
    /// Initial means of further orbits for the orbit figure, `extra_orbits = 5,4; 2.5,1.5`.
    pub extra_orbits: Vec<(f64, f64)>,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            variant: Variant::Malthusian,
            dt: 1e-3,
            t_end: 100.0,
            n_particles: 100_000,
            epsilon: 0.01,
            n_cells: 800,
            x_max: None,
            coupling_mode: CouplingMode::OdeFed,
            initial: MomentState::new(0.0, 4.0, 3.0, 0.1, 0.1),
            seed: 0,
            scheme: Scheme::EventDriven,
            mc_dt: 1e-3,
            checkpoint: 1.0,
            environment: Environment::Dirac,
            noise_law: NoiseLaw::TwoPoint,
            output_every: 10,
            extra_orbits: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub params: ModelParams,
    pub run: RunSettings,
}

fn parse_num<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::InvalidValue {
        line,
        key: key.to_string(),
        value: value.to_string(),
    })
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut seen: Vec<String> = Vec::new();
        let mut env_shape: Option<f64> = None;
        let mut env_gamma = false;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or(ConfigError::Syntax { line })?;
            if key.is_empty() {
                return Err(ConfigError::Syntax { line });
            }
            if seen.iter().any(|k| k == key) {
                return Err(ConfigError::DuplicateKey {
                    line,
                    key: key.to_string(),
                });
            }
            seen.push(key.to_string());
            match key {
                "environment" => match value {
                    "dirac" => env_gamma = false,
                    "gamma" => env_gamma = true,
                    _ => return Err(invalid(line, key, value)),
                },
                "environment_shape" => env_shape = Some(parse_num(line, key, value)?),
                _ => cfg.set(line, key, value)?,
            }
        }
        if env_gamma {
            cfg.run.environment = Environment::Gamma {
                shape: env_shape.unwrap_or(1.0),
            };
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Applies one `key = value` setting; `line` is only used in error messages.
    pub fn set(&mut self, line: usize, key: &str, value: &str) -> Result<(), ConfigError> {
        let p = &mut self.params;
        let r = &mut self.run;
        match key {
            "alpha" => p.alpha = parse_num(line, key, value)?,
            "beta" => p.beta = parse_num(line, key, value)?,
            "gamma" => p.gamma = parse_num(line, key, value)?,
            "mu" => p.mu = parse_num(line, key, value)?,
            "nu" => p.nu = parse_num(line, key, value)?,
            "sigma1" => p.sigma1 = parse_num(line, key, value)?,
            "sigma2" => p.sigma2 = parse_num(line, key, value)?,
            "chi" => p.chi = parse_num(line, key, value)?,
            "theta" => p.theta = parse_num(line, key, value)?,
            "s0" => p.s0 = parse_num(line, key, value)?,
            "p" => {
                p.p = match value {
                    "1/2" | "0.5" => NoiseExponent::Half,
                    "1" | "1.0" => NoiseExponent::One,
                    _ => return Err(invalid(line, key, value)),
                }
            }
            "K" => {
                p.carrying_capacity = match value {
                    "none" => None,
                    _ => Some(parse_num(line, key, value)?),
                }
            }
            "xbar" | "ybar" => {
                let v: f64 = parse_num(line, key, value)?;
                if v != REFERENCE_SIZE {
                    return Err(ConfigError::ReferenceSize {
                        line,
                        key: key.to_string(),
                    });
                }
            }
            "variant" => {
                r.variant = match value {
                    "malthusian" => Variant::Malthusian,
                    "logistic" => Variant::Logistic,
                    _ => return Err(invalid(line, key, value)),
                }
            }
            "dt" => r.dt = parse_num(line, key, value)?,
            "t_end" => r.t_end = parse_num(line, key, value)?,
            "n_particles" => r.n_particles = parse_num(line, key, value)?,
            "epsilon" => r.epsilon = parse_num(line, key, value)?,
            "n_cells" => r.n_cells = parse_num(line, key, value)?,
            "x_max" => r.x_max = Some(parse_num(line, key, value)?),
            "coupling_mode" => {
                r.coupling_mode = match value {
                    "ode_fed" => CouplingMode::OdeFed,
                    "self_consistent" => CouplingMode::SelfConsistent,
                    "pinned" => CouplingMode::Pinned,
                    _ => return Err(invalid(line, key, value)),
                }
            }
            "m1_0" => r.initial.m1 = parse_num(line, key, value)?,
            "m2_0" => r.initial.m2 = parse_num(line, key, value)?,
            "v1_0" => r.initial.v1 = parse_num(line, key, value)?,
            "v2_0" => r.initial.v2 = parse_num(line, key, value)?,
            "seed" => r.seed = parse_num(line, key, value)?,
            "scheme" => {
                r.scheme = match value {
                    "event" => Scheme::EventDriven,
                    "stepped" => Scheme::TimeStepped,
                    _ => return Err(invalid(line, key, value)),
                }
            }
            "mc_dt" => r.mc_dt = parse_num(line, key, value)?,
            "checkpoint" => r.checkpoint = parse_num(line, key, value)?,
            "noise_law" => {
                r.noise_law = match value {
                    "two_point" => NoiseLaw::TwoPoint,
                    "uniform" => NoiseLaw::TruncatedUniform,
                    _ => return Err(invalid(line, key, value)),
                }
            }
            "output_every" => r.output_every = parse_num::<usize>(line, key, value)?.max(1),
            "extra_orbits" => {
                r.extra_orbits = value
                    .split(';')
                    .map(str::trim)
                    .filter(|pair| !pair.is_empty())
                    .map(|pair| {
                        let (a, b) = pair
                            .split_once(',')
                            .ok_or_else(|| invalid(line, key, value))?;
                        Ok((
                            parse_num(line, key, a.trim())?,
                            parse_num(line, key, b.trim())?,
                        ))
                    })
                    .collect::<Result<_, ConfigError>>()?;
            }
            _ => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }
}

fn invalid(line: usize, key: &str, value: &str) -> ConfigError {
    ConfigError::InvalidValue {
        line,
        key: key.to_string(),
        value: value.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_table1() {
        let cfg = RunConfig::parse("# nothing\n\n").unwrap();
        assert_eq!(cfg.params, ModelParams::reference());
        assert_eq!(cfg.run, RunSettings::default());
    }

    #[test]
    fn parses_every_kind_of_key() {
        let text = "alpha = 2\np = 1\nK = 10 # capacity\nvariant = logistic\n\
                    coupling_mode = self_consistent\nscheme = stepped\nenvironment = gamma\n\
                    environment_shape = 3\nnoise_law = uniform\nm1_0 = 3.5\nxbar = 1\n\
                    extra_orbits = 5,4; 2.5, 1.5\n";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.params.alpha, 2.0);
        assert_eq!(cfg.params.p, NoiseExponent::One);
        assert_eq!(cfg.params.carrying_capacity, Some(10.0));
        assert_eq!(cfg.run.variant, Variant::Logistic);
        assert_eq!(cfg.run.coupling_mode, CouplingMode::SelfConsistent);
        assert_eq!(cfg.run.scheme, Scheme::TimeStepped);
        assert_eq!(cfg.run.environment, Environment::Gamma { shape: 3.0 });
        assert_eq!(cfg.run.noise_law, NoiseLaw::TruncatedUniform);
        assert_eq!(cfg.run.initial.m1, 3.5);
        assert_eq!(cfg.run.extra_orbits, vec![(5.0, 4.0), (2.5, 1.5)]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            RunConfig::parse("delta = 0.5"),
            Err(ConfigError::UnknownKey { line: 1, .. })
        ));
        assert!(matches!(
            RunConfig::parse("alpha 1"),
            Err(ConfigError::Syntax { line: 1 })
        ));
        assert!(matches!(
            RunConfig::parse("alpha = x"),
            Err(ConfigError::InvalidValue { .. })
        ));
        assert!(matches!(
            RunConfig::parse("alpha = 1\nalpha = 2"),
            Err(ConfigError::DuplicateKey { line: 2, .. })
        ));
        assert!(matches!(
            RunConfig::parse("ybar = 2"),
            Err(ConfigError::ReferenceSize { .. })
        ));
    }
}
