//! Gamma-type local equilibria of the Fokker-Planck system and their moments.

use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::fokker_planck::{coefficients, FpCoefficients};
use crate::microdyn::Species;
use crate::moments::{MeanState, MomentState};
use crate::params::{ModelParams, Variant};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EquilibriaError {
    #[error("{species} equilibrium exponents must be positive, got shape={shape}, rate={rate}")]
    NonPositiveExponent {
        species: Species,
        shape: f64,
        rate: f64,
    },
    #[error("logistic variant requires a carrying capacity")]
    MissingCarryingCapacity,
}

/// Gamma density `C x^(a-1) e^(-b x)` with `C = b^a / Gamma(a)`, stored in log form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaDensity {
    pub shape: f64,
    pub rate: f64,
    pub ln_norm: f64,
}

impl GammaDensity {
    pub fn new(shape: f64, rate: f64) -> Self {
        Self {
            shape,
            rate,
            ln_norm: shape * rate.ln() - ln_gamma(shape),
        }
    }

    /// Gamma law with the given mean and variance.
    pub fn from_moments(mean: f64, variance: f64) -> Self {
        Self::new(mean * mean / variance, mean / variance)
    }

    pub fn ln_density(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        self.ln_norm + (self.shape - 1.0) * x.ln() - self.rate * x
    }

    pub fn density(&self, x: f64) -> f64 {
        self.ln_density(x).exp()
    }

    pub fn norm(&self) -> f64 {
        self.ln_norm.exp()
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    pub fn variance(&self) -> f64 {
        self.shape / (self.rate * self.rate)
    }

    /// Mode `(a - 1) / b`, or zero when `a <= 1`.
    pub fn mode(&self) -> f64 {
        ((self.shape - 1.0) / self.rate).max(0.0)
    }
}

/// Local Gamma equilibria of both species at one instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaQuasiEquilibrium {
    pub t: f64,
    pub prey: GammaDensity,
    pub predator: GammaDensity,
}

impl GammaQuasiEquilibrium {
    pub fn a1(&self) -> f64 {
        self.prey.shape
    }
    pub fn b1(&self) -> f64 {
        self.prey.rate
    }
    pub fn a2(&self) -> f64 {
        self.predator.shape
    }
    pub fn b2(&self) -> f64 {
        self.predator.rate
    }
    pub fn c1(&self) -> f64 {
        self.prey.norm()
    }
    pub fn c2(&self) -> f64 {
        self.predator.norm()
    }

    pub fn species(&self, species: Species) -> &GammaDensity {
        match species {
            Species::Prey => &self.prey,
            Species::Predator => &self.predator,
        }
    }

    /// `(m1_eq, m2_eq, v1_eq, v2_eq)` as a moment state.
    pub fn moments(&self) -> MomentState {
        MomentState::new(
            self.t,
            self.prey.mean(),
            self.predator.mean(),
            self.prey.variance(),
            self.predator.variance(),
        )
    }
}

fn gamma_from_coefficients(
    c: &FpCoefficients,
    species: Species,
) -> Result<GammaDensity, EquilibriaError> {
    let shape = c.drift_intercept / c.diffusion;
    let rate = c.drift_slope / c.diffusion;
    if !(shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()) {
        return Err(EquilibriaError::NonPositiveExponent {
            species,
            shape,
            rate,
        });
    }
    Ok(GammaDensity::new(shape, rate))
}

fn require_k(params: &ModelParams, variant: Variant) -> Result<(), EquilibriaError> {
    if variant == Variant::Logistic && params.carrying_capacity.is_none() {
        return Err(EquilibriaError::MissingCarryingCapacity);
    }
    Ok(())
}

/// Gamma quasi-equilibrium (noise exponent one half) annihilating the flux at the given means.
pub fn gamma_params(
    means: &MeanState,
    params: &ModelParams,
    variant: Variant,
) -> Result<GammaQuasiEquilibrium, EquilibriaError> {
    require_k(params, variant)?;
    let (c1, c2) = coefficients(means.m1, means.m2, params, variant);
    Ok(GammaQuasiEquilibrium {
        t: means.t,
        prey: gamma_from_coefficients(&c1, Species::Prey)?,
        predator: gamma_from_coefficients(&c2, Species::Predator)?,
    })
}

/// Inverse Gamma profile `x^-(shape+1) e^(-scale/x)` of the noise exponent one case.
/// Normalized only when the shape is positive; no moments are provided.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InverseGammaEquilibrium {
    pub shape: f64,
    pub scale: f64,
    /// Log normalization `scale^shape / Gamma(shape)`, zero when unnormalized.
    pub ln_norm: f64,
    pub normalized: bool,
}

impl InverseGammaEquilibrium {
    pub fn from_coefficients(c: &FpCoefficients) -> Self {
        let shape = c.drift_slope / c.diffusion + 1.0;
        let scale = c.drift_intercept / c.diffusion;
        let normalized = shape > 0.0 && scale > 0.0;
        let ln_norm = if normalized {
            shape * scale.ln() - ln_gamma(shape)
        } else {
            0.0
        };
        Self {
            shape,
            scale,
            ln_norm,
            normalized,
        }
    }

    pub fn ln_density(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        self.ln_norm - (self.shape + 1.0) * x.ln() - self.scale / x
    }

    pub fn density(&self, x: f64) -> f64 {
        self.ln_density(x).exp()
    }
}

/// Inverse Gamma profiles for the prey and predator at the given means.
pub fn inverse_gamma_params(
    means: &MeanState,
    params: &ModelParams,
    variant: Variant,
) -> Result<(InverseGammaEquilibrium, InverseGammaEquilibrium), EquilibriaError> {
    require_k(params, variant)?;
    let (c1, c2) = coefficients(means.m1, means.m2, params, variant);
    Ok((
        InverseGammaEquilibrium::from_coefficients(&c1),
        InverseGammaEquilibrium::from_coefficients(&c2),
    ))
}

/// Means and variances of the local equilibria along a mean trajectory.
pub fn equilibrium_moments(
    traj: &[MeanState],
    params: &ModelParams,
    variant: Variant,
) -> Result<Vec<MomentState>, EquilibriaError> {
    traj.iter()
        .map(|m| gamma_params(m, params, variant).map(|g| g.moments()))
        .collect()
}

/// Coefficients mapping the equilibrium means back onto the solution means.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RescaledEquilibrium {
    pub lambda1: f64,
    pub lambda2: f64,
    /// `lambda_i * m_i_eq`, which equals the mean `m_i` itself.
    pub m_tilde: (f64, f64),
    /// Variances of the rescaled equilibrium populations.
    pub v_tilde: (f64, f64),
}

/// Rescaling identities of the Malthusian variant.
pub fn rescaled_identities(
    means: &MeanState,
    params: &ModelParams,
) -> Result<RescaledEquilibrium, EquilibriaError> {
    let eq = gamma_params(means, params, Variant::Malthusian)?;
    let ModelParams {
        alpha,
        beta,
        gamma,
        nu,
        sigma1,
        sigma2,
        chi,
        theta,
        ..
    } = *params;
    let (m1, m2) = (means.m1, means.m2);
    let lambda1 = (beta * m2 - alpha) / (alpha * (chi + 1.0)) + 1.0;
    let lambda2 = (params.delta() - gamma * m1) / (nu * (theta + 1.0)) + 1.0;
    Ok(RescaledEquilibrium {
        lambda1,
        lambda2,
        m_tilde: (lambda1 * eq.prey.mean(), lambda2 * eq.predator.mean()),
        v_tilde: (
            sigma1 * m1 * m2 / (2.0 * alpha * (chi + 1.0)),
            sigma2 * m1 * m2 / (2.0 * nu * (theta + 1.0)),
        ),
    })
}

/// Time-independent equilibrium at the coexistence point of the variant.
pub fn global_equilibrium(
    params: &ModelParams,
    variant: Variant,
) -> Result<GammaQuasiEquilibrium, EquilibriaError> {
    let (m1, m2) = match variant {
        Variant::Malthusian => params.m_star(),
        Variant::Logistic => params
            .m_inf()
            .ok_or(EquilibriaError::MissingCarryingCapacity)?,
    };
    gamma_params(&MeanState::new(0.0, m1, m2), params, variant)
}
