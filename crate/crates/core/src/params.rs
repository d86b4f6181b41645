//! Model constants shared by every layer of the model, and their admissibility checks.
//!
//! All rates are stored in macroscopic units, i.e. the units of the mean-field
//! Lotka-Volterra and Fokker-Planck equations. The particle simulator works with the
//! quasi-invariant microscopic rates obtained from [`ModelParams::scaled`].

use std::fmt;

use sha2::{Digest, Sha256};

use crate::moments::{self, MeanState};

/// Reference group size for both species. Fixed to one throughout.
pub const REFERENCE_SIZE: f64 = 1.0;

/// Exponent `p` of the multiplicative noise `x^p * eta`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NoiseExponent {
    Half,
    One,
}

impl NoiseExponent {
    pub fn value(self) -> f64 {
        match self {
            NoiseExponent::Half => 0.5,
            NoiseExponent::One => 1.0,
        }
    }

    /// Twice the exponent, i.e. the power of `x` multiplying the diffusion coefficient.
    pub fn diffusion_power(self) -> f64 {
        2.0 * self.value()
    }
}

impl fmt::Display for NoiseExponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseExponent::Half => f.write_str("1/2"),
            NoiseExponent::One => f.write_str("1"),
        }
    }
}

/// Prey growth law.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Exponential prey growth; mean dynamics are the classical closed-orbit system.
    Malthusian,
    /// Prey growth saturating at the carrying capacity `K`.
    Logistic,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Malthusian => f.write_str("malthusian"),
            Variant::Logistic => f.write_str("logistic"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    /// Prey growth rate.
    pub alpha: f64,
    /// Maximal predation rate.
    pub beta: f64,
    /// Maximal predator growth rate.
    pub gamma: f64,
    /// Minimal prey group inducing predator growth.
    pub mu: f64,
    /// Predator birth (redistribution) rate.
    pub nu: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    /// Prey redistribution shape.
    pub chi: f64,
    /// Predator redistribution shape.
    pub theta: f64,
    pub p: NoiseExponent,
    /// Positivity cutoff for the noise, in `(0, 1)`.
    pub s0: f64,
    /// Prey carrying capacity, only used by the logistic variant.
    pub carrying_capacity: Option<f64>,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self::reference()
    }
}

impl ModelParams {
    /// Reference parameter set: Malthusian growth, noise exponent one half, no carrying capacity.
    pub fn reference() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.5,
            gamma: 0.15,
            mu: 10.0,
            nu: 1.0,
            sigma1: 1e-3,
            sigma2: 1e-3,
            chi: 0.0,
            theta: 0.0,
            p: NoiseExponent::Half,
            s0: 0.5,
            carrying_capacity: None,
        }
    }

    pub fn with_carrying_capacity(mut self, k: f64) -> Self {
        self.carrying_capacity = Some(k);
        self
    }

    /// Predator death rate, always derived as `gamma * mu - nu`.
    pub fn delta(&self) -> f64 {
        self.gamma * self.mu - self.nu
    }

    /// Coexistence equilibrium of the Malthusian mean system, `(delta/gamma, alpha/beta)`.
    pub fn m_star(&self) -> (f64, f64) {
        (self.delta() / self.gamma, self.alpha / self.beta)
    }

    /// Coexistence equilibrium of the logistic mean system. `None` without a carrying capacity.
    pub fn m_inf(&self) -> Option<(f64, f64)> {
        let k = self.carrying_capacity?;
        let d = self.delta();
        Some((
            d / self.gamma,
            self.alpha * (self.gamma * k - d) / (self.beta * self.gamma * k),
        ))
    }

    /// `alpha / K`, zero when no carrying capacity is set.
    pub fn competition_rate(&self) -> f64 {
        self.carrying_capacity.map_or(0.0, |k| self.alpha / k)
    }

    /// Microscopic rates of the quasi-invariant regime: all interaction, redistribution and
    /// noise strengths are multiplied by `epsilon` and the noise cutoff shrinks to `epsilon * s0`.
    /// The carrying capacity is unchanged, so `alpha / K` scales with `alpha`.
    pub fn scaled(&self, epsilon: f64) -> Self {
        Self {
            alpha: epsilon * self.alpha,
            beta: epsilon * self.beta,
            gamma: epsilon * self.gamma,
            nu: epsilon * self.nu,
            sigma1: epsilon * self.sigma1,
            sigma2: epsilon * self.sigma2,
            s0: epsilon * self.s0,
            ..self.clone()
        }
    }

    /// Canonical `key=value` rendering, one parameter per line.
    pub fn canonical_string(&self) -> String {
        let k = self
            .carrying_capacity
            .map_or_else(|| "none".to_string(), |k| format!("{k:e}"));
        format!(
            "alpha={:e}\nbeta={:e}\ngamma={:e}\nmu={:e}\nnu={:e}\nsigma1={:e}\nsigma2={:e}\n\
             chi={:e}\ntheta={:e}\np={}\ns0={:e}\nK={}\n",
            self.alpha,
            self.beta,
            self.gamma,
            self.mu,
            self.nu,
            self.sigma1,
            self.sigma2,
            self.chi,
            self.theta,
            self.p,
            self.s0,
            k
        )
    }

    /// SHA-256 of [`Self::canonical_string`], hex encoded.
    pub fn hash_hex(&self) -> String {
        let digest = Sha256::digest(self.canonical_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self, variant: Variant) -> ValidationReport {
        self.validate_with(variant, &ValidateOptions::default())
    }

    /// Full admissibility check.
    ///
    /// The `chi`/`theta` conditions need the range of the mean trajectory and are only
    /// evaluated when `options.initial` is given; the `gamma * mu < 1` condition concerns the
    /// microscopic rates and is only evaluated when `options.epsilon` is given. Checks that could
    /// not be evaluated are listed in [`ValidationReport::deferred`].
    pub fn validate_with(&self, variant: Variant, options: &ValidateOptions) -> ValidationReport {
        let mut report = ValidationReport::default();
        let mut require = |ok: bool, constraint: &'static str, detail: String| {
            if !ok {
                report.violations.push(Violation { constraint, detail });
            }
        };

        require(
            self.alpha > 0.0,
            "alpha_positive",
            format!("alpha={} must be > 0", self.alpha),
        );
        require(
            self.beta > 0.0 && self.beta < 1.0,
            "beta_in_unit_interval",
            format!("beta={} must lie in (0,1)", self.beta),
        );
        require(
            self.gamma > 0.0 && self.gamma < 1.0,
            "gamma_in_unit_interval",
            format!("gamma={} must lie in (0,1)", self.gamma),
        );
        require(
            self.mu >= 1.0,
            "mu_at_least_one",
            format!("mu={} must be >= 1", self.mu),
        );
        require(
            self.nu > 0.0,
            "nu_positive",
            format!("nu={} must be > 0", self.nu),
        );
        require(
            self.delta() > 0.0,
            "delta_positive",
            format!("delta = gamma*mu - nu = {} must be > 0", self.delta()),
        );
        require(
            self.sigma1 > 0.0,
            "sigma1_positive",
            format!("sigma1={} must be > 0", self.sigma1),
        );
        require(
            self.sigma2 > 0.0,
            "sigma2_positive",
            format!("sigma2={} must be > 0", self.sigma2),
        );
        require(
            self.chi > -1.0,
            "chi_above_minus_one",
            format!("chi={} must be > -1", self.chi),
        );
        require(
            self.theta > -1.0,
            "theta_above_minus_one",
            format!("theta={} must be > -1", self.theta),
        );
        require(
            self.alpha * self.chi < 1.0,
            "alpha_chi_below_one",
            format!("alpha*chi={} must be < 1", self.alpha * self.chi),
        );
        require(
            self.nu * self.theta < 1.0,
            "nu_theta_below_one",
            format!("nu*theta={} must be < 1", self.nu * self.theta),
        );
        require(
            self.s0 > 0.0 && self.s0 < 1.0,
            "s0_in_unit_interval",
            format!("s0={} must lie in (0,1)", self.s0),
        );

        if variant == Variant::Logistic {
            match self.carrying_capacity {
                None => require(
                    false,
                    "carrying_capacity_set",
                    "logistic variant requires K".to_string(),
                ),
                Some(k) => {
                    require(
                        k > 0.0,
                        "carrying_capacity_positive",
                        format!("K={k} must be > 0"),
                    );
                    require(
                        self.alpha / k < 1.0,
                        "alpha_over_k_below_one",
                        format!("alpha/K={} must be < 1", self.alpha / k),
                    );
                    require(
                        self.gamma * k - self.delta() > 0.0,
                        "coexistence",
                        format!(
                            "gamma*K - delta = {} must be > 0",
                            self.gamma * k - self.delta()
                        ),
                    );
                }
            }
        }

        match options.epsilon {
            Some(eps) => {
                let gm = eps * self.gamma * self.mu;
                require(
                    gm < 1.0,
                    "gamma_mu_below_one",
                    format!("microscopic gamma*mu = {gm} must be < 1 (epsilon={eps})"),
                );
            }
            None => report.deferred.push("gamma_mu_below_one"),
        }

        // The orbit-dependent checks only make sense once the basic constraints hold.
        match options.initial {
            Some(initial) if report.violations.is_empty() => {
                match moments::admissible_bounds(initial, self, variant) {
                    Ok(bounds) => {
                        let mut require = |ok: bool, constraint: &'static str, detail: String| {
                            if !ok {
                                report.violations.push(Violation { constraint, detail });
                            }
                        };
                        require(
                            bounds.zeta1 > 0.0,
                            "chi_admissible",
                            format!(
                                "prey drift lower bound zeta1={} must be > 0 along the orbit",
                                bounds.zeta1
                            ),
                        );
                        require(
                            bounds.zeta2 > 0.0,
                            "theta_admissible",
                            format!(
                                "predator drift lower bound zeta2={} must be > 0 along the orbit",
                                bounds.zeta2
                            ),
                        );
                        report.bounds = Some(bounds);
                    }
                    Err(e) => report.violations.push(Violation {
                        constraint: "orbit_bounds",
                        detail: e.to_string(),
                    }),
                }
            }
            _ => {
                report.deferred.push("chi_admissible");
                report.deferred.push("theta_admissible");
            }
        }

        report
    }
}

/// Extra context for [`ModelParams::validate_with`].
#[derive(Clone, Copy, Debug, Default)]
pub struct ValidateOptions {
    /// Initial means; enables the orbit-dependent `chi`/`theta` checks.
    pub initial: Option<MeanState>,
    /// Quasi-invariant scale of the microscopic rates; enables the `gamma * mu < 1` check.
    pub epsilon: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub constraint: &'static str,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// Constraints that could not be evaluated with the information supplied.
    pub deferred: Vec<&'static str>,
    /// Orbit bounds, when the orbit-dependent checks ran.
    pub bounds: Option<AdmissibleBounds>,
}

impl ValidationReport {
    pub fn is_admissible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violates(&self, constraint: &str) -> bool {
        self.violations.iter().any(|v| v.constraint == constraint)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            writeln!(f, "parameters admissible")?;
        }
        for v in &self.violations {
            writeln!(f, "violated {}: {}", v.constraint, v.detail)?;
        }
        for d in &self.deferred {
            writeln!(f, "deferred {d}")?;
        }
        Ok(())
    }
}

/// Range of the mean trajectory and the derived drift lower bounds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdmissibleBounds {
    pub c1_lo: f64,
    pub c1_hi: f64,
    pub c2_lo: f64,
    pub c2_hi: f64,
    /// Minimal sup-norm distance of the orbit to the coexistence equilibrium.
    pub c0_lo: f64,
    /// Maximal sup-norm distance of the orbit to the coexistence equilibrium.
    pub c0_hi: f64,
    /// Lower bound of the prey drift slope along the orbit.
    pub zeta1: f64,
    /// Lower bound of the predator drift slope along the orbit.
    pub zeta2: f64,
}

impl AdmissibleBounds {
    /// Builds the bounds from the trajectory range; the `zeta` are the tightest admissible values.
    pub fn from_range(
        params: &ModelParams,
        variant: Variant,
        (c1_lo, c1_hi): (f64, f64),
        (c2_lo, c2_hi): (f64, f64),
        (c0_lo, c0_hi): (f64, f64),
    ) -> Self {
        let competition = match variant {
            Variant::Malthusian => 0.0,
            Variant::Logistic => params.competition_rate() * c1_lo,
        };
        Self {
            c1_lo,
            c1_hi,
            c2_lo,
            c2_hi,
            c0_lo,
            c0_hi,
            zeta1: params.beta * c2_lo + competition + params.alpha * params.chi,
            zeta2: params.gamma * (params.mu - c1_hi) + params.nu * params.theta,
        }
    }
}
