//! Finite-volume solver for the coupled Fokker-Planck system.
//!
//! Each species obeys `df/dt = d/dx F` with flux `F = D d/dx(x^(2p) f) + (A x - B) f`, where the
//! scalar coefficients depend on the two population means. The flux is discretized by
//! exponential fitting (the Scharfetter-Gummel form of the Chang-Cooper weights) and time is
//! advanced by backward Euler, so the scheme is positivity preserving, conservative and has the
//! sampled local equilibrium as its exact discrete steady state.

use thiserror::Error;

use crate::microdyn::Species;
use crate::moments::{rk4, MeanState};
use crate::params::{ModelParams, NoiseExponent, Variant};

/// Largest tolerated negative cell value.
pub const NEGATIVITY_TOL: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FpError {
    #[error("tridiagonal solve failed for {species} at t={t}")]
    SolverDiverged { species: Species, t: f64 },
    #[error("{species} density became negative ({value:e}) at t={t}")]
    Negativity {
        species: Species,
        value: f64,
        t: f64,
    },
    #[error("invalid grid: [{x_lo}, {x_hi}] with {n} cells")]
    InvalidGrid { x_lo: f64, x_hi: f64, n: usize },
    #[error("a steady state needs positive diffusion")]
    NoDiffusion,
    #[error("no steady state within {0} implicit steps")]
    NotConverged(usize),
    #[error("logistic variant requires a carrying capacity")]
    MissingCarryingCapacity,
}

/// Uniform cells on `[x_lo, x_hi]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub x_lo: f64,
    pub x_hi: f64,
    pub n: usize,
}

impl Grid {
    pub fn new(x_lo: f64, x_hi: f64, n: usize) -> Result<Self, FpError> {
        if !(x_lo >= 0.0 && x_hi > x_lo && n >= 2 && x_hi.is_finite()) {
            return Err(FpError::InvalidGrid { x_lo, x_hi, n });
        }
        Ok(Self { x_lo, x_hi, n })
    }

    /// Cells on `[0, x_max]`.
    pub fn uniform(x_max: f64, n: usize) -> Result<Self, FpError> {
        Self::new(0.0, x_max, n)
    }

    pub fn dx(&self) -> f64 {
        (self.x_hi - self.x_lo) / self.n as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.x_lo + (i as f64 + 0.5) * self.dx()
    }

    /// Left edge of cell `i`; `edge(n)` is the right end of the grid.
    pub fn edge(&self, i: usize) -> f64 {
        self.x_lo + i as f64 * self.dx()
    }

    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(|i| self.center(i))
    }

    /// Index of the cell containing `x`, if any.
    pub fn locate(&self, x: f64) -> Option<usize> {
        if x < self.x_lo || x >= self.x_hi {
            return None;
        }
        Some((((x - self.x_lo) / self.dx()) as usize).min(self.n - 1))
    }
}

/// Cell averages of one species' density.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityField {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub species: Species,
}

impl DensityField {
    pub fn zeros(grid: Grid, species: Species) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.n],
            species,
        }
    }

    /// Samples `f` at the cell centers.
    pub fn from_fn(grid: Grid, species: Species, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid,
            values: grid.centers().map(f).collect(),
            species,
        }
    }

    /// Samples `f` at the cell centers and rescales to unit mass.
    pub fn from_fn_normalized(grid: Grid, species: Species, f: impl Fn(f64) -> f64) -> Self {
        let mut field = Self::from_fn(grid, species, f);
        field.normalize();
        field
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.dx()
    }

    pub fn normalize(&mut self) {
        let m = self.mass();
        if m > 0.0 {
            self.values.iter_mut().for_each(|v| *v /= m);
        }
    }

    /// Midpoint-rule mean and variance, normalized by the discrete mass.
    pub fn moments(&self) -> (f64, f64) {
        fp_moments(self)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Midpoint-rule mean and variance of a field.
pub fn fp_moments(field: &DensityField) -> (f64, f64) {
    let g = &field.grid;
    let (mut s0, mut s1) = (0.0, 0.0);
    for (i, v) in field.values.iter().enumerate() {
        s0 += v;
        s1 += v * g.center(i);
    }
    let mean = s1 / s0;
    let s2: f64 = field
        .values
        .iter()
        .enumerate()
        .map(|(i, v)| v * (g.center(i) - mean).powi(2))
        .sum();
    (mean, s2 / s0)
}

/// Scalar coefficients of one species' flux `D d/dx(x^(2p) f) + (A x - B) f`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FpCoefficients {
    /// `D`
    pub diffusion: f64,
    /// `A`
    pub drift_slope: f64,
    /// `B`
    pub drift_intercept: f64,
}

/// Flux coefficients of both species at the given means. Without a carrying capacity the
/// logistic terms vanish.
pub fn coefficients(
    m1: f64,
    m2: f64,
    params: &ModelParams,
    variant: Variant,
) -> (FpCoefficients, FpCoefficients) {
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
    let prey = match variant {
        Variant::Malthusian => FpCoefficients {
            diffusion: sigma1 * m2 / 2.0,
            drift_slope: beta * m2 + alpha * chi,
            drift_intercept: alpha * (chi + 1.0) * m1,
        },
        Variant::Logistic => FpCoefficients {
            diffusion: sigma1 * (m1 + m2) / 2.0,
            drift_slope: beta * m2 + params.competition_rate() * m1 + alpha * chi,
            drift_intercept: alpha * (chi + 1.0) * m1,
        },
    };
    let predator = FpCoefficients {
        diffusion: sigma2 * m1 / 2.0,
        drift_slope: gamma * (mu - m1) + nu * theta,
        drift_intercept: nu * (theta + 1.0) * m2,
    };
    (prey, predator)
}

/// Bernoulli function `z / (e^z - 1)`.
fn bernoulli(z: f64) -> f64 {
    if z.abs() < 1e-10 {
        1.0 - z / 2.0
    } else {
        z / z.exp_m1()
    }
}

/// Increment of the potential whose exponential is the local equilibrium, between centers
/// `xa < xb`.
fn potential_jump(xa: f64, xb: f64, c: &FpCoefficients, p: NoiseExponent) -> f64 {
    let (a, b) = (c.drift_slope / c.diffusion, c.drift_intercept / c.diffusion);
    match p {
        NoiseExponent::Half => (1.0 - b) * (xb / xa).ln() + a * (xb - xa),
        NoiseExponent::One => (2.0 + a) * (xb / xa).ln() + b * (1.0 / xb - 1.0 / xa),
    }
}

/// Interface weights: the flux through the interface between cells `i` and `i+1` is
/// `right[i] * f[i+1] - left[i] * f[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FluxWeights {
    pub right: Vec<f64>,
    pub left: Vec<f64>,
}

pub fn flux_weights(grid: &Grid, c: &FpCoefficients, p: NoiseExponent) -> FluxWeights {
    let n = grid.n;
    let dx = grid.dx();
    let mut right = Vec::with_capacity(n - 1);
    let mut left = Vec::with_capacity(n - 1);
    for i in 0..n - 1 {
        let (xa, xb) = (grid.center(i), grid.center(i + 1));
        let xe = grid.edge(i + 1);
        if c.diffusion > 0.0 {
            let d = c.diffusion * xe.powf(p.diffusion_power()) / dx;
            let w = potential_jump(xa, xb, c, p);
            right.push(d * bernoulli(-w));
            left.push(d * bernoulli(w));
        } else {
            // pure transport, upwinded
            let v = c.drift_slope * xe - c.drift_intercept;
            right.push(v.max(0.0));
            left.push((-v).max(0.0));
        }
    }
    FluxWeights { right, left }
}

/// Numerical flux through every interior interface.
pub fn discrete_flux(field: &DensityField, c: &FpCoefficients, p: NoiseExponent) -> Vec<f64> {
    let w = flux_weights(&field.grid, c, p);
    (0..field.grid.n - 1)
        .map(|i| w.right[i] * field.values[i + 1] - w.left[i] * field.values[i])
        .collect()
}

/// Solves a tridiagonal system in place (Thomas algorithm); `None` on a vanishing pivot.
fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [f64]) -> Option<()> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut beta = diag[0];
    if beta == 0.0 || !beta.is_finite() {
        return None;
    }
    rhs[0] /= beta;
    for i in 1..n {
        c[i - 1] = upper[i - 1] / beta;
        beta = diag[i] - lower[i - 1] * c[i - 1];
        if beta == 0.0 || !beta.is_finite() {
            return None;
        }
        rhs[i] = (rhs[i] - lower[i - 1] * rhs[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
    Some(())
}

/// One backward Euler step of a single species with frozen coefficients.
pub fn implicit_step(
    field: &mut DensityField,
    c: &FpCoefficients,
    dt: f64,
    p: NoiseExponent,
    t: f64,
) -> Result<(), FpError> {
    let n = field.grid.n;
    let k = dt / field.grid.dx();
    let w = flux_weights(&field.grid, c, p);
    let mut diag = vec![1.0; n];
    let mut upper = vec![0.0; n - 1];
    let mut lower = vec![0.0; n - 1];
    for i in 0..n - 1 {
        // interface i+1/2 couples cells i and i+1
        diag[i] += k * w.left[i];
        diag[i + 1] += k * w.right[i];
        upper[i] = -k * w.right[i];
        lower[i] = -k * w.left[i];
    }
    let species = field.species;
    thomas(&lower, &diag, &upper, &mut field.values)
        .ok_or(FpError::SolverDiverged { species, t })?;
    for v in field.values.iter_mut() {
        if !v.is_finite() {
            return Err(FpError::SolverDiverged { species, t });
        }
        if *v < 0.0 {
            if *v < -NEGATIVITY_TOL {
                return Err(FpError::Negativity {
                    species,
                    value: *v,
                    t,
                });
            }
            *v = 0.0;
        }
    }
    Ok(())
}

/// Advances both species by `dt` with the given coefficients.
pub fn fp_step(
    prey: &mut DensityField,
    predator: &mut DensityField,
    coeffs: (FpCoefficients, FpCoefficients),
    dt: f64,
    p: NoiseExponent,
    t: f64,
) -> Result<(), FpError> {
    let (r1, r2) = rayon::join(
        || implicit_step(prey, &coeffs.0, dt, p, t),
        || implicit_step(predator, &coeffs.1, dt, p, t),
    );
    r1.and(r2)
}

/// Exact discrete steady state of the frozen-coefficient scheme, unit mass.
pub fn steady_state(
    grid: Grid,
    species: Species,
    c: &FpCoefficients,
    p: NoiseExponent,
) -> Result<DensityField, FpError> {
    if c.diffusion.is_nan() || c.diffusion <= 0.0 {
        return Err(FpError::NoDiffusion);
    }
    // zero discrete flux gives f[i+1] / f[i] = exp(-w_i)
    let mut log_f = Vec::with_capacity(grid.n);
    log_f.push(0.0);
    for i in 0..grid.n - 1 {
        let w = potential_jump(grid.center(i), grid.center(i + 1), c, p);
        log_f.push(log_f[i] - w);
    }
    let peak = log_f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut field = DensityField {
        grid,
        values: log_f.iter().map(|l| (l - peak).exp()).collect(),
        species,
    };
    field.normalize();
    Ok(field)
}

/// Marches the frozen-coefficient scheme with growing implicit steps until the largest change
/// per step falls below `tol`.
pub fn relax_to_steady_state(
    field: &mut DensityField,
    c: &FpCoefficients,
    p: NoiseExponent,
    tol: f64,
) -> Result<usize, FpError> {
    let mut dt = 1e-2;
    for iter in 1..=200 {
        let before = field.values.clone();
        implicit_step(field, c, dt, p, 0.0)?;
        let change = before
            .iter()
            .zip(&field.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if change <= tol {
            return Ok(iter);
        }
        dt = (dt * 2.0).min(1e8);
    }
    Err(FpError::NotConverged(200))
}

/// Source of the population means entering the coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum CouplingMode {
    /// Means from the Lotka-Volterra system integrated alongside.
    #[default]
    OdeFed,
    /// Means computed from the current fields.
    SelfConsistent,
    /// Means frozen at their initial values.
    Pinned,
}

/// Time-dependent solver for both species.
#[derive(Clone, Debug)]
pub struct FpSolver {
    pub params: ModelParams,
    pub variant: Variant,
    pub mode: CouplingMode,
    pub prey: DensityField,
    pub predator: DensityField,
    pub t: f64,
    /// Mean source of the ODE-fed and pinned modes.
    pub ode_means: MeanState,
}

impl FpSolver {
    /// `initial_means` feeds the ODE in the ODE-fed mode and the frozen coefficients in the
    /// pinned mode; it is ignored in the self-consistent mode.
    pub fn new(
        params: ModelParams,
        variant: Variant,
        mode: CouplingMode,
        prey: DensityField,
        predator: DensityField,
        initial_means: MeanState,
    ) -> Result<Self, FpError> {
        if variant == Variant::Logistic && params.carrying_capacity.is_none() {
            return Err(FpError::MissingCarryingCapacity);
        }
        Ok(Self {
            params,
            variant,
            mode,
            prey,
            predator,
            t: initial_means.t,
            ode_means: initial_means,
        })
    }

    /// Current means: field moments in self-consistent mode, the driving means otherwise.
    pub fn driving_means(&self) -> (f64, f64) {
        match self.mode {
            CouplingMode::SelfConsistent => (self.prey.moments().0, self.predator.moments().0),
            _ => (self.ode_means.m1, self.ode_means.m2),
        }
    }

    fn ode_advance(&self, from: &[f64; 2], h: f64) -> [f64; 2] {
        let f = |t: f64, y: &[f64; 2]| {
            let (a, b) = crate::moments::mean_rhs(
                &MeanState::new(t, y[0], y[1]),
                &self.params,
                self.variant,
            );
            [a, b]
        };
        rk4(&f, self.t, from, h)
    }

    pub fn step(&mut self, dt: f64) -> Result<(), FpError> {
        let p = self.params.p;
        match self.mode {
            CouplingMode::Pinned => {
                let c = coefficients(
                    self.ode_means.m1,
                    self.ode_means.m2,
                    &self.params,
                    self.variant,
                );
                fp_step(&mut self.prey, &mut self.predator, c, dt, p, self.t)?;
            }
            CouplingMode::OdeFed => {
                let y = [self.ode_means.m1, self.ode_means.m2];
                let mid = self.ode_advance(&y, dt / 2.0);
                let c = coefficients(mid[0], mid[1], &self.params, self.variant);
                fp_step(&mut self.prey, &mut self.predator, c, dt, p, self.t)?;
                let end = self.ode_advance(&y, dt);
                self.ode_means = MeanState::new(self.t + dt, end[0], end[1]);
            }
            CouplingMode::SelfConsistent => {
                // predictor with start-of-step means, corrector with midpoint means
                let (a0, b0) = self.driving_means();
                let c0 = coefficients(a0, b0, &self.params, self.variant);
                let (mut prey, mut pred) = (self.prey.clone(), self.predator.clone());
                fp_step(&mut prey, &mut pred, c0, dt, p, self.t)?;
                let (a1, b1) = (prey.moments().0, pred.moments().0);
                let c = coefficients((a0 + a1) / 2.0, (b0 + b1) / 2.0, &self.params, self.variant);
                fp_step(&mut self.prey, &mut self.predator, c, dt, p, self.t)?;
                let (m1, m2) = self.driving_means();
                self.ode_means = MeanState::new(self.t + dt, m1, m2);
            }
        }
        self.t += dt;
        Ok(())
    }

    /// Runs to `t_end`, calling `observe` after every `every`-th step and at the start.
    pub fn run(
        &mut self,
        dt: f64,
        t_end: f64,
        every: usize,
        mut observe: impl FnMut(&FpSolver),
    ) -> Result<(), FpError> {
        let n_steps = (((t_end - self.t) / dt) - 1e-9).ceil().max(0.0) as usize;
        let t0 = self.t;
        observe(self);
        for k in 0..n_steps {
            let target = if k + 1 == n_steps {
                t_end
            } else {
                t0 + (k + 1) as f64 * dt
            };
            self.step(target - self.t)?;
            self.t = target;
            if (k + 1) % every.max(1) == 0 || k + 1 == n_steps {
                observe(self);
            }
        }
        Ok(())
    }
}

/// Exact solution of the redistribution-only transport equation at time `t`, for an initial
/// density `f_in` with mean `m0`.
pub fn redistribution_exact(
    f_in: impl Fn(f64) -> f64,
    x: f64,
    t: f64,
    m0: f64,
    params: &ModelParams,
    species: Species,
) -> f64 {
    let (rate, shape) = match species {
        Species::Prey => (params.alpha, params.chi),
        Species::Predator => (params.nu, params.theta),
    };
    let contraction = (rate * shape * t).exp();
    contraction * f_in(contraction * x - m0 * (rate * (shape + 1.0) * t).exp_m1())
}

/// Size below which the redistribution-only solution vanishes, for initial data supported on
/// the positive axis.
pub fn redistribution_threshold(t: f64, m0: f64, params: &ModelParams, species: Species) -> f64 {
    let (rate, shape) = match species {
        Species::Prey => (params.alpha, params.chi),
        Species::Predator => (params.nu, params.theta),
    };
    m0 * (rate * (shape + 1.0) * t).exp_m1() / (rate * shape * t).exp()
}
