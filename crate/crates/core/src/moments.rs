//! Closed macroscopic equations for the means and variances of the two populations.

use thiserror::Error;

use crate::params::{AdmissibleBounds, ModelParams, Variant};

/// Maximal number of local step halvings before giving up on positivity.
pub const MAX_HALVINGS: u32 = 40;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MomentsError {
    #[error("step size underflow at t={t}: positivity could not be restored after {MAX_HALVINGS} halvings")]
    StepUnderflow { t: f64 },
    #[error("invalid step configuration: dt={dt}, t_end={t_end}")]
    InvalidStep { dt: f64, t_end: f64 },
    #[error("means must be positive, got ({m1}, {m2})")]
    Domain { m1: f64, m2: f64 },
    #[error(
        "no return to the initial point detected before t={t_max} (closest closure gap {gap:e})"
    )]
    NotPeriodic { t_max: f64, gap: f64 },
    #[error("logistic variant requires a carrying capacity")]
    MissingCarryingCapacity,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanState {
    pub t: f64,
    pub m1: f64,
    pub m2: f64,
}

impl MeanState {
    pub fn new(t: f64, m1: f64, m2: f64) -> Self {
        Self { t, m1, m2 }
    }

    pub fn with_variances(self, v1: f64, v2: f64) -> MomentState {
        MomentState {
            t: self.t,
            m1: self.m1,
            m2: self.m2,
            v1,
            v2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentState {
    pub t: f64,
    pub m1: f64,
    pub m2: f64,
    pub v1: f64,
    pub v2: f64,
}

impl MomentState {
    pub fn new(t: f64, m1: f64, m2: f64, v1: f64, v2: f64) -> Self {
        Self { t, m1, m2, v1, v2 }
    }

    pub fn means(&self) -> MeanState {
        MeanState::new(self.t, self.m1, self.m2)
    }
}

/// Which closed variance system to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VarianceModel {
    /// Malthusian growth with noise exponent one.
    POne,
    /// Malthusian growth with noise exponent one half.
    PHalf,
    /// Logistic growth, noise exponent one half.
    Logistic,
}

impl VarianceModel {
    pub fn variant(self) -> Variant {
        match self {
            VarianceModel::POne | VarianceModel::PHalf => Variant::Malthusian,
            VarianceModel::Logistic => Variant::Logistic,
        }
    }

    /// The variance system matching a run configuration.
    pub fn for_run(variant: Variant, p: crate::params::NoiseExponent) -> Self {
        match (variant, p) {
            (Variant::Logistic, _) => VarianceModel::Logistic,
            (Variant::Malthusian, crate::params::NoiseExponent::One) => VarianceModel::POne,
            (Variant::Malthusian, crate::params::NoiseExponent::Half) => VarianceModel::PHalf,
        }
    }
}

/// Classical Lotka-Volterra right-hand side.
pub fn lv_rhs(m: &MeanState, params: &ModelParams) -> (f64, f64) {
    (
        params.alpha * m.m1 - params.beta * m.m1 * m.m2,
        -params.delta() * m.m2 + params.gamma * m.m1 * m.m2,
    )
}

/// Lotka-Volterra with logistic prey growth. Without a carrying capacity this is [`lv_rhs`].
pub fn lv_logistic_rhs(m: &MeanState, params: &ModelParams) -> (f64, f64) {
    let (d1, d2) = lv_rhs(m, params);
    (d1 - params.competition_rate() * m.m1 * m.m1, d2)
}

pub fn mean_rhs(m: &MeanState, params: &ModelParams, variant: Variant) -> (f64, f64) {
    match variant {
        Variant::Malthusian => lv_rhs(m, params),
        Variant::Logistic => lv_logistic_rhs(m, params),
    }
}

/// Right-hand side of the closed variance equations.
pub fn variance_rhs(s: &MomentState, params: &ModelParams, model: VarianceModel) -> (f64, f64) {
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
    let (m1, m2) = (s.m1, s.m2);
    let pred_drift = gamma * (mu - m1) + nu * theta;
    match model {
        VarianceModel::PHalf => (
            -2.0 * (beta * m2 + alpha * chi) * s.v1 + sigma1 * m1 * m2,
            -2.0 * pred_drift * s.v2 + sigma2 * m1 * m2,
        ),
        VarianceModel::POne => (
            -2.0 * ((beta - sigma1 / 2.0) * m2 + alpha * chi) * s.v1 + sigma1 * m1 * m1 * m2,
            -2.0 * (gamma * (mu - (1.0 - sigma2 / (2.0 * gamma)) * m1) + nu * theta) * s.v2
                + sigma2 * m1 * m2 * m2,
        ),
        VarianceModel::Logistic => (
            -2.0 * (beta * m2 + params.competition_rate() * m1 + alpha * chi) * s.v1
                + sigma1 * m1 * (m1 + m2),
            -2.0 * pred_drift * s.v2 + sigma2 * m1 * m2,
        ),
    }
}

/// Means and variances together.
pub fn moment_rhs(s: &MomentState, params: &ModelParams, model: VarianceModel) -> [f64; 4] {
    let (d1, d2) = mean_rhs(&s.means(), params, model.variant());
    let (w1, w2) = variance_rhs(s, params, model);
    [d1, d2, w1, w2]
}

/// First integral `gamma m1 - delta ln m1 + beta m2 - alpha ln m2` of the Malthusian system.
pub fn conserved_h(m: &MeanState, params: &ModelParams) -> Result<f64, MomentsError> {
    if !(m.m1 > 0.0 && m.m2 > 0.0) {
        return Err(MomentsError::Domain { m1: m.m1, m2: m.m2 });
    }
    Ok(
        params.gamma * m.m1 - params.delta() * m.m1.ln() + params.beta * m.m2
            - params.alpha * m.m2.ln(),
    )
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FixedPoints {
    pub m_star: (f64, f64),
    pub v_star: (f64, f64),
    pub m_inf: Option<(f64, f64)>,
    pub v_inf: Option<(f64, f64)>,
}

/// Nontrivial equilibria of the mean and (p = 1/2) variance systems.
pub fn fixed_points(params: &ModelParams) -> FixedPoints {
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
    let delta = params.delta();
    let v_star = (
        delta * sigma1 / (2.0 * beta * gamma * (chi + 1.0)),
        alpha * delta * sigma2 / (2.0 * beta * gamma * nu * (theta + 1.0)),
    );
    let m_inf = params.m_inf();
    let v_inf = m_inf.map(|(m1, m2)| {
        (
            sigma1 * m1 * (m1 + m2)
                / (2.0 * (beta * m2 + params.competition_rate() * m1 + alpha * chi)),
            sigma2 * m1 * m2 / (2.0 * (gamma * (mu - m1) + nu * theta)),
        )
    });
    FixedPoints {
        m_star: params.m_star(),
        v_star,
        m_inf,
        v_inf,
    }
}

/// Fixed-step settings for [`integrate_means`] and [`integrate_moments`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Keep every n-th step in the returned trajectory (the final state is always kept).
    pub sample_every: usize,
}

impl StepConfig {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            t_end,
            sample_every: 1,
        }
    }

    pub fn sample_every(mut self, n: usize) -> Self {
        self.sample_every = n.max(1);
        self
    }
}

pub(crate) fn rk4<const N: usize>(
    f: &impl Fn(f64, &[f64; N]) -> [f64; N],
    t: f64,
    y: &[f64; N],
    h: f64,
) -> [f64; N] {
    let shift = |base: &[f64; N], k: &[f64; N], c: f64| {
        let mut out = *base;
        for (o, ki) in out.iter_mut().zip(k) {
            *o += c * ki;
        }
        out
    };
    let k1 = f(t, y);
    let k2 = f(t + h / 2.0, &shift(y, &k1, h / 2.0));
    let k3 = f(t + h / 2.0, &shift(y, &k2, h / 2.0));
    let k4 = f(t + h, &shift(y, &k3, h));
    let mut out = *y;
    for i in 0..N {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

fn guarded_step<const N: usize>(
    f: &impl Fn(f64, &[f64; N]) -> [f64; N],
    admissible: &impl Fn(&[f64; N]) -> bool,
    t: f64,
    y: &[f64; N],
    h: f64,
    depth: u32,
) -> Result<[f64; N], MomentsError> {
    let next = rk4(f, t, y, h);
    if admissible(&next) {
        return Ok(next);
    }
    if depth >= MAX_HALVINGS {
        return Err(MomentsError::StepUnderflow { t });
    }
    let mid = guarded_step(f, admissible, t, y, h / 2.0, depth + 1)?;
    guarded_step(f, admissible, t + h / 2.0, &mid, h / 2.0, depth + 1)
}

fn run_fixed<const N: usize>(
    f: impl Fn(f64, &[f64; N]) -> [f64; N],
    admissible: impl Fn(&[f64; N]) -> bool,
    t0: f64,
    y0: [f64; N],
    cfg: &StepConfig,
) -> Result<Vec<(f64, [f64; N])>, MomentsError> {
    if !(cfg.dt > 0.0 && cfg.t_end >= t0 && cfg.dt.is_finite() && cfg.t_end.is_finite()) {
        return Err(MomentsError::InvalidStep {
            dt: cfg.dt,
            t_end: cfg.t_end,
        });
    }
    let span = cfg.t_end - t0;
    let n_steps = ((span / cfg.dt) - 1e-9).ceil().max(0.0) as usize;
    let every = cfg.sample_every.max(1);
    let mut out = Vec::with_capacity(n_steps / every + 2);
    out.push((t0, y0));
    let mut y = y0;
    for k in 0..n_steps {
        let t = t0 + k as f64 * cfg.dt;
        let t_next = if k + 1 == n_steps {
            cfg.t_end
        } else {
            t0 + (k + 1) as f64 * cfg.dt
        };
        y = guarded_step(&f, &admissible, t, &y, t_next - t, 0)?;
        if (k + 1) % every == 0 || k + 1 == n_steps {
            out.push((t_next, y));
        }
    }
    Ok(out)
}

fn require_k(params: &ModelParams, variant: Variant) -> Result<(), MomentsError> {
    if variant == Variant::Logistic && params.carrying_capacity.is_none() {
        return Err(MomentsError::MissingCarryingCapacity);
    }
    Ok(())
}

/// RK4 integration of the mean system, sampled at multiples of `dt`.
pub fn integrate_means(
    initial: MeanState,
    params: &ModelParams,
    variant: Variant,
    cfg: &StepConfig,
) -> Result<Vec<MeanState>, MomentsError> {
    require_k(params, variant)?;
    if !(initial.m1 > 0.0 && initial.m2 > 0.0) {
        return Err(MomentsError::Domain {
            m1: initial.m1,
            m2: initial.m2,
        });
    }
    let f = |t: f64, y: &[f64; 2]| {
        let (a, b) = mean_rhs(&MeanState::new(t, y[0], y[1]), params, variant);
        [a, b]
    };
    let traj = run_fixed(
        f,
        |y| y[0] > 0.0 && y[1] > 0.0,
        initial.t,
        [initial.m1, initial.m2],
        cfg,
    )?;
    Ok(traj
        .into_iter()
        .map(|(t, y)| MeanState::new(t, y[0], y[1]))
        .collect())
}

/// RK4 integration of means and variances together.
pub fn integrate_moments(
    initial: MomentState,
    params: &ModelParams,
    model: VarianceModel,
    cfg: &StepConfig,
) -> Result<Vec<MomentState>, MomentsError> {
    require_k(params, model.variant())?;
    if !(initial.m1 > 0.0 && initial.m2 > 0.0) {
        return Err(MomentsError::Domain {
            m1: initial.m1,
            m2: initial.m2,
        });
    }
    let f = |t: f64, y: &[f64; 4]| {
        moment_rhs(&MomentState::new(t, y[0], y[1], y[2], y[3]), params, model)
    };
    let traj = run_fixed(
        f,
        |y| y[0] > 0.0 && y[1] > 0.0 && y[2] >= 0.0 && y[3] >= 0.0,
        initial.t,
        [initial.m1, initial.m2, initial.v1, initial.v2],
        cfg,
    )?;
    Ok(traj
        .into_iter()
        .map(|(t, y)| MomentState::new(t, y[0], y[1], y[2], y[3]))
        .collect())
}

/// Settings for [`detect_orbit`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrbitOptions {
    pub dt: f64,
    pub t_max: f64,
    /// Largest accepted sup-norm distance between the start and the detected return point.
    pub closure_tol: f64,
}

impl Default for OrbitOptions {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_max: 1e4,
            closure_tol: 1e-6,
        }
    }
}

/// One period of a closed Malthusian orbit.
#[derive(Clone, Debug, PartialEq)]
pub struct Orbit {
    pub period: f64,
    /// Samples over one period; the last one is the refined return point.
    pub samples: Vec<MeanState>,
    pub closure_gap: f64,
    pub bounds: AdmissibleBounds,
}

/// Root of `phi` on `[0, h]` given a sign change, by the Illinois variant of regula falsi.
fn refine_root(phi: impl Fn(f64) -> f64, h: f64) -> f64 {
    let (mut a, mut b) = (0.0, h);
    let (mut fa, mut fb) = (phi(a), phi(b));
    if fa == 0.0 {
        return a;
    }
    if fb == 0.0 || fa.signum() == fb.signum() {
        return b;
    }
    let mut side = 0i8;
    for _ in 0..200 {
        let c = (a * fb - b * fa) / (fb - fa);
        let fc = phi(c);
        if fc == 0.0 || (b - a).abs() < 1e-15 * h.max(1.0) {
            return c;
        }
        if fc.signum() == fb.signum() {
            b = c;
            fb = fc;
            if side == -1 {
                fa /= 2.0;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb /= 2.0;
            }
            side = 1;
        }
    }
    (a * fb - b * fa) / (fb - fa)
}

/// Golden-section search of the minimum of `phi` on `[a, b]`.
fn golden_min(phi: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (phi(c), phi(d));
    for _ in 0..80 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = phi(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = phi(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Integrates the Malthusian system until the first return to the initial point.
///
/// The return is detected as the negative-to-positive crossing of the line through the
/// initial point orthogonal to the initial velocity; closed orbits are convex level sets of
/// the first integral, so this line is crossed exactly twice per period. Crossings and extrema
/// are refined by root finding on the RK4 sub-step.
pub fn detect_orbit(
    initial: MeanState,
    params: &ModelParams,
    opts: &OrbitOptions,
) -> Result<Orbit, MomentsError> {
    if !(initial.m1 > 0.0 && initial.m2 > 0.0) {
        return Err(MomentsError::Domain {
            m1: initial.m1,
            m2: initial.m2,
        });
    }
    let f = |t: f64, y: &[f64; 2]| {
        let (a, b) = lv_rhs(&MeanState::new(t, y[0], y[1]), params);
        [a, b]
    };
    let y0 = [initial.m1, initial.m2];
    let v0 = f(0.0, &y0);
    if v0[0] == 0.0 && v0[1] == 0.0 {
        return Err(MomentsError::NotPeriodic {
            t_max: opts.t_max,
            gap: 0.0,
        });
    }
    let section = |y: &[f64; 2]| (y[0] - y0[0]) * v0[0] + (y[1] - y0[1]) * v0[1];
    let (s1, s2) = params.m_star();
    let dist = |y: &[f64; 2]| (y[0] - s1).abs().max((y[1] - s2).abs());

    let h = opts.dt;
    let mut t = initial.t;
    let mut y = y0;
    let mut samples = vec![initial];
    let (mut c1_lo, mut c1_hi) = (y0[0], y0[0]);
    let (mut c2_lo, mut c2_hi) = (y0[1], y0[1]);
    let mut left_section = false;
    let mut best_gap = f64::INFINITY;

    while t - initial.t < opts.t_max {
        let next = rk4(&f, t, &y, h);
        if !(next[0] > 0.0 && next[1] > 0.0) {
            return Err(MomentsError::StepUnderflow { t });
        }
        // extrema of each component inside the step
        let d_now = f(t, &y);
        let d_next = f(t + h, &next);
        for i in 0..2 {
            if d_now[i].signum() != d_next[i].signum() {
                let s = refine_root(|s| f(t + s, &rk4(&f, t, &y, s))[i], h);
                let val = rk4(&f, t, &y, s)[i];
                if i == 0 {
                    c1_lo = c1_lo.min(val);
                    c1_hi = c1_hi.max(val);
                } else {
                    c2_lo = c2_lo.min(val);
                    c2_hi = c2_hi.max(val);
                }
            }
        }
        let g_now = section(&y);
        let g_next = section(&next);
        if g_next < 0.0 {
            left_section = true;
        }
        if left_section && g_now < 0.0 && g_next >= 0.0 {
            let s = refine_root(|s| section(&rk4(&f, t, &y, s)), h);
            let ret = rk4(&f, t, &y, s);
            let gap = (ret[0] - y0[0]).abs().max((ret[1] - y0[1]).abs());
            best_gap = best_gap.min(gap);
            if gap <= opts.closure_tol {
                samples.push(MeanState::new(t + s, ret[0], ret[1]));
                for p in &samples {
                    c1_lo = c1_lo.min(p.m1);
                    c1_hi = c1_hi.max(p.m1);
                    c2_lo = c2_lo.min(p.m2);
                    c2_hi = c2_hi.max(p.m2);
                }
                let c0 = refine_distance_range(&f, &samples, &dist);
                let bounds = AdmissibleBounds::from_range(
                    params,
                    Variant::Malthusian,
                    (c1_lo, c1_hi),
                    (c2_lo, c2_hi),
                    c0,
                );
                return Ok(Orbit {
                    period: t + s - initial.t,
                    samples,
                    closure_gap: gap,
                    bounds,
                });
            }
            left_section = false;
        }
        t += h;
        y = next;
        samples.push(MeanState::new(t, y[0], y[1]));
    }
    Err(MomentsError::NotPeriodic {
        t_max: opts.t_max,
        gap: best_gap,
    })
}

/// Min and max of `dist` along the sampled orbit, polished by golden section around the
/// discrete extremizers.
fn refine_distance_range(
    f: &impl Fn(f64, &[f64; 2]) -> [f64; 2],
    samples: &[MeanState],
    dist: &impl Fn(&[f64; 2]) -> f64,
) -> (f64, f64) {
    let vals: Vec<f64> = samples.iter().map(|p| dist(&[p.m1, p.m2])).collect();
    let (mut i_min, mut i_max) = (0, 0);
    for (i, v) in vals.iter().enumerate() {
        if *v < vals[i_min] {
            i_min = i;
        }
        if *v > vals[i_max] {
            i_max = i;
        }
    }
    let polish = |i: usize, sign: f64| -> f64 {
        let base = vals[i] * sign;
        if i == 0 || i + 1 >= samples.len() {
            return base;
        }
        let start = samples[i - 1];
        let span = samples[i + 1].t - start.t;
        let y = [start.m1, start.m2];
        let (_, v) = golden_min(|s| sign * dist(&rk4(f, start.t, &y, s)), 0.0, span);
        v.min(base)
    };
    (polish(i_min, 1.0), -polish(i_max, -1.0))
}

/// Range of a closed Malthusian orbit; collapses to the equilibrium when started there.
pub fn orbit_bounds(
    initial: MeanState,
    params: &ModelParams,
) -> Result<AdmissibleBounds, MomentsError> {
    let (d1, d2) = lv_rhs(&initial, params);
    if d1 == 0.0 && d2 == 0.0 && initial.m1 > 0.0 && initial.m2 > 0.0 {
        return Ok(AdmissibleBounds::from_range(
            params,
            Variant::Malthusian,
            (initial.m1, initial.m1),
            (initial.m2, initial.m2),
            (0.0, 0.0),
        ));
    }
    detect_orbit(initial, params, &OrbitOptions::default()).map(|o| o.bounds)
}

/// Range of an already computed trajectory, with distances measured to `center`.
pub fn trajectory_bounds(
    traj: &[MeanState],
    center: (f64, f64),
    params: &ModelParams,
    variant: Variant,
) -> AdmissibleBounds {
    let mut c1 = (f64::INFINITY, f64::NEG_INFINITY);
    let mut c2 = (f64::INFINITY, f64::NEG_INFINITY);
    let mut c0 = (f64::INFINITY, f64::NEG_INFINITY);
    for p in traj {
        c1 = (c1.0.min(p.m1), c1.1.max(p.m1));
        c2 = (c2.0.min(p.m2), c2.1.max(p.m2));
        let d = (p.m1 - center.0).abs().max((p.m2 - center.1).abs());
        c0 = (c0.0.min(d), c0.1.max(d));
    }
    AdmissibleBounds::from_range(params, variant, c1, c2, c0)
}

/// Horizon used to bound logistic trajectories, which relax to their equilibrium.
pub const LOGISTIC_HORIZON: f64 = 200.0;

/// Trajectory bounds used by the admissibility checks of either variant.
pub fn admissible_bounds(
    initial: MeanState,
    params: &ModelParams,
    variant: Variant,
) -> Result<AdmissibleBounds, MomentsError> {
    match variant {
        Variant::Malthusian => orbit_bounds(initial, params),
        Variant::Logistic => {
            let center = params
                .m_inf()
                .ok_or(MomentsError::MissingCarryingCapacity)?;
            let traj = integrate_means(
                initial,
                params,
                variant,
                &StepConfig::new(1e-3, initial.t + LOGISTIC_HORIZON),
            )?;
            Ok(trajectory_bounds(&traj, center, params, variant))
        }
    }
}

/// Weights `(w0, w1)` with `int_0^h e^(-lam (h - s)) g(s) ds = w0 g(0) + w1 g(h)` for `g`
/// linear on `[0, h]`.
fn exp_linear_weights(lam: f64, h: f64) -> (f64, f64) {
    let z = lam * h;
    // phi1 = (1 - e^-z) / z, phi2 = (1/z) - (1 - e^-z) / z^2
    let (phi1, phi2) = if z.abs() < 1e-5 {
        (1.0 - z / 2.0 + z * z / 6.0, 0.5 - z / 6.0 + z * z / 24.0)
    } else {
        let p1 = -(-z).exp_m1() / z;
        (p1, (1.0 - p1) / z)
    };
    (h * (phi1 - phi2), h * phi2)
}

/// Integral-form solution of the p = 1/2 variance equations along a given mean trajectory.
///
/// On each grid interval the drift in the exponent is replaced by its trapezoid average and
/// the source `m1 m2` is interpolated linearly, after which both integrals are exact. The
/// one-step recursion never forms large exponentials, and a trajectory resting at the
/// equilibrium reproduces the equilibrium variances exactly.
pub fn variance_explicit(
    traj: &[MeanState],
    v0: (f64, f64),
    params: &ModelParams,
) -> Vec<MomentState> {
    let drift1 = |m: &MeanState| params.beta * m.m2 + params.alpha * params.chi;
    let drift2 = |m: &MeanState| params.gamma * (params.mu - m.m1) + params.nu * params.theta;
    let mut out = Vec::with_capacity(traj.len());
    let Some(first) = traj.first() else {
        return out;
    };
    let (mut v1, mut v2) = v0;
    out.push(first.with_variances(v1, v2));
    for w in traj.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let h = b.t - a.t;
        let (ga, gb) = (a.m1 * a.m2, b.m1 * b.m2);
        let lam1 = drift1(a) + drift1(b);
        let lam2 = drift2(a) + drift2(b);
        let (p0, p1) = exp_linear_weights(lam1, h);
        let (q0, q1) = exp_linear_weights(lam2, h);
        v1 = v1 * (-lam1 * h).exp() + params.sigma1 * (p0 * ga + p1 * gb);
        v2 = v2 * (-lam2 * h).exp() + params.sigma2 * (q0 * ga + q1 * gb);
        out.push(b.with_variances(v1, v2));
    }
    out
}

/// Global-in-time envelopes for the p = 1/2 variances along a Malthusian orbit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VarianceEnvelopes {
    bounds: AdmissibleBounds,
    v0: (f64, f64),
    m0: (f64, f64),
    sigma: (f64, f64),
    /// `alpha (chi + 1)` and `nu (theta + 1)`.
    rates: (f64, f64),
}

pub fn variance_bounds(
    params: &ModelParams,
    bounds: &AdmissibleBounds,
    v0: (f64, f64),
    m0: &MeanState,
) -> VarianceEnvelopes {
    VarianceEnvelopes {
        bounds: *bounds,
        v0,
        m0: (m0.m1, m0.m2),
        sigma: (params.sigma1, params.sigma2),
        rates: (
            params.alpha * (params.chi + 1.0),
            params.nu * (params.theta + 1.0),
        ),
    }
}

fn relax(start: f64, limit: f64, rate: f64, t: f64) -> f64 {
    let e = (-2.0 * rate * t).exp();
    start * e + limit * (1.0 - e)
}

impl VarianceEnvelopes {
    /// Envelope driven by the drift lower bounds; `None` unless both are positive.
    pub fn standard(&self, t: f64) -> Option<(f64, f64)> {
        let b = &self.bounds;
        if !(b.zeta1 > 0.0 && b.zeta2 > 0.0) {
            return None;
        }
        let (l1, l2) = self.standard_limit()?;
        Some((
            relax(self.v0.0, l1, b.zeta1, t),
            relax(self.v0.1, l2, b.zeta2, t),
        ))
    }

    pub fn standard_limit(&self) -> Option<(f64, f64)> {
        let b = &self.bounds;
        if !(b.zeta1 > 0.0 && b.zeta2 > 0.0) {
            return None;
        }
        let prod = b.c1_hi * b.c2_hi;
        Some((
            self.sigma.0 * prod / (2.0 * b.zeta1),
            self.sigma.1 * prod / (2.0 * b.zeta2),
        ))
    }

    /// Envelope obtained from the relative variances `v_i / m_i^2`; only needs
    /// `chi, theta > -1`.
    pub fn sharper(&self, t: f64) -> (f64, f64) {
        let b = &self.bounds;
        let (r1, r2) = self.rates;
        let w1 = relax(
            self.v0.0 / (self.m0.0 * self.m0.0),
            self.sigma.0 * b.c2_hi / (b.c1_lo * 2.0 * r1),
            r1,
            t,
        );
        let w2 = relax(
            self.v0.1 / (self.m0.1 * self.m0.1),
            self.sigma.1 * b.c1_hi / (b.c2_lo * 2.0 * r2),
            r2,
            t,
        );
        (w1 * b.c1_hi * b.c1_hi, w2 * b.c2_hi * b.c2_hi)
    }
}
