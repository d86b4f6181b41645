//! Distances between solutions and their local equilibria, and the a priori bounds on them.

use thiserror::Error;

use crate::equilibria::{self, gamma_params, EquilibriaError};
use crate::fokker_planck::DensityField;
use crate::moments::{self, conserved_h, MeanState, MomentState, MomentsError};
use crate::params::{AdmissibleBounds, ModelParams, Variant};

/// Relative slack allowed when checking the analytic bounds.
pub const BOUND_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("{which} bound violated at t={t}: value {value:e} outside [{lower:e}, {upper:e}]")]
    BoundViolation {
        which: &'static str,
        t: f64,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("logistic variant requires a carrying capacity")]
    MissingCarryingCapacity,
    #[error(transparent)]
    Equilibria(#[from] EquilibriaError),
    #[error(transparent)]
    Moments(#[from] MomentsError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Norm {
    L1,
    Sup,
}

/// Componentwise gaps `|m_i - m_i_eq|` reduced by maximum and by sum.
fn mean_gaps(
    m: &MeanState,
    params: &ModelParams,
    variant: Variant,
) -> Result<(f64, f64), EquilibriaError> {
    let eq = gamma_params(m, params, variant)?;
    let g1 = (m.m1 - eq.prey.mean()).abs();
    let g2 = (m.m2 - eq.predator.mean()).abs();
    Ok((g1.max(g2), g1 + g2))
}

fn check(
    which: &'static str,
    t: f64,
    value: f64,
    lower: f64,
    upper: f64,
) -> Result<(), DiagnosticsError> {
    let slack = BOUND_TOL * upper.abs().max(1.0);
    if value < lower - slack || value > upper + slack {
        return Err(DiagnosticsError::BoundViolation {
            which,
            t,
            value,
            lower,
            upper,
        });
    }
    Ok(())
}

/// Mean gap along a Malthusian trajectory with its constant lower and upper bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanGap {
    pub t: Vec<f64>,
    /// `max_i |m_i - m_i_eq|`.
    pub gap_max: Vec<f64>,
    /// `sum_i |m_i - m_i_eq|`.
    pub gap_sum: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
}

/// Constant sandwich of the Malthusian mean gap.
pub fn mean_gap_bounds(params: &ModelParams, b: &AdmissibleBounds) -> (f64, f64) {
    let ModelParams {
        alpha,
        beta,
        gamma,
        mu,
        nu,
        chi,
        theta,
        ..
    } = *params;
    let lower = b.c0_lo
        * f64::min(
            beta * b.c1_lo / (beta * b.c2_hi + alpha * chi),
            gamma * b.c2_lo / (gamma * (mu - b.c1_lo) + nu * theta),
        );
    let upper = b.c0_hi
        * f64::max(
            beta * b.c1_hi / (beta * b.c2_lo + alpha * chi),
            gamma * b.c2_hi / (gamma * (mu - b.c1_hi) + nu * theta),
        );
    (lower, upper)
}

/// Gap between the means and the equilibrium means along a Malthusian trajectory. Both the
/// max and the sum reductions are checked against the sandwich.
pub fn mean_gap(
    traj: &[MeanState],
    params: &ModelParams,
    bounds: &AdmissibleBounds,
) -> Result<MeanGap, DiagnosticsError> {
    let (lower, upper) = mean_gap_bounds(params, bounds);
    let mut out = MeanGap {
        t: Vec::with_capacity(traj.len()),
        gap_max: Vec::with_capacity(traj.len()),
        gap_sum: Vec::with_capacity(traj.len()),
        lower,
        upper,
    };
    for m in traj {
        let (gmax, gsum) = mean_gaps(m, params, Variant::Malthusian)?;
        check("mean gap (max)", m.t, gmax, lower, upper)?;
        check("mean gap (sum)", m.t, gsum, lower, upper)?;
        out.t.push(m.t);
        out.gap_max.push(gmax);
        out.gap_sum.push(gsum);
    }
    Ok(out)
}

/// Sup-norm distances of the variances to the equilibrium variances.
#[derive(Clone, Debug, PartialEq)]
pub struct VarianceGap {
    pub t: Vec<f64>,
    pub d_var: Vec<f64>,
    /// Distance to the variances of the rescaled equilibrium populations (Malthusian only).
    pub d_var_tilde: Option<Vec<f64>>,
}

pub fn variance_gap(
    traj: &[MomentState],
    params: &ModelParams,
    variant: Variant,
) -> Result<VarianceGap, DiagnosticsError> {
    let mut t = Vec::with_capacity(traj.len());
    let mut d_var = Vec::with_capacity(traj.len());
    let mut d_tilde = Vec::with_capacity(traj.len());
    for s in traj {
        let m = s.means();
        let eq = gamma_params(&m, params, variant)?;
        t.push(s.t);
        d_var.push(
            (s.v1 - eq.prey.variance())
                .abs()
                .max((s.v2 - eq.predator.variance()).abs()),
        );
        if variant == Variant::Malthusian {
            let r = equilibria::rescaled_identities(&m, params)?;
            d_tilde.push((s.v1 - r.v_tilde.0).abs().max((s.v2 - r.v_tilde.1).abs()));
        }
    }
    Ok(VarianceGap {
        t,
        d_var,
        d_var_tilde: (variant == Variant::Malthusian).then_some(d_tilde),
    })
}

/// Logistic mean gap together with its relative bound.
#[derive(Clone, Debug, PartialEq)]
pub struct LogisticGap {
    pub t: Vec<f64>,
    pub gap_max: Vec<f64>,
    pub gap_sum: Vec<f64>,
    pub bound: Vec<f64>,
    /// Factor multiplying `|m(t) - m_inf|_inf` in the bound.
    pub constant: f64,
}

/// Bound constant of the logistic mean gap for the given trajectory range.
pub fn logistic_bound_constant(params: &ModelParams, b: &AdmissibleBounds) -> Option<f64> {
    let k = params.carrying_capacity?;
    let ModelParams {
        alpha,
        beta,
        gamma,
        mu,
        nu,
        chi,
        theta,
        ..
    } = *params;
    let front = (beta * k + alpha) / (beta * k);
    Some(
        front
            * f64::max(
                beta * b.c1_hi / (beta * b.c2_lo + alpha * b.c1_lo / k + alpha * chi),
                gamma * b.c2_hi / (gamma * (mu - b.c1_hi) + nu * theta),
            ),
    )
}

pub fn logistic_gap_bound(
    traj: &[MeanState],
    params: &ModelParams,
) -> Result<LogisticGap, DiagnosticsError> {
    let m_inf = params
        .m_inf()
        .ok_or(DiagnosticsError::MissingCarryingCapacity)?;
    let b = moments::trajectory_bounds(traj, m_inf, params, Variant::Logistic);
    let constant =
        logistic_bound_constant(params, &b).ok_or(DiagnosticsError::MissingCarryingCapacity)?;
    let mut out = LogisticGap {
        t: Vec::with_capacity(traj.len()),
        gap_max: Vec::with_capacity(traj.len()),
        gap_sum: Vec::with_capacity(traj.len()),
        bound: Vec::with_capacity(traj.len()),
        constant,
    };
    for m in traj {
        let (gmax, gsum) = mean_gaps(m, params, Variant::Logistic)?;
        let dist = (m.m1 - m_inf.0).abs().max((m.m2 - m_inf.1).abs());
        let bound = constant * dist;
        check("logistic gap (max)", m.t, gmax, 0.0, bound)?;
        check("logistic gap (sum)", m.t, gsum, 0.0, bound)?;
        out.t.push(m.t);
        out.gap_max.push(gmax);
        out.gap_sum.push(gsum);
        out.bound.push(bound);
    }
    Ok(out)
}

/// All distance columns exported for a moment trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceSeries {
    pub t: Vec<f64>,
    pub d_mean_linf: Vec<f64>,
    pub d_mean_sum: Vec<f64>,
    pub d_var_linf: Vec<f64>,
    /// NaN for the logistic variant.
    pub d_var_tilde_linf: Vec<f64>,
    pub bound_lower: Vec<f64>,
    pub bound_upper: Vec<f64>,
}

impl DistanceSeries {
    pub const HEADER: [&'static str; 7] = [
        "t",
        "d_mean_linf",
        "d_mean_sum",
        "d_var_linf",
        "d_var_tilde_linf",
        "bound_lower",
        "bound_upper",
    ];

    pub fn rows(&self) -> impl Iterator<Item = [f64; 7]> + '_ {
        (0..self.t.len()).map(|i| {
            [
                self.t[i],
                self.d_mean_linf[i],
                self.d_mean_sum[i],
                self.d_var_linf[i],
                self.d_var_tilde_linf[i],
                self.bound_lower[i],
                self.bound_upper[i],
            ]
        })
    }
}

/// Distances of a moment trajectory to its local equilibria, with the matching bounds: the
/// constant sandwich for the Malthusian variant (orbit computed from the first state), and
/// zero and the relative bound for the logistic one.
pub fn distance_series(
    traj: &[MomentState],
    params: &ModelParams,
    variant: Variant,
) -> Result<DistanceSeries, DiagnosticsError> {
    let means: Vec<MeanState> = traj.iter().map(|s| s.means()).collect();
    let vg = variance_gap(traj, params, variant)?;
    let n = traj.len();
    let (d_mean_linf, d_mean_sum, bound_lower, bound_upper) = match variant {
        Variant::Malthusian => {
            let Some(first) = means.first() else {
                return Ok(DistanceSeries {
                    t: vec![],
                    d_mean_linf: vec![],
                    d_mean_sum: vec![],
                    d_var_linf: vec![],
                    d_var_tilde_linf: vec![],
                    bound_lower: vec![],
                    bound_upper: vec![],
                });
            };
            let b = moments::orbit_bounds(*first, params)?;
            let g = mean_gap(&means, params, &b)?;
            (g.gap_max, g.gap_sum, vec![g.lower; n], vec![g.upper; n])
        }
        Variant::Logistic => {
            let g = logistic_gap_bound(&means, params)?;
            (g.gap_max, g.gap_sum, vec![0.0; n], g.bound)
        }
    };
    Ok(DistanceSeries {
        t: vg.t,
        d_mean_linf,
        d_mean_sum,
        d_var_linf: vg.d_var,
        d_var_tilde_linf: vg.d_var_tilde.unwrap_or_else(|| vec![f64::NAN; n]),
        bound_lower,
        bound_upper,
    })
}

/// `H(m_eq(t)) - H(m(t))` along a Malthusian trajectory.
pub fn h_separation(
    traj: &[MeanState],
    params: &ModelParams,
) -> Result<Vec<f64>, DiagnosticsError> {
    traj.iter()
        .map(|m| {
            let eq = gamma_params(m, params, Variant::Malthusian)?;
            let meq = MeanState::new(m.t, eq.prey.mean(), eq.predator.mean());
            Ok(conserved_h(&meq, params)? - conserved_h(m, params)?)
        })
        .collect()
}

/// First sample time after which `values` stays at or below `threshold`.
pub fn settling_time(t: &[f64], values: &[f64], threshold: f64) -> Option<f64> {
    let last_above = values.iter().rposition(|v| v.is_nan() || *v > threshold);
    match last_above {
        None => t.first().copied(),
        Some(i) if i + 1 < t.len() => Some(t[i + 1]),
        Some(_) => None,
    }
}

/// Grid norm of the difference of two fields on the same grid.
pub fn density_distance(
    a: &DensityField,
    b: &DensityField,
    norm: Norm,
) -> Result<f64, DiagnosticsError> {
    if a.grid != b.grid {
        return Err(DiagnosticsError::GridMismatch);
    }
    let diffs = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs());
    Ok(match norm {
        Norm::L1 => diffs.sum::<f64>() * a.grid.dx(),
        Norm::Sup => diffs.fold(0.0, f64::max),
    })
}

/// Grid norm of the difference between a field and a density sampled at the cell centers.
pub fn density_distance_to(field: &DensityField, f: impl Fn(f64) -> f64, norm: Norm) -> f64 {
    let other = DensityField::from_fn(field.grid, field.species, f);
    density_distance(field, &other, norm).expect("same grid by construction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fokker_planck::Grid;
    use crate::microdyn::Species;
    use crate::moments::{fixed_points, orbit_bounds};

    #[test]
    fn gap_vanishes_at_equilibrium() {
        let p = ModelParams::reference();
        let (a, b) = p.m_star();
        let traj: Vec<_> = (0..10).map(|k| MeanState::new(k as f64, a, b)).collect();
        let bnd = orbit_bounds(traj[0], &p).unwrap();
        let g = mean_gap(&traj, &p, &bnd).unwrap();
        assert!(g.gap_sum.iter().all(|v| v.abs() < 1e-14));
        assert_eq!(g.lower, 0.0);
    }

    #[test]
    fn variance_gap_zero_at_fixed_point() {
        let p = ModelParams::reference();
        let fp = fixed_points(&p);
        let s = MomentState::new(0.0, fp.m_star.0, fp.m_star.1, fp.v_star.0, fp.v_star.1);
        let g = variance_gap(&[s, s], &p, Variant::Malthusian).unwrap();
        assert!(g.d_var.iter().all(|v| *v < 1e-16));
    }

    #[test]
    fn sandwich_violation_reported() {
        let p = ModelParams::reference();
        let m0 = MeanState::new(0.0, 4.0, 3.0);
        let mut b = orbit_bounds(m0, &p).unwrap();
        b.c0_hi *= 1e-3;
        assert!(matches!(
            mean_gap(&[m0], &p, &b),
            Err(DiagnosticsError::BoundViolation { .. })
        ));
    }

    #[test]
    fn logistic_bound_zero_at_equilibrium() {
        let p = ModelParams::reference().with_carrying_capacity(10.0);
        let (a, b) = p.m_inf().unwrap();
        let g = logistic_gap_bound(&[MeanState::new(0.0, a, b)], &p).unwrap();
        assert!(g.bound[0].abs() < 1e-15 && g.gap_sum[0] < 1e-14);
    }

    #[test]
    fn settling_time_examples() {
        let t = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(settling_time(&t, &[5.0, 0.5, 2.0, 0.1], 1.0), Some(3.0));
        assert_eq!(settling_time(&t, &[0.0; 4], 1.0), Some(0.0));
        assert_eq!(settling_time(&t, &[0.0, 0.0, 0.0, 3.0], 1.0), None);
    }

    #[test]
    fn identical_fields_have_zero_distance() {
        let g = Grid::uniform(1.0, 10).unwrap();
        let f = DensityField::from_fn(g, Species::Prey, |x| x);
        assert_eq!(density_distance(&f, &f, Norm::L1).unwrap(), 0.0);
        assert_eq!(density_distance_to(&f, |x| x, Norm::Sup), 0.0);
        let h = DensityField::from_fn(Grid::uniform(2.0, 10).unwrap(), Species::Prey, |x| x);
        assert!(density_distance(&f, &h, Norm::L1).is_err());
    }
}
