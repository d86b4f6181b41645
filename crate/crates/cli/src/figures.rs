//! Presets writing the plot data of the standard experiments.

use std::path::Path;

use anyhow::{bail, Result};
use lvkinetic::config::RunConfig;
use lvkinetic::diagnostics::distance_series;
use lvkinetic::equilibria::{equilibrium_moments, rescaled_identities};
use lvkinetic::io::write_csv;
use lvkinetic::moments::{
    detect_orbit, integrate_moments, OrbitOptions, StepConfig, VarianceModel,
};
use lvkinetic::{MeanState, ModelParams, MomentState, NoiseExponent, Variant};
use rayon::prelude::*;

use crate::commands::{paired_rows, write_distances};
use crate::{check, Output};

pub const PRESETS: [&str; 5] = ["fig1", "fig2", "fig3", "fig4", "fig5"];

/// Initial means of the orbit figure.
pub const ORBIT_STARTS: [(f64, f64); 4] = [(3.0, 2.0), (3.5, 2.5), (4.0, 3.0), (4.5, 3.5)];

/// Carrying capacity of the logistic figure when the configuration sets none.
pub const DEFAULT_CAPACITY: f64 = 10.0;

pub fn run(cfg: &RunConfig, out: &Path, preset: Option<&str>) -> Result<()> {
    match preset {
        Some(name) => run_preset(cfg, out, name),
        None => PRESETS
            .par_iter()
            .map(|name| run_preset(cfg, &out.join(name), name))
            .collect(),
    }
}

fn run_preset(cfg: &RunConfig, out: &Path, name: &str) -> Result<()> {
    let mut cfg = cfg.clone();
    cfg.params.p = NoiseExponent::Half;
    match name {
        "fig1" => orbits(&mut cfg, out),
        "fig2" | "fig3" | "fig4" => malthusian(&mut cfg, out, name),
        "fig5" => logistic(&mut cfg, out),
        _ => bail!("unknown preset `{name}`"),
    }
}

fn orbits(cfg: &mut RunConfig, out: &Path) -> Result<()> {
    cfg.run.variant = Variant::Malthusian;
    let p = &cfg.params;
    let starts: Vec<(f64, f64)> = ORBIT_STARTS
        .iter()
        .chain(&cfg.run.extra_orbits)
        .copied()
        .collect();
    for &(a, b) in &starts {
        check(p, Variant::Malthusian, MeanState::new(0.0, a, b), None)?;
    }
    let mut o = Output::create(out, "figures fig1", cfg)?;
    let opts = OrbitOptions {
        dt: cfg.run.dt,
        ..OrbitOptions::default()
    };
    let every = cfg.run.output_every;
    let mut means = Vec::new();
    let mut eq_means = Vec::new();
    for (k, &(a, b)) in starts.iter().enumerate() {
        let orbit = detect_orbit(MeanState::new(0.0, a, b), p, &opts)?;
        let eq = equilibrium_moments(&orbit.samples, p, Variant::Malthusian)?;
        let last = orbit.samples.len() - 1;
        for (i, (m, e)) in orbit.samples.iter().zip(&eq).enumerate() {
            if i % every == 0 || i == last {
                means.push([k as f64, m.t, m.m1, m.m2]);
                eq_means.push([k as f64, e.t, e.m1, e.m2]);
            }
        }
        o.manifest.set(
            &format!("orbit_{k}"),
            format!(
                "({a}, {b}) period {} closure {:e}",
                orbit.period, orbit.closure_gap
            ),
        );
    }
    write_csv(
        &o.path("fig1_orbits.csv"),
        &["orbit", "t", "m1", "m2"],
        &means,
    )?;
    write_csv(
        &o.path("fig1_equilibrium_orbits.csv"),
        &["orbit", "t", "m1_eq", "m2_eq"],
        &eq_means,
    )?;
    o.finish()
}

fn trajectory(p: &ModelParams, cfg: &RunConfig, model: VarianceModel) -> Result<Vec<MomentState>> {
    let r = &cfg.run;
    Ok(integrate_moments(
        r.initial,
        p,
        model,
        &StepConfig::new(r.dt, r.t_end).sample_every(r.output_every),
    )?)
}

fn malthusian(cfg: &mut RunConfig, out: &Path, name: &str) -> Result<()> {
    cfg.run.variant = Variant::Malthusian;
    let p = &cfg.params;
    check(p, Variant::Malthusian, cfg.run.initial.means(), None)?;
    let mut o = Output::create(out, &format!("figures {name}"), cfg)?;
    o.manifest.set("output_every", cfg.run.output_every);
    let traj = trajectory(p, cfg, VarianceModel::PHalf)?;
    let means: Vec<MeanState> = traj.iter().map(|s| s.means()).collect();
    match name {
        "fig2" => {
            let eq = equilibrium_moments(&means, p, Variant::Malthusian)?;
            write_csv(
                &o.path("fig2_variances.csv"),
                &["t", "v1", "v2"],
                traj.iter().map(|s| [s.t, s.v1, s.v2]),
            )?;
            write_csv(
                &o.path("fig2_equilibrium_variances.csv"),
                &["t", "v1_eq", "v2_eq"],
                eq.iter().map(|s| [s.t, s.v1, s.v2]),
            )?;
        }
        "fig3" => write_distances(
            &o.path("fig3_distances.csv"),
            &distance_series(&traj, p, Variant::Malthusian)?,
        )?,
        _ => {
            let series = distance_series(&traj, p, Variant::Malthusian)?;
            let rows = traj
                .iter()
                .zip(&series.d_var_tilde_linf)
                .map(|(s, d)| {
                    let r = rescaled_identities(&s.means(), p)?;
                    Ok([
                        s.t,
                        *d,
                        s.v1,
                        r.v_tilde.0,
                        s.v2,
                        r.v_tilde.1,
                        r.lambda1,
                        r.lambda2,
                    ])
                })
                .collect::<Result<Vec<_>>>()?;
            write_csv(
                &o.path("fig4_rescaled.csv"),
                &[
                    "t",
                    "d_var_tilde_linf",
                    "v1",
                    "v1_tilde",
                    "v2",
                    "v2_tilde",
                    "lambda1",
                    "lambda2",
                ],
                &rows,
            )?;
        }
    }
    o.finish()
}

fn logistic(cfg: &mut RunConfig, out: &Path) -> Result<()> {
    cfg.run.variant = Variant::Logistic;
    cfg.params.carrying_capacity.get_or_insert(DEFAULT_CAPACITY);
    let p = &cfg.params;
    check(p, Variant::Logistic, cfg.run.initial.means(), None)?;
    let mut o = Output::create(out, "figures fig5", cfg)?;
    o.manifest
        .set("K", p.carrying_capacity.unwrap_or(DEFAULT_CAPACITY));
    o.manifest.set("output_every", cfg.run.output_every);
    let traj = trajectory(p, cfg, VarianceModel::Logistic)?;
    let means: Vec<MeanState> = traj.iter().map(|s| s.means()).collect();
    let eq = equilibrium_moments(&means, p, Variant::Logistic)?;
    write_csv(
        &o.path("fig5_moments.csv"),
        &[
            "t", "m1", "m2", "v1", "v2", "m1_eq", "m2_eq", "v1_eq", "v2_eq",
        ],
        paired_rows(&traj, &eq),
    )?;
    write_distances(
        &o.path("fig5_distances.csv"),
        &distance_series(&traj, p, Variant::Logistic)?,
    )?;
    o.finish()
}
