//! The `moments`, `mc`, `fp` and `equilibria` subcommands.

use std::path::Path;

use anyhow::{bail, Result};
use lvkinetic::boltzmann_mc::{
    empirical_density, mean_standard_errors, moment_estimate, McConfig, McSimulator,
    ParticleEnsemble,
};
use lvkinetic::config::RunConfig;
use lvkinetic::diagnostics::{distance_series, DistanceSeries};
use lvkinetic::equilibria::{
    equilibrium_moments, gamma_params, inverse_gamma_params, GammaDensity,
};
use lvkinetic::fokker_planck::{DensityField, FpSolver, Grid};
use lvkinetic::io::{write_csv, write_field, write_moments};
use lvkinetic::microdyn::Species;
use lvkinetic::moments::{
    admissible_bounds, fixed_points, integrate_moments, StepConfig, VarianceModel,
};
use lvkinetic::{MeanState, ModelParams, MomentState, NoiseExponent, Variant};

use crate::{check, Output};

/// Grid end used when the configuration gives none: four times the largest mean reached.
pub fn default_x_max(params: &ModelParams, variant: Variant, initial: MeanState) -> Result<f64> {
    let b = admissible_bounds(initial, params, variant)?;
    Ok(4.0 * b.c1_hi.max(b.c2_hi))
}

pub fn write_distances(path: &Path, series: &DistanceSeries) -> Result<()> {
    write_csv(path, &DistanceSeries::HEADER, series.rows())?;
    Ok(())
}

pub fn moments(cfg: &RunConfig, out: &Path) -> Result<()> {
    let (p, r) = (&cfg.params, &cfg.run);
    check(p, r.variant, r.initial.means(), None)?;
    let mut o = Output::create(out, "moments", cfg)?;
    o.manifest.set("output_every", r.output_every);
    let model = VarianceModel::for_run(r.variant, p.p);
    let traj = integrate_moments(
        r.initial,
        p,
        model,
        &StepConfig::new(r.dt, r.t_end).sample_every(r.output_every),
    )?;
    write_moments(&o.path("moments.csv"), &traj)?;
    let means: Vec<MeanState> = traj.iter().map(|s| s.means()).collect();
    if p.p == NoiseExponent::Half {
        write_moments(
            &o.path("equilibrium.csv"),
            &equilibrium_moments(&means, p, r.variant)?,
        )?;
        write_distances(
            &o.path("distances.csv"),
            &distance_series(&traj, p, r.variant)?,
        )?;
    }
    o.finish()
}

pub fn mc(cfg: &RunConfig, out: &Path) -> Result<()> {
    let (p, r) = (&cfg.params, &cfg.run);
    check(p, r.variant, r.initial.means(), Some(r.epsilon))?;
    let mut o = Output::create(out, "mc", cfg)?;
    let init = r.initial;
    let model = VarianceModel::for_run(r.variant, p.p);
    let oracle = integrate_moments(init, p, model, &StepConfig::new(r.dt, r.t_end))?;
    let lna = mean_standard_errors(
        &oracle,
        p,
        model,
        r.environment,
        r.epsilon,
        r.n_particles,
        (init.v1, init.v2),
    );

    let ensemble = ParticleEnsemble::from_gamma(
        r.n_particles,
        (init.m1, init.v1),
        (init.m2, init.v2),
        r.epsilon,
        r.seed,
    )?;
    let mut mc = McConfig::new(p.clone(), r.variant, r.epsilon, r.seed);
    mc.scheme = r.scheme;
    mc.environment = r.environment;
    mc.noise_law = r.noise_law;
    let x_max = match r.x_max {
        Some(x) => x,
        None => default_x_max(p, r.variant, init.means())?,
    };
    let grid = Grid::uniform(x_max, r.n_cells)?;
    let mut sim = McSimulator::new(mc, ensemble)?;
    for species in [Species::Prey, Species::Predator] {
        write_field(
            &o.path(&format!("histogram_{species}_initial.csv")),
            &empirical_density(&sim.ensemble, grid, species).0,
        )?;
    }

    let mut rows = Vec::new();
    sim.run(r.t_end, r.checkpoint, r.mc_dt, |s| {
        let est = moment_estimate(&s.ensemble);
        let k = (((s.t() - init.t) / r.dt).round() as usize).min(oracle.len() - 1);
        let (ode, se) = (oracle[k], lna[k]);
        let e = est.state;
        rows.push([
            s.t(),
            e.m1,
            e.m2,
            e.v1,
            e.v2,
            est.se1,
            est.se2,
            se.0,
            se.1,
            ode.m1,
            ode.m2,
        ]);
    })?;
    write_csv(
        &o.path("mc_moments.csv"),
        &[
            "t", "m1", "m2", "v1", "v2", "se1", "se2", "lna_se1", "lna_se2", "m1_ode", "m2_ode",
        ],
        &rows,
    )?;
    for species in [Species::Prey, Species::Predator] {
        let (field, outside) = empirical_density(&sim.ensemble, grid, species);
        write_field(&o.path(&format!("histogram_{species}_final.csv")), &field)?;
        o.manifest.set(&format!("outside_grid_{species}"), outside);
    }
    let m = &mut o.manifest;
    m.set("n_particles", r.n_particles);
    m.set("epsilon", r.epsilon);
    m.set("scheme", format!("{:?}", r.scheme));
    m.set("mc_dt", r.mc_dt);
    m.set("checkpoint", r.checkpoint);
    m.set("n_cells", r.n_cells);
    m.set("x_max", x_max);
    m.set("candidates", sim.stats.candidates);
    m.set("accepted", sim.stats.accepted);
    m.set("noise_fallbacks", sim.stats.noise_fallbacks);
    o.finish()
}

fn gamma_field(grid: Grid, species: Species, mean: f64, variance: f64) -> DensityField {
    let g = GammaDensity::from_moments(mean, variance);
    DensityField::from_fn_normalized(grid, species, |x| g.density(x))
}

pub fn fp(cfg: &RunConfig, out: &Path) -> Result<()> {
    let (p, r) = (&cfg.params, &cfg.run);
    let init = r.initial;
    check(p, r.variant, init.means(), None)?;
    if !(r.dt > 0.0 && r.t_end > init.t) {
        bail!("need dt > 0 and t_end past the initial time");
    }
    let mut o = Output::create(out, "fp", cfg)?;
    let x_max = match r.x_max {
        Some(x) => x,
        None => default_x_max(p, r.variant, init.means())?,
    };
    let grid = Grid::uniform(x_max, r.n_cells)?;
    let prey = gamma_field(grid, Species::Prey, init.m1, init.v1);
    let pred = gamma_field(grid, Species::Predator, init.m2, init.v2);
    let mut solver = FpSolver::new(
        p.clone(),
        r.variant,
        r.coupling_mode,
        prey,
        pred,
        init.means(),
    )?;

    let n_steps = ((r.t_end - init.t) / r.dt - 1e-9).ceil() as usize;
    let snapshot_steps: Vec<usize> = (0..=4).map(|j| (n_steps * j + 2) / 4).collect();
    let mut rows = Vec::new();
    let mut snapshots = Vec::new();
    let mut k = 0usize;
    solver.run(r.dt, r.t_end, 1, |s| {
        if k.is_multiple_of(r.output_every) || k == n_steps {
            let (m1, v1) = s.prey.moments();
            let (m2, v2) = s.predator.moments();
            rows.push([
                s.t,
                m1,
                m2,
                v1,
                v2,
                s.prey.mass(),
                s.predator.mass(),
                s.ode_means.m1,
                s.ode_means.m2,
            ]);
        }
        if snapshot_steps.contains(&k) {
            snapshots.push((s.t, s.prey.clone(), s.predator.clone()));
        }
        k += 1;
    })?;
    write_csv(
        &o.path("fp_moments.csv"),
        &[
            "t",
            "m1",
            "m2",
            "v1",
            "v2",
            "mass1",
            "mass2",
            "m1_driving",
            "m2_driving",
        ],
        &rows,
    )?;
    for (j, (t, prey, pred)) in snapshots.iter().enumerate() {
        write_field(&o.path(&format!("snapshot_{j}_prey.csv")), prey)?;
        write_field(&o.path(&format!("snapshot_{j}_predator.csv")), pred)?;
        o.manifest.set(&format!("snapshot_{j}_t"), t);
    }
    let m = &mut o.manifest;
    m.set("n_cells", r.n_cells);
    m.set("x_max", x_max);
    m.set("coupling_mode", format!("{:?}", r.coupling_mode));
    m.set("output_every", r.output_every);
    o.finish()
}

pub fn equilibria(cfg: &RunConfig, out: &Path) -> Result<()> {
    let (p, r) = (&cfg.params, &cfg.run);
    let init = r.initial.means();
    check(p, r.variant, init, None)?;
    let mut o = Output::create(out, "equilibria", cfg)?;
    let fp = fixed_points(p);
    let (mi, vi) = (
        fp.m_inf.unwrap_or((f64::NAN, f64::NAN)),
        fp.v_inf.unwrap_or((f64::NAN, f64::NAN)),
    );
    write_csv(
        &o.path("fixed_points.csv"),
        &[
            "m1_star", "m2_star", "v1_star", "v2_star", "m1_inf", "m2_inf", "v1_inf", "v2_inf",
        ],
        [[
            fp.m_star.0,
            fp.m_star.1,
            fp.v_star.0,
            fp.v_star.1,
            mi.0,
            mi.1,
            vi.0,
            vi.1,
        ]],
    )?;

    let center = match r.variant {
        Variant::Malthusian => fp.m_star,
        Variant::Logistic => mi,
    };
    let global = MeanState::new(0.0, center.0, center.1);
    let x_max = match r.x_max {
        Some(x) => x,
        None => default_x_max(p, r.variant, init)?,
    };
    let grid = Grid::uniform(x_max, r.n_cells)?;
    // density tables at the initial means and at the coexistence point
    let densities: Vec<[f64; 5]> = match p.p {
        NoiseExponent::Half => {
            let local = gamma_params(&init, p, r.variant)?;
            let eq = gamma_params(&global, p, r.variant)?;
            write_csv(
                &o.path("gamma_params.csv"),
                &["m1", "m2", "a1", "b1", "a2", "b2"],
                [init, global]
                    .iter()
                    .zip([&local, &eq])
                    .map(|(m, g)| [m.m1, m.m2, g.a1(), g.b1(), g.a2(), g.b2()]),
            )?;
            grid.centers()
                .map(|x| {
                    [
                        x,
                        local.prey.density(x),
                        local.predator.density(x),
                        eq.prey.density(x),
                        eq.predator.density(x),
                    ]
                })
                .collect()
        }
        NoiseExponent::One => {
            let (l1, l2) = inverse_gamma_params(&init, p, r.variant)?;
            let (e1, e2) = inverse_gamma_params(&global, p, r.variant)?;
            grid.centers()
                .map(|x| {
                    [
                        x,
                        l1.density(x),
                        l2.density(x),
                        e1.density(x),
                        e2.density(x),
                    ]
                })
                .collect()
        }
    };
    write_csv(
        &o.path("densities.csv"),
        &["x", "f1_local", "f2_local", "f1_global", "f2_global"],
        &densities,
    )?;
    o.manifest.set("n_cells", r.n_cells);
    o.manifest.set("x_max", x_max);
    o.finish()
}

/// Moment trajectory paired with its local equilibria, one row per sample.
pub fn paired_rows(traj: &[MomentState], eq: &[MomentState]) -> Vec<[f64; 9]> {
    traj.iter()
        .zip(eq)
        .map(|(s, e)| [s.t, s.m1, s.m2, s.v1, s.v2, e.m1, e.m2, e.v1, e.v2])
        .collect()
}
