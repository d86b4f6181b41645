//! Property tests of the model invariants.

use lvkinetic::boltzmann_mc::{McConfig, McSimulator, ParticleEnsemble, Scheme};
use lvkinetic::equilibria::{equilibrium_moments, gamma_params, rescaled_identities};
use lvkinetic::fokker_planck::{coefficients, discrete_flux, fp_step, DensityField, Grid};
use lvkinetic::microdyn::{predator_update, prey_update, sample_noise, NoiseSpec, Species};
use lvkinetic::moments::{integrate_means, orbit_bounds, StepConfig};
use lvkinetic::{MeanState, ModelParams, NoiseExponent, Variant};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn reference() -> ModelParams {
    ModelParams::reference()
}

fn exponent() -> impl Strategy<Value = NoiseExponent> {
    prop_oneof![Just(NoiseExponent::Half), Just(NoiseExponent::One)]
}

fn params() -> impl Strategy<Value = ModelParams> {
    (
        0.1f64..3.0,
        0.05f64..1.0,
        0.05f64..0.5,
        1.0f64..20.0,
        1e-4f64..1e-2,
        1e-4f64..1e-2,
        -0.5f64..1.0,
        -0.5f64..1.0,
    )
        .prop_map(|(alpha, beta, gamma, mu, s1, s2, chi, theta)| ModelParams {
            alpha,
            beta,
            gamma,
            mu,
            // keep delta = gamma mu - nu positive
            nu: 0.5 * gamma * mu,
            sigma1: s1,
            sigma2: s2,
            chi,
            theta,
            ..reference()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn validation_is_deterministic(p in params(), logistic in any::<bool>()) {
        let variant = if logistic { Variant::Logistic } else { Variant::Malthusian };
        let a = p.validate(variant);
        let b = p.clone().validate(variant);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn interactions_preserve_positivity(
        x in 0.0f64..50.0,
        y in 0.0f64..50.0,
        eps in 1e-3f64..0.6,
        sigma in 1e-4f64..1.0,
        p in exponent(),
        seed in any::<u64>(),
    ) {
        let base = ModelParams { p, sigma1: sigma, sigma2: sigma, ..reference() };
        let micro = base.scaled(eps);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..32 {
            let e1 = sample_noise(&NoiseSpec::prey(y, &micro), &mut rng).value;
            let e2 = sample_noise(&NoiseSpec::predator(x, &micro), &mut rng).value;
            let xp = prey_update(x, y, e1, &micro).unwrap().new_size;
            let yp = predator_update(y, x, e2, &micro).unwrap().new_size;
            prop_assert!(xp >= 0.0 && yp >= 0.0);
        }
    }

    #[test]
    fn sigma_scaling_of_quasi_equilibria(
        m1 in 0.5f64..6.0,
        m2 in 0.5f64..6.0,
        factor in 0.1f64..10.0,
    ) {
        let p = reference();
        let q = ModelParams { sigma1: p.sigma1 * factor, sigma2: p.sigma2 * factor, ..p.clone() };
        let m = MeanState::new(0.0, m1, m2);
        let a = gamma_params(&m, &p, Variant::Malthusian).unwrap().moments();
        let b = gamma_params(&m, &q, Variant::Malthusian).unwrap().moments();
        prop_assert!((a.m1 - b.m1).abs() <= 1e-12 * a.m1 && (a.m2 - b.m2).abs() <= 1e-12 * a.m2);
        prop_assert!((b.v1 / a.v1 - factor).abs() <= 1e-10 * factor);
        prop_assert!((b.v2 / a.v2 - factor).abs() <= 1e-10 * factor);
    }

    #[test]
    fn gamma_variance_identity(m1 in 0.5f64..6.0, m2 in 0.5f64..6.0) {
        let p = reference();
        let g = gamma_params(&MeanState::new(0.0, m1, m2), &p, Variant::Malthusian).unwrap();
        let s = g.moments();
        prop_assert!((s.v1 - s.m1 * s.m1 / g.a1()).abs() <= 1e-14 * s.v1.max(1.0));
        prop_assert!((s.v2 - s.m2 * s.m2 / g.a2()).abs() <= 1e-14 * s.v2.max(1.0));
    }

    #[test]
    fn mass_conserved_and_positive(
        m1 in 1.0f64..6.0,
        m2 in 1.0f64..4.0,
        shape in 5.0f64..50.0,
        dt in 1e-3f64..1.0,
    ) {
        let p = reference();
        let grid = Grid::uniform(12.0, 400).unwrap();
        let init = |mean: f64| move |x: f64| x.powf(shape - 1.0) * (-shape * x / mean).exp();
        let mut prey = DensityField::from_fn_normalized(grid, Species::Prey, init(3.0));
        let mut pred = DensityField::from_fn_normalized(grid, Species::Predator, init(2.0));
        let c = coefficients(m1, m2, &p, Variant::Malthusian);
        for _ in 0..5 {
            fp_step(&mut prey, &mut pred, c, dt, NoiseExponent::Half, 0.0).unwrap();
            prop_assert!((prey.mass() - 1.0).abs() <= 1e-12);
            prop_assert!((pred.mass() - 1.0).abs() <= 1e-12);
            prop_assert!(prey.min_value() >= -1e-14 && pred.min_value() >= -1e-14);
        }
    }

    #[test]
    fn quasi_equilibrium_annihilates_discrete_flux(m1 in 1.5f64..6.0, m2 in 1.0f64..3.5) {
        let p = reference();
        let m = MeanState::new(0.0, m1, m2);
        let g = gamma_params(&m, &p, Variant::Malthusian).unwrap();
        let (c1, c2) = coefficients(m1, m2, &p, Variant::Malthusian);
        let grid = Grid::uniform(12.0, 800).unwrap();
        let prey = DensityField::from_fn(grid, Species::Prey, |x| g.prey.density(x));
        let pred = DensityField::from_fn(grid, Species::Predator, |x| g.predator.density(x));
        let r1 = discrete_flux(&prey, &c1, NoiseExponent::Half).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let r2 = discrete_flux(&pred, &c2, NoiseExponent::Half).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        prop_assert!(r1 <= 1e-8 && r2 <= 1e-8, "{} {}", r1, r2);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn exponents_positive_and_rescaling_exact_along_orbits(
        m1 in 2.0f64..5.0,
        m2 in 1.2f64..3.0,
        chi in -0.2f64..0.5,
        theta in -0.05f64..0.05,
    ) {
        let p = ModelParams { chi, theta, ..reference() };
        let init = MeanState::new(0.0, m1, m2);
        let report = p.validate_with(Variant::Malthusian, &lvkinetic::params::ValidateOptions {
            initial: Some(init),
            epsilon: None,
        });
        prop_assume!(report.is_admissible());
        let bounds = orbit_bounds(init, &p).unwrap();
        prop_assert!(bounds.zeta1 > 0.0 && bounds.zeta2 > 0.0);
        let traj = integrate_means(init, &p, Variant::Malthusian, &StepConfig::new(1e-2, 30.0)).unwrap();
        for s in traj.iter().step_by(50) {
            let g = gamma_params(s, &p, Variant::Malthusian).unwrap();
            prop_assert!(g.a1() > 0.0 && g.b1() > 0.0 && g.a2() > 0.0 && g.b2() > 0.0);
            let r = rescaled_identities(s, &p).unwrap();
            prop_assert!((r.m_tilde.0 - s.m1).abs() <= 1e-12 * s.m1);
            prop_assert!((r.m_tilde.1 - s.m2).abs() <= 1e-12 * s.m2);
        }
        prop_assert!(equilibrium_moments(&traj, &p, Variant::Malthusian).is_ok());
    }

    #[test]
    fn particle_counts_and_signs_preserved(seed in any::<u64>(), stepped in any::<bool>()) {
        let p = reference();
        let e = ParticleEnsemble::from_gamma(300, (4.0, 0.1), (3.0, 0.1), 0.1, seed).unwrap();
        let mut cfg = McConfig::new(p, Variant::Malthusian, 0.1, seed);
        if stepped {
            cfg.scheme = Scheme::TimeStepped;
        }
        let mut sim = McSimulator::new(cfg, e).unwrap();
        sim.run(1.0, 0.5, 5e-3, |s| {
            assert_eq!(s.ensemble.preys.len(), 300);
            assert_eq!(s.ensemble.predators.len(), 300);
            assert!(s.ensemble.preys.iter().chain(&s.ensemble.predators).all(|v| *v >= 0.0));
        }).unwrap();
    }
}

#[test]
fn stepped_scheme_independent_of_thread_count() {
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| {
            let e = ParticleEnsemble::from_gamma(2000, (4.0, 0.1), (3.0, 0.1), 0.05, 9).unwrap();
            let mut cfg = McConfig::new(reference(), Variant::Malthusian, 0.05, 9);
            cfg.scheme = Scheme::TimeStepped;
            let mut sim = McSimulator::new(cfg, e).unwrap();
            sim.run(0.5, 0.25, 2e-3, |_| {}).unwrap();
            sim.ensemble
        })
    };
    let one = run(1);
    let four = run(4);
    assert_eq!(one, four);
}
