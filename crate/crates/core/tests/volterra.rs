use epilimit::abm::{Dynamics, InitialCondition, Migration, ModelSpec, MultipatchSpec, Patch};
use epilimit::laws::{DurationLaw, InfectivityLaw, JointLaw, SusceptibilityLaw};
use epilimit::volterra::{
    solve, solve_multipatch_volterra, solve_ode, solve_seir_volterra, solve_sir_volterra,
    solve_vi_volterra, solve_vivs_fixed_point, ContactSchedule, OdeSystem, PanelMode,
    SolveOptions,
};
use epilimit::{Error, TimeMesh};
use proptest::prelude::*;

fn sup(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn sir_model(lambda: f64, period: DurationLaw, i0: f64) -> ModelSpec {
    ModelSpec::new(
        1000,
        Dynamics::NonmarkovSir {
            infection_rate: lambda,
            infectious_period: period,
            initial_period: None,
        },
        InitialCondition::sir(i0),
    )
}

fn vi_model(law: InfectivityLaw, i0: f64) -> ModelSpec {
    ModelSpec::new(
        1000,
        Dynamics::VaryingInfectivity {
            infectivity: law,
            initial_infectivity: None,
        },
        InitialCondition::sir(i0),
    )
}

fn vivs_model(
    law: InfectivityLaw,
    waning: SusceptibilityLaw,
    initial: InitialCondition,
) -> ModelSpec {
    ModelSpec::new(
        1000,
        Dynamics::VaryingSusceptibility {
            infectivity: law,
            susceptibility: waning,
            initial_infectivity: None,
            since_recovery: None,
        },
        initial,
    )
}

fn sir_ode(lambda: f64, gamma: f64) -> OdeSystem {
    OdeSystem::Sir {
        infection_rate: lambda,
        recovery_rate: gamma,
    }
}

// ---------------------------------------------------------------- ODEs

#[test]
fn ode_without_infection_decays_exponentially() {
    let mesh = TimeMesh::new(1.0, 0.01).unwrap();
    let sol = solve_ode(&sir_ode(0.0, 1.0), &InitialCondition::sir(0.1), &mesh, None).unwrap();
    let i1 = *sol.i().last().unwrap();
    assert!((i1 - 0.1 / std::f64::consts::E).abs() < 1e-10);
}

#[test]
fn sis_ode_settles_at_one_minus_inverse_r0() {
    let mesh = TimeMesh::new(40.0, 0.01).unwrap();
    let sys = OdeSystem::Sis {
        infection_rate: 2.0,
        recovery_rate: 1.0,
    };
    let sol = solve_ode(&sys, &InitialCondition::sir(0.01), &mesh, None).unwrap();
    assert!((sol.i().last().unwrap() - 0.5).abs() < 1e-8);
}

// Reference values from an independent high-order integrator (rtol 1e-13).
const SIR_I5: f64 = 0.07499920099087427;
const SIR_S5: f64 = 0.5090274859748615;

#[test]
fn sir_ode_matches_reference_integrator() {
    let mesh = TimeMesh::new(5.0, 0.001).unwrap();
    let sol = solve_ode(&sir_ode(1.5, 1.0), &InitialCondition::sir(0.05), &mesh, None).unwrap();
    assert!((sol.i().last().unwrap() - SIR_I5).abs() < 1e-10);
    assert!((sol.s().last().unwrap() - SIR_S5).abs() < 1e-10);
}

#[test]
fn sir_peak_is_where_effective_reproduction_crosses_one() {
    let (lambda, gamma) = (3.0, 1.0);
    let mesh = TimeMesh::new(15.0, 0.001).unwrap();
    let sol = solve_ode(&sir_ode(lambda, gamma), &InitialCondition::sir(0.001), &mesh, None).unwrap();
    let i = sol.i();
    let k = (0..i.len()).max_by(|a, b| i[*a].total_cmp(&i[*b])).unwrap();
    assert!((lambda / gamma * sol.s()[k] - 1.0).abs() < 5e-3);
}

#[test]
fn contact_reduction_slows_the_ode() {
    let mesh = TimeMesh::new(10.0, 0.01).unwrap();
    let ic = InitialCondition::sir(0.01);
    let base = solve_ode(&sir_ode(2.0, 1.0), &ic, &mesh, None).unwrap();
    let cut = ContactSchedule::step(2.0, 0.4);
    let slow = solve_ode(&sir_ode(2.0, 1.0), &ic, &mesh, Some(&cut)).unwrap();
    let k = mesh.index_of(2.0) - 1;
    assert!((base.i()[k] - slow.i()[k]).abs() < 1e-12);
    assert!(slow.cumulative().last() < base.cumulative().last());
}

// ------------------------------------------------------- non-Markov SIR

#[test]
fn exponential_sir_volterra_matches_the_ode() {
    let mesh = TimeMesh::new(5.0, 1e-3).unwrap();
    let model = sir_model(1.5, DurationLaw::exponential(1.0), 0.05);
    let sol = solve_sir_volterra(&model, &mesh, &SolveOptions::default()).unwrap();
    assert!((sol.i().last().unwrap() - SIR_I5).abs() < 1e-4);
    assert!((sol.s().last().unwrap() - SIR_S5).abs() < 1e-4);
    let ode = solve_ode(&sir_ode(1.5, 1.0), &InitialCondition::sir(0.05), &mesh, None).unwrap();
    assert!(sup(sol.i(), ode.i()) < 1e-4);
    assert!(sup(sol.s(), ode.s()) < 1e-4);
}

#[test]
fn no_infected_means_nothing_happens() {
    let mesh = TimeMesh::new(5.0, 0.01).unwrap();
    let model = sir_model(2.0, DurationLaw::gamma(2.0, 0.5), 0.0);
    let sol = solve_sir_volterra(&model, &mesh, &SolveOptions::default()).unwrap();
    assert!(sol.s().iter().all(|s| (*s - 1.0).abs() < 1e-15));
    assert!(sol.i().iter().all(|i| *i == 0.0));
}

#[test]
fn deterministic_period_satisfies_the_delay_identity() {
    // With a fixed period d, I(t) = I0 1{t < d} + A(t) - A(t - d).
    let d = 1.0;
    let h = 0.005;
    let mesh = TimeMesh::new(6.0, h).unwrap();
    let model = sir_model(2.0, DurationLaw::deterministic(d), 0.02);
    let sol = solve_sir_volterra(&model, &mesh, &SolveOptions::default()).unwrap();
    let lag = (d / h).round() as usize;
    let a = sol.cumulative();
    let mut worst: f64 = 0.0;
    for k in 0..mesh.nodes() {
        if k == lag {
            continue;
        }
        let base = if k < lag { 0.02 } else { 0.0 };
        let past = if k >= lag { a[k - lag] } else { 0.0 };
        worst = worst.max((sol.i()[k] - (base + a[k] - past)).abs());
    }
    assert!(worst < 1e-3, "residual {worst}");
}

#[test]
fn sir_volterra_is_monotone_and_balanced() {
    let mesh = TimeMesh::new(10.0, 0.01).unwrap();
    let model = sir_model(2.5, DurationLaw::uniform(0.5, 1.5), 0.01);
    let sol = solve_sir_volterra(&model, &mesh, &SolveOptions::default()).unwrap();
    for k in 1..mesh.nodes() {
        assert!(sol.s()[k] <= sol.s()[k - 1] + 1e-15);
        assert!(sol.r()[k] >= sol.r()[k - 1] - 1e-15);
        let total = sol.s()[k] + sol.i()[k] + sol.r()[k];
        assert!((total - 1.0).abs() < 1e-12, "sum {total}");
        assert!((0.99 - sol.s()[k] - sol.cumulative()[k]).abs() < 1e-12);
    }
}

#[test]
fn sir_volterra_converges_at_second_order() {
    let model = sir_model(2.0, DurationLaw::gamma(2.0, 0.5), 0.02);
    let at = |h: f64| {
        let mesh = TimeMesh::new(4.0, h).unwrap();
        let sol = solve_sir_volterra(&model, &mesh, &SolveOptions::default()).unwrap();
        *sol.i().last().unwrap()
    };
    let (a, b, c) = (at(0.04), at(0.02), at(0.01));
    let order = ((a - b).abs() / (b - c).abs()).log2();
    assert!((1.7..=2.3).contains(&order), "order {order}");
}

#[test]
fn linearized_sir_grows_at_the_malthusian_rate() {
    // Frozen S: F = lambda I solves a renewal equation whose growth rate
    // rho satisfies lambda s0 / (rho + gamma) = 1 for exponential periods.
    let mesh = TimeMesh::new(6.0, 0.002).unwrap();
    let model = sir_model(3.0, DurationLaw::exponential(1.0), 1e-4);
    let opts = SolveOptions {
        linearized: true,
        ..SolveOptions::default()
    };
    let sol = solve_sir_volterra(&model, &mesh, &opts).unwrap();
    let rho = 3.0 * (1.0 - 1e-4) - 1.0;
    let f = sol.force();
    let (k1, k2) = (mesh.index_of(4.0), mesh.index_of(6.0));
    let observed = (f[k2] / f[k1]).ln() / 2.0;
    assert!((observed - rho).abs() < 1e-4, "{observed} vs {rho}");
}

// --------------------------------------------------- varying infectivity

#[test]
fn constant_infectivity_reduces_to_sir() {
    let mesh = TimeMesh::new(8.0, 0.01).unwrap();
    let period = DurationLaw::gamma(3.0, 0.4);
    let sir = solve_sir_volterra(&sir_model(1.8, period.clone(), 0.03), &mesh, &SolveOptions::default())
        .unwrap();
    let vi = solve_vi_volterra(
        &vi_model(InfectivityLaw::constant(1.8, period), 0.03),
        &mesh,
        &SolveOptions::default(),
    )
    .unwrap();
    assert!(sup(sir.s(), vi.s()) < 1e-6);
    assert!(sup(sir.i(), vi.i()) < 1e-6);
    assert!(sup(sir.force(), vi.force()) < 1e-6);
}

#[test]
fn zero_infectivity_keeps_the_initial_cohort_only() {
    let mesh = TimeMesh::new(5.0, 0.01).unwrap();
    let period = DurationLaw::exponential(0.5);
    let sol = solve_vi_volterra(
        &vi_model(InfectivityLaw::constant(0.0, period.clone()), 0.2),
        &mesh,
        &SolveOptions::default(),
    )
    .unwrap();
    for (k, t) in mesh.times().iter().enumerate() {
        assert!((sol.s()[k] - 0.8).abs() < 1e-15);
        assert!((sol.i()[k] - 0.2 * period.survival(*t)).abs() < 1e-12);
        assert_eq!(sol.force()[k], 0.0);
    }
}

#[test]
fn covid_profile_solves_and_stays_in_bounds() {
    let mesh = TimeMesh::new(30.0, 0.05).unwrap();
    let sol = solve_vi_volterra(
        &vi_model(InfectivityLaw::covid(1.0, 0.5), 1e-3),
        &mesh,
        &SolveOptions::default(),
    )
    .unwrap();
    for k in 0..mesh.nodes() {
        assert!(sol.s()[k] >= 0.0 && sol.s()[k] <= 1.0);
        assert!(sol.i()[k] >= -1e-12);
        assert!((sol.s()[k] + sol.i()[k] + sol.r()[k] - 1.0).abs() < 1e-12);
    }
}

// ------------------------------------------------------------------ SEIR

fn seir_model(periods: JointLaw, e0: f64, i0: f64) -> ModelSpec {
    ModelSpec::new(
        1000,
        Dynamics::NonmarkovSeir {
            infection_rate: 2.0,
            periods,
            initial_latency: None,
            initial_period: None,
        },
        InitialCondition {
            susceptible: 1.0 - e0 - i0,
            exposed: e0,
            infected: i0,
            recovered: 0.0,
            age: None,
        },
    )
}

#[test]
fn exponential_seir_matches_the_ode() {
    let mesh = TimeMesh::new(8.0, 1e-3).unwrap();
    let periods = JointLaw::independent(DurationLaw::exponential(2.0), DurationLaw::exponential(1.0));
    let model = seir_model(periods, 0.02, 0.01);
    let sol = solve_seir_volterra(&model, &mesh, &SolveOptions::default()).unwrap();
    let sys = OdeSystem::Seir {
        infection_rate: 2.0,
        latency_rate: 2.0,
        recovery_rate: 1.0,
    };
    let ode = solve_ode(&sys, &model.initial, &mesh, None).unwrap();
    assert!(sup(sol.s(), ode.s()) < 1e-4);
    assert!(sup(sol.e(), ode.e()) < 1e-4);
    assert!(sup(sol.i(), ode.i()) < 1e-4);
    assert!(sup(sol.r(), ode.r()) < 1e-4);
}

#[test]
fn seir_without_infection_is_constant() {
    let mesh = TimeMesh::new(4.0, 0.01).unwrap();
    let periods = JointLaw::independent(DurationLaw::deterministic(0.5), DurationLaw::gamma(2.0, 0.5));
    let sol = solve_seir_volterra(&seir_model(periods, 0.0, 0.0), &mesh, &SolveOptions::default())
        .unwrap();
    assert!(sol.s().iter().all(|s| *s == 1.0));
    assert!(sol.e().iter().chain(sol.i()).all(|v| *v == 0.0));
}

#[test]
fn seir_equals_varying_infectivity_with_a_latent_profile() {
    let mesh = TimeMesh::new(10.0, 0.005).unwrap();
    let latency = DurationLaw::deterministic(0.75);
    let period = DurationLaw::uniform(0.5, 1.5);
    let seir = solve_seir_volterra(
        &seir_model(JointLaw::independent(latency.clone(), period.clone()), 0.02, 0.0),
        &mesh,
        &SolveOptions::default(),
    )
    .unwrap();
    let vi = solve_vi_volterra(
        &vi_model(
            InfectivityLaw::Latent {
                rate: 2.0,
                latency,
                period,
            },
            0.02,
        ),
        &mesh,
        &SolveOptions::default(),
    )
    .unwrap();
    assert!(sup(seir.s(), vi.s()) < 1e-4);
    assert!(sup(seir.force(), vi.force()) < 1e-4);
    let exposed_or_infected: Vec<f64> = seir.e().iter().zip(seir.i()).map(|(e, i)| e + i).collect();
    assert!(sup(&exposed_or_infected, vi.i()) < 1e-4);
}

// ------------------------------------------------------------- multipatch

fn multipatch(spec: MultipatchSpec) -> ModelSpec {
    let s: f64 = spec.patches.iter().map(|p| p.susceptible).sum();
    let i: f64 = spec.patches.iter().map(|p| p.infected).sum();
    let r: f64 = spec.patches.iter().map(|p| p.recovered).sum();
    ModelSpec::new(
        1000,
        Dynamics::Multipatch(spec),
        InitialCondition {
            susceptible: s,
            exposed: 0.0,
            infected: i,
            recovered: r,
            age: None,
        },
    )
}

fn patch(lambda: f64, s: f64, i: f64) -> Patch {
    Patch {
        infection_rate: lambda,
        susceptible: s,
        infected: i,
        recovered: 0.0,
    }
}

fn two_patches() -> MultipatchSpec {
    MultipatchSpec {
        patches: vec![patch(2.0, 0.4, 0.05), patch(1.5, 0.55, 0.0)],
        contact: vec![vec![1.0, 0.3], vec![0.5, 1.0]],
        normalization: 0.5,
        infectious_period: DurationLaw::exponential(1.0),
        initial_period: None,
        migration: Migration {
            susceptible: vec![vec![0.0, 0.2], vec![0.1, 0.0]],
            infected: vec![vec![0.0, 0.1], vec![0.1, 0.0]],
            recovered: vec![vec![0.0, 0.2], vec![0.1, 0.0]],
        },
    }
}

#[test]
fn one_patch_is_the_sir_limit() {
    let mesh = TimeMesh::new(6.0, 0.01).unwrap();
    let period = DurationLaw::gamma(2.0, 0.5);
    let spec = MultipatchSpec {
        patches: vec![patch(2.0, 0.97, 0.03)],
        contact: vec![vec![1.0]],
        normalization: 0.7,
        infectious_period: period.clone(),
        initial_period: None,
        migration: Migration::default(),
    };
    let mp = solve_multipatch_volterra(&multipatch(spec), &mesh, &SolveOptions::default()).unwrap();
    let sir = solve_sir_volterra(&sir_model(2.0, period, 0.03), &mesh, &SolveOptions::default())
        .unwrap();
    assert!(sup(mp.s(), sir.s()) < 1e-6, "{}", sup(mp.s(), sir.s()));
    assert!(sup(mp.i(), sir.i()) < 1e-6, "{}", sup(mp.i(), sir.i()));
}

#[test]
fn decoupled_patches_evolve_as_separate_epidemics() {
    let mesh = TimeMesh::new(6.0, 0.01).unwrap();
    let period = DurationLaw::uniform(0.5, 1.5);
    let spec = MultipatchSpec {
        patches: vec![patch(2.0, 0.38, 0.02), patch(3.0, 0.59, 0.01)],
        contact: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        normalization: 1.0,
        infectious_period: period.clone(),
        initial_period: None,
        migration: Migration::default(),
    };
    let mp = solve_multipatch_volterra(&multipatch(spec), &mesh, &SolveOptions::default()).unwrap();
    for (p, (lambda, size, i0)) in [(2.0, 0.4, 0.05), (3.0, 0.6, 0.01 / 0.6)].iter().enumerate() {
        let sir = solve_sir_volterra(&sir_model(*lambda, period.clone(), *i0), &mesh, &SolveOptions::default())
            .unwrap();
        let s: Vec<f64> = mp.curve(&format!("S_p{p}")).unwrap().iter().map(|v| v / size).collect();
        let i: Vec<f64> = mp.curve(&format!("I_p{p}")).unwrap().iter().map(|v| v / size).collect();
        assert!(sup(&s, sir.s()) < 1e-6, "patch {p}: {}", sup(&s, sir.s()));
        assert!(sup(&i, sir.i()) < 1e-6, "patch {p}: {}", sup(&i, sir.i()));
    }
}

#[test]
fn symmetric_patches_stay_identical() {
    let mesh = TimeMesh::new(5.0, 0.02).unwrap();
    let spec = MultipatchSpec {
        patches: vec![patch(2.0, 0.48, 0.02), patch(2.0, 0.48, 0.02)],
        contact: vec![vec![1.0, 0.4], vec![0.4, 1.0]],
        normalization: 0.3,
        infectious_period: DurationLaw::gamma(2.0, 0.5),
        initial_period: None,
        migration: Migration {
            susceptible: vec![vec![0.0, 0.3], vec![0.3, 0.0]],
            infected: vec![vec![0.0, 0.1], vec![0.1, 0.0]],
            recovered: vec![vec![0.0, 0.2], vec![0.2, 0.0]],
        },
    };
    let mp = solve_multipatch_volterra(&multipatch(spec), &mesh, &SolveOptions::default()).unwrap();
    for c in ["S", "I", "R"] {
        let a = mp.curve(&format!("{c}_p0")).unwrap();
        let b = mp.curve(&format!("{c}_p1")).unwrap();
        assert!(sup(a, b) < 1e-12);
    }
}

#[test]
fn exponential_multipatch_matches_the_ode_reference() {
    // Reference: the equivalent ODE system integrated at rtol 1e-13.
    // Order: S0, S1, I0, I1, R0, R1.
    let refs = [
        (
            2.0,
            [
                0.24810927250152195,
                0.45527213260372884,
                0.06026587991682529,
                0.060333448777257236,
                0.09745847466835073,
                0.07856079153231602,
            ],
        ),
        (
            5.0,
            [
                0.1279623882685264,
                0.27260714212233994,
                0.033652917882244,
                0.048094973140295115,
                0.2107118008650843,
                0.30697077772151027,
            ],
        ),
    ];
    let mesh = TimeMesh::new(5.0, 0.005).unwrap();
    let mp = solve_multipatch_volterra(&multipatch(two_patches()), &mesh, &SolveOptions::default())
        .unwrap();
    let names = ["S_p0", "S_p1", "I_p0", "I_p1", "R_p0", "R_p1"];
    for (t, values) in refs {
        let k = mesh.index_of(t);
        for (name, v) in names.iter().zip(values) {
            let got = mp.curve(name).unwrap()[k];
            assert!((got - v).abs() < 1e-4, "{name}({t}) = {got}, expected {v}");
        }
    }
    for k in 0..mesh.nodes() {
        let total: f64 = names.iter().map(|n| mp.curve(n).unwrap()[k]).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }
}

// -------------------------------------------------- varying susceptibility

#[test]
fn permanent_immunity_reduces_to_varying_infectivity() {
    let mesh = TimeMesh::new(8.0, 0.01).unwrap();
    let law = InfectivityLaw::constant(2.0, DurationLaw::gamma(2.0, 0.5));
    let vivs = solve_vivs_fixed_point(
        &vivs_model(law.clone(), SusceptibilityLaw::Never, InitialCondition::sir(0.02)),
        &mesh,
        &SolveOptions::default(),
    )
    .unwrap();
    let vi = solve_vi_volterra(&vi_model(law, 0.02), &mesh, &SolveOptions::default()).unwrap();
    assert!(sup(vivs.curve("Z").unwrap(), vi.s()) < 1e-4);
    assert!(sup(vivs.force(), vi.force()) < 1e-4);
    assert!(sup(vivs.i(), vi.i()) < 1e-4);
    assert!(vivs.curve("Z_se").unwrap().iter().all(|v| *v == 0.0));
}

#[test]
fn immediate_waning_with_exponential_periods_is_sis() {
    let mesh = TimeMesh::new(10.0, 0.01).unwrap();
    let law = InfectivityLaw::constant(2.0, DurationLaw::exponential(1.0));
    let vivs = solve_vivs_fixed_point(
        &vivs_model(law, SusceptibilityLaw::Immediate, InitialCondition::sir(0.05)),
        &mesh,
        &SolveOptions::default(),
    )
    .unwrap();
    let sys = OdeSystem::Sis {
        infection_rate: 2.0,
        recovery_rate: 1.0,
    };
    let ode = solve_ode(&sys, &InitialCondition::sir(0.05), &mesh, None).unwrap();
    let force: Vec<f64> = ode.i().iter().map(|i| 2.0 * i).collect();
    assert!(sup(vivs.force(), &force) < 1e-4, "{}", sup(vivs.force(), &force));
    assert!(sup(vivs.curve("Z").unwrap(), ode.s()) < 1e-4);
}

#[test]
fn picard_start_does_not_matter() {
    let mesh = TimeMesh::new(6.0, 0.02).unwrap();
    let law = InfectivityLaw::constant(2.0, DurationLaw::uniform(0.5, 1.5));
    let waning = SusceptibilityLaw::Step {
        delay: DurationLaw::deterministic(1.0),
    };
    let model = vivs_model(law, waning, InitialCondition::sir(0.05));
    let a = solve_vivs_fixed_point(&model, &mesh, &SolveOptions::default()).unwrap();
    let b = solve_vivs_fixed_point(
        &model,
        &mesh,
        &SolveOptions {
            picard_start: Some(2.0),
            ..SolveOptions::default()
        },
    )
    .unwrap();
    assert!(sup(a.curve("Z").unwrap(), b.curve("Z").unwrap()) < 1e-6);
    assert!(sup(a.force(), b.force()) < 1e-6);
}

#[test]
fn step_waning_reaches_the_endemic_plateau() {
    // Equilibrium of SIRS with exponential(gamma) infection and immunity of
    // fixed length w: Z* = gamma / lambda and
    // F* = lambda (1 - gamma / lambda) / (1 + gamma w).
    let (lambda, gamma, w) = (2.0, 1.0, 1.0);
    let mesh = TimeMesh::new(60.0, 0.05).unwrap();
    let law = InfectivityLaw::constant(lambda, DurationLaw::exponential(gamma));
    let waning = SusceptibilityLaw::Step {
        delay: DurationLaw::deterministic(w),
    };
    let sol = solve_vivs_fixed_point(
        &vivs_model(law, waning, InitialCondition::sir(0.05)),
        &mesh,
        &SolveOptions::default(),
    )
    .unwrap();
    let z = *sol.curve("Z").unwrap().last().unwrap();
    let f = *sol.force().last().unwrap();
    assert!((z - gamma / lambda).abs() < 2e-3, "Z = {z}");
    let f_star = lambda * (1.0 - gamma / lambda) / (1.0 + gamma * w);
    assert!((f - f_star).abs() < 2e-3, "F = {f} vs {f_star}");
}

#[test]
fn without_infection_susceptibility_follows_the_initial_panel() {
    let mesh = TimeMesh::new(4.0, 0.01).unwrap();
    let law = InfectivityLaw::constant(2.0, DurationLaw::exponential(1.0));
    let waning = SusceptibilityLaw::Step {
        delay: DurationLaw::deterministic(2.0),
    };
    let ic = InitialCondition {
        susceptible: 0.7,
        exposed: 0.0,
        infected: 0.0,
        recovered: 0.3,
        age: None,
    };
    let sol = solve_vivs_fixed_point(&vivs_model(law, waning, ic), &mesh, &SolveOptions::default())
        .unwrap();
    let z = sol.curve("Z").unwrap();
    for (k, t) in mesh.times().iter().enumerate() {
        let expected = if *t > 2.0 + 1e-9 {
            1.0
        } else if *t < 2.0 - 1e-9 {
            0.7
        } else {
            0.85
        };
        assert!((z[k] - expected).abs() < 1e-12, "t = {t}: {}", z[k]);
    }
}

#[test]
fn monte_carlo_panel_agrees_with_quadrature() {
    let mesh = TimeMesh::new(8.0, 0.05).unwrap();
    let law = InfectivityLaw::constant(2.5, DurationLaw::gamma(2.0, 0.5));
    let waning = SusceptibilityLaw::Step {
        delay: DurationLaw::deterministic(1.5),
    };
    let model = vivs_model(law, waning, InitialCondition::sir(0.05));
    let quad = solve_vivs_fixed_point(&model, &mesh, &SolveOptions::default()).unwrap();
    let mc = solve_vivs_fixed_point(
        &model,
        &mesh,
        &SolveOptions {
            panel_mode: PanelMode::MonteCarlo,
            panel_samples: 1000,
            ..SolveOptions::default()
        },
    )
    .unwrap();
    let se = mc.curve("Z_se").unwrap();
    assert!(se.iter().any(|v| *v > 0.0));
    let zq = quad.curve("Z").unwrap();
    let zm = mc.curve("Z").unwrap();
    for k in 0..mesh.nodes() {
        assert!((zq[k] - zm[k]).abs() <= 5.0 * se[k] + 0.01, "t = {}", mesh.time(k));
    }
}

#[test]
fn random_ramp_waning_stays_in_bounds() {
    let mesh = TimeMesh::new(10.0, 0.05).unwrap();
    let law = InfectivityLaw::constant(3.0, DurationLaw::exponential(1.0));
    let waning = SusceptibilityLaw::Ramp {
        delay: DurationLaw::uniform(0.5, 1.5),
        duration: DurationLaw::exponential(1.0),
    };
    let sol = solve_vivs_fixed_point(
        &vivs_model(law, waning, InitialCondition::sir(0.05)),
        &mesh,
        &SolveOptions {
            panel_samples: 300,
            ..SolveOptions::default()
        },
    )
    .unwrap();
    let z = sol.curve("Z").unwrap();
    assert!(z.iter().all(|v| (0.0..=1.0).contains(v)));
    assert!(sol.force().iter().all(|v| *v >= 0.0));
    for k in 0..mesh.nodes() {
        assert!(sol.s()[k] <= z[k] + 1e-9);
    }
}

#[test]
fn dispatcher_routes_every_family() {
    let mesh = TimeMesh::new(2.0, 0.05).unwrap();
    let ic = InitialCondition::sir(0.05);
    let models = [
        ModelSpec::new(
            100,
            Dynamics::MarkovSirs {
                infection_rate: 2.0,
                recovery_rate: 1.0,
                immunity_loss_rate: 0.3,
            },
            ic.clone(),
        ),
        sir_model(2.0, DurationLaw::deterministic(1.0), 0.05),
        vi_model(InfectivityLaw::covid(1.0, 0.5), 0.05),
        multipatch(two_patches()),
    ];
    for m in &models {
        let sol = solve(m, &mesh, &SolveOptions::default()).unwrap();
        assert_eq!(sol.times.len(), mesh.nodes());
    }
}

#[test]
fn unsupported_options_are_rejected() {
    let mesh = TimeMesh::new(2.0, 0.05).unwrap();
    let opts = SolveOptions {
        linearized: true,
        ..SolveOptions::default()
    };
    let err = solve_multipatch_volterra(&multipatch(two_patches()), &mesh, &opts).unwrap_err();
    assert!(matches!(err, Error::InvalidParameter(_)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sir_volterra_invariants(
        lambda in 0.2f64..4.0,
        shape in 0.5f64..4.0,
        mean in 0.3f64..2.0,
        i0 in 1e-4f64..0.3,
    ) {
        let mesh = TimeMesh::new(6.0, 0.05).unwrap();
        let model = sir_model(lambda, DurationLaw::gamma(shape, mean / shape), i0);
        let sol = solve_sir_volterra(&model, &mesh, &SolveOptions::default()).unwrap();
        for k in 0..mesh.nodes() {
            let (s, i, r) = (sol.s()[k], sol.i()[k], sol.r()[k]);
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert!(i >= -1e-12 && r >= -1e-12);
            prop_assert!((s + i + r - 1.0).abs() < 1e-10);
            if k > 0 {
                prop_assert!(s <= sol.s()[k - 1] + 1e-15);
            }
        }
    }

    #[test]
    fn seir_invariants(
        lambda in 0.2f64..4.0,
        lat in 0.1f64..1.5,
        low in 0.1f64..1.0,
        e0 in 0.0f64..0.1,
        i0 in 1e-3f64..0.1,
    ) {
        let mesh = TimeMesh::new(5.0, 0.05).unwrap();
        let model = ModelSpec::new(
            100,
            Dynamics::NonmarkovSeir {
                infection_rate: lambda,
                periods: JointLaw::independent(
                    DurationLaw::exponential(1.0 / lat),
                    DurationLaw::uniform(low, low + 1.0),
                ),
                initial_latency: None,
                initial_period: None,
            },
            InitialCondition {
                susceptible: 1.0 - e0 - i0,
                exposed: e0,
                infected: i0,
                recovered: 0.0,
                age: None,
            },
        );
        let sol = solve_seir_volterra(&model, &mesh, &SolveOptions::default()).unwrap();
        for k in 0..mesh.nodes() {
            let total = sol.s()[k] + sol.e()[k] + sol.i()[k] + sol.r()[k];
            prop_assert!((total - 1.0).abs() < 1e-10);
            prop_assert!(sol.e()[k] >= -1e-12 && sol.i()[k] >= -1e-12);
        }
    }
}
