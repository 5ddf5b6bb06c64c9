use epilimit::abm::{Dynamics, InitialCondition, ModelSpec};
use epilimit::age_pde::{
    initial_density, sis_endemic_equilibrium, solve_age_density, solve_sis_age_density,
};
use epilimit::laws::{DurationLaw, InfectivityLaw};
use epilimit::volterra::{solve_vi_volterra, SolveOptions};
use epilimit::{Curve, Error, TimeMesh};
use proptest::prelude::*;

fn opts() -> SolveOptions {
    SolveOptions::default()
}

#[test]
fn empty_initial_density_gives_an_empty_field() {
    let mesh = TimeMesh::new(3.0, 0.05).unwrap();
    let law = InfectivityLaw::constant(2.0, DurationLaw::gamma(2.0, 0.5));
    let init = Curve::new(0.05, vec![0.0; 20]);
    let field = solve_age_density(&law, &init, 1.0, &mesh, &opts()).unwrap();
    assert!(field.values.iter().all(|v| *v == 0.0));
    assert!(field.boundary.iter().all(|v| *v == 0.0));
}

#[test]
fn characteristics_hold_exactly_on_the_grid() {
    let h = 0.02;
    let gamma = 1.3;
    let mesh = TimeMesh::new(4.0, h).unwrap();
    let law = InfectivityLaw::constant(2.0, DurationLaw::exponential(gamma));
    let init = initial_density(0.05, &DurationLaw::uniform(0.0, 1.0), h).unwrap();
    let field = solve_age_density(&law, &init, 0.95, &mesh, &opts()).unwrap();
    for n in (0..mesh.nodes()).step_by(7) {
        for j in (0..field.ages).step_by(5) {
            let x = j as f64 * h;
            let expected = if j < n {
                (-gamma * x).exp() * field.boundary[n - j]
            } else {
                let back = j - n;
                let v = init.values.get(back).copied().unwrap_or(0.0);
                (-gamma * x).exp() / (-gamma * back as f64 * h).exp() * v
            };
            let got = field.value(n, j);
            assert!((got - expected).abs() <= 1e-13 * (1.0 + expected.abs()), "{n} {j}");
        }
    }
}

#[test]
fn transport_residual_is_first_order() {
    let law = InfectivityLaw::constant(2.0, DurationLaw::gamma(3.0, 0.4));
    let worst = |h: f64| {
        let mesh = TimeMesh::new(3.0, h).unwrap();
        let init = initial_density(0.02, &DurationLaw::gamma(3.0, 0.3), h).unwrap();
        let field = solve_age_density(&law, &init, 0.98, &mesh, &opts()).unwrap();
        let mut w: f64 = 0.0;
        for n in 1..mesh.nodes() - 1 {
            for j in 1..field.ages - 1 {
                if (n as i64 - j as i64).abs() <= 2 {
                    continue;
                }
                w = w.max(field.residual(n, j).abs());
            }
        }
        w
    };
    let (coarse, fine) = (worst(0.02), worst(0.01));
    assert!(fine < 0.5, "residual {fine}");
    assert!(fine < 0.7 * coarse, "{coarse} -> {fine}");
}

#[test]
fn total_mass_matches_the_volterra_prevalence() {
    let h = 0.01;
    let mesh = TimeMesh::new(6.0, h).unwrap();
    let period = DurationLaw::gamma(2.0, 0.5);
    let age = DurationLaw::exponential(2.0);
    let law = InfectivityLaw::constant(2.5, period.clone());
    // The density of ages among the initially infected is the age law.
    let init = initial_density(0.03, &age, h).unwrap();
    let field = solve_age_density(&law, &init, 0.97, &mesh, &opts()).unwrap();
    let model = ModelSpec::new(
        1000,
        Dynamics::VaryingInfectivity {
            infectivity: law,
            initial_infectivity: None,
        },
        InitialCondition {
            susceptible: 0.97,
            exposed: 0.0,
            infected: 0.03,
            recovered: 0.0,
            age: Some(age),
        },
    );
    let vi = solve_vi_volterra(&model, &mesh, &opts()).unwrap();
    let totals = field.totals();
    for k in 0..mesh.nodes() {
        assert!((totals[k] - vi.i()[k]).abs() < 1e-3, "t = {}", mesh.time(k));
        assert!((field.susceptible[k] - vi.s()[k]).abs() < 1e-3);
    }
}

#[test]
fn mass_balance_of_the_transport() {
    let h = 0.01;
    let mesh = TimeMesh::new(4.0, h).unwrap();
    let law = InfectivityLaw::constant(2.0, DurationLaw::gamma(2.0, 0.5));
    let init = initial_density(0.05, &DurationLaw::gamma(2.0, 0.25), h).unwrap();
    let field = solve_age_density(&law, &init, 0.95, &mesh, &opts()).unwrap();
    let totals = field.totals();
    for n in 1..mesh.nodes() - 1 {
        let lhs = (totals[n + 1] - totals[n - 1]) / (2.0 * h);
        let out: Vec<f64> = field
            .row(n)
            .iter()
            .zip(&field.hazard)
            .map(|(v, g)| v * g)
            .collect();
        let rhs = field.boundary[n] - epilimit::quadrature::trapezoid(&out, h);
        assert!((lhs - rhs).abs() < 0.05, "t = {}: {lhs} vs {rhs}", mesh.time(n));
    }
}

#[test]
fn atoms_in_the_period_are_rejected() {
    let mesh = TimeMesh::new(1.0, 0.1).unwrap();
    let law = InfectivityLaw::constant(2.0, DurationLaw::deterministic(1.0));
    let init = Curve::new(0.1, vec![0.1; 3]);
    let err = solve_age_density(&law, &init, 0.9, &mesh, &opts()).unwrap_err();
    assert!(matches!(err, Error::InvalidParameter(_)));
}

#[test]
fn boundary_trace_is_nonnegative_and_susceptibles_decrease() {
    let mesh = TimeMesh::new(10.0, 0.02).unwrap();
    let law = InfectivityLaw::covid(1.2, 0.5);
    let period = law.period_law();
    let init = Curve::from_fn(0.02, 50, |x| 0.01 * period.survival(x));
    let field = solve_age_density(&law, &init, 0.99, &mesh, &opts()).unwrap();
    assert!(field.boundary.iter().all(|b| *b >= 0.0));
    for w in field.susceptible.windows(2) {
        assert!(w[1] <= w[0]);
    }
    assert!(field.clamped_at.is_none());
}

// ------------------------------------------------------------------- SIS

#[test]
fn subcritical_sis_dies_out() {
    let h = 0.05;
    let mesh = TimeMesh::new(80.0, h).unwrap();
    let law = InfectivityLaw::constant(0.8, DurationLaw::exponential(1.0));
    let init = initial_density(0.2, &DurationLaw::exponential(1.0), h).unwrap();
    let field = solve_sis_age_density(&law, &init, &mesh, &opts()).unwrap();
    assert!(field.total(mesh.nodes() - 1) < 1e-3);
}

#[test]
fn supercritical_sis_reaches_the_endemic_state() {
    let h = 0.02;
    let mesh = TimeMesh::new(30.0, h).unwrap();
    let law = InfectivityLaw::constant(2.0, DurationLaw::exponential(1.0));
    let init = initial_density(0.05, &DurationLaw::exponential(1.0), h).unwrap();
    let field = solve_sis_age_density(&law, &init, &mesh, &opts()).unwrap();
    let last = mesh.nodes() - 1;
    assert!((field.total(last) - 0.5).abs() < 1e-3, "{}", field.total(last));
    let b = field.value(last, 0);
    for j in (0..(10.0 / h) as usize).step_by(10) {
        let x = j as f64 * h;
        assert!((field.value(last, j) / b - (-x).exp()).abs() < 1e-2);
    }
}

#[test]
fn equilibrium_formula() {
    let eq = sis_endemic_equilibrium(
        &InfectivityLaw::constant(1.0, DurationLaw::exponential(1.0)),
        0.1,
        5.0,
    )
    .unwrap();
    assert!((eq.r0 - 1.0).abs() < 1e-12);
    assert_eq!(eq.prevalence, 0.0);
    let eq = sis_endemic_equilibrium(
        &InfectivityLaw::constant(2.0, DurationLaw::exponential(1.0)),
        0.1,
        5.0,
    )
    .unwrap();
    assert!((eq.prevalence - 0.5).abs() < 1e-12);
    for (j, v) in eq.density.values.iter().enumerate() {
        assert!((v - 0.5 * (-(j as f64) * 0.1).exp()).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(5))]

    #[test]
    fn sis_long_run_matches_the_equilibrium(
        r0 in 1.2f64..4.0,
        shape in 1.0f64..3.0,
        mean in 0.5f64..1.5,
    ) {
        let h = 0.05;
        let mesh = TimeMesh::new(80.0, h).unwrap();
        let period = DurationLaw::gamma(shape, mean / shape);
        let law = InfectivityLaw::constant(r0 / mean, period.clone());
        let init = initial_density(0.05, &DurationLaw::exponential(1.0), h).unwrap();
        let field = solve_sis_age_density(&law, &init, &mesh, &SolveOptions::default()).unwrap();
        let eq = sis_endemic_equilibrium(&law, h, 10.0).unwrap();
        let last = mesh.nodes() - 1;
        prop_assert!((field.total(last) - eq.prevalence).abs() < 5e-3,
            "{} vs {}", field.total(last), eq.prevalence);
        for j in (0..eq.density.values.len()).step_by(20) {
            prop_assert!((field.value(last, j) - eq.density.values[j]).abs() < 1e-2);
        }
    }
}
