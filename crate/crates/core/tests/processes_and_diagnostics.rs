use ustat_core::diagnostics::{validate_rate_grid, SecondMoment};
use ustat_core::processes::mixing_threshold;
use ustat_core::*;

fn sample_autocov(xs: &[f64], lag: usize) -> f64 {
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    (0..n - lag).map(|t| (xs[t] - mean) * (xs[t + lag] - mean)).sum::<f64>() / n as f64
}

#[test]
fn ar1_starts_in_its_stationary_law() {
    // Var X_0 and Var X_{n-1} across independent paths both equal γ₀
    let spec = ProcessSpec::ar1_gaussian(0.8, 0.5).unwrap();
    let g0 = spec.autocovariance(0).unwrap();
    let (mut first, mut last) = (Vec::new(), Vec::new());
    for r in 0..4000 {
        let xs = spec.sample_path(50, StreamKey::new(1, Role::Path).index(r)).unwrap();
        first.push(xs[0]);
        last.push(xs[49]);
    }
    for v in [first, last] {
        let var = v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64;
        // SE of the variance of a Gaussian sample: γ₀√(2/N)
        assert!((var - g0).abs() < 4.0 * g0 * (2.0 / v.len() as f64).sqrt(), "{var} vs {g0}");
    }
}

#[test]
fn sample_autocovariances_follow_the_closed_forms() {
    let n = 200_000;
    for text in ["ar1_gaussian(0.5,1)", "ar1_gaussian(-0.3,2)", "ma_q_gaussian(1,0.4,-0.2)"] {
        let spec: ProcessSpec = text.parse().unwrap();
        let xs = spec.sample_path(n, StreamKey::new(2, Role::Path)).unwrap();
        let g0 = spec.autocovariance(0).unwrap();
        for lag in 0..5 {
            let want = spec.autocovariance(lag).unwrap();
            let got = sample_autocov(&xs, lag);
            assert!((got - want).abs() < 0.03 * g0, "{text} lag {lag}: {got} vs {want}");
        }
    }
}

#[test]
fn ma_process_decorrelates_past_its_order() {
    let spec = ProcessSpec::ma_gaussian(vec![1.0, 0.9, 0.9]).unwrap();
    assert_eq!(spec.beta_rate(), BetaRate::QDependent { q: 2 });
    assert_eq!(spec.autocovariance(3), Some(0.0));
    let xs = spec.sample_path(100_000, StreamKey::new(3, Role::Path)).unwrap();
    let g0 = spec.autocovariance(0).unwrap();
    for lag in 3..8 {
        assert!(sample_autocov(&xs, lag).abs() < 4.0 * g0 * 3.0 / (xs.len() as f64).sqrt());
    }
}

#[test]
fn pareto_marginal_moments() {
    let spec = ProcessSpec::iid_pareto(5.0, 2.0).unwrap();
    let mm = spec.marginal_moments();
    assert!((mm.mean - 2.5).abs() < 1e-12);
    let xs = spec.marginal_sample(400_000, StreamKey::new(4, Role::Path)).unwrap();
    assert!(xs.iter().all(|&x| x >= 2.0));
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    assert!((mean - mm.mean).abs() < 4.0 * (mm.variance / xs.len() as f64).sqrt());
}

#[test]
fn applicability_on_the_reference_grid() {
    let variance = catalog_kernel("variance", None).unwrap();
    let mean = catalog_kernel("mean", None).unwrap();
    let iid = ProcessSpec::iid_normal(0.0, 1.0).unwrap();
    let ar = ProcessSpec::ar1_gaussian(0.5, 1.0).unwrap();
    assert!(theorem_applicability(&iid, &variance).applicable);
    assert!(theorem_applicability(&ar, &variance).applicable);

    // declared polynomial mixing: m·p/(p−2) = 2·4/2 = 4 for the variance kernel
    let slow = ar.clone().with_declared_rate(3.0).unwrap();
    let fast = ar.with_declared_rate(4.5).unwrap();
    assert_eq!(mixing_threshold(2, 4.0), Some(4.0));
    let verdict = theorem_applicability(&slow, &variance);
    assert!(!verdict.applicable);
    assert!(verdict.binding.contains("threshold"));
    assert!(theorem_applicability(&fast, &variance).applicable);

    // p = 2 leaves the mixing case without a threshold
    let p2 = mean.with_moment_order(2.0).unwrap();
    assert!(!theorem_applicability(&fast, &p2).applicable);
    assert!(theorem_applicability(&iid, &p2).applicable);

    // variance kernel needs fourth moments; Pareto(3) has them only below 3
    let heavy = ProcessSpec::iid_pareto(3.0, 1.0).unwrap();
    assert!(!theorem_applicability(&heavy, &variance).applicable);
}

#[test]
fn ar1_long_run_variance_closed_form() {
    let spec = ProcessSpec::ar1_gaussian(0.5, 1.0).unwrap();
    let k = catalog_kernel("mean", Some(&spec)).unwrap();
    assert!((long_run_variance_analytic(&spec, &k).unwrap() - 4.0).abs() < 1e-12);
}

#[test]
fn rate_regression_for_the_variance_kernel() {
    let spec = ProcessSpec::iid_normal(0.0, 1.0).unwrap();
    let k = center(&catalog_kernel("variance", Some(&spec)).unwrap(), &spec, 10_000, StreamKey::new(1, Role::Oracle)).unwrap();
    let reference = ReferenceMeasure::true_xi(&spec, 10_000, StreamKey::new(5, Role::Oracle))
        .unwrap()
        .with_closed_forms(true);
    let opts = RateOptions {
        orders: vec![1, 2],
        n_grid: vec![40, 80, 160, 400],
        reps: 300,
        seed: 5,
        with_remainder: true,
        exact: Default::default(),
    };
    let fit = rate_regression(&k, &spec, &reference, &opts).unwrap();
    let slope = |o: usize| fit.component(o).unwrap().fit.slope.unwrap();
    assert!((slope(1) + 0.5).abs() < 0.1, "{fit:?}");
    assert!((slope(2) + 1.0).abs() < 0.1, "{fit:?}");
    let rem = fit.remainder.as_ref().unwrap().fit.slope.unwrap();
    assert!((rem + 0.5).abs() < 0.1);
}

#[test]
fn rate_regression_reports_a_zero_component_as_undefined() {
    let spec = ProcessSpec::iid_normal(0.0, 1.0).unwrap();
    let k = catalog_kernel("zero", Some(&spec)).unwrap();
    let reference = ReferenceMeasure::true_xi(&spec, 10_000, StreamKey::new(6, Role::Oracle))
        .unwrap()
        .with_closed_forms(true);
    let opts = RateOptions {
        orders: vec![1],
        n_grid: vec![10, 20, 40, 100],
        reps: 100,
        seed: 6,
        with_remainder: false,
        exact: Default::default(),
    };
    let fit = rate_regression(&k, &spec, &reference, &opts).unwrap();
    let series = fit.component(1).unwrap();
    assert!(series.fit.slope.is_none());
    assert!(series.fit.status.starts_with("undefined"));
    assert!(validate_rate_grid(&[10, 20, 40]).is_err());
}

#[test]
fn second_moment_trajectory_of_the_sample_mean() {
    let spec = ProcessSpec::iid_uniform(0.0, 1.0).unwrap();
    let grid = [10usize, 100, 1000];
    let stats: Vec<(usize, Vec<f64>)> = grid
        .iter()
        .map(|&n| {
            let v = (0..500)
                .map(|r| {
                    let xs = spec.sample_path(n, StreamKey::new(7, Role::Path).index(r)).unwrap();
                    (n as f64).sqrt() * (xs.iter().sum::<f64>() / n as f64 - 0.5)
                })
                .collect();
            (n, v)
        })
        .collect();
    let reps: Vec<Replicates<'_>> = stats.iter().map(|(n, v)| Replicates { n: *n, values: v }).collect();
    let traj: Vec<SecondMoment> = second_moment_trajectory(&reps).unwrap();
    for s in &traj {
        assert!((s.mean_square - 1.0 / 12.0).abs() < 4.0 * s.se, "{s:?}");
    }
    let ui = uniform_integrability_profile(&reps, &[0.0, 0.1, 0.2, 0.4, 1.0, 16.0]).unwrap();
    // |√n(X̄ − 1/2)| ≤ √1000/2 < 16
    assert!(ui.windows(2).all(|w| w[1].value <= w[0].value));
    assert_eq!(ui.last().unwrap().value, 0.0);
}
