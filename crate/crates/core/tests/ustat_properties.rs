use proptest::prelude::*;
use rand::seq::SliceRandom;
use ustat_core::ustat::ExactOptions;
use ustat_core::*;

// Independent oracle: recursive enumeration of increasing index tuples.
fn brute_force(kernel: &Kernel, xs: &[f64]) -> f64 {
    fn walk(k: &Kernel, xs: &[f64], start: usize, args: &mut Vec<f64>, acc: &mut (f64, u64)) {
        if args.len() == k.degree() {
            acc.0 += k.evaluate(args);
            acc.1 += 1;
            return;
        }
        for i in start..xs.len() {
            args.push(xs[i]);
            walk(k, xs, i + 1, args, acc);
            args.pop();
        }
    }
    let mut acc = (0.0, 0);
    walk(kernel, xs, 0, &mut Vec::new(), &mut acc);
    acc.0 / acc.1 as f64
}

fn sample(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, 3..max_len)
}

fn kernel_of_degree(m: usize) -> Kernel {
    match m {
        1 => catalog_kernel("mean", None).unwrap(),
        2 => catalog_kernel("gini", None).unwrap(),
        _ => catalog_kernel("triple", None).unwrap(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_matches_recursive_enumeration(xs in sample(14), m in 1usize..4) {
        let k = kernel_of_degree(m);
        let u = u_statistic_exact(&k, &xs).unwrap();
        let oracle = brute_force(&k, &xs);
        prop_assert!((u - oracle).abs() <= 1e-12 * (1.0 + oracle.abs()));
    }

    #[test]
    fn exact_is_permutation_invariant(xs in sample(30), seed in any::<u64>()) {
        let k = catalog_kernel("variance", None).unwrap();
        let mut shuffled = xs.clone();
        shuffled.shuffle(&mut StreamKey::new(seed, Role::Path).rng());
        let a = u_statistic_exact(&k, &xs).unwrap();
        let b = u_statistic_exact(&k, &shuffled).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn exact_is_linear_in_the_kernel(xs in sample(25), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let f = catalog_kernel("variance", None).unwrap();
        let g = catalog_kernel("product", None).unwrap();
        let combo = f.combine(a, &g, b).unwrap();
        let lhs = u_statistic_exact(&combo, &xs).unwrap();
        let rhs = a * u_statistic_exact(&f, &xs).unwrap() + b * u_statistic_exact(&g, &xs).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
    }

    #[test]
    fn chunking_is_immaterial(xs in sample(40), chunks in 1usize..40) {
        let k = catalog_kernel("gini", None).unwrap();
        let opts = ExactOptions { chunks, ..ExactOptions::default() };
        let a = u_statistic_exact_with(&k, &xs, &opts).unwrap();
        let b = brute_force(&k, &xs);
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
    }

    #[test]
    fn symmetrized_kernel_is_permutation_invariant(x in -5.0f64..5.0, y in -5.0f64..5.0, z in -5.0f64..5.0) {
        let k = Kernel::symmetrize("skew", 3, |a: &[f64]| a[0] * a[0] * a[1] - a[2].sin()).unwrap();
        let base = k.evaluate(&[x, y, z]);
        for p in [[y, x, z], [z, y, x], [x, z, y], [y, z, x], [z, x, y]] {
            prop_assert_eq!(k.evaluate(&p), base);
        }
    }
}

#[test]
fn incomplete_is_unbiased_for_the_exact_statistic() {
    let spec = ProcessSpec::iid_normal(0.0, 1.0).unwrap();
    let xs = spec.sample_path(60, StreamKey::new(11, Role::Path)).unwrap();
    let k = catalog_kernel("variance", None).unwrap();
    let exact = u_statistic_exact(&k, &xs).unwrap();
    let draws: Vec<f64> = (0..400)
        .map(|i| {
            let mut rng = StreamKey::new(11, Role::Subsets).index(i).rng();
            u_statistic_incomplete(&k, &xs, 200, &mut rng, false).unwrap().estimate
        })
        .collect();
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    let sd = (draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64).sqrt();
    assert!((mean - exact).abs() < 4.0 * sd / (draws.len() as f64).sqrt());
}

#[test]
fn incomplete_standard_error_matches_spread() {
    let spec = ProcessSpec::iid_uniform(0.0, 1.0).unwrap();
    let xs = spec.sample_path(200, StreamKey::new(12, Role::Path)).unwrap();
    let k = catalog_kernel("gini", None).unwrap();
    let (mut ests, mut ses) = (Vec::new(), Vec::new());
    for i in 0..300 {
        let mut rng = StreamKey::new(12, Role::Subsets).index(i).rng();
        let e = u_statistic_incomplete(&k, &xs, 1000, &mut rng, false).unwrap();
        ests.push(e.estimate);
        ses.push(e.mc_se);
    }
    let mean = ests.iter().sum::<f64>() / 300.0;
    let sd = (ests.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / 299.0).sqrt();
    let avg_se = ses.iter().sum::<f64>() / 300.0;
    assert!((sd / avg_se - 1.0).abs() < 0.15, "sd {sd} vs reported {avg_se}");
}

#[test]
fn exhaustive_incomplete_returns_the_exact_value() {
    let xs: Vec<f64> = (0..12).map(|i| (i as f64 * 0.7).cos()).collect();
    let k = catalog_kernel("triple", None).unwrap();
    let mut rng = StreamKey::new(1, Role::Subsets).rng();
    let e = u_statistic_incomplete(&k, &xs, 220, &mut rng, true).unwrap();
    assert_eq!(e.mc_se, 0.0);
    assert_eq!(e.estimate, u_statistic_exact(&k, &xs).unwrap());
}

#[test]
fn exact_unbiased_for_the_variance() {
    // E[U] = Var X = 1/12 for the variance kernel on Uniform(0, 1)
    let spec = ProcessSpec::iid_uniform(0.0, 1.0).unwrap();
    let k = catalog_kernel("variance", None).unwrap();
    let us: Vec<f64> = (0..2000)
        .map(|r| {
            let xs = spec.sample_path(10, StreamKey::new(5, Role::Path).index(r)).unwrap();
            u_statistic_exact(&k, &xs).unwrap()
        })
        .collect();
    let mean = us.iter().sum::<f64>() / us.len() as f64;
    let sd = (us.iter().map(|u| (u - mean).powi(2)).sum::<f64>() / (us.len() - 1) as f64).sqrt();
    assert!((mean - 1.0 / 12.0).abs() < 4.0 * sd / (us.len() as f64).sqrt());
}

#[test]
fn cap_error_is_reported_before_work() {
    let xs = vec![0.0; 1000];
    let k = catalog_kernel("triple", None).unwrap();
    let opts = ExactOptions { cap: 1_000_000, ..ExactOptions::default() };
    let err = u_statistic_exact_with(&k, &xs, &opts).unwrap_err();
    assert!(err.to_string().contains("u_statistic_incomplete"));
    assert!(err.is_config());
}
