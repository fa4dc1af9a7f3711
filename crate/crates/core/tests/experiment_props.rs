use deconv_quant::config::{NoiseConfig, NoiseKindName};
use deconv_quant::experiment::*;
use deconv_quant::*;

fn with_noise(scale: Option<f64>) -> ExperimentConfig {
    let mut c = ExperimentConfig::default_probe();
    c.noise = match scale {
        Some(s) => NoiseConfig {
            kind: NoiseKindName::Laplace,
            scale: Some(vec![s]),
            beta: None,
            table: None,
        },
        None => NoiseConfig {
            kind: NoiseKindName::None,
            scale: None,
            beta: None,
            table: None,
        },
    };
    c
}

fn means(out: &ExperimentOutcome, m: Method) -> Vec<f64> {
    out.fit(m).unwrap().per_n.iter().map(|p| p.mean).collect()
}

fn inversions(v: &[f64]) -> usize {
    v.windows(2).filter(|w| w[1] > w[0]).count()
}

#[test]
fn generated_noise_has_laplace_variance() {
    let exp = Experiment::new(with_noise(Some(1.0))).unwrap();
    let (x, z) = generate_sample(exp.density(), exp.noise(), 100_000, 8).unwrap();
    let e = &z - &x;
    let n = e.len() as f64;
    let mean = e.sum() / n;
    let var = e.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!((var - 2.0).abs() < 0.05, "variance {var}");
    let (x2, z2) = generate_sample(exp.density(), exp.noise(), 100_000, 8).unwrap();
    assert_eq!((x, z), (x2, z2));
    let (x0, z0) = generate_sample(exp.density(), &zero_noise(1), 1000, 3).unwrap();
    assert_eq!(x0, z0);
}

#[test]
fn cells_replay_from_their_seed() {
    let exp = Experiment::new(ExperimentConfig::default_probe()).unwrap();
    let a = exp.run_cell(1000, 3).unwrap();
    let b = exp.run_cell(1000, 3).unwrap();
    assert_eq!(a.seed, b.seed);
    for (x, y) in a.outcomes.iter().zip(&b.outcomes) {
        assert_eq!(x.excess_risk.to_bits(), y.excess_risk.to_bits());
    }
}

#[test]
fn reference_experiment_probes_the_rate() {
    let exp = Experiment::new(ExperimentConfig::default_probe()).unwrap();
    let out = exp.run().unwrap();
    assert_eq!(out.failed_cells(), 0);
    for c in &out.cells {
        for o in &c.outcomes {
            assert!(o.excess_risk >= -1e-9, "{:?}", o);
        }
    }
    let noisy = out.fit(Method::NoisyKmeans).unwrap();
    assert!(
        noisy.exponent > 0.15 && noisy.exponent < 1.1,
        "{}",
        noisy.exponent
    );
    assert!(inversions(&means(&out, Method::NoisyKmeans)) <= 1);
    assert!(out.oracle_check.passed);
    assert!((out.theoretical_exponent - 0.5).abs() < 1e-15);
}

#[test]
fn zero_noise_sanity() {
    let out = Experiment::new(with_noise(None)).unwrap().run().unwrap();
    let fit = out.fit(Method::NoisyKmeans).unwrap();
    assert!(fit.exponent > 0.0, "{}", fit.exponent);
    assert!(inversions(&means(&out, Method::NoisyKmeans)) <= 1);
}

#[test]
fn noise_hurts_and_deconvolution_helps() {
    let clean = Experiment::new(with_noise(None)).unwrap().run().unwrap();
    let noisy = Experiment::new(with_noise(Some(0.4)))
        .unwrap()
        .run()
        .unwrap();
    let (c, n) = (
        means(&clean, Method::NoisyKmeans),
        means(&noisy, Method::NoisyKmeans),
    );
    for (a, b) in c.iter().zip(&n) {
        assert!(b >= a, "clean {c:?} noisy {n:?}");
    }
    let naive = means(&noisy, Method::NaiveKmeansOnZ);
    assert!(n.last() <= naive.last(), "noisy {n:?} naive {naive:?}");
}

#[test]
fn zero_noise_estimator_is_grid_kmeans_on_direct_kde() {
    let cfg = with_noise(None);
    let exp = Experiment::new(cfg.clone()).unwrap();
    let n = 2000;
    let (_, z) = generate_sample(exp.density(), exp.noise(), n, 77).unwrap();
    let kernel = exp.kernel(n as u64).unwrap();
    let lam = kernel.bandwidth()[0];
    let region = exp.region();
    let direct: Vec<f64> = region
        .axis_nodes(0)
        .iter()
        .map(|x| {
            z.iter()
                .map(|zi| kernel.spec().time_value(0, (zi - x) / lam) / lam)
                .sum::<f64>()
                / n as f64
        })
        .collect();
    let reference = DeconvolvedDensity::from_values(region, direct).unwrap();
    let solver = cfg.solver.build(2).unwrap();
    let a = noisy_kmeans(z.view(), &kernel, region, &solver).unwrap();
    let b = lloyd_weighted(&reference, &solver).unwrap();
    assert!(
        (a.objective - b.objective).abs() <= 1e-6,
        "{} vs {}",
        a.objective,
        b.objective
    );
}
