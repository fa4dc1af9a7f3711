use deconv_quant::*;
use ndarray::Array2;
use proptest::prelude::*;

/// Ordinary product-kernel KDE, written independently of the library path.
fn direct_kde(
    z: &Array2<f64>,
    spec: &KernelSpec<f64>,
    lam: &[f64],
    region: &CompactRegion<f64>,
) -> Vec<f64> {
    let nodes = region.nodes();
    nodes
        .rows()
        .into_iter()
        .map(|x| {
            z.rows()
                .into_iter()
                .map(|zi| {
                    (0..lam.len())
                        .map(|j| spec.time_value(j, (zi[j] - x[j]) / lam[j]) / lam[j])
                        .product::<f64>()
                })
                .sum::<f64>()
                / z.nrows() as f64
        })
        .collect()
}

fn mixture2() -> DensitySpec<f64> {
    make_density(DensityKind::GaussianMixture {
        weights: vec![0.4, 0.6],
        means: vec![vec![-0.4, 0.2], vec![0.5, -0.3]],
        sds: vec![vec![0.2, 0.3], vec![0.25, 0.2]],
        truncate: None,
    })
    .unwrap()
}

#[test]
fn zero_noise_reduces_to_direct_kde() {
    let region1 = CompactRegion::new(vec![-1.0], vec![1.0], vec![101]).unwrap();
    let uni = make_density(DensityKind::Uniform {
        lower: vec![-1.0],
        upper: vec![1.0],
    })
    .unwrap();
    let z1 = uni.sample(700, 1).unwrap();
    let region2 = CompactRegion::new(vec![-1.0, -1.0], vec![1.0, 1.0], vec![21, 17]).unwrap();
    let z2 = mixture2().sample(300, 2).unwrap();
    for spec1 in [sinc_kernel(1), vallee_poussin_kernel(1)] {
        let k = build_deconv_kernel(&spec1, &zero_noise(1), &[0.15]).unwrap();
        let got = deconv_kde(z1.view(), &k, &region1).unwrap();
        let want = direct_kde(&z1, &spec1, &[0.15], &region1);
        for (a, b) in got.values().iter().zip(&want) {
            assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
        }
    }
    let spec2 = sinc_kernel(2);
    let k = build_deconv_kernel(&spec2, &zero_noise(2), &[0.2, 0.3]).unwrap();
    let got = deconv_kde(z2.view(), &k, &region2).unwrap();
    let want = direct_kde(&z2, &spec2, &[0.2, 0.3], &region2);
    for (a, b) in got.values().iter().zip(&want) {
        assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
    }
}

#[test]
fn deconvolution_estimate_is_deterministic() {
    let noise = laplace_noise(2, &[0.2, 0.1]).unwrap();
    let z = mixture2().sample(5000, 9).unwrap();
    let k = build_deconv_kernel(&sinc_kernel(2), &noise, &[0.3, 0.3]).unwrap();
    let region = CompactRegion::new(vec![-1.0, -1.0], vec![1.0, 1.0], vec![33, 33]).unwrap();
    let a = deconv_kde(z.view(), &k, &region).unwrap();
    let b = deconv_kde(z.view(), &k, &region).unwrap();
    let bits =
        |d: &DeconvolvedDensity<f64>| d.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
}

#[test]
fn deconvolution_recovers_mixture_in_mean() {
    // Laplace-blurred mixture, deconvolved at a moderate bandwidth
    let f = make_density(DensityKind::GaussianMixture {
        weights: vec![0.5, 0.5],
        means: vec![vec![-0.6], vec![0.6]],
        sds: vec![vec![0.2], vec![0.2]],
        truncate: None,
    })
    .unwrap();
    let noise = laplace_noise(1, &[0.3]).unwrap();
    let n = 20_000;
    let x = f.sample(n, 4).unwrap();
    let z = &x + &noise.sample(n, 5).unwrap();
    let region = CompactRegion::new(vec![-1.5], vec![1.5], vec![61]).unwrap();
    let k = build_deconv_kernel(&sinc_kernel(1), &noise, &[0.12]).unwrap();
    let est = deconv_kde(z.view(), &k, &region).unwrap();
    let naive = build_deconv_kernel(&sinc_kernel(1), &zero_noise(1), &[0.12]).unwrap();
    let blurred = deconv_kde(z.view(), &naive, &region).unwrap();
    let nodes = region.axis_nodes(0);
    let err = |d: &DeconvolvedDensity<f64>| {
        nodes
            .iter()
            .zip(d.values())
            .map(|(x, v)| (v - f.eval(&[*x])).powi(2))
            .sum::<f64>()
    };
    assert!(
        err(&est) < 0.25 * err(&blurred),
        "{} vs {}",
        err(&est),
        err(&blurred)
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn kde_is_linear_in_sample(n1 in 1usize..40, n2 in 1usize..40, seed in any::<u64>()) {
        let noise = laplace_noise(1, &[0.3]).unwrap();
        let k = build_deconv_kernel(&sinc_kernel(1), &noise, &[0.4]).unwrap();
        let region = CompactRegion::new(vec![-1.0], vec![1.0], vec![41]).unwrap();
        let f = make_density(DensityKind::Uniform { lower: vec![-1.0], upper: vec![1.0] }).unwrap();
        let z1 = f.sample(n1, seed).unwrap();
        let z2 = f.sample(n2, seed ^ 1).unwrap();
        let all = ndarray::concatenate![ndarray::Axis(0), z1, z2];
        let a = deconv_kde(all.view(), &k, &region).unwrap();
        let b1 = deconv_kde(z1.view(), &k, &region).unwrap();
        let b2 = deconv_kde(z2.view(), &k, &region).unwrap();
        for i in 0..region.num_nodes() {
            let w = (n1 as f64 * b1.values()[i] + n2 as f64 * b2.values()[i]) / (n1 + n2) as f64;
            prop_assert!((a.values()[i] - w).abs() <= 1e-12 * (1.0 + w.abs()));
        }
    }
}
