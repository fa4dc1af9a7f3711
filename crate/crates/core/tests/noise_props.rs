use std::sync::Arc;

use deconv_quant::noise::{CfTable, CustomAxis};
use deconv_quant::*;
use num_complex::Complex;
use proptest::prelude::*;

proptest! {
    #[test]
    fn cf_at_origin_is_one(scales in proptest::collection::vec(0.01f64..5.0, 1..4)) {
        let d = scales.len();
        let zero = vec![0.0; d];
        prop_assert_eq!(laplace_noise(d, &scales).unwrap().cf(&zero), Complex::new(1.0, 0.0));
        prop_assert_eq!(zero_noise::<f64>(d).cf(&zero), Complex::new(1.0, 0.0));
        let table = AxisNoise::Table {
            table: CfTable::new(vec![0.0, 1.0, 4.0], vec![1.0, 0.5, 0.1], 1.5).unwrap(),
            scale: scales[0],
        };
        let custom = AxisNoise::Custom(CustomAxis {
            cf: Arc::new(|t: f64| Complex::new((-t.abs()).exp(), 0.0)),
            beta: 0.0,
            scale: 1.0,
            sampler: None,
        });
        let mixed = NoiseModel::from_axes(vec![table, custom]).unwrap();
        prop_assert_eq!(mixed.cf(&[0.0, 0.0]), Complex::new(1.0, 0.0));
    }

    #[test]
    fn laplace_decay_ratio_converges(scale in 0.05f64..3.0, axis in 0usize..3) {
        let noise = laplace_noise(3, &[1.0, 0.7, scale]).unwrap();
        let mut t = [0.0; 3];
        t[axis] = 1e3;
        let s = noise.scale()[axis];
        let ratio = noise.cf(&t).norm() * 1e6 * s * s;
        prop_assert!((ratio - 1.0).abs() < 0.01);
    }

    #[test]
    fn cf_is_hermitian_and_bounded(scale in 0.05f64..3.0, t in -50.0f64..50.0) {
        let noise = laplace_noise(1, &[scale]).unwrap();
        let (p, m) = (noise.cf(&[t]), noise.cf(&[-t]));
        prop_assert_eq!(p, m.conj());
        prop_assert!(p.norm() <= 1.0);
    }
}

#[test]
fn product_noise_samples_are_independent_across_axes() {
    let noise = laplace_noise(2, &[1.0, 0.5]).unwrap();
    let e = noise.sample(100_000, 3).unwrap();
    let n = e.nrows() as f64;
    let cov = e
        .column(0)
        .iter()
        .zip(e.column(1))
        .map(|(a, b)| a * b)
        .sum::<f64>()
        / n;
    let var1 = e.column(1).iter().map(|b| b * b).sum::<f64>() / n;
    assert!(cov.abs() < 0.02, "covariance {cov}");
    assert!((var1 - 0.5).abs() < 0.02, "variance {var1}");
}
