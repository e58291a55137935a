use noisebias_core::diagnostics::{potential, sqrt_potential, PotentialSpec};
use noisebias_core::engines::{label_noise_update, minibatch_noise, Engine, NoiseSpec};
use noisebias_core::model::{
    dataset_stats, example_grad, example_loss, full_grad, full_loss, generate_dataset, test_error,
};
use noisebias_core::{rng, Dataset, DatasetConfig};
use proptest::prelude::*;

fn instance() -> impl Strategy<Value = (Dataset, Vec<f64>, usize)> {
    (1usize..=12, 1usize..=8, any::<u64>())
        .prop_flat_map(|(d, n, seed)| {
            (
                Just(d),
                Just(n),
                0..=d,
                Just(seed),
                prop::collection::vec(-10.0f64..10.0, d),
                0..n,
            )
        })
        .prop_map(|(d, n, r, seed, v, i)| {
            let ds = generate_dataset(&DatasetConfig::new(d, n, r, seed)).unwrap();
            (ds, v, i)
        })
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn gradient_matches_central_differences((ds, v, i) in instance()) {
        let g = example_grad(&v, &ds, i).unwrap();
        let h = 1e-5;
        let mut w = v.clone();
        let mut worst: f64 = 0.0;
        for k in 0..v.len() {
            w[k] = v[k] + h;
            let up = example_loss(&w, &ds, i).unwrap();
            w[k] = v[k] - h;
            let down = example_loss(&w, &ds, i).unwrap();
            w[k] = v[k];
            worst = worst.max((g[k] - (up - down) / (2.0 * h)).abs());
        }
        prop_assert!(worst <= 1e-6 * max_abs(&g).max(1.0), "error {worst}, scale {}", max_abs(&g));
    }

    #[test]
    fn loss_ignores_signs((ds, v, _i) in instance(), flips in any::<u64>()) {
        let flipped: Vec<f64> = v
            .iter()
            .enumerate()
            .map(|(k, x)| if flips >> (k % 64) & 1 == 1 { -x } else { *x })
            .collect();
        prop_assert_eq!(full_loss(&v, &ds).unwrap(), full_loss(&flipped, &ds).unwrap());
    }

    #[test]
    fn ground_truth_interpolates(d in 1usize..30, n in 1usize..30, seed in any::<u64>(), frac in 0.0f64..=1.0) {
        let r = (frac * d as f64) as usize;
        let ds = generate_dataset(&DatasetConfig::new(d, n, r, seed)).unwrap();
        prop_assert_eq!(full_loss(ds.ground_truth(), &ds).unwrap(), 0.0);
        prop_assert_eq!(test_error(ds.ground_truth(), ds.ground_truth()).unwrap(), 0.0);
        let again = generate_dataset(&DatasetConfig::new(d, n, r, seed)).unwrap();
        prop_assert_eq!(ds, again);
    }

    #[test]
    fn injected_noise_is_mean_zero((ds, v, i) in instance(), delta in 0.01f64..3.0, eta in 1e-4f64..1e-2) {
        let plain = label_noise_update(&v, &ds, eta, i, 0.0).unwrap();
        let up = label_noise_update(&v, &ds, eta, i, delta).unwrap();
        let down = label_noise_update(&v, &ds, eta, i, -delta).unwrap();
        let scale = max_abs(&v).max(1.0);
        for k in 0..v.len() {
            prop_assert!((0.5 * (up[k] + down[k]) - plain[k]).abs() <= 1e-12 * scale);
        }

        let n = ds.len();
        let mut total = vec![0.0; v.len()];
        for a in 0..n {
            for b in 0..n {
                for (t, x) in total.iter_mut().zip(minibatch_noise(&v, &ds, delta, a, b).unwrap()) {
                    *t += x;
                }
            }
        }
        let grad_scale = max_abs(&full_grad(&v, &ds).unwrap()).max(1.0) * delta;
        prop_assert!(max_abs(&total) <= 1e-12 * grad_scale * (n * n) as f64);
    }

    #[test]
    fn label_noise_preserves_nonnegativity(
        (ds, v, _i) in instance(),
        delta in 0.0f64..2.0,
        frac in 0.01f64..0.999,
    ) {
        let v: Vec<f64> = v.iter().map(|x| x.abs() * 0.3).collect();
        let bx = dataset_stats(&ds).bx;
        let norm2: f64 = v.iter().map(|x| x * x).sum();
        let eta = frac / (delta * bx + (norm2 + ds.sparsity() as f64) * bx * bx);
        for i in 0..ds.len() {
            for s in [delta, -delta] {
                let next = label_noise_update(&v, &ds, eta, i, s).unwrap();
                prop_assert!(next.iter().all(|&x| x >= 0.0), "{next:?}");
            }
        }
    }

    #[test]
    fn zero_noise_engines_match_gd((ds, v, _i) in instance(), eta in 1e-4f64..1e-2) {
        let mut stream = rng::stream(0, rng::TRAJECTORY);
        let mut gd = v.clone();
        Engine::new(NoiseSpec::Gd, &ds).unwrap().step(&mut gd, &ds, eta, &mut stream);
        for spec in [NoiseSpec::MiniBatchSim { delta: 0.0 }, NoiseSpec::gaussian_sigma(0.0)] {
            let mut w = v.clone();
            Engine::new(spec, &ds).unwrap().step(&mut w, &ds, eta, &mut stream);
            for (a, b) in w.iter().zip(&gd) {
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn sqrt_potential_scaling_and_monotonicity(
        v in prop::collection::vec(0.0f64..100.0, 1..20),
        c in 1e-3f64..1e3,
        k in any::<prop::sample::Index>(),
        bump in 0.0f64..10.0,
    ) {
        let base = sqrt_potential(&v).unwrap();
        let scaled: Vec<f64> = v.iter().map(|x| c * x).collect();
        let phi = sqrt_potential(&scaled).unwrap();
        prop_assert!((phi - c.sqrt() * base).abs() <= 1e-12 * phi.max(1.0));
        let mut w = v.clone();
        w[k.index(v.len())] += bump;
        prop_assert!(sqrt_potential(&w).unwrap() >= base);
    }

    #[test]
    fn bounded_potential_never_exceeds_unbounded(
        v in prop::collection::vec(0.0f64..10.0, 1..20),
        b in 0.1f64..100.0,
    ) {
        let full = sqrt_potential(&v).unwrap();
        let bounded = potential(&v, &PotentialSpec::BoundedSqrtSum { b }).unwrap();
        prop_assert!(bounded <= full);
        let l1: f64 = v.iter().sum();
        prop_assert_eq!(bounded == full, l1 <= b || full == 0.0);
    }
}
