use proptest::prelude::*;
use rpreg::estimation::covariance_mlrm;
use rpreg::inference::{approx_power, contiguous_power, LinearHypothesis, MlrmCovariance};
use rpreg::numerics::linalg::{min_eigenvalue, Matrix};
use rpreg::numerics::rng::RngStream;
use rpreg::{fit_rp, Alpha, ModelData, SolverOptions, Theta};

fn instance(seed: u64, n: usize) -> ModelData {
    let mut rng = RngStream::new(seed, 0);
    let mut x = Matrix::zeros(n, 2);
    let mut y = vec![0.0; n];
    for i in 0..n {
        x[(i, 0)] = 1.0;
        x[(i, 1)] = rng.normal(0.0, 1.0);
        y[i] = 0.5 - x[(i, 1)] + rng.normal(0.0, 0.7);
    }
    ModelData::new(x, y).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn affine_equivariance(seed in 0u64..1000, a in 0.0f64..1.0, c in 0.2f64..5.0, d0 in -3.0f64..3.0, d1 in -3.0f64..3.0) {
        let data = instance(seed, 25);
        let alpha = Alpha::new(a).unwrap();
        let opts = SolverOptions::default();
        let base = fit_rp(&data, alpha, None, &opts).unwrap();
        let y2: Vec<f64> = (0..data.n())
            .map(|i| c * data.response()[i] + d0 * data.row(i)[0] + d1 * data.row(i)[1])
            .collect();
        let moved = fit_rp(&data.with_response(y2).unwrap(), alpha, None, &opts).unwrap();
        let want = [c * base.theta_hat.beta[0] + d0, c * base.theta_hat.beta[1] + d1, c * base.theta_hat.sigma];
        let got = moved.theta_hat.to_vec();
        for k in 0..3 {
            prop_assert!((got[k] - want[k]).abs() <= 1e-6 * want[k].abs().max(1.0), "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn sigma_n_positive_definite(seed in 0u64..1000, a in 0.0f64..3.0, s in 0.1f64..10.0) {
        let data = instance(seed, 12);
        let theta = Theta::new(vec![0.0, 1.0], s).unwrap();
        let cov = covariance_mlrm(&data, &theta, Alpha::new(a).unwrap()).unwrap();
        prop_assert!(min_eigenvalue(&cov.sigma_n).unwrap() > 0.0);
        prop_assert!(cov.sigma_n.is_symmetric(1e-12));
    }

    #[test]
    fn power_nondecreasing_in_n(a in 0.0f64..1.5, shift in 0.01f64..0.5) {
        let data = instance(3, 30);
        let cov = MlrmCovariance::new(&data).unwrap();
        let t0 = Theta::new(vec![0.5, -1.0], 0.7).unwrap();
        let t1 = Theta::new(vec![0.5, -1.0 + shift], 0.7).unwrap();
        let alpha = Alpha::new(a).unwrap();
        let mut last = 0.0;
        for n in (50..=1000).step_by(50) {
            let p = approx_power(&t1, &t0, alpha, n, 0.05, &cov).unwrap().approx_power;
            prop_assert!(p >= last - 1e-12);
            last = p;
        }
    }

    #[test]
    fn contiguous_power_monotone(a in 0.0f64..2.0, d in 0.0f64..20.0) {
        let hyp = LinearHypothesis::fix_coordinates(3, &[(1, 1.0)]).unwrap();
        let theta = Theta::new(vec![1.0, 1.0], 1.0).unwrap();
        let s = rpreg::inference::CovarianceModel::sigma_at(
            &MlrmCovariance::from_gram(Matrix::identity(2)).unwrap(),
            &theta,
            Alpha::new(a).unwrap(),
        )
        .unwrap();
        let p1 = contiguous_power(&hyp, &[0.0, d.sqrt(), 0.0], 0.05, &s).unwrap();
        let p2 = contiguous_power(&hyp, &[0.0, (d + 1.0).sqrt(), 0.0], 0.05, &s).unwrap();
        prop_assert!(p1 >= 0.05 - 1e-12 && p2 >= p1 && p2 <= 1.0);
    }

    #[test]
    fn rng_streams_reproducible(seed in any::<u64>(), stream in any::<u64>()) {
        let mut a = RngStream::new(seed, stream);
        let mut b = RngStream::new(seed, stream);
        for _ in 0..16 {
            prop_assert_eq!(a.next_u64(), b.next_u64());
        }
    }
}

#[test]
fn robustness_on_contaminated_sample() {
    // one gross outlier barely moves the α = 0.5 fit but drags the MLE
    let clean = instance(17, 40);
    let mut y = clean.response().to_vec();
    y[0] += 50.0;
    let dirty = clean.with_response(y).unwrap();
    let opts = SolverOptions::default();
    for (a, tol) in [(0.0, f64::INFINITY), (0.5, 0.05)] {
        let alpha = Alpha::new(a).unwrap();
        let c = fit_rp(&clean, alpha, None, &opts).unwrap().theta_hat.to_vec();
        let d = fit_rp(&dirty, alpha, None, &opts).unwrap().theta_hat.to_vec();
        let shift = c.iter().zip(&d).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        if a == 0.0 {
            assert!(shift > 0.5, "MLE shift {shift}");
        } else {
            assert!(shift < tol, "alpha {a} shift {shift}");
        }
    }
}
