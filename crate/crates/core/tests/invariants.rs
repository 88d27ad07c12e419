use fput_core::attenuation::CubicSpline;
use fput_core::ensemble::{sample_kappa, Distribution, EnsembleConfig, KappaSampler, Welford};
use fput_core::kernel::propagate_free;
use fput_core::lattice::{
    apply_j, diff_backward, diff_forward, fput_rhs, hamiltonian, sum_exclusive, sum_inclusive, LatticeField,
    SpringCoefficients,
};
use proptest::prelude::*;

fn field(n: usize) -> impl Strategy<Value = LatticeField> {
    (-50i64..50, prop::collection::vec(-1.0f64..1.0, n), prop::collection::vec(-1.0f64..1.0, n))
        .prop_map(|(j, r, p)| LatticeField::new(j, r, p).unwrap())
}

fn distribution() -> impl Strategy<Value = Distribution> {
    prop_oneof![
        Just(Distribution::UniformPmSqrt3),
        Just(Distribution::Rademacher),
        (1.8f64..4.0).prop_map(|alpha| Distribution::TruncatedGaussian { alpha }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn structure_map_is_skew(pair in (4usize..40).prop_flat_map(|n| (field(n), field(n)))) {
        let (u, mut v) = pair;
        v.j_min = u.j_min;
        let lhs = u.dot(&apply_j(&v));
        let rhs = -apply_j(&u).dot(&v);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn prefix_sums_invert_differences(f in prop::collection::vec(-5.0f64..5.0, 2..60)) {
        let back = sum_inclusive(&diff_backward(&f).unwrap());
        let fwd = sum_exclusive(&diff_forward(&f).unwrap());
        for k in 0..f.len() {
            prop_assert!((back[k] - f[k]).abs() <= 1e-12);
            // Forward differences lose the left value, recovered up to a shift.
            prop_assert!((fwd[k] - (f[k] - f[0])).abs() <= 1e-12);
        }
    }

    #[test]
    fn energy_is_conserved_by_the_vector_field(
        u in field(30),
        kappa in prop::collection::vec(-1.7f64..1.7, 30),
        sigma in 0.0f64..0.5,
    ) {
        // dH/dt = <grad H, J grad H> = 0, checked by a centered difference.
        let coeffs = SpringCoefficients::new(u.j_min, kappa, sigma, 3f64.sqrt()).unwrap();
        let mut small = u.clone();
        small.scale(0.1);
        let f = fput_rhs(&small, &coeffs).unwrap();
        let h = 1e-5;
        let mut plus = small.clone();
        plus.axpy(h, &f);
        let mut minus = small.clone();
        minus.axpy(-h, &f);
        let dh = (hamiltonian(&plus, &coeffs).unwrap().value - hamiltonian(&minus, &coeffs).unwrap().value) / (2.0 * h);
        prop_assert!(dh.abs() <= 1e-8, "{dh}");
    }

    #[test]
    fn free_propagation_is_an_isometric_semigroup(u in field(25), t in 0.1f64..4.0, s in 0.1f64..4.0) {
        let pad = 80;
        let mut w = LatticeField::zeros(u.j_min - pad as i64, u.len() + 2 * pad);
        w.r[pad..pad + u.len()].copy_from_slice(&u.r);
        w.p[pad..pad + u.len()].copy_from_slice(&u.p);
        let fwd = propagate_free(&w, t).unwrap();
        prop_assert!((fwd.norm() - w.norm()).abs() <= 1e-9 * w.norm().max(1.0));
        let two = propagate_free(&fwd, s).unwrap();
        let one = propagate_free(&w, t + s).unwrap();
        prop_assert!(two.sub(&one).norm() <= 1e-9 * w.norm().max(1.0));
    }

    #[test]
    fn samples_do_not_depend_on_the_window(
        dist in distribution(),
        seed in any::<u64>(),
        realization in 0u64..1000,
        j in -500i64..500,
        offset in 0usize..20,
    ) {
        let s = KappaSampler::new(dist, seed).unwrap();
        let window = s.values(realization, j - offset as i64, offset + 5);
        prop_assert_eq!(window[offset].to_bits(), s.value(realization, j).to_bits());
        prop_assert!(window.iter().all(|v| v.abs() <= dist.support()));
    }

    #[test]
    fn admissible_strength_keeps_springs_positive(dist in distribution(), frac in 0.0f64..1.5) {
        let sigma = frac / dist.support();
        let cfg = EnsembleConfig { distribution: dist, sigma, c_star: 1.015, realizations: 1, master_seed: 7 };
        match sample_kappa(&cfg, 0, -20, 40) {
            Ok(k) => {
                prop_assert!(frac < 1.0);
                prop_assert!(k.stiffness().iter().all(|&s| s > 0.0));
            }
            Err(_) => prop_assert!(frac >= 1.0),
        }
    }

    #[test]
    fn merged_accumulators_match_a_single_pass(
        xs in prop::collection::vec(-100.0f64..100.0, 0..80),
        cut in 0usize..80,
    ) {
        let cut = cut.min(xs.len());
        let (mut a, mut b, mut all) = (Welford::default(), Welford::default(), Welford::default());
        xs[..cut].iter().for_each(|&x| a.push(x));
        xs[cut..].iter().for_each(|&x| b.push(x));
        xs.iter().for_each(|&x| all.push(x));
        a.merge(&b);
        prop_assert_eq!(a.count, all.count);
        prop_assert!((a.mean - all.mean).abs() <= 1e-9);
        prop_assert!((a.variance() - all.variance()).abs() <= 1e-7 * (1.0 + all.variance()));
    }

    #[test]
    fn spline_interpolates_knots_and_lines(
        steps in prop::collection::vec(0.1f64..2.0, 1..12),
        ys in prop::collection::vec(-3.0f64..3.0, 13),
        slope in -2.0f64..2.0,
    ) {
        let mut x = vec![0.0];
        for s in &steps {
            x.push(x[x.len() - 1] + s);
        }
        let y: Vec<f64> = ys[..x.len()].to_vec();
        let sp = CubicSpline::new(x.clone(), y.clone()).unwrap();
        for (a, b) in x.iter().zip(&y) {
            prop_assert!((sp.eval(*a) - b).abs() <= 1e-10);
        }
        let line = CubicSpline::new(x.clone(), x.iter().map(|v| 1.0 + slope * v).collect()).unwrap();
        let mid = 0.5 * (x[0] + x[x.len() - 1]);
        prop_assert!((line.eval(mid) - (1.0 + slope * mid)).abs() <= 1e-10);
    }
}
