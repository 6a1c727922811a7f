use fluxcouple::flux::shestakov_flux;
use fluxcouple::transport::{split_flux, Grid, DEFAULT_DMAX, DEFAULT_DMIN};
use proptest::prelude::*;

fn positive_profile(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1e-3f64..10.0, n)
}

proptest! {
    #[test]
    fn split_reconstructs_flux(p in positive_profile(24), r in prop::sample::select(vec![0.0, 1.0, 2.0, 3.5, 10.0])) {
        let g = Grid::new(24).unwrap();
        let q = shestakov_flux(&g, &p, r).unwrap();
        let s = split_flux(&g, &p, &q, DEFAULT_DMIN, DEFAULT_DMAX).unwrap();
        for i in 0..24 {
            prop_assert!((0.0..=1.0).contains(&s.theta[i]));
            prop_assert!(s.d_coef[i] >= 0.0);
            let back = -s.d_coef[i] * s.gradient[i] + s.c_coef[i] * p[i];
            prop_assert!((back - q[i]).abs() <= 1e-12 * q[i].abs().max(f64::MIN_POSITIVE), "node {i}: {back} vs {}", q[i]);
        }
    }

    #[test]
    fn split_reconstructs_arbitrary_flux(p in positive_profile(16), q in prop::collection::vec(-5.0f64..5.0, 16)) {
        let g = Grid::new(16).unwrap();
        let s = split_flux(&g, &p, &q, DEFAULT_DMIN, DEFAULT_DMAX).unwrap();
        for i in 0..16 {
            prop_assert!((0.0..=1.0).contains(&s.theta[i]));
            let back = -s.d_coef[i] * s.gradient[i] + s.c_coef[i] * p[i];
            prop_assert!((back - q[i]).abs() <= 1e-12 * q[i].abs());
        }
    }
}
