mod support;

use fluxcouple::accel::{solve, AccelConfig, ConvergenceNorm, MapError};
use support::{gmres_residuals, mat_vec, random_contraction, Lcg};

fn linear_case(seed: u64, n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = Lcg(seed);
    let a = random_contraction(&mut rng, n, 0.9);
    let b = (0..n).map(|_| rng.sym()).collect();
    (a, b)
}

/// AA with β = 1 and unlimited depth: the least-squares residual of
/// iteration k is the GMRES residual after k steps on `(I - A) p = b`.
#[test]
fn full_depth_aa_tracks_gmres() {
    let n = 5;
    for seed in 1..=10u64 {
        let (a, b) = linear_case(seed * 7919, n);
        let mut map = |p: &[f64]| -> Result<Vec<f64>, MapError> {
            Ok(mat_vec(&a, p).iter().zip(&b).map(|(x, y)| x + y).collect())
        };
        let cfg = AccelConfig {
            m_max: n,
            beta: 1.0,
            k_max: n,
            tol: 1e-300,
            norm: ConvergenceNorm::Absolute,
            ..AccelConfig::default()
        };
        let p0 = vec![0.0; n];
        let rep = solve(&mut map, &p0, &cfg).unwrap();
        let m: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if i == j { 1.0 - a[i][j] } else { -a[i][j] })
                    .collect()
            })
            .collect();
        let gm = gmres_residuals(&m, &b, &p0, n);
        assert!((rep.trace[0].f_norm - gm[0]).abs() <= 1e-12 * gm[0]);
        for t in rep.trace.iter().skip(1) {
            let Some(ls) = t.lsq_residual else { continue };
            if gm[t.k] < 1e-10 {
                break;
            }
            let rel = (ls - gm[t.k]).abs() / gm[t.k];
            assert!(rel < 1e-8, "seed {seed} k {}: {ls} vs {}", t.k, gm[t.k]);
        }
    }
}

#[test]
fn gmres_oracle_terminates_on_identity() {
    let id = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
    let r = gmres_residuals(&id, &[1.0, 2.0], &[0.0, 0.0], 2);
    assert!(r[1] < 1e-15);
}
