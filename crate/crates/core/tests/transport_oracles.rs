mod support;

use fluxcouple::experiment::ProblemConfig;
use fluxcouple::flux::shestakov_flux;
use fluxcouple::transport::{
    assemble_system, grad, thomas_solve, FluxSplit, Grid, StepParams, RIGHT_BOUNDARY_VALUE,
};
use fluxcouple::{solve, AccelConfig, SolveStatus};
use support::{dense_solve, mat_vec, Lcg};

fn split_from(d: Vec<f64>, c: Vec<f64>) -> FluxSplit {
    let n = d.len();
    FluxSplit {
        theta: vec![1.0; n],
        d_coef: d,
        c_coef: c,
        d_hat: vec![0.0; n],
        gradient: vec![0.0; n],
    }
}

/// `M p = p + (H / V_i)(F_{i+1/2} - F_{i-1/2})` with
/// `F = -D_face (p_{i+1} - p_i) / dx + mean(c p)`, zero flux at `x = 0`,
/// a half volume at node 0 and a Dirichlet last row.
fn dense_oracle(g: &Grid, d: &[f64], c: &[f64], h: f64) -> Vec<Vec<f64>> {
    let n = g.n_points();
    let dx = g.dx();
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n - 1 {
        let vol = if i == 0 { 0.5 * dx } else { dx };
        m[i][i] += 1.0;
        // Face i + 1/2 flux coefficients.
        let df = 0.5 * (d[i] + d[i + 1]);
        let (fl, fr) = (df / dx + 0.5 * c[i], -df / dx + 0.5 * c[i + 1]);
        m[i][i] += h / vol * fl;
        m[i][i + 1] += h / vol * fr;
        if i > 0 {
            let dw = 0.5 * (d[i - 1] + d[i]);
            let (wl, wr) = (dw / dx + 0.5 * c[i - 1], -dw / dx + 0.5 * c[i]);
            m[i][i - 1] -= h / vol * wl;
            m[i][i] -= h / vol * wr;
        }
    }
    m[n - 1][n - 1] = 1.0;
    m
}

#[test]
fn assembly_matches_dense_finite_volume_oracle() {
    let mut rng = Lcg(99);
    for n in [3, 4, 9, 30] {
        let g = Grid::new(n).unwrap();
        let d: Vec<f64> = (0..n).map(|_| rng.next_f64() * 3.0).collect();
        let c: Vec<f64> = (0..n).map(|_| rng.sym()).collect();
        let params = StepParams {
            h_step: 0.7,
            p_prev: (0..n).map(|_| rng.next_f64()).collect(),
            source: (0..n).map(|_| rng.next_f64()).collect(),
        };
        let sys = assemble_system(&g, &split_from(d.clone(), c.clone()), &params).unwrap();
        let dense = dense_oracle(&g, &d, &c, 0.7);
        let v: Vec<f64> = (0..n).map(|_| rng.sym()).collect();
        let (a, b) = (sys.apply(&v), mat_vec(&dense, &v));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12 * (1.0 + y.abs()), "n={n}: {x} vs {y}");
        }
        assert_eq!(sys.rhs[n - 1], RIGHT_BOUNDARY_VALUE);
        assert_eq!(sys.rhs[0], params.p_prev[0] + 0.7 * params.source[0]);
    }
}

#[test]
fn unit_diffusion_with_dx_squared_step() {
    let g = Grid::new(6).unwrap();
    let dx = g.dx();
    let params = StepParams {
        h_step: dx * dx,
        p_prev: vec![0.0; 6],
        source: vec![0.0; 6],
    };
    let sys = assemble_system(&g, &split_from(vec![1.0; 6], vec![0.0; 6]), &params).unwrap();
    for i in 1..5 {
        assert!((sys.sub[i - 1] + 1.0).abs() < 1e-12);
        assert!((sys.diag[i] - 3.0).abs() < 1e-12);
        assert!((sys.sup[i] + 1.0).abs() < 1e-12);
    }
    assert!((sys.diag[0] - 3.0).abs() < 1e-12);
    assert!((sys.sup[0] + 2.0).abs() < 1e-12);
}

#[test]
fn thomas_agrees_with_dense_elimination() {
    let mut rng = Lcg(5);
    let g = Grid::new(25).unwrap();
    let d: Vec<f64> = (0..25).map(|_| 0.1 + rng.next_f64()).collect();
    let c: Vec<f64> = (0..25).map(|_| 0.2 * rng.sym()).collect();
    let params = StepParams {
        h_step: 0.05,
        p_prev: (0..25).map(|_| rng.next_f64()).collect(),
        source: vec![1.0; 25],
    };
    let sys = assemble_system(&g, &split_from(d.clone(), c.clone()), &params).unwrap();
    let x = thomas_solve(&sys).unwrap();
    let y = dense_solve(dense_oracle(&g, &d, &c, 0.05), sys.rhs.clone());
    for (a, b) in x.iter().zip(&y) {
        assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()));
    }
}

#[test]
fn gradient_of_square_is_second_order() {
    let g = Grid::new(101).unwrap();
    let p: Vec<f64> = g.nodes().iter().map(|x| x * x).collect();
    let err = grad(&g, &p)
        .iter()
        .zip(g.nodes())
        .map(|(d, x)| (d - 2.0 * x).abs())
        .fold(0.0, f64::max);
    assert!(err < 1e-3);
}

#[test]
fn steady_flux_at_the_edge_equals_total_heating() {
    let prob = ProblemConfig::default();
    let (mut map, p0) = prob.build(None).unwrap();
    let cfg = AccelConfig {
        beta: 0.4,
        ..AccelConfig::default()
    };
    let rep = solve(&mut map, &p0, &cfg).unwrap();
    assert_eq!(rep.status, SolveStatus::Converged);
    let g = Grid::new(prob.n_points).unwrap();
    let q = shestakov_flux(&g, &rep.final_iterate, prob.r).unwrap();
    let edge = q[prob.n_points - 1];
    assert!((edge - 0.1).abs() < 5.0 * g.dx(), "edge flux {edge}");
}
