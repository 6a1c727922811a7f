//! Independent dense oracles shared by the integration tests.
#![allow(dead_code)]

/// Least squares `min ‖rhs - [cols] γ‖` by Householder QR from scratch.
pub fn householder_lsq(cols: &[Vec<f64>], rhs: &[f64]) -> Vec<f64> {
    let n = rhs.len();
    let m = cols.len();
    let mut a: Vec<Vec<f64>> = cols.to_vec();
    let mut b = rhs.to_vec();
    for j in 0..m {
        let norm = a[j][j..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if a[j][j] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = a[j][j..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        let reflect = |x: &mut [f64]| {
            let s: f64 = v.iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>() * 2.0 / vnorm2;
            for (xi, vi) in x.iter_mut().zip(&v) {
                *xi -= s * vi;
            }
        };
        for col in a.iter_mut().skip(j) {
            reflect(&mut col[j..n]);
        }
        reflect(&mut b[j..n]);
    }
    let mut g = b[..m].to_vec();
    for j in (0..m).rev() {
        g[j] /= a[j][j];
        for i in 0..j {
            g[i] -= a[j][i] * g[j];
        }
    }
    g
}

/// Gaussian elimination with partial pivoting on a dense row-major matrix.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for k in 0..n {
        let piv = (k..n)
            .max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))
            .unwrap();
        a.swap(k, piv);
        b.swap(k, piv);
        for i in k + 1..n {
            let l = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= l * a[k][j];
            }
            b[i] -= l * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

pub fn mat_vec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter()
        .map(|row| row.iter().zip(x).map(|(r, v)| r * v).sum())
        .collect()
}

/// Residual norms `‖r_k‖`, `k = 0..=steps`, of textbook GMRES (Arnoldi with
/// modified Gram-Schmidt, Givens rotations) on `M x = b` from `x0`.
pub fn gmres_residuals(m: &[Vec<f64>], b: &[f64], x0: &[f64], steps: usize) -> Vec<f64> {
    let mx0 = mat_vec(m, x0);
    let r0: Vec<f64> = b.iter().zip(&mx0).map(|(a, c)| a - c).collect();
    let beta = r0.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut out = vec![beta];
    let mut v = vec![r0.iter().map(|x| x / beta).collect::<Vec<f64>>()];
    let mut h: Vec<Vec<f64>> = Vec::new();
    let mut rot: Vec<(f64, f64)> = Vec::new();
    let mut g = vec![beta];
    for k in 0..steps {
        let mut w = mat_vec(m, &v[k]);
        let mut col = vec![0.0; k + 2];
        for (i, vi) in v.iter().enumerate() {
            let hij: f64 = w.iter().zip(vi).map(|(a, c)| a * c).sum();
            col[i] = hij;
            for (wj, vj) in w.iter_mut().zip(vi) {
                *wj -= hij * vj;
            }
        }
        let wn = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        col[k + 1] = wn;
        for (i, &(c, s)) in rot.iter().enumerate() {
            let (a, d) = (col[i], col[i + 1]);
            col[i] = c * a + s * d;
            col[i + 1] = -s * a + c * d;
        }
        let rho = col[k].hypot(col[k + 1]);
        let (c, s) = (col[k] / rho, col[k + 1] / rho);
        col[k] = rho;
        col[k + 1] = 0.0;
        rot.push((c, s));
        let gk = g[k];
        g[k] = c * gk;
        g.push(-s * gk);
        out.push(g[k + 1].abs());
        h.push(col);
        if wn == 0.0 {
            break;
        }
        v.push(w.iter().map(|x| x / wn).collect());
    }
    out
}

/// Deterministic xorshift stream for oracle inputs.
pub struct Lcg(pub u64);

impl Lcg {
    pub fn next_f64(&mut self) -> f64 {
        self.0 ^= self.0 << 13;
        self.0 ^= self.0 >> 7;
        self.0 ^= self.0 << 17;
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Uniform on `[-1, 1)`.
    pub fn sym(&mut self) -> f64 {
        2.0 * self.next_f64() - 1.0
    }
}

/// A random `n × n` matrix scaled to Frobenius norm `scale`, so its
/// spectral norm is below `scale`.
pub fn random_contraction(rng: &mut Lcg, n: usize, scale: f64) -> Vec<Vec<f64>> {
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..n).map(|_| rng.sym()).collect())
        .collect();
    let fro = a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    a.iter_mut().flatten().for_each(|x| *x *= scale / fro);
    a
}
