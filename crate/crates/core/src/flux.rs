//! Analytic stiff flux, localized source, flux noise and the steady-state
//! reference profile.
//!
//! The flux model is `q = -D ∂p/∂x + ε` with `D = |(1/p) ∂p/∂x|^r`. The
//! exponent `r` sets the stiffness (2 is stiff, 10 very stiff). `ε` is an
//! optional Gaussian field that is correlated in space and drawn afresh on
//! every evaluation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::transport::{
    first_unphysical, grad, FluxModel, Grid, Profile, TransportError, RIGHT_BOUNDARY_VALUE,
};

/// Right edge of the heated region `0 <= x <= SOURCE_EDGE`.
pub const SOURCE_EDGE: f64 = 0.1;

/// Spatially correlated, temporally white flux noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    /// Standard deviation relative to the spatial mean of `|q|`.
    pub amplitude: f64,
    /// Correlation length as a fraction of the domain.
    pub correlation_length: f64,
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            amplitude: 1e-3,
            correlation_length: 0.1,
            seed: 0,
        }
    }
}

/// `q = -|Dx p / p|^r Dx p`, optionally perturbed by [`NoiseModel`] draws.
#[derive(Debug, Clone, PartialEq)]
pub struct ShestakovModel {
    pub r: f64,
    pub noise: Option<NoiseModel>,
    draws: u64,
}

impl ShestakovModel {
    pub fn new(r: f64) -> Self {
        Self {
            r,
            noise: None,
            draws: 0,
        }
    }

    pub fn with_noise(mut self, noise: NoiseModel) -> Self {
        self.noise = Some(noise);
        self
    }

    /// Number of noise fields drawn so far.
    pub fn draws(&self) -> u64 {
        self.draws
    }
}

impl FluxModel for ShestakovModel {
    fn flux(&mut self, grid: &Grid, p: &[f64]) -> Result<Vec<f64>, TransportError> {
        let mut q = shestakov_flux(grid, p, self.r)?;
        if let Some(noise) = &self.noise {
            let scale = q.iter().map(|v| v.abs()).sum::<f64>() / q.len() as f64;
            let eps = sample_noise(noise, grid, scale, self.draws);
            self.draws += 1;
            q.iter_mut().zip(eps).for_each(|(qi, e)| *qi += e);
        }
        Ok(q)
    }
}

/// Noiseless flux of the stiff model.
pub fn shestakov_flux(grid: &Grid, p: &[f64], r: f64) -> Result<Vec<f64>, TransportError> {
    if p.len() != grid.n_points() {
        return Err(TransportError::DimensionMismatch {
            expected: grid.n_points(),
            got: p.len(),
        });
    }
    if let Some((index, value)) = first_unphysical(p) {
        return Err(TransportError::Unphysical { index, value });
    }
    let integer_r = (r.fract() == 0.0 && r.abs() <= 64.0).then_some(r as i32);
    let g = grad(grid, p);
    Ok(g.iter()
        .zip(p)
        .map(|(&gi, &pi)| {
            let ratio = (gi / pi).abs();
            let d = match integer_r {
                Some(k) => ratio.powi(k),
                None => ratio.powf(r),
            };
            -d * gi
        })
        .collect())
}

/// `S(x) = 1` on `0 <= x <= 0.1`, zero elsewhere, sampled at the nodes.
pub fn source_profile(grid: &Grid) -> Vec<f64> {
    grid.nodes()
        .iter()
        .map(|&x| if x <= SOURCE_EDGE { 1.0 } else { 0.0 })
        .collect()
}

/// The source averaged over each node's control volume (half cells at the
/// ends), so that the discrete total heating is exactly `∫S = 0.1`.
pub fn source_cell_average(grid: &Grid) -> Vec<f64> {
    let n = grid.n_points();
    let dx = grid.dx();
    grid.nodes()
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let lo = if i == 0 { 0.0 } else { x - 0.5 * dx };
            let hi = if i == n - 1 { 1.0 } else { x + 0.5 * dx };
            let covered = (hi.min(SOURCE_EDGE) - lo).max(0.0);
            covered / (hi - lo)
        })
        .collect()
}

/// A zero-mean Gaussian field with autocorrelation `exp(-(Δx/ℓ)²/2)`,
/// scaled by `amplitude * q_scale`.
///
/// White noise is convolved with a normalized Gaussian kernel of width
/// `ℓ/√2`. The white noise is generated on a padded grid, so the variance
/// is uniform up to the boundaries. The output depends only on
/// `(seed, draw_index)`.
pub fn sample_noise(model: &NoiseModel, grid: &Grid, q_scale: f64, draw_index: u64) -> Vec<f64> {
    let n = grid.n_points();
    let scale = model.amplitude * q_scale;
    if scale == 0.0 {
        return vec![0.0; n];
    }
    let width = model.correlation_length / (std::f64::consts::SQRT_2 * grid.dx());
    let half = (4.0 * width).ceil() as usize;
    let mut kernel: Vec<f64> = (0..=2 * half)
        .map(|j| {
            let off = j as f64 - half as f64;
            if width > 0.0 {
                (-0.5 * (off / width).powi(2)).exp()
            } else {
                1.0
            }
        })
        .collect();
    let norm = kernel.iter().map(|w| w * w).sum::<f64>().sqrt();
    kernel.iter_mut().for_each(|w| *w /= norm);

    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    rng.set_stream(draw_index);
    let white: Vec<f64> = (0..n + 2 * half)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    (0..n)
        .map(|i| {
            let acc: f64 = kernel
                .iter()
                .zip(&white[i..i + kernel.len()])
                .map(|(w, z)| w * z)
                .sum();
            scale * acc
        })
        .collect()
}

/// Steady-state flux for the standard source: `∫₀ˣ S`.
pub fn steady_flux(x: f64) -> f64 {
    x.min(SOURCE_EDGE)
}

/// Reference steady state of the noiseless problem.
///
/// With `u = p^{1/(r+1)}` the steady equation becomes
/// `u' = -q(x)^{1/(r+1)} / (r + 1)`, so `u` is affine where the flux is
/// constant and is a quadrature of the flux inside the heated region.
pub fn steady_state_oracle(r: f64, grid: &Grid) -> Profile {
    let a = 1.0 / (r + 1.0);
    let u_right = RIGHT_BOUNDARY_VALUE.powf(a);
    let u_edge = u_right + SOURCE_EDGE.powf(a) * (1.0 - SOURCE_EDGE) * a;
    Profile::from_fn(grid, |x| {
        let u = if x >= SOURCE_EDGE {
            u_right + SOURCE_EDGE.powf(a) * (1.0 - x) * a
        } else {
            u_edge + a * integrate_flux_root(x, SOURCE_EDGE, a)
        };
        u.powf(r + 1.0)
    })
}

// ∫_lo^hi s^a ds after s = t^{1/a}, which turns the integrand into the
// smooth (1/a) t^{1/a}.
fn integrate_flux_root(lo: f64, hi: f64, a: f64) -> f64 {
    const PANELS: usize = 16;
    let (t0, t1) = (lo.powf(a), hi.powf(a));
    let inv = 1.0 / a;
    let h = (t1 - t0) / PANELS as f64;
    (0..PANELS)
        .map(|k| {
            let mid = t0 + (k as f64 + 0.5) * h;
            GAUSS_LEGENDRE_8
                .iter()
                .map(|&(node, weight)| {
                    let t = mid + 0.5 * h * node;
                    weight * inv * t.powf(inv)
                })
                .sum::<f64>()
                * 0.5
                * h
        })
        .sum()
}

const GAUSS_LEGENDRE_8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_3, 0.101_228_536_290_376_3),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_5),
    (-0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_5),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_3),
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_profile_has_unit_diffusivity() {
        let g = Grid::new(401).unwrap();
        let p: Vec<f64> = g.nodes().iter().map(|x| (-x).exp()).collect();
        let q = shestakov_flux(&g, &p, 2.0).unwrap();
        for (qi, pi) in q.iter().zip(&p) {
            assert!((qi - pi).abs() < 1e-4, "{qi} vs {pi}");
        }
    }

    #[test]
    fn zero_exponent_is_plain_diffusion() {
        let g = Grid::new(21).unwrap();
        let p: Vec<f64> = g.nodes().iter().map(|x| 2.0 - x * x).collect();
        let q = shestakov_flux(&g, &p, 0.0).unwrap();
        let gp = grad(&g, &p);
        for (qi, gi) in q.iter().zip(gp) {
            assert_eq!(*qi, -gi);
        }
    }

    #[test]
    fn linear_profile_midpoint_value() {
        let g = Grid::new(11).unwrap();
        let p: Vec<f64> = g.nodes().iter().map(|x| 1.0 - 0.5 * x).collect();
        let q = shestakov_flux(&g, &p, 2.0).unwrap();
        assert!((q[5] - 2.0 / 9.0).abs() < 1e-14);
    }

    #[test]
    fn flux_rejects_nonpositive_profiles() {
        let g = Grid::new(3).unwrap();
        assert!(matches!(
            shestakov_flux(&g, &[1.0, -1.0, 1.0], 2.0),
            Err(TransportError::Unphysical { index: 1, .. })
        ));
    }

    #[test]
    fn source_values() {
        let g = Grid::new(21).unwrap();
        let s = source_profile(&g);
        assert_eq!(s[1], 1.0); // x = 0.05
        assert_eq!(s[2], 1.0); // x = 0.1
        assert_eq!(s[10], 0.0); // x = 0.5
    }

    #[test]
    fn cell_averaged_source_integrates_exactly() {
        for n in [11, 50, 500, 1001] {
            let g = Grid::new(n).unwrap();
            let s = source_cell_average(&g);
            let dx = g.dx();
            let total: f64 = s
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    if i == 0 || i == n - 1 {
                        0.5 * dx * v
                    } else {
                        dx * v
                    }
                })
                .sum();
            assert!((total - SOURCE_EDGE).abs() < 1e-14, "n={n} total={total}");
        }
    }

    #[test]
    fn zero_amplitude_noise_is_zero() {
        let g = Grid::new(33).unwrap();
        let m = NoiseModel {
            amplitude: 0.0,
            ..NoiseModel::default()
        };
        assert!(sample_noise(&m, &g, 1.0, 7).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn noise_is_deterministic_per_draw() {
        let g = Grid::new(65).unwrap();
        let m = NoiseModel {
            seed: 42,
            ..NoiseModel::default()
        };
        let a = sample_noise(&m, &g, 1.0, 3);
        assert_eq!(a, sample_noise(&m, &g, 1.0, 3));
        assert_ne!(a, sample_noise(&m, &g, 1.0, 4));
    }

    #[test]
    fn oracle_boundary_value() {
        let g = Grid::new(101).unwrap();
        for r in [2.0, 10.0] {
            let p = steady_state_oracle(r, &g);
            assert!((p.values[100] - 0.01).abs() < 1e-15);
            assert!(p.is_physical());
        }
    }

    #[test]
    fn oracle_quadrature_matches_closed_form() {
        // ∫_x^0.1 s^a ds = (0.1^{a+1} - x^{a+1}) / (a + 1)
        for r in [2.0, 3.5, 10.0] {
            let a = 1.0 / (r + 1.0);
            for x in [0.0, 0.013, 0.05, 0.0999] {
                let exact = (SOURCE_EDGE.powf(a + 1.0) - f64::powf(x, a + 1.0)) / (a + 1.0);
                let quad = integrate_flux_root(x, SOURCE_EDGE, a);
                assert!((quad - exact).abs() < 1e-13 * exact.max(1.0), "r={r} x={x}");
            }
        }
    }
}
