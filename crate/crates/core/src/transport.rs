//! Backward-Euler transport step solved by the flux-split coupling map.
//!
//! One evaluation of the map takes a profile `p_k`, asks a [`FluxModel`] for
//! the turbulent flux `q(p_k)`, splits that flux node by node into an
//! effective diffusivity `D_k` and convection velocity `c_k`, and solves the
//! linear implicit step
//!
//! ```text
//! p_{k+1} - H Dx(D_k Dx p_{k+1} - c_k p_{k+1}) = p_prev + H S
//! ```
//!
//! for the next profile. The boundary conditions are `p'(0) = 0` and
//! `p(1) = 0.01`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::accel::{FixedPointMap, MapError};
use crate::denselin::norm2;

/// Dirichlet value at `x = 1`.
pub const RIGHT_BOUNDARY_VALUE: f64 = 0.01;
/// `|Dx p|` below this is replaced by a sign-preserving floor before dividing.
pub const GRADIENT_FLOOR: f64 = 1e-10;
/// Gradient magnitude above which the interpolated split branches do not apply.
pub const STEEP_GRADIENT: f64 = 10.0;
pub const DEFAULT_DMIN: f64 = 1e-5;
pub const DEFAULT_DMAX: f64 = 1e13;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransportError {
    #[error("grid needs at least 3 points, got {0}")]
    GridTooSmall(usize),
    #[error("length mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unphysical profile value {value} at node {index}")]
    Unphysical { index: usize, value: f64 },
    #[error("non-finite {what} at node {index}")]
    NonFinite { what: &'static str, index: usize },
    #[error("zero pivot in tridiagonal solve at row {row}")]
    ZeroPivot { row: usize },
}

impl From<TransportError> for MapError {
    fn from(e: TransportError) -> Self {
        match e {
            TransportError::ZeroPivot { .. } => MapError::LinearSolve(e.to_string()),
            other => MapError::Unphysical(other.to_string()),
        }
    }
}

/// Uniform nodes on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    x: Vec<f64>,
    dx: f64,
}

impl Grid {
    pub fn new(n_points: usize) -> Result<Self, TransportError> {
        if n_points < 3 {
            return Err(TransportError::GridTooSmall(n_points));
        }
        let last = (n_points - 1) as f64;
        let x = (0..n_points).map(|i| i as f64 / last).collect();
        Ok(Self { x, dx: 1.0 / last })
    }

    pub fn n_points(&self) -> usize {
        self.x.len()
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn nodes(&self) -> &[f64] {
        &self.x
    }

    fn check(&self, len: usize) -> Result<(), TransportError> {
        if len != self.n_points() {
            return Err(TransportError::DimensionMismatch {
                expected: self.n_points(),
                got: len,
            });
        }
        Ok(())
    }
}

/// A profile sampled on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl Profile {
    pub fn from_fn(grid: &Grid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().iter().map(|&x| f(x)).collect();
        Self {
            grid: grid.clone(),
            values,
        }
    }

    /// Finite and strictly positive everywhere.
    pub fn is_physical(&self) -> bool {
        first_unphysical(&self.values).is_none()
    }
}

/// How the starting profile of a solve is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialProfile {
    /// `0.01 + 0.05 (1 - x)`
    #[default]
    Linear,
    /// `0.01 + 0.3 (1 - x²)`. Flat at the axis, so the first transport
    /// solve sees a vanishing diffusivity there and overshoots badly.
    Parabolic,
}

impl InitialProfile {
    pub fn build(self, grid: &Grid) -> Profile {
        match self {
            Self::Linear => Profile::from_fn(grid, |x| RIGHT_BOUNDARY_VALUE + 0.05 * (1.0 - x)),
            Self::Parabolic => {
                Profile::from_fn(grid, |x| RIGHT_BOUNDARY_VALUE + 0.3 * (1.0 - x * x))
            }
        }
    }
}

/// Inputs of one implicit step that stay fixed across coupling iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct StepParams {
    pub h_step: f64,
    pub p_prev: Vec<f64>,
    pub source: Vec<f64>,
}

/// Node-wise diffusive/convective partition of a flux.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxSplit {
    pub theta: Vec<f64>,
    pub d_coef: Vec<f64>,
    pub c_coef: Vec<f64>,
    pub d_hat: Vec<f64>,
    /// The (floored) gradient used in the split.
    pub gradient: Vec<f64>,
}

/// Tridiagonal `M p = b`; `sub[i]` couples row `i + 1` to column `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalSystem {
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl TridiagonalSystem {
    pub fn identity(rhs: Vec<f64>) -> Self {
        let n = rhs.len();
        Self {
            sub: vec![0.0; n.saturating_sub(1)],
            diag: vec![1.0; n],
            sup: vec![0.0; n.saturating_sub(1)],
            rhs,
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// `M v`
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut acc = self.diag[i] * v[i];
                if i > 0 {
                    acc += self.sub[i - 1] * v[i - 1];
                }
                if i + 1 < n {
                    acc += self.sup[i] * v[i + 1];
                }
                acc
            })
            .collect()
    }
}

/// Centered differences inside, second-order one-sided stencils at the ends.
pub fn grad(grid: &Grid, p: &[f64]) -> Vec<f64> {
    let n = p.len();
    debug_assert_eq!(n, grid.n_points());
    let inv2dx = 0.5 / grid.dx();
    let mut g = vec![0.0; n];
    g[0] = (-3.0 * p[0] + 4.0 * p[1] - p[2]) * inv2dx;
    for i in 1..n - 1 {
        g[i] = (p[i + 1] - p[i - 1]) * inv2dx;
    }
    g[n - 1] = (3.0 * p[n - 1] - 4.0 * p[n - 2] + p[n - 3]) * inv2dx;
    g
}

pub(crate) fn first_unphysical(p: &[f64]) -> Option<(usize, f64)> {
    p.iter()
        .copied()
        .enumerate()
        .find(|&(_, v)| !(v.is_finite() && v > 0.0))
}

/// Split weight for one node.
pub fn theta_rule(d_hat: f64, gradient: f64, dmin: f64, dmax: f64) -> f64 {
    if d_hat < dmin {
        0.0
    } else if gradient.abs() >= STEEP_GRADIENT {
        // Not covered by the interpolated rule; split evenly.
        0.5
    } else if d_hat <= dmax {
        0.5 * (1.0 + (dmax - d_hat) / (dmax - dmin))
    } else {
        0.5
    }
}

/// Splits `q` into `D = -θ q / Dx p` and `c = (1 - θ) q / p`.
pub fn split_flux(
    grid: &Grid,
    p: &[f64],
    q: &[f64],
    dmin: f64,
    dmax: f64,
) -> Result<FluxSplit, TransportError> {
    grid.check(p.len())?;
    grid.check(q.len())?;
    if let Some((index, value)) = first_unphysical(p) {
        return Err(TransportError::Unphysical { index, value });
    }
    if let Some(index) = q.iter().position(|v| !v.is_finite()) {
        return Err(TransportError::NonFinite {
            what: "flux",
            index,
        });
    }
    let raw = grad(grid, p);
    let n = p.len();
    let mut split = FluxSplit {
        theta: Vec::with_capacity(n),
        d_coef: Vec::with_capacity(n),
        c_coef: Vec::with_capacity(n),
        d_hat: Vec::with_capacity(n),
        gradient: Vec::with_capacity(n),
    };
    for i in 0..n {
        let g = if raw[i].abs() < GRADIENT_FLOOR {
            GRADIENT_FLOOR.copysign(raw[i])
        } else {
            raw[i]
        };
        let d_hat = -q[i] / g;
        let theta = theta_rule(d_hat, raw[i], dmin, dmax);
        split.theta.push(theta);
        split.d_coef.push(-theta * q[i] / g);
        split.c_coef.push((1.0 - theta) * q[i] / p[i]);
        split.d_hat.push(d_hat);
        split.gradient.push(g);
    }
    Ok(split)
}

/// Assembles `M = I - H Dx(D Dx - c)` and `b = p_prev + H S` with
/// conservative face fluxes.
///
/// The face diffusivity is the mean of the nodal `D`, the face gradient is
/// the one-cell difference, and the convective face flux is the mean of the
/// nodal `c p`. Node 0 is a half cell with zero flux through `x = 0`, which
/// is the discrete form of `p'(0) = 0`. The last row pins `p(1)`.
pub fn assemble_system(
    grid: &Grid,
    split: &FluxSplit,
    params: &StepParams,
) -> Result<TridiagonalSystem, TransportError> {
    let n = grid.n_points();
    grid.check(split.d_coef.len())?;
    grid.check(params.p_prev.len())?;
    grid.check(params.source.len())?;
    for (i, (d, c)) in split.d_coef.iter().zip(&split.c_coef).enumerate() {
        if !d.is_finite() {
            return Err(TransportError::NonFinite {
                what: "diffusivity",
                index: i,
            });
        }
        if !c.is_finite() {
            return Err(TransportError::NonFinite {
                what: "convection",
                index: i,
            });
        }
    }
    let dx = grid.dx();
    let h = params.h_step;
    let d = &split.d_coef;
    let c = &split.c_coef;
    let mut sys = TridiagonalSystem {
        sub: vec![0.0; n - 1],
        diag: vec![0.0; n],
        sup: vec![0.0; n - 1],
        rhs: params
            .p_prev
            .iter()
            .zip(&params.source)
            .map(|(pp, s)| pp + h * s)
            .collect(),
    };
    // Face i + 1/2 flux coefficients on p_i (left) and p_{i+1} (right).
    let face = |i: usize| {
        let df = 0.5 * (d[i] + d[i + 1]);
        (df / dx + 0.5 * c[i], -df / dx + 0.5 * c[i + 1])
    };

    let (l, r) = face(0);
    let w = 2.0 * h / dx;
    sys.diag[0] = 1.0 + w * l;
    sys.sup[0] = w * r;

    let w = h / dx;
    for i in 1..n - 1 {
        let (wl, wr) = face(i - 1);
        let (el, er) = face(i);
        sys.sub[i - 1] = -w * wl;
        sys.diag[i] = 1.0 + w * (el - wr);
        sys.sup[i] = w * er;
    }

    sys.diag[n - 1] = 1.0;
    sys.sub[n - 2] = 0.0;
    sys.rhs[n - 1] = RIGHT_BOUNDARY_VALUE;
    Ok(sys)
}

/// Forward elimination and back substitution without pivoting.
pub fn thomas_solve(system: &TridiagonalSystem) -> Result<Vec<f64>, TransportError> {
    let n = system.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    let mut pivot = system.diag[0];
    if pivot == 0.0 || !pivot.is_finite() {
        return Err(TransportError::ZeroPivot { row: 0 });
    }
    if n > 1 {
        cp[0] = system.sup[0] / pivot;
    }
    dp[0] = system.rhs[0] / pivot;
    for i in 1..n {
        let a = system.sub[i - 1];
        pivot = system.diag[i] - a * cp[i - 1];
        if pivot == 0.0 || !pivot.is_finite() {
            return Err(TransportError::ZeroPivot { row: i });
        }
        if i + 1 < n {
            cp[i] = system.sup[i] / pivot;
        }
        dp[i] = (system.rhs[i] - a * dp[i - 1]) / pivot;
    }
    for i in (0..n - 1).rev() {
        dp[i] -= cp[i] * dp[i + 1];
    }
    Ok(dp)
}

/// `‖M p - b‖ / ‖b‖` for the system assembled from `split`.
pub fn linear_residual(
    grid: &Grid,
    p: &[f64],
    split: &FluxSplit,
    params: &StepParams,
) -> Result<f64, TransportError> {
    let sys = assemble_system(grid, split, params)?;
    Ok(system_residual(&sys, p))
}

pub(crate) fn system_residual(sys: &TridiagonalSystem, p: &[f64]) -> f64 {
    let mp = sys.apply(p);
    let diff: Vec<f64> = mp.iter().zip(&sys.rhs).map(|(a, b)| a - b).collect();
    let scale = norm2(&sys.rhs);
    if scale == 0.0 {
        norm2(&diff)
    } else {
        norm2(&diff) / scale
    }
}

/// A source of turbulent flux for a given profile.
pub trait FluxModel {
    fn flux(&mut self, grid: &Grid, p: &[f64]) -> Result<Vec<f64>, TransportError>;
}

/// One evaluation of the coupling map: the unrelaxed next profile.
pub fn lodestro_g<M: FluxModel + ?Sized>(
    grid: &Grid,
    p: &[f64],
    model: &mut M,
    params: &StepParams,
    dmin: f64,
    dmax: f64,
) -> Result<Vec<f64>, TransportError> {
    let q = model.flux(grid, p)?;
    let split = split_flux(grid, p, &q, dmin, dmax)?;
    let sys = assemble_system(grid, &split, params)?;
    thomas_solve(&sys)
}

/// The coupling map packaged for [`crate::accel::solve`].
///
/// Besides returning `G(p)`, each evaluation records the linear-system
/// residual of its input profile, `‖M(p) p - b‖ / ‖b‖`.
#[derive(Debug, Clone)]
pub struct TransportMap<M> {
    pub grid: Grid,
    pub params: StepParams,
    pub model: M,
    pub dmin: f64,
    pub dmax: f64,
    last_residual: Option<f64>,
}

impl<M: FluxModel> TransportMap<M> {
    pub fn new(grid: Grid, params: StepParams, model: M) -> Self {
        Self {
            grid,
            params,
            model,
            dmin: DEFAULT_DMIN,
            dmax: DEFAULT_DMAX,
            last_residual: None,
        }
    }

    pub fn with_bounds(mut self, dmin: f64, dmax: f64) -> Self {
        self.dmin = dmin;
        self.dmax = dmax;
        self
    }
}

impl<M: FluxModel> FixedPointMap for TransportMap<M> {
    fn eval(&mut self, p: &[f64]) -> Result<Vec<f64>, MapError> {
        self.last_residual = None;
        let q = self.model.flux(&self.grid, p)?;
        let split = split_flux(&self.grid, p, &q, self.dmin, self.dmax)?;
        let sys = assemble_system(&self.grid, &split, &self.params)?;
        self.last_residual = Some(system_residual(&sys, p));
        let next = thomas_solve(&sys)?;
        if let Some((index, value)) = first_unphysical(&next) {
            return Err(TransportError::Unphysical { index, value }.into());
        }
        Ok(next)
    }

    fn aux_residual(&self) -> Option<f64> {
        self.last_residual
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn grid_nodes() {
        assert_eq!(Grid::new(2), Err(TransportError::GridTooSmall(2)));
        let g = Grid::new(11).unwrap();
        assert_eq!(g.nodes()[0], 0.0);
        assert_eq!(g.nodes()[10], 1.0);
        assert!(g.nodes().windows(2).all(|w| w[1] > w[0]));
        assert!((g.dx() - 0.1).abs() < 1e-16);
    }

    #[test]
    fn grad_constant_and_linear() {
        let g = Grid::new(7).unwrap();
        assert!(grad(&g, &[2.5; 7]).iter().all(|&v| v == 0.0));
        for n in [3, 4, 17, 100] {
            let g = Grid::new(n).unwrap();
            let p = g.nodes().to_vec();
            assert!(grad(&g, &p).iter().all(|v| (v - 1.0).abs() < 1e-10));
        }
    }

    #[test]
    fn grad_quadratic_error_is_small() {
        let g = Grid::new(101).unwrap();
        let p: Vec<f64> = g.nodes().iter().map(|x| x * x).collect();
        let exact: Vec<f64> = g.nodes().iter().map(|x| 2.0 * x).collect();
        assert!(max_abs_diff(&grad(&g, &p), &exact) < 1e-3);
    }

    #[test]
    fn theta_branches() {
        let (dmin, dmax) = (DEFAULT_DMIN, DEFAULT_DMAX);
        assert_eq!(theta_rule(1e-6, -1.0, dmin, dmax), 0.0);
        assert_eq!(theta_rule(dmin, -1.0, dmin, dmax), 1.0);
        assert_eq!(theta_rule(dmax, -1.0, dmin, dmax), 0.5);
        assert_eq!(theta_rule(2.0 * dmax, -1.0, dmin, dmax), 0.5);
        assert_eq!(theta_rule(1.0, -20.0, dmin, dmax), 0.5);
    }

    #[test]
    fn split_small_diffusivity_is_convective() {
        // p = 1.2 - x: node 1 has p = 1 and Dx p = -1.
        let g = Grid::new(6).unwrap();
        let p: Vec<f64> = g.nodes().iter().map(|x| 1.2 - x).collect();
        let q = [1e-6; 6];
        let s = split_flux(&g, &p, &q, DEFAULT_DMIN, DEFAULT_DMAX).unwrap();
        assert!((s.gradient[1] + 1.0).abs() < 1e-12);
        assert!((s.d_hat[1] - 1e-6).abs() < 1e-18);
        assert_eq!(s.theta[1], 0.0);
        assert_eq!(s.d_coef[1], 0.0);
        assert!((s.c_coef[1] - 1e-6).abs() < 1e-18);
    }

    #[test]
    fn split_rejects_nonpositive_profiles() {
        let g = Grid::new(3).unwrap();
        let err = split_flux(&g, &[1.0, 0.0, 1.0], &[0.0; 3], 1e-5, 1e13).unwrap_err();
        assert_eq!(
            err,
            TransportError::Unphysical {
                index: 1,
                value: 0.0
            }
        );
    }

    #[test]
    fn flat_profile_uses_floored_gradient() {
        let g = Grid::new(5).unwrap();
        let s = split_flux(&g, &[1.0; 5], &[1e-3; 5], 1e-5, 1e13).unwrap();
        assert!(s.gradient.iter().all(|&v| v == GRADIENT_FLOOR));
        assert!(s.d_coef.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn thomas_identity_and_small_dense() {
        let sys = TridiagonalSystem::identity(vec![1.0, -2.0, 3.0]);
        assert_eq!(thomas_solve(&sys).unwrap(), vec![1.0, -2.0, 3.0]);

        let sys = TridiagonalSystem {
            sub: vec![1.0, 1.0],
            diag: vec![2.0, 2.0, 2.0],
            sup: vec![1.0, 1.0],
            rhs: vec![1.0, 2.0, 3.0],
        };
        // Cramer's rule on [[2,1,0],[1,2,1],[0,1,2]] (det 4).
        let expected = [0.5, 0.0, 1.5];
        let x = thomas_solve(&sys).unwrap();
        assert!(max_abs_diff(&x, &expected) < 1e-14);
    }

    #[test]
    fn thomas_zero_pivot() {
        let sys = TridiagonalSystem {
            sub: vec![1.0],
            diag: vec![1.0, 1.0],
            sup: vec![1.0],
            rhs: vec![1.0, 1.0],
        };
        assert_eq!(
            thomas_solve(&sys),
            Err(TransportError::ZeroPivot { row: 1 })
        );
    }

    #[test]
    fn right_boundary_row() {
        let g = Grid::new(6).unwrap();
        let split = FluxSplit {
            theta: vec![1.0; 6],
            d_coef: vec![0.7; 6],
            c_coef: vec![0.1; 6],
            d_hat: vec![0.7; 6],
            gradient: vec![-1.0; 6],
        };
        let params = StepParams {
            h_step: 2.0,
            p_prev: vec![0.3; 6],
            source: vec![1.0; 6],
        };
        let sys = assemble_system(&g, &split, &params).unwrap();
        assert_eq!(sys.diag[5], 1.0);
        assert_eq!(sys.sub[4], 0.0);
        assert_eq!(sys.rhs[5], RIGHT_BOUNDARY_VALUE);
        assert!(sys.rhs[..5].iter().all(|&b| b == 0.3 + 2.0));
    }
}
