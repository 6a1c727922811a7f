//! Anderson acceleration of a damped fixed-point iteration.
//!
//! [`solve`] iterates `p_{k+1} = β G(p_k) + (1 - β) p_k` for the first
//! `delay` iterations and afterwards forms the accelerated update
//!
//! ```text
//! p_{k+1} = G(p_k) - 𝒢_k γ_k - (1 - β_k)(f_k - Q_k R_k γ_k)
//! ```
//!
//! where `f_k = G(p_k) - p_k`, the columns of `𝒢_k` and `F_k = Q_k R_k` are
//! the last `m_k` differences of `G` and `f`, and `γ_k` minimizes
//! `‖f_k - F_k γ‖₂`. Both `β_k` and `m_k` can be fixed or adapted every
//! iteration ([`DampingMode`], [`DepthMode`]).

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::denselin::{axpy, norm2, QrError, QrFactor};

/// Upper end of the adaptive damping range.
pub const BETA_CAP: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AccelError {
    #[error("invalid accelerator configuration: {0}")]
    InvalidConfig(String),
    #[error("length mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Failure reported by a [`FixedPointMap`] evaluation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MapError {
    #[error("unphysical iterate: {0}")]
    Unphysical(String),
    #[error("linear solve failed: {0}")]
    LinearSolve(String),
}

/// `G(p)` for a fixed-point problem `p = G(p)`.
pub trait FixedPointMap {
    fn eval(&mut self, p: &[f64]) -> Result<Vec<f64>, MapError>;

    /// An application-defined residual of the most recently evaluated input,
    /// copied into the solve trace when present.
    fn aux_residual(&self) -> Option<f64> {
        None
    }
}

impl<F> FixedPointMap for F
where
    F: FnMut(&[f64]) -> Result<Vec<f64>, MapError>,
{
    fn eval(&mut self, p: &[f64]) -> Result<Vec<f64>, MapError> {
        self(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DampingMode {
    #[default]
    Fixed,
    /// `β_k = 0.9 - ω_β Γ_k`, see [`adapt_damping`].
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DepthMode {
    #[default]
    Fixed,
    /// Depth chosen from the residual size, see [`adapt_depth`].
    Adaptive,
}

/// Norm of the stopping test on successive iterates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ConvergenceNorm {
    /// `‖p_{k+1} - p_k‖ / ‖p_{k+1}‖`
    #[default]
    Relative,
    /// `‖p_{k+1} - p_k‖`, for problems whose fixed point may be zero.
    Absolute,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AccelConfig {
    pub m_max: usize,
    pub beta: f64,
    pub delay: usize,
    pub k_max: usize,
    pub tol: f64,
    pub damping: DampingMode,
    pub depth: DepthMode,
    pub omega_beta: f64,
    pub omega_m: f64,
    pub beta_min: f64,
    pub norm: ConvergenceNorm,
}

impl Default for AccelConfig {
    fn default() -> Self {
        Self {
            m_max: 0,
            beta: 0.3,
            delay: 0,
            k_max: 500,
            tol: 1e-11,
            damping: DampingMode::Fixed,
            depth: DepthMode::Fixed,
            omega_beta: 0.5,
            omega_m: 1.0,
            beta_min: 0.01,
            norm: ConvergenceNorm::Relative,
        }
    }
}

impl AccelConfig {
    pub fn validate(&self) -> Result<(), AccelError> {
        let bad = |msg: String| Err(AccelError::InvalidConfig(msg));
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return bad(format!("beta must lie in (0, 1], got {}", self.beta));
        }
        if !(self.tol > 0.0) {
            return bad(format!("tol must be positive, got {}", self.tol));
        }
        if self.k_max == 0 {
            return bad("k_max must be at least 1".into());
        }
        if !(0.0..BETA_CAP).contains(&self.omega_beta) {
            return bad(format!(
                "omega_beta must lie in [0, 0.9), got {}",
                self.omega_beta
            ));
        }
        if !(self.omega_m > 0.0 && self.omega_m.is_finite()) {
            return bad(format!("omega_m must be positive, got {}", self.omega_m));
        }
        if !(self.beta_min > 0.0 && self.beta_min <= BETA_CAP) {
            return bad(format!(
                "beta_min must lie in (0, 0.9], got {}",
                self.beta_min
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    FailedUnphysical,
    FailedLinearSolve,
}

impl SolveStatus {
    pub fn is_converged(self) -> bool {
        self == Self::Converged
    }
}

/// One row of the iteration history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub k: usize,
    /// Change `p_{k+1} - p_k` in the configured [`ConvergenceNorm`].
    pub residual: f64,
    /// `‖f_k‖`, the absolute fixed-point residual of `p_k`.
    pub f_norm: f64,
    pub beta: f64,
    pub depth: usize,
    /// Convergence gain of accelerated iterations.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub gain: Option<f64>,
    /// `‖f_k - F_k γ_k‖` of accelerated iterations.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lsq_residual: Option<f64>,
    /// The map's own residual for `p_k`, if it reports one.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub aux_residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    /// Index of the last completed iteration. For converged and
    /// max-iteration runs `trace.len() == iterations + 1`; failed runs stop
    /// at the iteration whose evaluation failed and carry no entry for it.
    pub iterations: usize,
    pub trace: Vec<TraceEntry>,
    pub final_iterate: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub failure: Option<String>,
}

impl SolveReport {
    pub fn final_residual(&self) -> Option<f64> {
        self.trace.last().map(|t| t.residual)
    }
}

/// `β g + (1 - β) p`
pub fn fixed_point_step(g_value: &[f64], p: &[f64], beta: f64) -> Vec<f64> {
    debug_assert_eq!(g_value.len(), p.len());
    g_value
        .iter()
        .zip(p)
        .map(|(g, x)| beta * g + (1.0 - beta) * x)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("residual is exactly zero")]
pub struct AlreadyConverged;

/// `Γ = sqrt(1 - (‖Qᵀf‖ / ‖f‖)²)`: the part of `f` outside the history span.
pub fn gain(factor: &QrFactor, f: &[f64]) -> Result<f64, AlreadyConverged> {
    gain_from_projection(&factor.qt_mul(f), norm2(f))
}

fn gain_from_projection(qtf: &[f64], f_norm: f64) -> Result<f64, AlreadyConverged> {
    if f_norm == 0.0 {
        return Err(AlreadyConverged);
    }
    let ratio = norm2(qtf) / f_norm;
    Ok((1.0 - ratio * ratio).clamp(0.0, 1.0).sqrt())
}

/// `clamp(0.9 - ω_β Γ, β_min, 0.9)`
pub fn adapt_damping(gain: f64, omega_beta: f64, beta_min: f64) -> f64 {
    // The lower clamp is tested on the drop rather than on the difference,
    // so that a drop of exactly `0.9 - β_min` lands on `β_min` bit for bit.
    let drop = omega_beta * gain;
    if drop >= BETA_CAP - beta_min {
        beta_min
    } else {
        (BETA_CAP - drop).clamp(beta_min, BETA_CAP)
    }
}

/// `min(m̃, m_prev + 1, m_max)` with `m̃ = max(0, ⌊-log10(ω_m ‖f‖)⌋)`.
pub fn adapt_depth(f_norm: f64, m_prev: usize, omega_m: f64, m_max: usize) -> usize {
    let target = -(omega_m * f_norm).log10();
    let m_tilde = if target.is_nan() || target < 1.0 {
        0
    } else if target >= usize::MAX as f64 {
        usize::MAX
    } else {
        target.floor() as usize
    };
    m_tilde.min(m_prev.saturating_add(1)).min(m_max)
}

/// Least-squares weights together with the projection used for the gain.
#[derive(Debug, Clone)]
struct Weights {
    gamma: Vec<f64>,
    qtf: Vec<f64>,
}

/// History of differences `ΔG_i`, `Δf_i` and the QR factors of `F`.
#[derive(Debug, Clone)]
pub struct AccelState {
    factor: QrFactor,
    dg: VecDeque<Vec<f64>>,
    g_prev: Option<Vec<f64>>,
    f_prev: Option<Vec<f64>>,
}

impl AccelState {
    pub fn new(n: usize, m_max: usize) -> Self {
        Self {
            factor: QrFactor::new(n, m_max),
            dg: VecDeque::with_capacity(m_max),
            g_prev: None,
            f_prev: None,
        }
    }

    /// Number of stored difference pairs.
    pub fn depth(&self) -> usize {
        self.dg.len()
    }

    pub fn factor(&self) -> &QrFactor {
        &self.factor
    }

    /// Stores `G(p_k)` and `f_k`, extending the history by the differences
    /// to the previous pair. The oldest pair is discarded when the window is
    /// full or when the new `Δf` is numerically dependent on the window.
    pub fn record(&mut self, g: &[f64], f: &[f64]) {
        if self.factor.max_cols() > 0 {
            if let (Some(g_prev), Some(f_prev)) = (&self.g_prev, &self.f_prev) {
                let dg: Vec<f64> = g.iter().zip(g_prev).map(|(a, b)| a - b).collect();
                let df: Vec<f64> = f.iter().zip(f_prev).map(|(a, b)| a - b).collect();
                if self.depth() == self.factor.max_cols() {
                    self.pop_oldest();
                }
                loop {
                    match self.factor.append(&df) {
                        Ok(()) => {
                            self.dg.push_back(dg);
                            break;
                        }
                        Err(QrError::RankDeficient { .. }) if !self.factor.is_empty() => {
                            self.pop_oldest();
                        }
                        Err(_) => break,
                    }
                }
            }
        }
        self.g_prev = Some(g.to_vec());
        self.f_prev = Some(f.to_vec());
    }

    /// Drops the oldest pairs until at most `depth` remain.
    pub fn truncate(&mut self, depth: usize) {
        while self.depth() > depth {
            self.pop_oldest();
        }
    }

    fn pop_oldest(&mut self) {
        if self.factor.pop_front().is_ok() {
            self.dg.pop_front();
        }
    }

    fn weights(&mut self, f: &[f64]) -> Option<Weights> {
        while !self.factor.is_empty() {
            let qtf = self.factor.qt_mul(f);
            match self.factor.r_solve(&qtf) {
                Ok(gamma) => return Some(Weights { gamma, qtf }),
                Err(_) => self.pop_oldest(),
            }
        }
        None
    }

    fn extrapolate(&self, g: &[f64], f: &[f64], w: &Weights, beta: f64) -> Vec<f64> {
        let mut next = g.to_vec();
        for (dg, &c) in self.dg.iter().zip(&w.gamma) {
            axpy(-c, dg, &mut next);
        }
        if beta != 1.0 {
            let fit = self.factor.q_mul(&self.factor.r_mul(&w.gamma));
            let damp = 1.0 - beta;
            for ((x, fi), fit_i) in next.iter_mut().zip(f).zip(&fit) {
                *x -= damp * (fi - fit_i);
            }
        }
        next
    }

    /// One accelerated update from `g = G(p_k)` and `f = g - p_k` with the
    /// current history. An empty (or fully rank-deficient) history falls
    /// back to the damped fixed-point step.
    pub fn aa_step(&mut self, g: &[f64], f: &[f64], beta: f64) -> Vec<f64> {
        match self.weights(f) {
            Some(w) => self.extrapolate(g, f, &w, beta),
            None => {
                let p: Vec<f64> = g.iter().zip(f).map(|(a, b)| a - b).collect();
                fixed_point_step(g, &p, beta)
            }
        }
    }
}

fn iterate_change(next: &[f64], prev: &[f64], norm: ConvergenceNorm) -> f64 {
    let diff = next
        .iter()
        .zip(prev)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let scale = norm2(next);
    if norm == ConvergenceNorm::Relative && scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// Runs the (optionally delayed and adaptive) Anderson-accelerated
/// iteration from `p0` until the change of successive iterates drops below
/// `config.tol` or `config.k_max` is reached.
///
/// Evaluation failures of `map` end the run with a failed status and the
/// trace up to the failing iteration; they are not returned as errors.
pub fn solve<M: FixedPointMap + ?Sized>(
    map: &mut M,
    p0: &[f64],
    config: &AccelConfig,
) -> Result<SolveReport, AccelError> {
    config.validate()?;
    let n = p0.len();
    let mut state = AccelState::new(n, config.m_max);
    let mut trace = Vec::new();
    let mut p = p0.to_vec();
    let mut m_prev = 0usize;

    let fail = |err: MapError, k: usize, trace: Vec<TraceEntry>, p: Vec<f64>| {
        let status = match err {
            MapError::Unphysical(_) => SolveStatus::FailedUnphysical,
            MapError::LinearSolve(_) => SolveStatus::FailedLinearSolve,
        };
        SolveReport {
            status,
            iterations: k,
            trace,
            final_iterate: p,
            failure: Some(err.to_string()),
        }
    };

    for k in 0..=config.k_max {
        let g = match map.eval(&p) {
            Ok(g) => g,
            Err(err) => return Ok(fail(err, k, trace, p)),
        };
        if g.len() != n {
            return Err(AccelError::DimensionMismatch {
                expected: n,
                got: g.len(),
            });
        }
        let f: Vec<f64> = g.iter().zip(&p).map(|(a, b)| a - b).collect();
        let f_norm = norm2(&f);
        if k >= config.delay {
            state.record(&g, &f);
        }

        let mut entry = TraceEntry {
            k,
            residual: 0.0,
            f_norm,
            beta: config.beta,
            depth: 0,
            gain: None,
            lsq_residual: None,
            aux_residual: map.aux_residual(),
        };

        let next = if k <= config.delay || config.m_max == 0 || f_norm == 0.0 {
            fixed_point_step(&g, &p, config.beta)
        } else {
            let m_k = match config.depth {
                DepthMode::Fixed => (k - config.delay).min(config.m_max),
                DepthMode::Adaptive => adapt_depth(f_norm, m_prev, config.omega_m, config.m_max),
            };
            state.truncate(m_k);
            match state.weights(&f) {
                None => fixed_point_step(&g, &p, config.beta),
                Some(w) => {
                    let gain = gain_from_projection(&w.qtf, f_norm).unwrap_or(0.0);
                    let beta_k = match config.damping {
                        DampingMode::Fixed => config.beta,
                        DampingMode::Adaptive => {
                            adapt_damping(gain, config.omega_beta, config.beta_min)
                        }
                    };
                    entry.beta = beta_k;
                    entry.depth = state.depth();
                    entry.gain = Some(gain);
                    entry.lsq_residual = Some(f_norm * gain);
                    state.extrapolate(&g, &f, &w, beta_k)
                }
            }
        };
        if config.depth == DepthMode::Adaptive {
            m_prev = entry.depth;
        }

        entry.residual = iterate_change(&next, &p, config.norm);
        trace.push(entry);
        p = next;
        if entry.residual < config.tol {
            return Ok(SolveReport {
                status: SolveStatus::Converged,
                iterations: k,
                trace,
                final_iterate: p,
                failure: None,
            });
        }
    }

    Ok(SolveReport {
        status: SolveStatus::MaxIterations,
        iterations: config.k_max,
        trace,
        final_iterate: p,
        failure: None,
    })
}
