//! Iteration-count tuning and exhaustive sweeps over solver parameters.
//!
//! [`tune`] starts from a Latin hypercube batch (optionally including the
//! base configuration itself) and then proposes one trial at a time with a
//! [`Proposer`]. The default [`PerturbationProposer`] perturbs the
//! incumbent with a shrinking Gaussian and picks the most promising of a
//! few candidates under a nearest-neighbour surrogate. [`run_sweep`]
//! evaluates every cell of a cartesian grid.
//!
//! Parameters are addressed by name: `beta`, `m_max`, `delay`,
//! `omega_beta`, `omega_m`, `beta_min` and `k_max` set the matching
//! [`AccelConfig`] fields, and `r` sets the problem stiffness.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::accel::{AccelConfig, SolveReport, SolveStatus};
use crate::experiment::{ExperimentConfig, ExperimentError};

/// Objective added on top of `k_max` for a failed or unconverged trial.
pub const FAILURE_PENALTY: f64 = 1000.0;

/// Parameter values by name.
pub type Sample = BTreeMap<String, f64>;

#[derive(Debug, Error)]
pub enum TuneError {
    #[error("invalid parameter space: {0}")]
    InvalidSpace(String),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("invalid budget: {0}")]
    InvalidBudget(String),
    #[error("no sample satisfying the constraints found after {0} draws")]
    Infeasible(usize),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error("worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimKind {
    Continuous,
    /// Uniform in the logarithm; bounds must be positive.
    LogContinuous,
    /// Integers `lower..=upper`.
    Integer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dim {
    pub name: String,
    pub kind: DimKind,
    pub lower: f64,
    pub upper: f64,
}

impl Dim {
    pub fn continuous(name: &str, lower: f64, upper: f64) -> Self {
        Self::new(name, DimKind::Continuous, lower, upper)
    }

    pub fn log(name: &str, lower: f64, upper: f64) -> Self {
        Self::new(name, DimKind::LogContinuous, lower, upper)
    }

    pub fn integer(name: &str, lower: i64, upper: i64) -> Self {
        Self::new(name, DimKind::Integer, lower as f64, upper as f64)
    }

    fn new(name: &str, kind: DimKind, lower: f64, upper: f64) -> Self {
        Self {
            name: name.to_string(),
            kind,
            lower,
            upper,
        }
    }

    /// Maps `u ∈ [0, 1]` onto the dimension.
    pub fn from_unit(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match self.kind {
            DimKind::Continuous => self.lower + u * (self.upper - self.lower),
            DimKind::LogContinuous => {
                let (a, b) = (self.lower.ln(), self.upper.ln());
                (a + u * (b - a)).exp().clamp(self.lower, self.upper)
            }
            DimKind::Integer => {
                let span = self.upper - self.lower + 1.0;
                (self.lower + (u * span).floor()).min(self.upper)
            }
        }
    }

    /// Inverse of [`Dim::from_unit`]; integers map to their cell centre.
    pub fn to_unit(&self, value: f64) -> f64 {
        let u = match self.kind {
            DimKind::Continuous => (value - self.lower) / (self.upper - self.lower),
            DimKind::LogContinuous => {
                (value.ln() - self.lower.ln()) / (self.upper.ln() - self.lower.ln())
            }
            DimKind::Integer => (value - self.lower + 0.5) / (self.upper - self.lower + 1.0),
        };
        u.clamp(0.0, 1.0)
    }

    pub fn contains(&self, value: f64) -> bool {
        let inside = value >= self.lower && value <= self.upper;
        match self.kind {
            DimKind::Integer => inside && value.fract() == 0.0,
            _ => inside,
        }
    }

    fn validate(&self) -> Result<(), TuneError> {
        let bad = |msg: &str| Err(TuneError::InvalidSpace(format!("{}: {msg}", self.name)));
        if !(self.lower.is_finite() && self.upper.is_finite()) {
            return bad("bounds must be finite");
        }
        if !(self.lower < self.upper) {
            return bad("lower bound must be below upper bound");
        }
        match self.kind {
            DimKind::LogContinuous if self.lower <= 0.0 => bad("log bounds must be positive"),
            DimKind::Integer if self.lower.fract() != 0.0 || self.upper.fract() != 0.0 => {
                bad("integer bounds must be integral")
            }
            _ => Ok(()),
        }
    }
}

/// A predicate every proposed sample must satisfy.
#[derive(Clone)]
pub struct Constraint {
    pub name: String,
    check: Arc<dyn Fn(&Sample) -> bool + Send + Sync>,
}

impl Constraint {
    pub fn new(name: &str, check: impl Fn(&Sample) -> bool + Send + Sync + 'static) -> Self {
        Self {
            name: name.to_string(),
            check: Arc::new(check),
        }
    }

    pub fn holds(&self, sample: &Sample) -> bool {
        (self.check)(sample)
    }
}

impl fmt::Debug for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Constraint")
            .field("name", &self.name)
            .finish()
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParamSpace {
    pub dims: Vec<Dim>,
    pub constraints: Vec<Constraint>,
}

impl ParamSpace {
    pub fn new(dims: Vec<Dim>) -> Result<Self, TuneError> {
        let space = Self {
            dims,
            constraints: Vec::new(),
        };
        space.validate()?;
        Ok(space)
    }

    pub fn with_constraint(mut self, constraint: Constraint) -> Self {
        self.constraints.push(constraint);
        self
    }

    /// `β ∈ [0.01, 1]`, `m ∈ {0..10}`, `d ∈ {0..20}`.
    pub fn beta_depth_delay() -> Self {
        Self::new(vec![
            Dim::continuous("beta", 0.01, 1.0),
            Dim::integer("m_max", 0, 10),
            Dim::integer("delay", 0, 20),
        ])
        .expect("static space is valid")
    }

    /// The fixed-β space with adaptive damping and depth weights added.
    pub fn adaptive() -> Self {
        let mut space = Self::beta_depth_delay();
        space.dims.push(Dim::continuous("omega_beta", 0.0, 0.89));
        space.dims.push(Dim::log("omega_m", 1e-2, 1e4));
        space
    }

    pub fn validate(&self) -> Result<(), TuneError> {
        if self.dims.is_empty() {
            return Err(TuneError::InvalidSpace("no dimensions".into()));
        }
        for (i, d) in self.dims.iter().enumerate() {
            d.validate()?;
            if self.dims[..i].iter().any(|e| e.name == d.name) {
                return Err(TuneError::InvalidSpace(format!("duplicate `{}`", d.name)));
            }
        }
        Ok(())
    }

    pub fn from_unit(&self, u: &[f64]) -> Sample {
        self.dims
            .iter()
            .zip(u)
            .map(|(d, &ui)| (d.name.clone(), d.from_unit(ui)))
            .collect()
    }

    pub fn to_unit(&self, sample: &Sample) -> Vec<f64> {
        self.dims
            .iter()
            .map(|d| sample.get(&d.name).map_or(0.5, |&v| d.to_unit(v)))
            .collect()
    }

    /// Inside the bounds (integral where required) and satisfying every
    /// constraint.
    pub fn admits(&self, sample: &Sample) -> bool {
        self.dims
            .iter()
            .all(|d| sample.get(&d.name).is_some_and(|&v| d.contains(v)))
            && self.constraints.iter().all(|c| c.holds(sample))
    }

    /// The values of `config` along the space's dimensions.
    pub fn project(&self, config: &ExperimentConfig) -> Result<Sample, TuneError> {
        self.dims
            .iter()
            .map(|d| Ok((d.name.clone(), read_param(config, &d.name)?)))
            .collect()
    }

    /// `n` Latin hypercube points in the unit cube. Points violating a
    /// constraint are redrawn uniformly.
    pub fn latin_hypercube(
        &self,
        n: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<Sample>, TuneError> {
        const MAX_REDRAWS: usize = 10_000;
        let dim = self.dims.len();
        let mut columns: Vec<Vec<f64>> = Vec::with_capacity(dim);
        for _ in 0..dim {
            let mut strata: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                strata.swap(i, rng.random_range(0..=i));
            }
            columns.push(
                strata
                    .into_iter()
                    .map(|s| (s as f64 + rng.random::<f64>()) / n as f64)
                    .collect(),
            );
        }
        (0..n)
            .map(|i| {
                let u: Vec<f64> = columns.iter().map(|c| c[i]).collect();
                let mut sample = self.from_unit(&u);
                let mut tries = 0;
                while !self.admits(&sample) {
                    if tries == MAX_REDRAWS {
                        return Err(TuneError::Infeasible(MAX_REDRAWS));
                    }
                    let u: Vec<f64> = (0..dim).map(|_| rng.random()).collect();
                    sample = self.from_unit(&u);
                    tries += 1;
                }
                Ok(sample)
            })
            .collect()
    }
}

fn read_param(config: &ExperimentConfig, name: &str) -> Result<f64, TuneError> {
    let a = &config.accel;
    Ok(match name {
        "beta" => a.beta,
        "m_max" => a.m_max as f64,
        "delay" => a.delay as f64,
        "k_max" => a.k_max as f64,
        "omega_beta" => a.omega_beta,
        "omega_m" => a.omega_m,
        "beta_min" => a.beta_min,
        "r" => config.problem.r,
        _ => return Err(TuneError::UnknownParameter(name.to_string())),
    })
}

/// `base` with the named parameters overwritten.
pub fn apply_sample(
    base: &ExperimentConfig,
    sample: &Sample,
) -> Result<ExperimentConfig, TuneError> {
    let mut config = base.clone();
    let a = &mut config.accel;
    for (name, &v) in sample {
        let count = || v.max(0.0).round() as usize;
        match name.as_str() {
            "beta" => a.beta = v,
            "m_max" => a.m_max = count(),
            "delay" => a.delay = count(),
            "k_max" => a.k_max = count(),
            "omega_beta" => a.omega_beta = v,
            "omega_m" => a.omega_m = v,
            "beta_min" => a.beta_min = v,
            "r" => config.problem.r = v,
            _ => return Err(TuneError::UnknownParameter(name.clone())),
        }
    }
    Ok(config)
}

/// One evaluated parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    /// Position in the tuning history or the sweep grid.
    pub index: usize,
    pub params: Sample,
    /// Iterations if converged, otherwise `k_max + FAILURE_PENALTY`.
    pub objective: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    /// Noise seed used by the trial, if the problem is noisy.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub noise_seed: Option<u64>,
    #[serde(skip)]
    pub report: Option<SolveReport>,
}

impl TrialRecord {
    pub fn converged(&self) -> bool {
        self.status.is_converged()
    }
}

/// Penalized objective of a finished solve.
pub fn objective(report: &SolveReport, accel: &AccelConfig) -> f64 {
    if report.status.is_converged() {
        report.iterations as f64
    } else {
        accel.k_max as f64 + FAILURE_PENALTY
    }
}

/// Solves `base` with `sample` applied. Solver failures become penalties;
/// only configuration errors are returned as `Err`.
pub fn evaluate_objective(
    sample: &Sample,
    base: &ExperimentConfig,
    index: usize,
    keep_report: bool,
) -> Result<TrialRecord, TuneError> {
    let config = apply_sample(base, sample)?;
    let report = config.run()?;
    Ok(TrialRecord {
        index,
        params: sample.clone(),
        objective: objective(&report, &config.accel),
        status: report.status,
        iterations: report.iterations,
        noise_seed: config.noise.map(|n| n.seed),
        report: keep_report.then_some(report),
    })
}

/// SplitMix64 of `root` advanced by `index`: a well-mixed per-cell seed.
pub fn derive_seed(root: u64, index: u64) -> u64 {
    let mut z = root.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Gives trial `index` its own noise stream derived from the base seed.
fn cell_config(base: &ExperimentConfig, index: usize) -> ExperimentConfig {
    let mut config = base.clone();
    if let Some(noise) = config.noise.as_mut() {
        noise.seed = derive_seed(noise.seed, index as u64);
    }
    config
}

fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool, TuneError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        builder = builder.num_threads(j.max(1));
    }
    builder.build().map_err(|e| TuneError::Pool(e.to_string()))
}

fn evaluate_batch(
    samples: &[Sample],
    base: &ExperimentConfig,
    first_index: usize,
    settings: &TuneSettings,
    pool: &rayon::ThreadPool,
) -> Result<Vec<TrialRecord>, TuneError> {
    pool.install(|| {
        samples
            .par_iter()
            .enumerate()
            .map(|(i, s)| {
                let index = first_index + i;
                evaluate_objective(s, &cell_config(base, index), index, settings.keep_reports)
            })
            .collect()
    })
}

/// Everything a [`Proposer`] may look at.
#[derive(Debug)]
pub struct ProposalContext<'a> {
    pub space: &'a ParamSpace,
    pub history: &'a [TrialRecord],
    /// Zero-based step within the refinement phase.
    pub step: usize,
    pub n_steps: usize,
}

impl ProposalContext<'_> {
    /// Best trial so far; ties go to the earliest.
    pub fn incumbent(&self) -> Option<&TrialRecord> {
        best_of(self.history)
    }
}

/// Chooses the next sample of the refinement phase.
pub trait Proposer {
    fn propose(
        &mut self,
        ctx: &ProposalContext<'_>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Sample, TuneError>;
}

/// Gaussian perturbations of the incumbent in unit coordinates, with a
/// radius shrinking geometrically from `initial_radius` to `final_radius`
/// over the refinement phase. Among `candidates` admissible draws that have
/// not been evaluated yet, the one with the lowest inverse-distance
/// weighted prediction from the `neighbours` nearest trials is returned.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationProposer {
    pub candidates: usize,
    pub initial_radius: f64,
    pub final_radius: f64,
    pub neighbours: usize,
}

impl Default for PerturbationProposer {
    fn default() -> Self {
        Self {
            candidates: 24,
            initial_radius: 0.25,
            final_radius: 0.02,
            neighbours: 3,
        }
    }
}

impl PerturbationProposer {
    fn radius(&self, step: usize, n_steps: usize) -> f64 {
        if n_steps <= 1 {
            return self.initial_radius;
        }
        let t = step as f64 / (n_steps - 1) as f64;
        self.initial_radius * (self.final_radius / self.initial_radius).powf(t)
    }

    fn predict(&self, u: &[f64], points: &[(Vec<f64>, f64)]) -> (f64, f64) {
        let mut dists: Vec<(f64, f64)> = points
            .iter()
            .map(|(p, obj)| (sq_dist(u, p).sqrt(), *obj))
            .collect();
        dists.sort_by(|a, b| a.0.total_cmp(&b.0));
        let nearest = dists.first().map_or(f64::INFINITY, |d| d.0);
        let k = self.neighbours.max(1).min(dists.len());
        let (mut num, mut den) = (0.0, 0.0);
        for &(d, obj) in &dists[..k] {
            if d == 0.0 {
                return (obj, 0.0);
            }
            num += obj / d;
            den += 1.0 / d;
        }
        (num / den, nearest)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl Proposer for PerturbationProposer {
    fn propose(
        &mut self,
        ctx: &ProposalContext<'_>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Sample, TuneError> {
        const MAX_DRAWS: usize = 10_000;
        let space = ctx.space;
        let points: Vec<(Vec<f64>, f64)> = ctx
            .history
            .iter()
            .map(|t| (space.to_unit(&t.params), t.objective))
            .collect();
        let centre = ctx
            .incumbent()
            .map(|t| space.to_unit(&t.params))
            .unwrap_or_else(|| vec![0.5; space.dims.len()]);
        let mut radius = self.radius(ctx.step, ctx.n_steps);
        let seen = |s: &Sample| ctx.history.iter().any(|t| &t.params == s);

        let mut best: Option<(f64, f64, Sample)> = None;
        let mut accepted = 0;
        let mut fallback = None;
        for draw in 0..MAX_DRAWS {
            if accepted == self.candidates.max(1) {
                break;
            }
            // Widen the search when the neighbourhood is exhausted, as
            // happens on small integer grids.
            if draw > 0 && draw % (8 * self.candidates.max(1)) == 0 {
                radius = (2.0 * radius).min(1.0);
            }
            let u: Vec<f64> = centre
                .iter()
                .map(|&c| {
                    let z: f64 = StandardNormal.sample(rng);
                    (c + radius * z).clamp(0.0, 1.0)
                })
                .collect();
            let sample = space.from_unit(&u);
            if !space.admits(&sample) {
                continue;
            }
            if seen(&sample) {
                fallback.get_or_insert(sample);
                continue;
            }
            accepted += 1;
            let (pred, nearest) = self.predict(&space.to_unit(&sample), &points);
            let better = match &best {
                None => true,
                Some((bp, bn, _)) => pred < *bp || (pred == *bp && nearest > *bn),
            };
            if better {
                best = Some((pred, nearest, sample));
            }
        }
        best.map(|b| b.2)
            .or(fallback)
            .ok_or(TuneError::Infeasible(MAX_DRAWS))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneSettings {
    pub n_initial: usize,
    pub n_total: usize,
    pub seed: u64,
    /// Put the base configuration's own values first in the initial batch.
    pub include_base: bool,
    /// Worker threads for the initial batch; `None` uses all cores.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    #[serde(skip)]
    pub keep_reports: bool,
}

impl Default for TuneSettings {
    fn default() -> Self {
        Self {
            n_initial: 10,
            n_total: 50,
            seed: 0,
            include_base: true,
            jobs: None,
            keep_reports: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub best: TrialRecord,
    pub history: Vec<TrialRecord>,
    /// Set when no trial converged; `best` is then the lowest penalty.
    pub all_failed: bool,
}

fn best_of(history: &[TrialRecord]) -> Option<&TrialRecord> {
    history
        .iter()
        .reduce(|a, b| if b.objective < a.objective { b } else { a })
}

/// Minimizes the penalized iteration count of `base` over `space`.
pub fn tune(
    space: &ParamSpace,
    base: &ExperimentConfig,
    settings: &TuneSettings,
) -> Result<TuneResult, TuneError> {
    tune_with(space, base, settings, &mut PerturbationProposer::default())
}

/// [`tune`] with a caller-supplied refinement strategy.
pub fn tune_with<P: Proposer + ?Sized>(
    space: &ParamSpace,
    base: &ExperimentConfig,
    settings: &TuneSettings,
    proposer: &mut P,
) -> Result<TuneResult, TuneError> {
    space.validate()?;
    base.validate()?;
    if settings.n_initial == 0 || settings.n_initial > settings.n_total {
        return Err(TuneError::InvalidBudget(format!(
            "need 1 <= n_initial <= n_total, got ({}, {})",
            settings.n_initial, settings.n_total
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let pool = pool(settings.jobs)?;

    let mut initial = Vec::with_capacity(settings.n_initial);
    if settings.include_base {
        let own = space.project(base)?;
        if !space.admits(&own) {
            return Err(TuneError::InvalidSpace(
                "base configuration lies outside the space".into(),
            ));
        }
        initial.push(own);
    }
    let lhs = space.latin_hypercube(settings.n_initial - initial.len(), &mut rng)?;
    initial.extend(lhs);
    let mut history = evaluate_batch(&initial, base, 0, settings, &pool)?;

    let n_steps = settings.n_total - settings.n_initial;
    for step in 0..n_steps {
        let ctx = ProposalContext {
            space,
            history: &history,
            step,
            n_steps,
        };
        let sample = proposer.propose(&ctx, &mut rng)?;
        let index = history.len();
        let trial = evaluate_objective(
            &sample,
            &cell_config(base, index),
            index,
            settings.keep_reports,
        )?;
        history.push(trial);
    }

    let best = best_of(&history)
        .expect("budget is at least one trial")
        .clone();
    let all_failed = !history.iter().any(TrialRecord::converged);
    Ok(TuneResult {
        best,
        history,
        all_failed,
    })
}

/// Named axes whose cartesian product is swept, the last axis fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SweepGrid {
    pub axes: Vec<(String, Vec<f64>)>,
}

impl SweepGrid {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn axis(mut self, name: &str, values: Vec<f64>) -> Self {
        self.axes.push((name.to_string(), values));
        self
    }

    /// `lo, lo + step, ...` up to `hi` inclusive, rounded to 12 digits.
    pub fn range(lo: f64, hi: f64, step: f64) -> Vec<f64> {
        let n = ((hi - lo) / step + 1e-9).floor() as usize;
        (0..=n)
            .map(|i| ((lo + i as f64 * step) * 1e12).round() / 1e12)
            .collect()
    }

    pub fn n_cells(&self) -> usize {
        if self.axes.is_empty() {
            0
        } else {
            self.axes.iter().map(|(_, v)| v.len()).product()
        }
    }

    /// The parameters of cell `index`.
    pub fn cell(&self, mut index: usize) -> Sample {
        let mut sample = Sample::new();
        for (name, values) in self.axes.iter().rev() {
            sample.insert(name.clone(), values[index % values.len()]);
            index /= values.len();
        }
        sample
    }
}

/// Solves every cell of `grid`; records come back in cell order.
pub fn run_sweep(
    grid: &SweepGrid,
    base: &ExperimentConfig,
    jobs: Option<usize>,
) -> Result<Vec<TrialRecord>, TuneError> {
    base.validate()?;
    for (name, values) in &grid.axes {
        read_param(base, name)?;
        if values.is_empty() {
            return Err(TuneError::InvalidSpace(format!("axis `{name}` is empty")));
        }
    }
    let cells: Vec<Sample> = (0..grid.n_cells()).map(|i| grid.cell(i)).collect();
    let settings = TuneSettings::default();
    evaluate_batch(&cells, base, 0, &settings, &pool(jobs)?)
}
