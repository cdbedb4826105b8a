//! Free pull-backs `u(t) = e^{-itΔ}S_t(φ)`, their Cauchy increments at dyadic
//! times, and the hierarchy-level distance between `U^{(k)}(-t)γ^{(k)}(t)` and
//! the asymptotic marginal.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{evolve, free_propagate, Coupling, SolverConfig, Termination};
use crate::ensemble::{Atom, AtomicMeasure};
use crate::error::{Error, Result};
use crate::hierarchy::{rank_one_diff_trace_norm, telescoping_bound};
use crate::logspace::compensated_sum;
use crate::spectral::{norm, BoxGrid, NormKind, WaveFunction};
use crate::state::OneBody;

/// `e^{-itΔ} φ_t`.
pub fn pullback(phi_t: &WaveFunction, t: f64) -> WaveFunction {
    free_propagate(phi_t, -t)
}

/// What to do when `T_max` exceeds the no-wraparound window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum WindowPolicy {
    Refuse,
    /// Run anyway and record the violation in the run.
    Report,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatterConfig {
    pub t_max: f64,
    /// Number of positive checkpoints `T_max 2^{-(levels-1)}, …, T_max/2, T_max`.
    pub levels: u32,
    pub dt: f64,
    /// Off runs the free flow.
    pub nonlinear: bool,
    pub window: WindowPolicy,
}

impl ScatterConfig {
    pub fn new(t_max: f64, levels: u32, dt: f64) -> Self {
        Self { t_max, levels, dt, nonlinear: true, window: WindowPolicy::Refuse }
    }

    /// `0` followed by the dyadic checkpoints.
    pub fn checkpoints(&self) -> Vec<f64> {
        let mut out = vec![0.0];
        out.extend((0..self.levels).map(|i| self.t_max * 2f64.powi(i as i32 + 1 - self.levels as i32)));
        out
    }
}

/// `|ξ|` below which `99.9%` of `Σ(1+|ξ|²)|φ̂|²` sits.
pub fn significant_wavenumber(phi: &WaveFunction) -> f64 {
    let spec = phi.field().to_frequency();
    let grid = *phi.grid();
    let mut modes: Vec<(f64, f64)> = spec
        .samples()
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let q = grid.wavevector(i);
            let k2 = q[0] * q[0] + q[1] * q[1] + q[2] * q[2];
            (k2.sqrt(), (1.0 + k2) * v.norm_sqr())
        })
        .collect();
    modes.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total = compensated_sum(modes.iter().map(|m| m.1));
    if total == 0.0 {
        return 0.0;
    }
    let mut acc = 0.0;
    for (k, w) in &modes {
        acc += w;
        if acc >= 0.999 * total {
            return *k;
        }
    }
    modes.last().map_or(0.0, |m| m.0)
}

/// `L / (4 ξ_sig)`, infinite for the zero state.
pub fn wraparound_limit(phi: &WaveFunction) -> f64 {
    let k = significant_wavenumber(phi);
    if k == 0.0 {
        f64::INFINITY
    } else {
        phi.grid().extent() / (4.0 * k)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScatteringRun {
    pub coupling: Coupling,
    pub initial: WaveFunction,
    /// `0` then the dyadic checkpoints.
    pub times: Vec<f64>,
    pub pullbacks: Vec<WaveFunction>,
    /// `‖u(tᵢ) - u(tᵢ₋₁)‖_{H¹}` for `i ≥ 1`.
    pub increments: Vec<f64>,
    /// `u(T_max)`.
    pub phi_plus: WaveFunction,
    /// Last Cauchy increment, reported as the error bar of `φ₊`.
    pub residual_estimate: f64,
    /// `‖S_t(φ)‖²_{H¹}` at each checkpoint.
    pub h1_sq: Vec<f64>,
    pub window_limit: f64,
    pub window_exceeded: bool,
}

impl ScatteringRun {
    /// Increments between positive dyadic checkpoints decrease strictly.
    pub fn dyadic_decay(&self) -> bool {
        self.increments[1..].windows(2).all(|w| w[1] < w[0])
    }

    pub fn index_of(&self, t: f64) -> Result<usize> {
        self.times
            .iter()
            .position(|s| (s - t).abs() <= 1e-12 * t.abs().max(1.0))
            .ok_or(Error::TimeNotInGrid(t))
    }
}

fn h1_distance(a: &WaveFunction, b: &WaveFunction) -> Result<f64> {
    Ok(norm(&a.field().sub(b.field())?, NormKind::HAlpha(1.0)))
}

/// Evolves a defocusing (or free) run, pulls it back at the checkpoints and sets
/// `φ₊ = u(T_max)`.
pub fn extract_scattering_state(phi: &WaveFunction, cfg: &ScatterConfig) -> Result<ScatteringRun> {
    if cfg.levels < 1 {
        return Err(Error::InvalidParameter("at least one dyadic level is required".into()));
    }
    let limit = wraparound_limit(phi);
    let exceeded = cfg.t_max > limit;
    if exceeded && cfg.window == WindowPolicy::Refuse {
        return Err(Error::WraparoundWindow { t_max: cfg.t_max, limit });
    }
    let times = cfg.checkpoints();
    let mut solver = SolverConfig::new(Coupling::Defocusing, cfg.dt, cfg.t_max);
    solver.snapshot_interval = times[1];
    solver.nonlinear = cfg.nonlinear;
    solver.dealias = false;
    let traj = evolve(phi, &solver, &mut [])?;
    if traj.termination != Termination::Completed {
        return Err(Error::RunFlagged(format!("{:?} at {:?}", traj.termination, traj.flagged_at)));
    }
    let states: Result<Vec<&WaveFunction>> = times
        .iter()
        .map(|&t| traj.at(t).map(|s| &s.state).ok_or(Error::TimeNotInGrid(t)))
        .collect();
    let states = states?;
    let pullbacks: Vec<WaveFunction> = times.par_iter().zip(states.par_iter()).map(|(&t, s)| pullback(s, t)).collect();
    let h1_sq: Vec<f64> = states.iter().map(|s| s.norm(NormKind::HAlpha(1.0)).powi(2)).collect();
    let increments: Result<Vec<f64>> = pullbacks.windows(2).map(|w| h1_distance(&w[1], &w[0])).collect();
    let increments = increments?;
    let phi_plus = pullbacks.last().expect("checkpoints are non-empty").clone();
    Ok(ScatteringRun {
        coupling: Coupling::Defocusing,
        initial: phi.clone(),
        times,
        residual_estimate: *increments.last().expect("at least one increment"),
        increments,
        pullbacks,
        phi_plus,
        h1_sq,
        window_limit: limit,
        window_exceeded: exceeded,
    })
}

/// One run per atom, in parallel; Gaussian atoms are sampled on `grid`.
pub fn scatter_measure(mu: &AtomicMeasure, grid: BoxGrid, cfg: &ScatterConfig) -> Result<Vec<ScatteringRun>> {
    mu.atoms
        .par_iter()
        .map(|a| extract_scattering_state(&a.state.to_wave_function(grid), cfg))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiagMode {
    /// Weighted sum of exact per-atom trace norms.
    Exact,
    /// Weighted sum of telescoping bounds.
    Bound,
}

/// `D_k(t)`: distance between the pulled-back marginal and the asymptotic one in
/// `Tr|S^{(k,1)} ·|`, summed over atoms (exact for a single atom, an upper bound
/// otherwise).
pub fn hierarchy_scatter_diag(
    mu: &AtomicMeasure,
    runs: &[ScatteringRun],
    k: usize,
    t: f64,
    mode: DiagMode,
) -> Result<f64> {
    if runs.len() < mu.len() {
        return Err(Error::MissingRun(runs.len()));
    }
    let parts: Result<Vec<f64>> = mu
        .atoms
        .par_iter()
        .zip(runs.par_iter())
        .map(|(a, run)| {
            let i = run.index_of(t)?;
            let u = run.pullbacks[i].field();
            let v = run.phi_plus.field();
            let d = match mode {
                DiagMode::Exact => rank_one_diff_trace_norm(u, v, k, 1.0)?.value,
                DiagMode::Bound => telescoping_bound(u, v, k, 1.0)?,
            };
            Ok(a.weight() * d)
        })
        .collect();
    Ok(compensated_sum(parts?))
}

/// `μ₊`: each atom replaced by its `φ₊`, weights unchanged.
pub fn asymptotic_measure(mu: &AtomicMeasure, runs: &[ScatteringRun]) -> Result<AtomicMeasure> {
    if runs.len() < mu.len() {
        return Err(Error::MissingRun(runs.len()));
    }
    Ok(AtomicMeasure::new(
        mu.atoms
            .iter()
            .zip(runs)
            .map(|(a, r)| Atom { state: OneBody::Grid(r.phi_plus.clone()), ..a.clone() })
            .collect(),
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub t: f64,
    pub h1_pullback_increment: f64,
    pub d: [f64; 3],
    pub bound_d3: f64,
}

impl ScatterRow {
    pub const CSV_HEADER: &'static str = "t,H1_pullback_increment,D_1,D_2,D_3,bound_D_3";

    pub fn csv_row(&self) -> String {
        format!("{},{},{},{},{},{}", self.t, self.h1_pullback_increment, self.d[0], self.d[1], self.d[2], self.bound_d3)
    }
}

/// Table over the positive checkpoints; the increment at `tᵢ` is measured from
/// the previous checkpoint, weighted over atoms.
pub fn scatter_table(mu: &AtomicMeasure, runs: &[ScatteringRun]) -> Result<Vec<ScatterRow>> {
    let first = runs.first().ok_or(Error::MissingRun(0))?;
    first
        .times
        .iter()
        .enumerate()
        .skip(1)
        .map(|(i, &t)| {
            let inc = compensated_sum(mu.atoms.iter().zip(runs).map(|(a, r)| a.weight() * r.increments[i - 1]));
            let mut d = [0.0; 3];
            for (k, slot) in d.iter_mut().enumerate() {
                *slot = hierarchy_scatter_diag(mu, runs, k + 1, t, DiagMode::Exact)?;
            }
            let bound_d3 = hierarchy_scatter_diag(mu, runs, 3, t, DiagMode::Bound)?;
            Ok(ScatterRow { t, h1_pullback_increment: inc, d, bound_d3 })
        })
        .collect()
}
