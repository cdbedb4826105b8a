//! Split-step integration of `i∂tφ = -Δφ + λ|φ|²φ` on the periodic box.
//!
//! Both sub-flows are solved exactly: the kinetic one is the Fourier multiplier
//! `exp(-it|ξ|²)`, the potential one is the pointwise phase `exp(-iλt|φ|²)`
//! (|φ| does not change along it). Strang composition makes the step second
//! order and unitary in L².

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{apply_multiplier, chunked_sum, BoxGrid, Field, Space, WaveFunction};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Coupling {
    /// λ = +1
    Defocusing,
    /// λ = -1
    Focusing,
}

impl Coupling {
    pub fn lambda(self) -> f64 {
        match self {
            Coupling::Defocusing => 1.0,
            Coupling::Focusing => -1.0,
        }
    }

    pub fn from_lambda(lambda: i32) -> Result<Self> {
        match lambda {
            1 => Ok(Coupling::Defocusing),
            -1 => Ok(Coupling::Focusing),
            other => Err(Error::InvalidParameter(format!("λ must be +1 or -1, got {other}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum StepPolicy {
    Fixed,
    /// `dt = dt_init · (‖φ0‖_{H¹} / ‖φ(t)‖_{H¹})^β`, clamped to `[dt_min, dt_init]`.
    Adaptive { beta: f64, dt_min: f64 },
}

impl StepPolicy {
    pub fn adaptive() -> Self {
        StepPolicy::Adaptive { beta: 2.0, dt_min: 1e-8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub coupling: Coupling,
    pub dt_init: f64,
    pub step_policy: StepPolicy,
    pub dealias: bool,
    pub t_max: f64,
    /// Snapshots are taken at integer multiples of this interval.
    pub snapshot_interval: f64,
    pub blowup_h1_threshold: f64,
    /// Largest admissible share of `Σ(1+|ξ|²)|φ̂|²` in the 2/3-rule tail. With
    /// dealiasing on, the share is the accumulated truncated energy over the
    /// current retained energy.
    pub resolution_guard: f64,
    /// Off turns the run into free evolution.
    pub nonlinear: bool,
}

impl SolverConfig {
    /// Fixed step, dealiasing on for focusing runs only, snapshots every `t_max / 10`.
    pub fn new(coupling: Coupling, dt: f64, t_max: f64) -> Self {
        Self {
            coupling,
            dt_init: dt,
            step_policy: StepPolicy::Fixed,
            dealias: coupling == Coupling::Focusing,
            t_max,
            snapshot_interval: t_max / 10.0,
            blowup_h1_threshold: 1e3,
            resolution_guard: 0.1,
            nonlinear: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
            }
        };
        positive("dt_init", self.dt_init)?;
        positive("t_max", self.t_max)?;
        positive("snapshot_interval", self.snapshot_interval)?;
        positive("blowup_h1_threshold", self.blowup_h1_threshold)?;
        positive("resolution_guard", self.resolution_guard)?;
        if let StepPolicy::Adaptive { beta, dt_min } = self.step_policy {
            positive("beta", beta)?;
            positive("dt_min", dt_min)?;
            if dt_min > self.dt_init {
                return Err(Error::InvalidParameter("dt_min exceeds dt_init".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Completed,
    BlowupDetected,
    ResolutionLost,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub state: WaveFunction,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub snapshots: Vec<Snapshot>,
    pub termination: Termination,
    /// Time at which the run was halted, if it was.
    pub flagged_at: Option<f64>,
    pub steps: usize,
    pub h1_threshold: f64,
}

impl Trajectory {
    /// Wraps externally produced snapshots; the run is considered completed.
    pub fn from_snapshots(snapshots: Vec<Snapshot>, h1_threshold: f64) -> Result<Self> {
        if snapshots.windows(2).any(|w| w[1].t <= w[0].t) {
            return Err(Error::InvalidParameter("snapshot times must increase strictly".into()));
        }
        Ok(Self { snapshots, termination: Termination::Completed, flagged_at: None, steps: 0, h1_threshold })
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    pub fn last(&self) -> &Snapshot {
        self.snapshots.last().expect("trajectory has at least the initial snapshot")
    }

    /// Snapshot at time `t` (within `1e-9` relative).
    pub fn at(&self, t: f64) -> Option<&Snapshot> {
        self.snapshots.iter().find(|s| (s.t - t).abs() <= 1e-9 * t.abs().max(1.0))
    }

    /// Common spacing of the snapshot times, if uniform to `1e-9` relative.
    pub fn uniform_spacing(&self) -> Option<f64> {
        let t = self.times();
        if t.len() < 2 {
            return None;
        }
        let dt = t[1] - t[0];
        t.windows(2)
            .all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-9 * dt.abs().max(1e-300))
            .then_some(dt)
    }
}

/// Called once per accepted step with the current time and state.
pub trait Observer {
    fn observe(&mut self, t: f64, state: &WaveFunction);
}

impl<F: FnMut(f64, &WaveFunction)> Observer for F {
    fn observe(&mut self, t: f64, state: &WaveFunction) {
        self(t, state)
    }
}

/// `e^{itΔ}`: multiplier `exp(-it|ξ|²)`. Negative `t` gives `e^{-i|t|Δ}`.
pub fn free_propagate(phi: &WaveFunction, t: f64) -> WaveFunction {
    if t == 0.0 {
        return phi.clone();
    }
    let field = apply_multiplier(phi.field(), |k| {
        Complex64::from_polar(1.0, -t * (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]))
    })
    .expect("unimodular symbol is finite");
    WaveFunction::new(field)
}

/// Per-grid scratch for repeated split steps; state is kept in frequency space.
struct Stepper {
    xi2: Vec<f64>,
    tail: Vec<bool>,
    half_phase: Vec<Complex64>,
    half_dt: f64,
    coupling: Coupling,
    nonlinear: bool,
    dealias: bool,
}

struct StepOutcome {
    /// `Σ(1+|ξ|²)|φ̂|²` over the 2/3-rule tail, measured before any truncation.
    tail_energy: f64,
    /// The same sum over all modes.
    total_energy: f64,
    finite: bool,
}

impl Stepper {
    fn new(grid: BoxGrid, coupling: Coupling, nonlinear: bool, dealias: bool) -> Self {
        Self {
            xi2: grid.xi_squared(),
            tail: grid.dealias_tail(),
            half_phase: Vec::new(),
            half_dt: f64::NAN,
            coupling,
            nonlinear,
            dealias,
        }
    }

    fn set_dt(&mut self, dt: f64) {
        let half = dt / 2.0;
        if half == self.half_dt {
            return;
        }
        self.half_dt = half;
        self.half_phase = self.xi2.par_iter().map(|k2| Complex64::from_polar(1.0, -half * k2)).collect();
    }

    fn kinetic_half(&self, spec: &mut Field) {
        spec.samples_mut()
            .par_iter_mut()
            .zip(self.half_phase.par_iter())
            .for_each(|(v, p)| *v *= p);
    }

    fn tail_energy(&self, spec: &Field) -> f64 {
        let xi2 = &self.xi2;
        let tail = &self.tail;
        chunked_sum(spec.samples(), |i, v| if tail[i] { (1.0 + xi2[i]) * v.norm_sqr() } else { 0.0 })
    }

    fn h1(&self, spec: &Field) -> f64 {
        let xi2 = &self.xi2;
        chunked_sum(spec.samples(), |i, v| (1.0 + xi2[i]) * v.norm_sqr()).sqrt()
    }

    /// One Strang step on a frequency-space field. `dt` may be negative.
    fn step(&mut self, spec: &mut Field, dt: f64) -> StepOutcome {
        debug_assert_eq!(spec.space(), Space::Frequency);
        self.set_dt(dt);
        self.kinetic_half(spec);
        if self.nonlinear {
            spec.transform_in_place();
            let lambda = self.coupling.lambda();
            spec.samples_mut()
                .par_iter_mut()
                .for_each(|v| *v *= Complex64::from_polar(1.0, -lambda * dt * v.norm_sqr()));
            spec.transform_in_place();
        }
        let tail_energy = self.tail_energy(spec);
        let total_energy = self.h1(spec).powi(2);
        if self.dealias {
            let tail = &self.tail;
            spec.samples_mut().par_iter_mut().enumerate().for_each(|(i, v)| {
                if tail[i] {
                    *v = Complex64::new(0.0, 0.0);
                }
            });
        }
        self.kinetic_half(spec);
        StepOutcome { tail_energy, total_energy, finite: spec.is_finite() && total_energy.is_finite() }
    }
}

/// A single Strang step: half kinetic, full nonlinear phase, (optional 2/3-rule
/// truncation), half kinetic.
pub fn strang_step(phi: &WaveFunction, dt: f64, coupling: Coupling, dealias: bool) -> Result<WaveFunction> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    signed_step(phi, dt, coupling, dealias)
}

/// The same splitting run with `-dt`; undoes [`strang_step`] when dealiasing is off.
pub fn reverse_step(phi: &WaveFunction, dt: f64, coupling: Coupling) -> Result<WaveFunction> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    signed_step(phi, -dt, coupling, false)
}

fn signed_step(phi: &WaveFunction, dt: f64, coupling: Coupling, dealias: bool) -> Result<WaveFunction> {
    let mut stepper = Stepper::new(*phi.grid(), coupling, true, dealias);
    let mut spec = phi.field().to_frequency();
    let out = stepper.step(&mut spec, dt);
    if !out.finite {
        return Err(Error::RunFlagged("non-finite samples after step".into()));
    }
    Ok(WaveFunction::new(spec))
}

/// Integrates to `t_max`, or until the H¹ threshold or the resolution guard trips.
pub fn evolve(phi0: &WaveFunction, cfg: &SolverConfig, observers: &mut [&mut dyn Observer]) -> Result<Trajectory> {
    cfg.validate()?;
    if !phi0.l2_norm().is_finite() {
        return Err(Error::InvalidParameter("initial state has non-finite norm".into()));
    }
    let grid = *phi0.grid();
    let mut stepper = Stepper::new(grid, cfg.coupling, cfg.nonlinear, cfg.dealias);
    let mut spec = phi0.field().to_frequency();
    let h1_start = stepper.h1(&spec);

    let mut snapshots = vec![Snapshot { t: 0.0, state: phi0.clone() }];
    let mut t = 0.0_f64;
    let mut next_snap: u64 = 1;
    let n_snaps = (cfg.t_max / cfg.snapshot_interval * (1.0 + 1e-12)).floor() as u64;
    let mut steps = 0usize;
    let mut termination = Termination::Completed;
    let mut flagged_at = None;
    // energy discarded by truncation so far; with dealiasing the tail is emptied
    // every step, so the guard has to look at what has accumulated
    let mut removed = 0.0_f64;

    let snap_time = |k: u64| (k as f64 * cfg.snapshot_interval).min(cfg.t_max);
    let t_end = cfg.t_max;

    while t < t_end {
        let mut dt = match cfg.step_policy {
            StepPolicy::Fixed => cfg.dt_init,
            StepPolicy::Adaptive { beta, dt_min } => {
                let h1 = stepper.h1(&spec);
                let ratio = if h1 > 0.0 && h1_start > 0.0 { h1_start / h1 } else { 1.0 };
                (cfg.dt_init * ratio.powf(beta)).clamp(dt_min, cfg.dt_init)
            }
        };
        let target = if next_snap <= n_snaps { snap_time(next_snap) } else { t_end };
        let mut landed = false;
        if t + dt >= target * (1.0 - 1e-12) || target - (t + dt) < 1e-9 * dt {
            dt = target - t;
            landed = true;
        }
        let out = stepper.step(&mut spec, dt);
        steps += 1;
        t = if landed { target } else { t + dt };

        let tail_fraction = if cfg.dealias {
            removed += out.tail_energy;
            removed / (out.total_energy - out.tail_energy).max(f64::MIN_POSITIVE)
        } else if out.total_energy > 0.0 {
            out.tail_energy / out.total_energy
        } else {
            0.0
        };
        if !out.finite || tail_fraction > cfg.resolution_guard {
            termination = Termination::ResolutionLost;
        } else if stepper.h1(&spec) > cfg.blowup_h1_threshold {
            termination = Termination::BlowupDetected;
        }
        let halted = termination != Termination::Completed;

        if !observers.is_empty() || landed || halted {
            let state = WaveFunction::new(spec.to_position());
            for obs in observers.iter_mut() {
                obs.observe(t, &state);
            }
            if (landed && next_snap <= n_snaps) || halted {
                snapshots.push(Snapshot { t, state });
            }
        }
        if landed && next_snap <= n_snaps {
            next_snap += 1;
        }
        if halted {
            flagged_at = Some(t);
            break;
        }
    }
    // t_max not a multiple of the interval: record the final state too
    if termination == Termination::Completed && snapshots.last().map(|s| s.t) != Some(t) {
        snapshots.push(Snapshot { t, state: WaveFunction::new(spec.to_position()) });
    }
    Ok(Trajectory { snapshots, termination, flagged_at, steps, h1_threshold: cfg.blowup_h1_threshold })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlowupReason {
    H1Threshold,
    ResolutionLost,
}

/// Earliest snapshot time at which the run was flagged or its H¹ norm exceeded
/// the trajectory's threshold.
pub fn detect_blowup(trajectory: &Trajectory) -> Option<(f64, BlowupReason)> {
    let crossing = trajectory.snapshots.iter().find_map(|s| {
        let h1 = crate::state::OneBody::Grid(s.state.clone()).norms().h1();
        (h1 > trajectory.h1_threshold).then_some((s.t, BlowupReason::H1Threshold))
    });
    let flagged = trajectory.flagged_at.map(|t| {
        let reason = match trajectory.termination {
            Termination::ResolutionLost => BlowupReason::ResolutionLost,
            _ => BlowupReason::H1Threshold,
        };
        (t, reason)
    });
    match (crossing, flagged) {
        (Some(a), Some(b)) => Some(if a.0 <= b.0 { a } else { b }),
        (a, b) => a.or(b),
    }
}
