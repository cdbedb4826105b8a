//! Finitely atomic de Finetti measures `μ = Σ wᵢ δ_{φᵢ}`.
//!
//! Weights are stored as logarithms: the super-exponential shell weights of
//! the blowup construction underflow `f64` after a handful of shells.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::Coupling;
use crate::error::{Error, Result};
use crate::gaussian::GaussianState;
use crate::logspace::{compensated_sum, log_sum_exp};
use crate::spectral::{BoxGrid, WaveFunction};
use crate::state::{OneBody, StateNorms};

#[derive(Clone, Debug, PartialEq)]
pub struct Atom {
    pub log_weight: f64,
    pub state: OneBody,
    /// The atom stands for the uniform measure on `{e^{iθ}φ}`.
    pub phase_orbit: bool,
    /// Dyadic shell the atom was built for, if any.
    pub shell: Option<u32>,
}

impl Atom {
    pub fn new(weight: f64, state: impl Into<OneBody>) -> Self {
        Self { log_weight: weight.ln(), state: state.into(), phase_orbit: true, shell: None }
    }

    pub fn weight(&self) -> f64 {
        self.log_weight.exp()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AtomicMeasure {
    pub atoms: Vec<Atom>,
}

/// One-body quantities that can be integrated against a measure.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Functional {
    H1Norm,
    H1NormSq,
    /// `‖(1-Δ)^{α/2}φ‖²`
    HAlphaSq(f64),
    Energy(Coupling),
    XMomentSq,
    /// `½‖φ‖²_{H¹} + ¼‖φ‖⁴_{L⁴}`
    SlotEnergy,
}

impl Functional {
    pub fn eval(&self, state: &OneBody) -> f64 {
        match *self {
            Functional::HAlphaSq(alpha) => state.h_alpha_sq(alpha),
            other => other.eval_norms(&state.norms()),
        }
    }

    /// Evaluation from precomputed norms; `HAlphaSq` needs the state itself
    /// except at `α ∈ {0, 1}`.
    pub fn eval_norms(&self, n: &StateNorms) -> f64 {
        match *self {
            Functional::H1Norm => n.h1(),
            Functional::H1NormSq => n.h1().powi(2),
            Functional::HAlphaSq(0.0) => n.l2 * n.l2,
            Functional::HAlphaSq(1.0) => n.h1().powi(2),
            Functional::HAlphaSq(_) => panic!("fractional H^α needs the state, not its norms"),
            Functional::Energy(c) => n.energy(c),
            Functional::XMomentSq => n.x_moment * n.x_moment,
            Functional::SlotEnergy => 0.5 * n.h1().powi(2) + 0.25 * n.l4.powi(4),
        }
    }
}

impl AtomicMeasure {
    pub fn new(atoms: Vec<Atom>) -> Self {
        Self { atoms }
    }

    pub fn single(state: impl Into<OneBody>) -> Self {
        Self::new(vec![Atom::new(1.0, state)])
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn log_total_mass(&self) -> f64 {
        log_sum_exp(&self.atoms.iter().map(|a| a.log_weight).collect::<Vec<_>>())
    }

    pub fn total_mass(&self) -> f64 {
        self.log_total_mass().exp()
    }

    pub fn is_probability(&self) -> bool {
        (self.total_mass() - 1.0).abs() <= 1e-12
    }

    /// Every atom has unit L² norm to `1e-10`.
    pub fn is_sphere_supported(&self) -> bool {
        self.atoms.iter().all(|a| (a.state.l2() - 1.0).abs() <= 1e-10)
    }

    pub fn require_normalized(&self) -> Result<()> {
        match self.atoms.iter().find(|a| (a.state.l2() - 1.0).abs() > 1e-10) {
            Some(a) => Err(Error::NotNormalized(a.state.l2())),
            None => Ok(()),
        }
    }

    /// Per-atom functional values, evaluated in parallel, returned in atom order.
    pub fn values(&self, functional: Functional) -> Vec<f64> {
        self.atoms.par_iter().map(|a| functional.eval(&a.state)).collect()
    }

    pub fn norms(&self) -> Vec<StateNorms> {
        self.atoms.par_iter().map(|a| a.state.norms()).collect()
    }

    /// `Σ wᵢ F[φᵢ]^k`.
    pub fn moment(&self, functional: Functional, k: u32) -> f64 {
        let vals = self.values(functional);
        compensated_sum(self.atoms.iter().zip(&vals).map(|(a, v)| a.weight() * v.powi(k as i32)))
    }

    /// `ln Σ wᵢ F[φᵢ]^p` for a non-negative functional and real `p > 0`.
    pub fn log_moment(&self, functional: Functional, p: f64) -> Result<f64> {
        self.log_moment_of(&self.values(functional), p)
    }

    /// Same as [`log_moment`](Self::log_moment) with the per-atom values supplied.
    pub fn log_moment_of(&self, values: &[f64], p: f64) -> Result<f64> {
        if values.len() != self.atoms.len() {
            return Err(Error::InvalidParameter("one value per atom required".into()));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::InvalidParameter(format!("log moment of a negative value {v}")));
        }
        let logs: Vec<f64> = self.atoms.iter().zip(values).map(|(a, v)| a.log_weight + p * v.ln()).collect();
        Ok(log_sum_exp(&logs))
    }

    /// Atoms with `‖φ‖_{H¹} ≤ R`, weights untouched.
    pub fn truncate(&self, radius: f64) -> AtomicMeasure {
        let norms = self.values(Functional::H1Norm);
        AtomicMeasure::new(
            self.atoms
                .iter()
                .zip(norms)
                .filter(|(_, n)| *n <= radius)
                .map(|(a, _)| a.clone())
                .collect(),
        )
    }

    /// Applies `f` to every atom state, weights untouched.
    pub fn map_states<F>(&self, f: F) -> Result<AtomicMeasure>
    where
        F: Fn(&OneBody) -> Result<OneBody> + Sync,
    {
        let states: Result<Vec<OneBody>> = self.atoms.par_iter().map(|a| f(&a.state)).collect();
        Ok(AtomicMeasure::new(
            self.atoms
                .iter()
                .zip(states?)
                .map(|(a, s)| Atom { state: s, ..a.clone() })
                .collect(),
        ))
    }

    pub fn manifest(&self) -> MeasureManifest {
        let norms = self.norms();
        let atoms = self
            .atoms
            .iter()
            .zip(norms)
            .map(|(a, n)| AtomRecord {
                log_weight: a.log_weight,
                weight: a.weight(),
                shell: a.shell,
                h1: n.h1(),
                hdot1: n.hdot1,
                l4: n.l4,
                x_moment: n.x_moment,
                phase_orbit: a.phase_orbit,
                profile: match &a.state {
                    OneBody::Gaussian(g) => Some(*g),
                    OneBody::Grid(_) => None,
                },
                grid: a.state.grid().copied(),
            })
            .collect();
        MeasureManifest { total_mass: self.total_mass(), atoms }
    }
}

/// Restriction to `A_R = {‖φ‖_{H¹} ≤ R}` without renormalizing.
pub fn truncate_measure(mu: &AtomicMeasure, radius: f64) -> AtomicMeasure {
    mu.truncate(radius)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomRecord {
    pub weight: f64,
    pub log_weight: f64,
    pub shell: Option<u32>,
    pub h1: f64,
    pub hdot1: f64,
    pub l4: f64,
    pub x_moment: f64,
    pub phase_orbit: bool,
    pub profile: Option<GaussianState>,
    pub grid: Option<BoxGrid>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureManifest {
    pub total_mass: f64,
    pub atoms: Vec<AtomRecord>,
}

/// Normalized isotropic Gaussian base profile `g` of the shell family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianProfile {
    pub dim: usize,
    pub sigma: f64,
}

impl Default for GaussianProfile {
    /// `σ = 2`, giving `‖g‖_{Ḣ¹} = (3/8)^{1/2}`.
    fn default() -> Self {
        Self { dim: 3, sigma: 2.0 }
    }
}

impl GaussianProfile {
    pub fn new(dim: usize, sigma: f64) -> Result<Self> {
        GaussianState::normalized(dim, sigma)?;
        Ok(Self { dim, sigma })
    }

    pub fn base(&self) -> GaussianState {
        GaussianState::normalized(self.dim, self.sigma).expect("validated profile")
    }

    /// `f_j(x) = 2^{dj/2} g(2^j x)` in closed form.
    pub fn shell_state(&self, j: u32) -> GaussianState {
        self.base().rescaled(j)
    }

    pub fn require_shell_ready(&self) -> Result<()> {
        let h = self.base().hdot1();
        if h > 0.5 && h <= 1.0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "base profile has ‖g‖_Ḣ¹ = {h}, outside (1/2, 1]"
            )))
        }
    }
}

/// `f_j` sampled on `grid`; fails when `σ 2^{-j}` is not resolved.
pub fn make_shell_atom(profile: &GaussianProfile, j: u32, grid: BoxGrid) -> Result<WaveFunction> {
    profile.require_shell_ready()?;
    let state = profile.shell_state(j);
    state.resolved_on(&grid).map_err(|reason| Error::Unresolved { j, reason })?;
    WaveFunction::normalized(state.sample(grid).into_field())
}

/// The `j` with `‖φ‖_{Ḣ¹} ∈ (2^{j-1}, 2^j]`, or 0 when `‖φ‖_{Ḣ¹} ≤ 1`.
pub fn classify_shell(phi: &OneBody) -> Result<u32> {
    let n = phi.norms();
    if (n.l2 - 1.0).abs() > 1e-10 {
        return Err(Error::NotNormalized(n.l2));
    }
    Ok(shell_of(n.hdot1))
}

pub(crate) fn shell_of(hdot1: f64) -> u32 {
    if hdot1 <= 1.0 {
        return 0;
    }
    let mut j = hdot1.log2().ceil().max(1.0) as i32;
    while hdot1 > 2f64.powi(j) {
        j += 1;
    }
    while j > 1 && hdot1 <= 2f64.powi(j - 1) {
        j -= 1;
    }
    j as u32
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShellSpec {
    pub j: u32,
    /// Variance cap: members satisfy `‖xφ‖ < b`.
    pub b: f64,
    /// Members of `M_j`, `j ≥ 1`, satisfy `‖φ‖_{L⁴} > C_L4 2^{5j/8}`.
    pub c_l4: f64,
}

impl ShellSpec {
    pub fn new(j: u32, b: f64, c_l4: f64) -> Result<Self> {
        if !(b > 0.0 && b.is_finite()) || !(c_l4 > 0.0 && c_l4.is_finite()) {
            return Err(Error::InvalidParameter(format!("shell constants b={b}, C={c_l4} must be positive")));
        }
        Ok(Self { j, b, c_l4 })
    }

    /// Defaults: `b = 2‖x g‖`, `C_L4 = 1`.
    pub fn for_profile(j: u32, profile: &GaussianProfile) -> Self {
        Self { j, b: 2.0 * profile.base().x_moment(), c_l4: 1.0 }
    }

    /// `(lower, upper]` bounds on `‖φ‖_{Ḣ¹}`; the lower bound is `-∞` for `j = 0`.
    pub fn hdot1_bounds(&self) -> (f64, f64) {
        if self.j == 0 {
            (f64::NEG_INFINITY, 1.0)
        } else {
            (2f64.powi(self.j as i32 - 1), 2f64.powi(self.j as i32))
        }
    }

    pub fn l4_floor(&self) -> Option<f64> {
        (self.j > 0).then(|| self.c_l4 * 2f64.powf(5.0 * self.j as f64 / 8.0))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MembershipReport {
    pub variance_ok: bool,
    pub shell_ok: bool,
    pub l4_ok: bool,
    pub norms: StateNorms,
}

impl MembershipReport {
    pub fn is_member(&self) -> bool {
        self.variance_ok && self.shell_ok && self.l4_ok
    }

    pub fn reasons(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !self.variance_ok {
            out.push("variance");
        }
        if !self.shell_ok {
            out.push("shell bound");
        }
        if !self.l4_ok {
            out.push("L4 lower bound");
        }
        out
    }
}

/// Evaluates the three defining predicates of `M_j`.
pub fn check_mj_membership(phi: &OneBody, spec: &ShellSpec) -> MembershipReport {
    let norms = phi.norms();
    let (lo, hi) = spec.hdot1_bounds();
    MembershipReport {
        variance_ok: norms.x_moment < spec.b,
        shell_ok: norms.hdot1 > lo && norms.hdot1 <= hi,
        l4_ok: spec.l4_floor().is_none_or(|floor| norms.l4 > floor),
        norms,
    }
}

/// Smallest `j ≥ 1` with `2^{3j/4}‖g‖_{L⁴} > C 2^{5j/8}`, i.e. from which the
/// rescaled family satisfies the `L⁴` condition of `M_j`. In `d` dimensions the
/// `L⁴` norm scales as `2^{dj/4}`.
pub fn membership_onset(profile: &GaussianProfile, c_l4: f64) -> u32 {
    let l4 = profile.base().l4();
    let rate = profile.dim as f64 / 4.0 - 5.0 / 8.0;
    if rate <= 0.0 {
        return u32::MAX;
    }
    // l4 2^{rate j} > c  ⇔  j > log2(c / l4) / rate
    let bound = (c_l4 / l4).log2() / rate;
    let mut j = bound.floor().max(0.0) as u32 + 1;
    while j > 1 && l4 * 2f64.powf(rate * (j - 1) as f64) > c_l4 {
        j -= 1;
    }
    j
}

/// `ln (j^{j^{1/δ}})^{-j}` with the `j = 0` weight set to one.
pub fn raw_log_weight(r: f64, j: u32) -> f64 {
    if j <= 1 {
        return 0.0;
    }
    let delta = r - 1.0;
    let jf = j as f64;
    -jf * jf.powf(1.0 / delta) * jf.ln()
}

/// `ln κ_r` for the shells `0..=J`.
pub fn log_kappa(r: f64, shells: u32) -> f64 {
    let raw: Vec<f64> = (0..=shells).map(|j| raw_log_weight(r, j)).collect();
    -log_sum_exp(&raw)
}

/// How shell atoms are represented.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Representation {
    /// Closed-form Gaussians; valid for every `j`.
    Analytic,
    /// Samples on the given grid; every shell must be resolved.
    Grid(BoxGrid),
}

/// `μ = κ_r Σ_{j≤J} (j^{j^{1/δ}})^{-j} δ_{f_j}`, `δ = r - 1`, all atoms phase orbits.
pub fn build_blowup_measure(
    r: f64,
    shells: u32,
    profile: &GaussianProfile,
    representation: Representation,
) -> Result<AtomicMeasure> {
    if !(r > 1.0 && r.is_finite()) {
        return Err(Error::InvalidParameter(format!("r = {r} must exceed 1")));
    }
    profile.require_shell_ready()?;
    let kappa = log_kappa(r, shells);
    let atoms: Result<Vec<Atom>> = (0..=shells)
        .map(|j| {
            let state: OneBody = match representation {
                Representation::Analytic => profile.shell_state(j).into(),
                Representation::Grid(grid) => make_shell_atom(profile, j, grid)?.into(),
            };
            Ok(Atom { log_weight: kappa + raw_log_weight(r, j), state, phase_orbit: true, shell: Some(j) })
        })
        .collect();
    Ok(AtomicMeasure::new(atoms?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rh1Estimate {
    /// `a_k = (∫dμ ‖φ‖^{2k}_{H¹})^{1/2k}` for `k = 1..=k_max`.
    pub sequence: Vec<f64>,
    pub limit: f64,
    /// Slope of `ln ln a_k` against `ln k` over `k = 4..=k_max`; `None` when
    /// some `a_k ≤ 1`.
    pub growth_exponent: Option<f64>,
}

pub fn estimate_rh1(mu: &AtomicMeasure, k_max: u32) -> Result<Rh1Estimate> {
    if k_max < 4 {
        return Err(Error::InvalidParameter(format!("k_max = {k_max} must be at least 4")));
    }
    let values = mu.values(Functional::H1NormSq);
    let logs: Result<Vec<f64>> = (1..=k_max)
        .map(|k| Ok(mu.log_moment_of(&values, k as f64)? / (2.0 * k as f64)))
        .collect();
    let logs = logs?;
    let growth_exponent = if logs[3..].iter().all(|l| *l > 0.0) {
        let x: Vec<f64> = (4..=k_max).map(|k| (k as f64).ln()).collect();
        let y: Vec<f64> = logs[3..].iter().map(|l| l.ln()).collect();
        Some(crate::logspace::linear_fit(&x, &y).0)
    } else {
        None
    };
    let sequence: Vec<f64> = logs.iter().map(|l| l.exp()).collect();
    Ok(Rh1Estimate { limit: *sequence.last().expect("k_max ≥ 4"), sequence, growth_exponent })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChebyshevBound {
    /// `min(1, ∫F^{2k}dμ / τ^{2k})`
    pub bound: f64,
    /// `μ({F > τ})`
    pub exact_tail: f64,
}

impl ChebyshevBound {
    pub fn dominates(&self) -> bool {
        self.bound >= self.exact_tail * (1.0 - 1e-12)
    }
}

pub fn chebyshev_support_bound(mu: &AtomicMeasure, functional: Functional, tau: f64, k: u32) -> Result<ChebyshevBound> {
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!("level τ = {tau} must be positive")));
    }
    let values = mu.values(functional);
    let log_moment = mu.log_moment_of(&values, 2.0 * k as f64)?;
    let log_bound = log_moment - 2.0 * k as f64 * tau.ln();
    let bound = log_bound.min(0.0).exp();
    let exact_tail =
        compensated_sum(mu.atoms.iter().zip(&values).filter(|(_, v)| **v > tau).map(|(a, _)| a.weight()));
    let out = ChebyshevBound { bound, exact_tail };
    debug_assert!(out.dominates(), "Chebyshev bound below exact tail: {out:?}");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile() -> GaussianProfile {
        GaussianProfile::default()
    }

    #[test]
    fn default_profile_lands_in_its_shells() {
        let p = profile();
        assert!((p.base().hdot1() - (3.0f64 / 8.0).sqrt()).abs() < 1e-15);
        for j in 0..40 {
            assert_eq!(classify_shell(&p.shell_state(j).into()).unwrap(), j);
        }
    }

    #[test]
    fn shell_boundaries_are_right_closed() {
        assert_eq!(shell_of(0.3), 0);
        assert_eq!(shell_of(1.0), 0);
        assert_eq!(shell_of(1.0000001), 1);
        assert_eq!(shell_of(2.0), 1);
        assert_eq!(shell_of(2.0000001), 2);
        assert_eq!(shell_of(1024.0), 10);
    }

    #[test]
    fn classify_rejects_unnormalized() {
        let g = profile().base().with_amplitude(2.0);
        assert_eq!(classify_shell(&g.into()), Err(Error::NotNormalized(2.0)));
    }

    #[test]
    fn raw_weights_r2() {
        assert_eq!(raw_log_weight(2.0, 0), 0.0);
        assert_eq!(raw_log_weight(2.0, 1), 0.0);
        assert!((raw_log_weight(2.0, 2).exp() - 1.0 / 16.0).abs() < 1e-16);
        assert!((raw_log_weight(2.0, 3).exp() - 1.0 / 19683.0).abs() < 1e-18);
    }

    #[test]
    fn weights_decrease_from_j2() {
        for r in [1.1, 1.5, 2.0, 3.0] {
            for j in 2..30 {
                assert!(raw_log_weight(r, j + 1) < raw_log_weight(r, j));
            }
        }
    }

    #[test]
    fn blowup_measure_is_probability() {
        let mu = build_blowup_measure(2.0, 6, &profile(), Representation::Analytic).unwrap();
        assert_eq!(mu.len(), 7);
        assert!(mu.is_probability());
        assert!(mu.atoms.iter().all(|a| a.phase_orbit));
        let single = build_blowup_measure(1.5, 0, &profile(), Representation::Analytic).unwrap();
        assert_eq!(single.len(), 1);
        assert!((single.atoms[0].weight() - 1.0).abs() < 1e-15);
        assert!(build_blowup_measure(1.0, 3, &profile(), Representation::Analytic).is_err());
    }

    #[test]
    fn grid_representation_refuses_unresolved_shells() {
        let grid = BoxGrid::new(3, 32.0, 64).unwrap();
        assert!(build_blowup_measure(2.0, 1, &profile(), Representation::Grid(grid)).is_ok());
        let err = build_blowup_measure(2.0, 3, &profile(), Representation::Grid(grid)).unwrap_err();
        assert!(matches!(err, Error::Unresolved { j: 2, .. }), "{err:?}");
    }

    #[test]
    fn moments_of_simple_measures() {
        let g = GaussianState::normalized(3, 1.0).unwrap();
        // H¹ norm squared 4 needs ‖φ‖_Ḣ¹² = 3
        let sigma = (0.5f64).sqrt();
        let a = GaussianState::normalized(3, sigma).unwrap();
        let mu = AtomicMeasure::single(a);
        assert!((mu.moment(Functional::H1NormSq, 3) - 64.0).abs() < 1e-12);
        // two atoms with H¹² values 1 and 16
        let b = GaussianState::normalized(3, (1.5f64 / 15.0).sqrt()).unwrap();
        let low = GaussianState::normalized(3, 1.0).unwrap().with_amplitude(0.0);
        let two = AtomicMeasure::new(vec![Atom::new(0.5, g), Atom::new(0.5, b)]);
        let vals = two.values(Functional::H1NormSq);
        assert!((vals[1] - 16.0).abs() < 1e-12);
        let zero = AtomicMeasure::single(low);
        assert_eq!(zero.moment(Functional::H1NormSq, 2), 0.0);
        assert!((two.log_moment(Functional::H1NormSq, 1.0).unwrap().exp() - 0.5 * (2.5 + 16.0)).abs() < 1e-12);
    }

    #[test]
    fn rh1_of_single_atom_is_constant() {
        let a = GaussianState::normalized(3, 0.7).unwrap();
        let r0 = OneBody::from(a).norms().h1();
        let est = estimate_rh1(&AtomicMeasure::single(a), 16).unwrap();
        for v in &est.sequence {
            assert!((v - r0).abs() < 1e-12 * r0);
        }
        assert!(estimate_rh1(&AtomicMeasure::single(a), 3).is_err());
    }

    #[test]
    fn chebyshev_examples() {
        let unit = GaussianState::normalized(3, 1.0).unwrap();
        // F = ‖φ‖_{L²} surrogate via HAlphaSq(0) = 1
        let mu = AtomicMeasure::single(unit);
        let c = chebyshev_support_bound(&mu, Functional::HAlphaSq(0.0), 2.0, 4).unwrap();
        assert!((c.bound - 2f64.powi(-8)).abs() < 1e-15);
        assert_eq!(c.exact_tail, 0.0);
        let low = chebyshev_support_bound(&mu, Functional::HAlphaSq(0.0), 0.5, 4).unwrap();
        assert_eq!(low.bound, 1.0);
        assert!((low.exact_tail - 1.0).abs() < 1e-15);
    }

    #[test]
    fn truncation() {
        let p = profile();
        let mu = build_blowup_measure(2.0, 6, &p, Representation::Analytic).unwrap();
        assert_eq!(mu.truncate(1e9), mu);
        assert!(mu.truncate(1e-9).is_empty());
        assert_eq!(mu.truncate(1e-9).total_mass(), 0.0);
        let r = 2f64.powf(3.5) * p.base().hdot1();
        let kept: Vec<u32> = mu.truncate(r).atoms.iter().map(|a| a.shell.unwrap()).collect();
        assert_eq!(kept, vec![0, 1, 2, 3]);
    }

    #[test]
    fn membership_onset_matches_scaling_inequality() {
        let p = profile();
        let j0 = membership_onset(&p, 1.0);
        let l4 = p.base().l4();
        assert!(2f64.powf(0.75 * j0 as f64) * l4 > 2f64.powf(0.625 * j0 as f64));
        assert!(2f64.powf(0.75 * (j0 - 1) as f64) * l4 <= 2f64.powf(0.625 * (j0 - 1) as f64));
        for j in j0..j0 + 20 {
            let spec = ShellSpec::for_profile(j, &p);
            assert!(check_mj_membership(&p.shell_state(j).into(), &spec).is_member(), "j={j}");
        }
        let spec = ShellSpec::for_profile(j0 - 1, &p);
        let rep = check_mj_membership(&p.shell_state(j0 - 1).into(), &spec);
        assert_eq!(rep.reasons(), vec!["L4 lower bound"]);
    }

    #[test]
    fn manifest_lists_every_atom() {
        let mu = build_blowup_measure(1.5, 4, &profile(), Representation::Analytic).unwrap();
        let m = mu.manifest();
        assert_eq!(m.atoms.len(), 5);
        assert_eq!(m.atoms[3].shell, Some(3));
        assert!((m.total_mass - 1.0).abs() < 1e-12);
    }
}
