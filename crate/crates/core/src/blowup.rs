//! Focusing blowup: the virial certificate, shell bounds `T_j`, the
//! super-exponential sum bound, and the truncation sweep over `A_R`.

use serde::{Deserialize, Serialize};

use crate::dynamics::Coupling;
use crate::ensemble::{
    build_blowup_measure, check_mj_membership, log_kappa, raw_log_weight, AtomicMeasure, Functional,
    GaussianProfile, MembershipReport, Representation, ShellSpec,
};
use crate::error::{Error, Result};
use crate::hierarchy::{marginal, trace_s_alpha};
use crate::logspace::{linear_fit, log_sum_exp};
use crate::state::{OneBody, StateNorms};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlowupCertificate {
    pub energy: f64,
    /// `‖xφ‖`
    pub b: f64,
    /// `b ‖φ‖_{Ḣ¹}`
    pub c: f64,
    /// Positive root of `b² + 2ct + 8Et²`; meaningful only when `valid`.
    pub t_bound: f64,
    pub valid: bool,
}

impl BlowupCertificate {
    pub fn from_parts(energy: f64, b: f64, c: f64) -> Self {
        let valid = energy < 0.0 && b.is_finite() && c.is_finite();
        let t_bound = if valid {
            let e = energy.abs();
            (2.0 * c + (4.0 * c * c + 32.0 * e * b * b).sqrt()) / (16.0 * e)
        } else {
            f64::INFINITY
        };
        Self { energy, b, c, t_bound, valid }
    }

    pub fn from_norms(n: &StateNorms) -> Self {
        Self::from_parts(n.energy(Coupling::Focusing), n.x_moment, n.x_moment * n.hdot1)
    }

    /// `b² + 2ct + 8Et²`.
    pub fn quadratic(&self, t: f64) -> f64 {
        self.b * self.b + 2.0 * self.c * t + 8.0 * self.energy * t * t
    }

    /// `|q(T)| / max(b², |8E|T²)`.
    pub fn root_residual(&self) -> f64 {
        let t = self.t_bound;
        self.quadratic(t).abs() / (self.b * self.b).max((8.0 * self.energy).abs() * t * t)
    }
}

/// Certificate with the focusing energy of `φ`; invalid when `E ≥ 0`.
pub fn certify_blowup(phi: &OneBody) -> BlowupCertificate {
    BlowupCertificate::from_norms(&phi.norms())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShellVariant {
    /// Certificate of `f_j` itself, with `‖x f_j‖ = 2^{-j}‖x g‖`.
    GaussianFamily,
    /// The `M_j` worst case: `b² + 2tb + 8t²·¼(2^{2j} - C⁴2^{5j/2})` with the
    /// fixed cap `b`.
    FixedB,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShellBound {
    pub j: u32,
    pub variant: ShellVariant,
    pub certificate: BlowupCertificate,
    pub membership: MembershipReport,
}

/// `T_j` from closed-form Gaussian norms.
///
/// `FixedB` needs `f_j ∈ M_j`; `GaussianFamily` only needs `E[f_j] < 0`.
pub fn shell_blowup_bound(j: u32, profile: &GaussianProfile, spec: &ShellSpec, variant: ShellVariant) -> Result<ShellBound> {
    let state: OneBody = profile.shell_state(j).into();
    let membership = check_mj_membership(&state, &ShellSpec { j, ..*spec });
    let certificate = match variant {
        ShellVariant::GaussianFamily => certify_blowup(&state),
        ShellVariant::FixedB => {
            if !membership.is_member() {
                return Err(Error::Membership {
                    j,
                    reason: format!("fails {}", membership.reasons().join(", ")),
                });
            }
            let jf = j as f64;
            let energy = 0.25 * (2f64.powf(2.0 * jf) - spec.c_l4.powi(4) * 2f64.powf(2.5 * jf));
            BlowupCertificate::from_parts(energy, spec.b, spec.b)
        }
    };
    if !certificate.valid {
        return Err(Error::Membership { j, reason: format!("energy {} is not negative", certificate.energy) });
    }
    Ok(ShellBound { j, variant, certificate, membership })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub shells: Vec<u32>,
    pub log2_t: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
}

/// Least-squares slope of `log₂ T_j` over the given shells.
pub fn fit_shell_slope(
    shells: &[u32],
    profile: &GaussianProfile,
    spec: &ShellSpec,
    variant: ShellVariant,
) -> Result<SlopeFit> {
    let log2_t: Result<Vec<f64>> = shells
        .iter()
        .map(|&j| Ok(shell_blowup_bound(j, profile, spec, variant)?.certificate.t_bound.log2()))
        .collect();
    let log2_t = log2_t?;
    let x: Vec<f64> = shells.iter().map(|&j| j as f64).collect();
    let (slope, intercept) = linear_fit(&x, &log2_t);
    Ok(SlopeFit { shells: shells.to_vec(), log2_t, slope, intercept })
}

/// Smallest `j` with `E[f_j] < 0`.
pub fn negative_energy_onset(profile: &GaussianProfile) -> u32 {
    (0..200)
        .find(|&j| OneBody::from(profile.shell_state(j)).norms().energy(Coupling::Focusing) < 0.0)
        .unwrap_or(u32::MAX)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaRow {
    pub k: u32,
    /// `J = ⌊k^δ⌋`
    pub split: u32,
    /// `ln Σ_j (2^{2k} / j^{j^{1/δ}})^j`
    pub log_sum: f64,
    /// `ln Σ_{j>J}`
    pub log_tail: f64,
    /// `log_sum / k^r`
    pub c_k: f64,
}

impl LemmaRow {
    pub fn tail_below_one(&self) -> bool {
        self.log_tail < 0.0
    }

    pub const CSV_HEADER: &'static str = "k,log_sum,c_fit";
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub r: f64,
    pub rows: Vec<LemmaRow>,
    /// Smallest `c` with `Σ ≤ e^{ck^r}` over all listed `k`.
    pub c_fit: f64,
}

impl LemmaReport {
    pub fn csv_rows(&self) -> Vec<String> {
        self.rows.iter().map(|r| format!("{},{},{}", r.k, r.log_sum, self.c_fit)).collect()
    }
}

/// `ln` of the `j`-th term `(2^{2k}/j^{j^{1/δ}})^j`; the `j = 0` term is 1.
pub fn lemma_log_term(r: f64, k: u32, j: u32) -> f64 {
    2.0 * (k as f64) * (j as f64) * std::f64::consts::LN_2 + raw_log_weight(r, j)
}

/// Terms past the peak shrink at least geometrically; summation stops once they
/// are `e^{-60}` below the running maximum.
fn lemma_terms(r: f64, k: u32) -> Vec<f64> {
    let mut terms = Vec::new();
    let mut best = f64::NEG_INFINITY;
    for j in 0u32.. {
        let t = lemma_log_term(r, k, j);
        best = best.max(t);
        terms.push(t);
        let past_peak = j >= 2 && t < terms[j as usize - 1];
        if past_peak && t < best - 60.0 && t < -60.0 {
            break;
        }
    }
    terms
}

pub fn lemma_sum_check(r: f64, ks: &[u32]) -> Result<LemmaReport> {
    if !(r > 1.0 && r.is_finite()) {
        return Err(Error::InvalidParameter(format!("r = {r} must exceed 1")));
    }
    if ks.is_empty() {
        return Err(Error::InvalidParameter("empty k list".into()));
    }
    let delta = r - 1.0;
    let rows: Vec<LemmaRow> = ks
        .iter()
        .map(|&k| {
            let terms = lemma_terms(r, k);
            let split = (k as f64).powf(delta).floor() as u32;
            let tail: Vec<f64> = terms.iter().skip(split as usize + 1).copied().collect();
            let log_sum = log_sum_exp(&terms);
            LemmaRow {
                k,
                split,
                log_sum,
                log_tail: log_sum_exp(&tail),
                c_k: log_sum / (k as f64).powf(r),
            }
        })
        .collect();
    let c_fit = rows.iter().map(|r| r.c_k).fold(f64::NEG_INFINITY, f64::max);
    Ok(LemmaReport { r, rows, c_fit })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DichotomyReport {
    pub r: f64,
    pub ks: Vec<u32>,
    /// `ln Tr(S^{(k,1)}γ^{(k)})`
    pub log_trace: Vec<f64>,
    pub c_fit: f64,
    /// `max_k (ln Tr_k - c k^r)`
    pub log_c_const: f64,
    /// Per radius: `(R, ln(Tr_k / R^{2k}) at the last two probe k, diverging)`.
    pub ratio_checks: Vec<RatioCheck>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioCheck {
    pub radius: f64,
    pub k_probe: f64,
    pub log_ratio_half: f64,
    pub log_ratio: f64,
}

impl RatioCheck {
    /// Still increasing at the probe and already above 1.
    pub fn diverging(&self) -> bool {
        self.log_ratio > self.log_ratio_half && self.log_ratio > 0.0
    }
}

impl DichotomyReport {
    /// `Tr ≤ C e^{ck^r}` with `C ≤ 2`.
    pub fn h1r_bound_holds(&self) -> bool {
        self.log_c_const <= std::f64::consts::LN_2 + 1e-12
    }
}

/// Growth of `Tr(S^{(k,1)}γ^{(k)})` for a measure against `e^{ck^r}` (with `c`
/// from the lemma sum over the same `k`) and against `R^{2k}` for each radius,
/// the latter probed at `k_probe` and `k_probe/2` in log space.
pub fn dichotomy_check(mu: &AtomicMeasure, r: f64, ks: &[u32], radii: &[f64], k_probe: f64) -> Result<DichotomyReport> {
    let lemma = lemma_sum_check(r, ks)?;
    let values = mu.values(Functional::H1NormSq);
    let log_trace: Result<Vec<f64>> = ks.iter().map(|&k| mu.log_moment_of(&values, k as f64)).collect();
    let log_trace = log_trace?;
    let log_c_const = ks
        .iter()
        .zip(&log_trace)
        .map(|(&k, l)| l - lemma.c_fit * (k as f64).powf(r))
        .fold(f64::NEG_INFINITY, f64::max);
    let ratio_checks: Result<Vec<RatioCheck>> = radii
        .iter()
        .map(|&radius| {
            let at = |k: f64| -> Result<f64> { Ok(mu.log_moment_of(&values, k)? - 2.0 * k * radius.ln()) };
            Ok(RatioCheck { radius, k_probe, log_ratio_half: at(k_probe / 2.0)?, log_ratio: at(k_probe)? })
        })
        .collect();
    Ok(DichotomyReport { r, ks: ks.to_vec(), log_trace, c_fit: lemma.c_fit, log_c_const, ratio_checks: ratio_checks? })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShellRow {
    pub j: u32,
    pub log_weight: f64,
    pub h1: f64,
    /// Gaussian-family certificate, infinite when `E[f_j] ≥ 0`.
    pub t_j: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub radius: f64,
    /// Largest retained shell, `None` when nothing is retained.
    pub j_retained: Option<u32>,
    pub log_trace_k: f64,
    /// `min T_j` over retained shells with a valid certificate.
    pub min_window: f64,
}

impl SweepRow {
    pub const CSV_HEADER: &'static str = "R,J_retained,log_trace_k,min_window";

    pub fn csv_row(&self) -> String {
        let j = self.j_retained.map_or_else(|| "-1".to_string(), |j| j.to_string());
        format!("{},{},{},{}", self.radius, j, self.log_trace_k, self.min_window)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub r: f64,
    pub k: usize,
    pub log_kappa: f64,
    pub shells: Vec<ShellRow>,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn trace_strictly_increasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].log_trace_k > w[0].log_trace_k)
    }

    pub fn window_strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].min_window < w[0].min_window)
    }
}

/// Truncates the blowup measure to `A_R` for each radius and reports the
/// `k`-particle trace and the shortest certified blowup window among the
/// retained shells.
pub fn instantaneous_blowup_sweep(
    r: f64,
    shells: u32,
    k: usize,
    radii: &[f64],
    profile: &GaussianProfile,
) -> Result<SweepReport> {
    if radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("radii must increase".into()));
    }
    let mu = build_blowup_measure(r, shells, profile, Representation::Analytic)?;
    let shell_rows: Vec<ShellRow> = mu
        .atoms
        .iter()
        .map(|a| {
            let cert = certify_blowup(&a.state);
            ShellRow {
                j: a.shell.expect("shell atoms carry their index"),
                log_weight: a.log_weight,
                h1: a.state.norms().h1(),
                t_j: cert.t_bound,
            }
        })
        .collect();
    let rows: Result<Vec<SweepRow>> = radii
        .iter()
        .map(|&radius| {
            let kept = mu.truncate(radius);
            let j_retained = kept.atoms.iter().filter_map(|a| a.shell).max();
            let log_trace_k = if kept.is_empty() {
                f64::NEG_INFINITY
            } else {
                trace_s_alpha(&marginal(&kept, k)?, 1.0)?
            };
            let min_window = shell_rows
                .iter()
                .filter(|s| s.h1 <= radius)
                .map(|s| s.t_j)
                .fold(f64::INFINITY, f64::min);
            Ok(SweepRow { radius, j_retained, log_trace_k, min_window })
        })
        .collect();
    Ok(SweepReport { r, k, log_kappa: log_kappa(r, shells), shells: shell_rows, rows: rows? })
}

/// Radii between consecutive shell norms, so that the `i`-th radius retains
/// exactly the shells `0..=first + i`.
pub fn radii_retaining(profile: &GaussianProfile, first: u32, last: u32) -> Vec<f64> {
    (first..=last)
        .map(|j| {
            let lo = OneBody::from(profile.shell_state(j)).norms().h1();
            let hi = OneBody::from(profile.shell_state(j + 1)).norms().h1();
            (lo * hi).sqrt()
        })
        .collect()
}
