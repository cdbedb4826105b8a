//! k-body operators kept as sums of elementary tensors `c ⊗ⱼ |ψⱼ⟩⟨χⱼ|`.
//!
//! Nothing here ever materializes a k-body kernel; traces, contractions and
//! Sobolev weights act slot by slot on the one-body factors.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Coupling, Trajectory};
use crate::ensemble::{AtomicMeasure, Functional};
use crate::error::{Error, Result};
use crate::logspace::{compensated_sum, log_sum_exp};
use crate::spectral::{apply_multiplier, bessel_potential, inner_product, norm, Field, NormKind};
use crate::state::OneBody;

#[derive(Clone, Debug, PartialEq)]
pub struct ElementaryTensorOp {
    pub coefficient: Complex64,
    pub left: Vec<OneBody>,
    pub right: Vec<OneBody>,
}

impl ElementaryTensorOp {
    pub fn new(coefficient: Complex64, left: Vec<OneBody>, right: Vec<OneBody>) -> Result<Self> {
        if left.len() != right.len() || left.is_empty() {
            return Err(Error::ParticleNumber(format!(
                "{} left and {} right factors",
                left.len(),
                right.len()
            )));
        }
        Ok(Self { coefficient, left, right })
    }

    /// `(|φ⟩⟨φ|)^{⊗k}`.
    pub fn rank_one_power(phi: &OneBody, k: usize) -> Self {
        Self { coefficient: Complex64::new(1.0, 0.0), left: vec![phi.clone(); k], right: vec![phi.clone(); k] }
    }

    pub fn k(&self) -> usize {
        self.left.len()
    }

    /// `Tr_slot`, which multiplies the coefficient by `⟨χ, ψ⟩` for that slot.
    /// Slots are numbered from 1.
    pub fn partial_trace(&self, slot: usize) -> Result<Self> {
        check_slot(slot, self.k())?;
        let pairing = self.right[slot - 1].inner(&self.left[slot - 1])?;
        let mut left = self.left.clone();
        let mut right = self.right.clone();
        left.remove(slot - 1);
        right.remove(slot - 1);
        Ok(Self { coefficient: self.coefficient * pairing, left, right })
    }

    /// The common factor when every left and right factor is the same state.
    pub fn common_factor(&self) -> Option<&OneBody> {
        let first = &self.left[0];
        (self.left.iter().all(|f| f == first) && self.right.iter().all(|f| f == first)).then_some(first)
    }
}

fn check_slot(slot: usize, max: usize) -> Result<()> {
    if slot == 0 || slot > max {
        Err(Error::SlotOutOfRange { slot, max })
    } else {
        Ok(())
    }
}

/// `Σᵢ wᵢ Aᵢ` with positive weights stored as logarithms; signs and phases live
/// in the tensors' coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorMixture {
    pub k: usize,
    pub terms: Vec<(f64, ElementaryTensorOp)>,
}

impl TensorMixture {
    pub fn new(k: usize, terms: Vec<(f64, ElementaryTensorOp)>) -> Result<Self> {
        if let Some((_, t)) = terms.iter().find(|(_, t)| t.k() != k) {
            return Err(Error::ParticleNumber(format!("term with {} slots in a {k}-body mixture", t.k())));
        }
        Ok(Self { k, terms })
    }

    pub fn partial_trace(&self, slot: usize) -> Result<TensorMixture> {
        check_slot(slot, self.k)?;
        if self.k == 1 {
            return Err(Error::ParticleNumber("cannot trace out the last slot".into()));
        }
        let terms: Result<Vec<_>> =
            self.terms.par_iter().map(|(w, t)| Ok((*w, t.partial_trace(slot)?))).collect();
        TensorMixture::new(self.k - 1, terms?)
    }

    /// `Tr γ`.
    pub fn trace(&self) -> Result<Complex64> {
        let parts: Result<Vec<Complex64>> = self
            .terms
            .par_iter()
            .map(|(w, t)| {
                let mut c = t.coefficient * w.exp();
                for (l, r) in t.left.iter().zip(&t.right) {
                    c *= r.inner(l)?;
                }
                Ok(c)
            })
            .collect();
        let parts = parts?;
        Ok(Complex64::new(
            compensated_sum(parts.iter().map(|c| c.re)),
            compensated_sum(parts.iter().map(|c| c.im)),
        ))
    }

    /// Largest coefficient-wise distance between two mixtures with the same
    /// factors, term by term; `None` when the factor lists differ.
    pub fn coefficient_distance(&self, other: &TensorMixture) -> Option<f64> {
        if self.k != other.k || self.terms.len() != other.terms.len() {
            return None;
        }
        let mut worst = 0.0_f64;
        for ((wa, a), (wb, b)) in self.terms.iter().zip(&other.terms) {
            if a.left != b.left || a.right != b.right {
                return None;
            }
            worst = worst.max((a.coefficient * wa.exp() - b.coefficient * wb.exp()).norm());
        }
        Some(worst)
    }

    /// Dense kernel `K(x, y)` of a one-body mixture on its grid, row-major.
    pub fn dense_one_body(&self) -> Result<Vec<Complex64>> {
        if self.k != 1 {
            return Err(Error::ParticleNumber(format!("dense kernel of a {}-body mixture", self.k)));
        }
        let first = self.terms.first().ok_or(Error::ZeroField)?;
        let grid = *first.1.left[0].require_field("a dense kernel")?.grid();
        let n = grid.len();
        let mut out = vec![Complex64::new(0.0, 0.0); n * n];
        for (w, t) in &self.terms {
            let psi = t.left[0].to_wave_function(grid);
            let chi = t.right[0].to_wave_function(grid);
            let c = t.coefficient * w.exp();
            out.par_chunks_mut(n).enumerate().for_each(|(x, row)| {
                let a = c * psi.field().samples()[x];
                for (y, v) in row.iter_mut().enumerate() {
                    *v += a * chi.field().samples()[y].conj();
                }
            });
        }
        Ok(out)
    }
}

/// `γ^{(k)} = Σᵢ wᵢ (|φᵢ⟩⟨φᵢ|)^{⊗k}`, one term per atom.
pub fn marginal(mu: &AtomicMeasure, k: usize) -> Result<TensorMixture> {
    if k == 0 {
        return Err(Error::ParticleNumber("k must be at least 1".into()));
    }
    TensorMixture::new(
        k,
        mu.atoms
            .iter()
            .map(|a| (a.log_weight, ElementaryTensorOp::rank_one_power(&a.state, k)))
            .collect(),
    )
}

/// `ln Tr(S^{(k,α)} γ^{(k)})` for a mixture of positive rank-one powers, each
/// weight `‖φ‖^{2k}_{H^α}` taken from the Fourier side.
pub fn trace_s_alpha(gamma: &TensorMixture, alpha: f64) -> Result<f64> {
    let logs: Result<Vec<f64>> = gamma
        .terms
        .par_iter()
        .map(|(w, t)| {
            let phi = t
                .common_factor()
                .ok_or_else(|| Error::NotPositive("left and right factors differ".into()))?;
            let c = t.coefficient;
            if c.im != 0.0 || c.re <= 0.0 {
                return Err(Error::NotPositive(format!("coefficient {c}")));
            }
            Ok(w + c.re.ln() + gamma.k as f64 * phi.h_alpha_sq(alpha).ln())
        })
        .collect();
    Ok(log_sum_exp(&logs?))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BSign {
    Plus,
    Minus,
}

/// `B^±_{j;k+1}` on a `(k+1)`-body mixture, `1 ≤ j ≤ k`.
///
/// `B⁺` contracts `x_{k+1}` and `x'_{k+1}` into `x_j`, so the left factor at
/// slot `j` becomes `ψⱼ ψ_{k+1} conj(χ_{k+1})`; `B⁻` does the same on the primed
/// side, giving the right factor `χⱼ conj(ψ_{k+1}) χ_{k+1}`.
pub fn apply_b(gamma: &TensorMixture, slot: usize, sign: BSign) -> Result<TensorMixture> {
    if gamma.k < 2 {
        return Err(Error::ParticleNumber("B needs at least two particles".into()));
    }
    let k = gamma.k - 1;
    check_slot(slot, k)?;
    let terms: Result<Vec<_>> = gamma
        .terms
        .par_iter()
        .map(|(w, t)| {
            let (psi_last, chi_last) = (&t.left[k], &t.right[k]);
            let mut left = t.left[..k].to_vec();
            let mut right = t.right[..k].to_vec();
            match sign {
                BSign::Plus => left[slot - 1] = OneBody::triple(&left[slot - 1], psi_last, chi_last)?,
                BSign::Minus => right[slot - 1] = OneBody::triple(&right[slot - 1], chi_last, psi_last)?,
            }
            Ok((*w, ElementaryTensorOp { coefficient: t.coefficient, left, right }))
        })
        .collect();
    TensorMixture::new(k, terms?)
}

/// `B_{k+1} = Σⱼ (B⁺_{j;k+1} - B⁻_{j;k+1})`.
pub fn apply_b_full(gamma: &TensorMixture) -> Result<TensorMixture> {
    let k = gamma.k.saturating_sub(1);
    let mut terms = Vec::new();
    for slot in 1..=k {
        terms.extend(apply_b(gamma, slot, BSign::Plus)?.terms);
        for (w, mut t) in apply_b(gamma, slot, BSign::Minus)?.terms {
            t.coefficient = -t.coefficient;
            terms.push((w, t));
        }
    }
    TensorMixture::new(k, terms)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KFunctional {
    /// `Tr(K₁K₃⋯K_{2m-1} γ^{(2m)})` by slot bookkeeping.
    pub slot_product: f64,
    /// `∫dμ E[φ]^m`.
    pub energy_power: f64,
}

/// Higher-order energy functional of order `m`.
///
/// Each `K_ℓ = ½(1-Δ_{x_ℓ})Tr_{ℓ+1} + ¼B⁺_{ℓ;ℓ+1}` pairs slots `ℓ, ℓ+1`
/// (ℓ odd) and leaves a scalar; the full trace multiplies the pair scalars.
/// With `include_potential = false` the `B⁺` term is dropped.
pub fn k_functional(mu: &AtomicMeasure, m: usize, coupling: Coupling, include_potential: bool) -> Result<KFunctional> {
    if m == 0 {
        return Err(Error::InvalidParameter("order m must be at least 1".into()));
    }
    mu.require_normalized()?;
    let gamma = marginal(mu, 2 * m)?;
    let parts: Result<Vec<Complex64>> = gamma
        .terms
        .par_iter()
        .map(|(w, t)| {
            let mut value = t.coefficient;
            for pair in 0..m {
                let (l, r) = (2 * pair, 2 * pair + 1);
                let kinetic = t.right[l].h1_pairing(&t.left[l])? * t.right[r].inner(&t.left[r])?;
                let mut slot = 0.5 * kinetic;
                if include_potential {
                    slot += 0.25 * t.right[l].quartic(&t.left[l], &t.left[r], &t.right[r])?;
                }
                value *= slot;
            }
            Ok(value * w.exp())
        })
        .collect();
    let slot_product = compensated_sum(parts?.iter().map(|c| c.re));
    let energy_power = mu.moment(Functional::Energy(coupling), m as u32);
    Ok(KFunctional { slot_product, energy_power })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualSeries {
    pub k: usize,
    pub times: Vec<f64>,
    /// `‖i∂tφ + Δφ - λ|φ|²φ‖_{L²}` at each interior snapshot.
    pub one_body: Vec<f64>,
    /// `2k ‖r‖ ‖φ‖^{2k-1}`.
    pub k_body_bound: Vec<f64>,
}

impl ResidualSeries {
    pub fn max_one_body(&self) -> f64 {
        self.one_body.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_k_body(&self) -> f64 {
        self.k_body_bound.iter().copied().fold(0.0, f64::max)
    }
}

/// Residual of the factorized hierarchy along a trajectory. On product states
/// the k-body residual is a sum of `2k` slot copies of the one-body NLS
/// residual, which is what gets bounded here. Time derivatives are centered
/// differences over the snapshots.
pub fn hierarchy_residual(trajectory: &Trajectory, coupling: Coupling, k: usize) -> Result<ResidualSeries> {
    if !(1..=2).contains(&k) {
        return Err(Error::ParticleNumber(format!("residual implemented for k ∈ {{1, 2}}, got {k}")));
    }
    let n = trajectory.snapshots.len();
    if n < 3 {
        return Err(Error::TooFewSnapshots { needed: 3, found: n });
    }
    let dt = trajectory.uniform_spacing().ok_or(Error::NonUniformSnapshots)?;
    let lambda = coupling.lambda();
    let rows: Result<Vec<(f64, f64, f64)>> = trajectory
        .snapshots
        .par_windows(3)
        .map(|w| {
            let (prev, cur, next) = (w[0].state.field(), w[1].state.field(), w[2].state.field());
            let dphi = next.axpy(Complex64::new(-1.0, 0.0), prev)?;
            let lap = apply_multiplier(cur, |q| Complex64::new(-(q[0] * q[0] + q[1] * q[1] + q[2] * q[2]), 0.0))?;
            let scale = Complex64::new(0.0, 1.0 / (2.0 * dt));
            let samples: Vec<Complex64> = dphi
                .samples()
                .iter()
                .zip(lap.samples())
                .zip(cur.samples())
                .map(|((d, l), p)| scale * d + l - lambda * p.norm_sqr() * p)
                .collect();
            let r = Field::from_samples(*cur.grid(), samples, cur.space())?;
            let rn = norm(&r, NormKind::L2);
            let phi_n = w[1].state.l2_norm();
            Ok((w[1].t, rn, 2.0 * k as f64 * rn * phi_n.powi(2 * k as i32 - 1)))
        })
        .collect();
    let rows = rows?;
    Ok(ResidualSeries {
        k,
        times: rows.iter().map(|r| r.0).collect(),
        one_body: rows.iter().map(|r| r.1).collect(),
        k_body_bound: rows.iter().map(|r| r.2).collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceNorm {
    pub value: f64,
    /// `ũ` and `ṽ` are parallel to within `1e-12` in the Gram determinant.
    pub near_parallel: bool,
}

pub const MAX_EXACT_K: usize = 12;

/// `Tr|S^{(k,α)}[(|u⟩⟨u|)^{⊗k} - (|v⟩⟨v|)^{⊗k}]|`, exact.
///
/// With `ũ = (1-Δ)^{α/2}u`, `a = ũ^{⊗k}` and `b = ṽ^{⊗k}` the operator is
/// `|a⟩⟨a| - |b⟩⟨b|`. In the span of the `2^k` words in `{ũ, ṽ}` its
/// coefficient matrix is supported on the two words `a, b`, so the nonzero
/// spectrum is that of `diag(1,-1)·G` with `G` the 2×2 Gram block of `a, b`:
/// the trace norm is `((A-B)² + 4(AB - |c|²))^{1/2}`, `A = ‖a‖²`, `B = ‖b‖²`,
/// `c = ⟨a, b⟩ = ⟨ũ, ṽ⟩^k`. Both terms are formed without cancellation so the
/// result goes to zero with `‖ũ - ṽ‖`.
pub fn rank_one_diff_trace_norm(u: &Field, v: &Field, k: usize, alpha: f64) -> Result<TraceNorm> {
    if k == 0 || k > MAX_EXACT_K {
        return Err(Error::InvalidParameter(format!("exact trace norm needs 1 ≤ k ≤ {MAX_EXACT_K}, got {k}")));
    }
    u.same_grid(v)?;
    let (ut, vt) = lifted_pair(u, v, alpha)?;
    let w = ut.sub(&vt)?;
    let s = inner_product(&ut, &ut)?.re;
    let t = inner_product(&vt, &vt)?.re;
    let uw = inner_product(&ut, &w)?;
    let ww = inner_product(&w, &w)?.re;
    // Gram determinant of {ũ, ṽ} equals that of {ũ, ũ - ṽ}
    let det1 = (s * ww - uw.norm_sqr()).max(0.0);
    let p = s * t;
    let q = (p - det1).max(0.0);
    // s - t = Re⟨ũ - ṽ, ũ + ṽ⟩
    let s_minus_t = 2.0 * uw.re - ww;
    let geometric = |x: f64, y: f64| -> f64 { (0..k).map(|i| x.powi(i as i32) * y.powi((k - 1 - i) as i32)).sum() };
    let a_minus_b = s_minus_t * geometric(s, t);
    let det_k = det1 * geometric(p, q);
    let value = (a_minus_b * a_minus_b + 4.0 * det_k).max(0.0).sqrt();
    Ok(TraceNorm { value, near_parallel: det1 <= 1e-12 * p.max(f64::MIN_POSITIVE) })
}

fn lifted_pair(u: &Field, v: &Field, alpha: f64) -> Result<(Field, Field)> {
    if alpha == 0.0 {
        Ok((u.clone(), v.clone()))
    } else {
        Ok((bessel_potential(u, alpha)?, bessel_potential(v, alpha)?))
    }
}

/// `k ‖ũ - ṽ‖ (‖ũ‖ + ‖ṽ‖)^{2k-1}`.
pub fn telescoping_bound(u: &Field, v: &Field, k: usize, alpha: f64) -> Result<f64> {
    let (ut, vt) = lifted_pair(u, v, alpha)?;
    let diff = norm(&ut.sub(&vt)?, NormKind::L2);
    let sum = norm(&ut, NormKind::L2) + norm(&vt, NormKind::L2);
    Ok(k as f64 * diff * sum.powi(2 * k as i32 - 1))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GrowthClass {
    /// Consistent with `Tr ≤ R^{2k}`.
    BoundedRadius,
    /// Consistent with `Tr ≤ e^{ck^r}`, `r > 1`, and not with any `R^{2k}` seen so far.
    SuperExponential,
}

impl GrowthClass {
    pub fn tag(&self) -> &'static str {
        match self {
            GrowthClass::BoundedRadius => "bounded-R^2k",
            GrowthClass::SuperExponential => "e^ck^r",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceDiagnostics {
    pub k: usize,
    pub alpha: f64,
    pub t: f64,
    pub value_log: f64,
    pub classification: GrowthClass,
}

impl TraceDiagnostics {
    pub const CSV_HEADER: &'static str = "k,alpha,t,value_log,classification";

    pub fn csv_row(&self) -> String {
        format!("{},{},{},{},{}", self.k, self.alpha, self.t, self.value_log, self.classification.tag())
    }
}

/// `ln Tr(S^{(k,α)}γ^{(k)})` for each `k`, tagged by whether the radius proxy
/// `ln Tr / 2k` is still growing at `k` (relative increase above `1e-3` from the
/// previous `k`). Supported radii make the proxy converge; super-exponential
/// growth keeps it increasing.
pub fn trace_growth(mu: &AtomicMeasure, ks: &[usize], alpha: f64, t: f64) -> Result<Vec<TraceDiagnostics>> {
    let mut out = Vec::with_capacity(ks.len());
    let mut prev: Option<f64> = None;
    for &k in ks {
        let value_log = trace_s_alpha(&marginal(mu, k)?, alpha)?;
        let radius = value_log / (2.0 * k as f64);
        let classification = match prev {
            Some(p) if radius > p + 1e-3 * p.abs().max(1e-300) => GrowthClass::SuperExponential,
            _ => GrowthClass::BoundedRadius,
        };
        prev = Some(radius);
        out.push(TraceDiagnostics { k, alpha, t, value_log, classification });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::Atom;
    use crate::gaussian::GaussianState;
    use crate::spectral::{BoxGrid, WaveFunction};
    use nalgebra::{DMatrix, SymmetricEigen};

    fn grid1() -> BoxGrid {
        BoxGrid::new(1, 8.0, 16).unwrap()
    }

    fn orthonormal_pair() -> (Field, Field) {
        let g = grid1();
        (Field::plane_wave(g, &[1]), Field::plane_wave(g, &[-2]))
    }

    #[test]
    fn rank_one_diff_orthonormal_values() {
        let (u, v) = orthonormal_pair();
        for k in 1..=4 {
            let t = rank_one_diff_trace_norm(&u, &v, k, 0.0).unwrap();
            assert!((t.value - 2.0).abs() < 1e-10, "k={k}: {}", t.value);
            assert!(!t.near_parallel);
        }
        let same = rank_one_diff_trace_norm(&u, &u, 3, 1.0).unwrap();
        assert_eq!(same.value, 0.0);
        assert!(same.near_parallel);
        assert!(rank_one_diff_trace_norm(&u, &v, 13, 0.0).is_err());
    }

    /// Trace norm through the full `2^k`-word Gram matrix: eigenvalues of
    /// `G^{1/2} C G^{1/2}` with `G` the k-fold Kronecker power of the one-body
    /// Gram of `ũ, ṽ`.
    fn word_gram_trace_norm(u: &Field, v: &Field, k: usize, alpha: f64) -> f64 {
        let (ut, vt) = lifted_pair(u, v, alpha).unwrap();
        let g11 = inner_product(&ut, &ut).unwrap();
        let g12 = inner_product(&ut, &vt).unwrap();
        let g22 = inner_product(&vt, &vt).unwrap();
        let one = DMatrix::from_row_slice(2, 2, &[g11, g12, g12.conj(), g22]);
        let mut gram = DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0));
        for _ in 0..k {
            gram = gram.kronecker(&one);
        }
        let n = gram.nrows();
        let eig = SymmetricEigen::new(gram);
        let mut half = eig.eigenvectors.clone();
        for (c, l) in eig.eigenvalues.iter().enumerate() {
            half.column_mut(c).scale_mut(l.max(0.0).sqrt());
        }
        let root = &half * eig.eigenvectors.adjoint();
        let mut coeff = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
        coeff[(0, 0)] = Complex64::new(1.0, 0.0);
        coeff[(n - 1, n - 1)] = Complex64::new(-1.0, 0.0);
        let sandwich = &root * coeff * &root;
        let herm = (&sandwich + sandwich.adjoint()) * Complex64::new(0.5, 0.0);
        SymmetricEigen::new(herm).eigenvalues.iter().map(|l| l.abs()).sum()
    }

    fn random_field(grid: BoxGrid, seed: u64) -> Field {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let samples = (0..grid.len()).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        Field::from_samples(grid, samples, crate::spectral::Space::Position).unwrap()
    }

    #[test]
    fn closed_form_matches_word_gram() {
        let grid = grid1();
        for seed in 0..4 {
            let u = random_field(grid, seed).scaled(Complex64::new(0.4, 0.0));
            let v = random_field(grid, seed + 100).scaled(Complex64::new(0.4, 0.0));
            for k in 1..=5 {
                for alpha in [0.0, 1.0] {
                    let fast = rank_one_diff_trace_norm(&u, &v, k, alpha).unwrap().value;
                    let slow = word_gram_trace_norm(&u, &v, k, alpha);
                    assert!((fast - slow).abs() < 1e-9 * slow.max(1.0), "k={k} α={alpha}: {fast} vs {slow}");
                }
            }
        }
    }

    #[test]
    fn brute_force_two_particle_trace_norm() {
        // explicit 4x4 operator on the orthonormal basis {u, v}⊗{u, v}
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(-1.0, 0.0),
        ]));
        let brute: f64 = SymmetricEigen::new(d).eigenvalues.iter().map(|l| l.abs()).sum();
        let (u, v) = orthonormal_pair();
        let t = rank_one_diff_trace_norm(&u, &v, 2, 0.0).unwrap();
        assert!((t.value - brute).abs() < 1e-10);
    }

    #[test]
    fn marginal_and_trace() {
        let g = GaussianState::normalized(3, 1.0).unwrap();
        let h = GaussianState::normalized(3, 0.5).unwrap();
        let mu = AtomicMeasure::new(vec![Atom::new(0.25, g), Atom::new(0.75, h)]);
        let one = marginal(&mu, 1).unwrap();
        assert_eq!(one.terms.len(), 2);
        let two = marginal(&mu, 2).unwrap();
        let traced = two.partial_trace(2).unwrap();
        assert!(traced.coefficient_distance(&one).unwrap() < 1e-12);
        assert!((two.trace().unwrap() - 1.0).norm() < 1e-12);
        assert!(marginal(&mu, 0).is_err());
        assert!(two.partial_trace(3).is_err());
    }

    #[test]
    fn trace_s_alpha_examples() {
        let a = GaussianState::normalized(3, 0.5f64.sqrt()).unwrap(); // H¹² = 4
        let mu = AtomicMeasure::single(a);
        let t = trace_s_alpha(&marginal(&mu, 3).unwrap(), 1.0).unwrap();
        assert!((t.exp() - 64.0).abs() < 1e-11);
        let b = GaussianState::normalized(3, 1.0).unwrap().with_amplitude(0.0);
        let mixed = AtomicMeasure::new(vec![Atom::new(0.5, a), Atom::new(0.5, b)]);
        let z = trace_s_alpha(&marginal(&mixed, 2).unwrap(), 0.0).unwrap();
        assert!((z.exp() - 0.5).abs() < 1e-14);
        // non-positive mixtures are refused
        let mut bad = marginal(&mu, 2).unwrap();
        bad.terms[0].1.coefficient = Complex64::new(-1.0, 0.0);
        assert!(matches!(trace_s_alpha(&bad, 1.0), Err(Error::NotPositive(_))));
    }

    #[test]
    fn b_plus_on_plane_wave_is_scalar() {
        let grid = BoxGrid::new(3, 4.0, 8).unwrap();
        let phi = OneBody::Grid(WaveFunction::new(Field::plane_wave(grid, &[1, 0, -1])));
        let mu = AtomicMeasure::single(phi.clone());
        let gamma = marginal(&mu, 2).unwrap();
        let out = apply_b(&gamma, 1, BSign::Plus).unwrap();
        let expect = phi.field().unwrap().scaled(Complex64::new(grid.volume().recip(), 0.0));
        let got = out.terms[0].1.left[0].field().unwrap();
        assert!(got.max_abs_diff(&expect).unwrap() < 1e-14);
        assert_eq!(out.terms[0].1.right[0], phi);
        assert!(apply_b(&gamma, 2, BSign::Plus).is_err());
    }

    #[test]
    fn b2_reproduces_nls_nonlinearity() {
        let grid = BoxGrid::new(1, 8.0, 16).unwrap();
        let field = Field::from_fn(grid, |x| Complex64::new((-x[0] * x[0]).exp(), 0.3 * x[0]));
        let phi = OneBody::Grid(WaveFunction::new(field.clone()));
        let gamma = marginal(&AtomicMeasure::single(phi.clone()), 2).unwrap();
        let b = apply_b_full(&gamma).unwrap();
        let nonlin = Field::triple_product(&field, &field, &field).unwrap();
        assert!(b.terms[0].1.left[0].field().unwrap().max_abs_diff(&nonlin).unwrap() < 1e-12);
        let kernel = b.dense_one_body().unwrap();
        let n = grid.len();
        let (p, q) = (field.samples(), nonlin.samples());
        for x in 0..n {
            for y in 0..n {
                let expect = q[x] * p[y].conj() - p[x] * q[y].conj();
                assert!((kernel[x * n + y] - expect).norm() < 1e-12);
            }
            assert!(kernel[x * n + x].norm() < 1e-12);
        }
    }

    #[test]
    fn gaussian_triple_matches_samples() {
        let grid = BoxGrid::new(3, 16.0, 32).unwrap();
        let a = GaussianState::normalized(3, 1.0).unwrap().with_phase(0.3);
        let b = GaussianState::normalized(3, 1.5).unwrap().with_amplitude(0.7);
        let c = GaussianState::normalized(3, 2.0).unwrap().with_phase(-0.4);
        let closed = OneBody::triple(&a.into(), &b.into(), &c.into()).unwrap();
        let sampled = Field::triple_product(
            a.sample(grid).field(),
            b.sample(grid).field(),
            c.sample(grid).field(),
        )
        .unwrap();
        assert!(closed.to_wave_function(grid).field().max_abs_diff(&sampled).unwrap() < 1e-14);
    }

    #[test]
    fn k_functional_single_gaussian() {
        let g = GaussianState::normalized(3, 1.0).unwrap();
        let mu = AtomicMeasure::single(g);
        let k1 = k_functional(&mu, 1, Coupling::Defocusing, true).unwrap();
        let expect = 0.5 * 2.5 + 0.25 * (2.0 * std::f64::consts::PI).powf(-1.5);
        assert!((k1.slot_product - expect).abs() < 1e-14);
        let k2 = k_functional(&mu, 2, Coupling::Defocusing, true).unwrap();
        assert!((k2.slot_product - expect * expect).abs() < 1e-13);
        let lin = k_functional(&mu, 1, Coupling::Defocusing, false).unwrap();
        assert!((lin.slot_product - 1.25).abs() < 1e-14);
        let unnormalized = AtomicMeasure::single(g.with_amplitude(2.0));
        assert!(k_functional(&unnormalized, 1, Coupling::Defocusing, true).is_err());
    }

    #[test]
    fn telescoping_dominates_exact() {
        let (u, v) = orthonormal_pair();
        for k in 1..=4 {
            let exact = rank_one_diff_trace_norm(&u, &v, k, 1.0).unwrap().value;
            assert!(exact <= telescoping_bound(&u, &v, k, 1.0).unwrap());
        }
    }
}
