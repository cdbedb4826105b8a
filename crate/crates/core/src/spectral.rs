//! Periodic-box spectral representation of one-body states.
//!
//! Position samples live at `x_i = (i - N/2) h` on every axis, so the box is
//! centered on the origin. Frequency samples are the coefficients of the field
//! in the orthonormal basis `exp(i ξ·x) / L^{d/2}`, stored in FFT order. With
//! that convention the L² norm is `h^d Σ|f|²` in position space and `Σ|f̂|²` in
//! frequency space, with no extra factors.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::fft_nd;
use crate::logspace::compensated_sum;

const SUM_CHUNK: usize = 4096;

/// Deterministic parallel reduction: fixed chunks summed in parallel, then
/// combined in chunk order.
pub(crate) fn chunked_sum<T, F>(data: &[T], f: F) -> f64
where
    T: Sync,
    F: Fn(usize, &T) -> f64 + Sync,
{
    let partial: Vec<f64> = data
        .par_chunks(SUM_CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let base = c * SUM_CHUNK;
            compensated_sum(chunk.iter().enumerate().map(|(i, v)| f(base + i, v)))
        })
        .collect();
    compensated_sum(partial)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxGrid {
    dim: usize,
    extent: f64,
    points: usize,
}

impl BoxGrid {
    pub fn new(dim: usize, extent: f64, points: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in 1..=3")));
        }
        if !(extent > 0.0 && extent.is_finite()) {
            return Err(Error::InvalidGrid(format!("extent {extent} must be positive")));
        }
        if points < 8 || !points.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "points per axis {points} must be a power of two >= 8"
            )));
        }
        Ok(Self { dim, extent, points })
    }

    /// `d = 3, L = 16, N = 64`.
    pub fn reference() -> Self {
        Self { dim: 3, extent: 16.0, points: 64 }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn spacing(&self) -> f64 {
        self.extent / self.points as f64
    }

    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn volume(&self) -> f64 {
        self.extent.powi(self.dim as i32)
    }

    /// Largest representable wavenumber `π / h`.
    pub fn nyquist(&self) -> f64 {
        PI / self.spacing()
    }

    /// Signed frequency index of storage position `i` on one axis.
    pub fn freq_index(&self, i: usize) -> i64 {
        let n = self.points as i64;
        let i = i as i64;
        if i < n / 2 {
            i
        } else {
            i - n
        }
    }

    pub fn wavenumber(&self, i: usize) -> f64 {
        2.0 * PI * self.freq_index(i) as f64 / self.extent
    }

    pub fn coordinate(&self, i: usize) -> f64 {
        (i as f64 - (self.points / 2) as f64) * self.spacing()
    }

    /// Per-axis storage indices of a flat index; absent axes are zero.
    pub fn axis_indices(&self, flat: usize) -> [usize; 3] {
        let mut idx = [0usize; 3];
        let mut rest = flat;
        for axis in (0..self.dim).rev() {
            idx[axis] = rest % self.points;
            rest /= self.points;
        }
        idx
    }

    /// Position of a flat sample; absent axes have coordinate zero.
    pub fn position(&self, flat: usize) -> [f64; 3] {
        let idx = self.axis_indices(flat);
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = self.coordinate(idx[a]);
        }
        x
    }

    /// Wavevector of a flat frequency sample; absent axes are zero.
    pub fn wavevector(&self, flat: usize) -> [f64; 3] {
        let idx = self.axis_indices(flat);
        let mut k = [0.0; 3];
        for a in 0..self.dim {
            k[a] = self.wavenumber(idx[a]);
        }
        k
    }

    /// Flat index of a signed frequency multi-index.
    pub fn mode_index(&self, modes: &[i64]) -> usize {
        let n = self.points as i64;
        modes.iter().take(self.dim).fold(0usize, |acc, &m| {
            acc * self.points + m.rem_euclid(n) as usize
        })
    }

    /// |ξ|² for every frequency sample.
    pub fn xi_squared(&self) -> Vec<f64> {
        (0..self.len())
            .into_par_iter()
            .map(|i| {
                let k = self.wavevector(i);
                k[0] * k[0] + k[1] * k[1] + k[2] * k[2]
            })
            .collect()
    }

    /// True for modes outside the 2/3-rule band on any axis (`|n| > N/3`).
    pub fn dealias_tail(&self) -> Vec<bool> {
        let cut = self.points as i64 / 3;
        (0..self.len())
            .into_par_iter()
            .map(|i| {
                let idx = self.axis_indices(i);
                (0..self.dim).any(|a| self.freq_index(idx[a]).abs() > cut)
            })
            .collect()
    }

    /// `(-1)^{Σ n_a}`: phase linking the FFT origin to the centered box.
    fn centering_sign(&self, flat: usize) -> f64 {
        let idx = self.axis_indices(flat);
        let parity: usize = idx.iter().take(self.dim).sum();
        if parity.is_multiple_of(2) {
            1.0
        } else {
            -1.0
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Space {
    Position,
    Frequency,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: BoxGrid,
    samples: Vec<Complex64>,
    space: Space,
}

impl Field {
    pub fn zeros(grid: BoxGrid, space: Space) -> Self {
        Self { grid, samples: vec![Complex64::new(0.0, 0.0); grid.len()], space }
    }

    pub fn from_samples(grid: BoxGrid, samples: Vec<Complex64>, space: Space) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(Error::SampleCount { expected: grid.len(), found: samples.len() });
        }
        Ok(Self { grid, samples, space })
    }

    /// Samples `f(x)` on the position grid.
    pub fn from_fn<F>(grid: BoxGrid, f: F) -> Self
    where
        F: Fn([f64; 3]) -> Complex64 + Sync,
    {
        let samples = (0..grid.len()).into_par_iter().map(|i| f(grid.position(i))).collect();
        Self { grid, samples, space: Space::Position }
    }

    /// `exp(i ξ·x) / L^{d/2}` for the signed mode numbers `modes`.
    pub fn plane_wave(grid: BoxGrid, modes: &[i64]) -> Self {
        let mut k = [0.0; 3];
        for (a, m) in modes.iter().take(grid.dim()).enumerate() {
            k[a] = 2.0 * PI * *m as f64 / grid.extent();
        }
        let norm = grid.volume().sqrt().recip();
        Self::from_fn(grid, move |x| {
            Complex64::from_polar(norm, k[0] * x[0] + k[1] * x[1] + k[2] * x[2])
        })
    }

    pub fn grid(&self) -> &BoxGrid {
        &self.grid
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [Complex64] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn same_grid(&self, other: &Field) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn transform(&self, direction: Direction) -> Result<Field> {
        let expected = match direction {
            Direction::Forward => Space::Position,
            Direction::Inverse => Space::Frequency,
        };
        if self.space != expected {
            return Err(Error::SpaceMismatch { expected, found: self.space });
        }
        let mut out = self.clone();
        out.transform_in_place();
        Ok(out)
    }

    /// Switches space in place, whichever way is needed.
    pub(crate) fn transform_in_place(&mut self) {
        let grid = self.grid;
        let d = grid.dim();
        let vol_sqrt = grid.volume().sqrt();
        match self.space {
            Space::Position => {
                fft_nd(&mut self.samples, d, grid.points(), false);
                let scale = grid.cell_volume() / vol_sqrt;
                self.samples
                    .par_iter_mut()
                    .enumerate()
                    .for_each(|(i, v)| *v *= scale * grid.centering_sign(i));
                self.space = Space::Frequency;
            }
            Space::Frequency => {
                let scale = vol_sqrt.recip();
                self.samples
                    .par_iter_mut()
                    .enumerate()
                    .for_each(|(i, v)| *v *= scale * grid.centering_sign(i));
                fft_nd(&mut self.samples, d, grid.points(), true);
                self.space = Space::Position;
            }
        }
    }

    pub fn to_space(&self, space: Space) -> Field {
        if self.space == space {
            self.clone()
        } else {
            let mut out = self.clone();
            out.transform_in_place();
            out
        }
    }

    pub fn into_space(mut self, space: Space) -> Field {
        if self.space != space {
            self.transform_in_place();
        }
        self
    }

    pub fn to_position(&self) -> Field {
        self.to_space(Space::Position)
    }

    pub fn to_frequency(&self) -> Field {
        self.to_space(Space::Frequency)
    }

    pub fn scaled(&self, c: Complex64) -> Field {
        let mut out = self.clone();
        out.samples.par_iter_mut().for_each(|v| *v *= c);
        out
    }

    /// `self + c·other`, in `self`'s space.
    pub fn axpy(&self, c: Complex64, other: &Field) -> Result<Field> {
        self.same_grid(other)?;
        let other = other.to_space(self.space);
        let mut out = self.clone();
        out.samples
            .par_iter_mut()
            .zip(other.samples.par_iter())
            .for_each(|(a, b)| *a += c * b);
        Ok(out)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.axpy(Complex64::new(-1.0, 0.0), other)
    }

    /// Pointwise product `a·b·conj(c)` in position space.
    pub fn triple_product(a: &Field, b: &Field, c: &Field) -> Result<Field> {
        a.same_grid(b)?;
        a.same_grid(c)?;
        let (a, b, c) = (a.to_position(), b.to_position(), c.to_position());
        let samples = a
            .samples
            .par_iter()
            .zip(b.samples.par_iter())
            .zip(c.samples.par_iter())
            .map(|((x, y), z)| x * y * z.conj())
            .collect();
        Ok(Field { grid: a.grid, samples, space: Space::Position })
    }

    pub fn max_abs_diff(&self, other: &Field) -> Result<f64> {
        self.same_grid(other)?;
        let other = other.to_space(self.space);
        Ok(self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    pub fn is_finite(&self) -> bool {
        self.samples.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

/// Multiplies by `symbol(ξ)` in frequency space; the result is returned in the
/// caller's space.
pub fn apply_multiplier<S>(f: &Field, symbol: S) -> Result<Field>
where
    S: Fn([f64; 3]) -> Complex64 + Sync,
{
    let space = f.space();
    let mut g = f.to_frequency();
    let grid = *g.grid();
    let bad = g
        .samples
        .par_iter_mut()
        .enumerate()
        .filter_map(|(i, v)| {
            let s = symbol(grid.wavevector(i));
            if s.re.is_finite() && s.im.is_finite() {
                *v *= s;
                None
            } else {
                Some(i)
            }
        })
        .min();
    if let Some(i) = bad {
        return Err(Error::NonFiniteSymbol(i));
    }
    Ok(g.into_space(space))
}

/// `(1 - Δ)^{α/2}`.
pub fn bessel_potential(f: &Field, alpha: f64) -> Result<Field> {
    apply_multiplier(f, |k| {
        let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
        Complex64::new((1.0 + k2).powf(alpha / 2.0), 0.0)
    })
}

/// ∂/∂x_axis, spectrally. The Nyquist mode is dropped so real fields stay real.
pub fn derivative(f: &Field, axis: usize) -> Result<Field> {
    let grid = *f.grid();
    if axis >= grid.dim() {
        return Ok(Field::zeros(grid, f.space()));
    }
    let nyq = grid.points() / 2;
    let space = f.space();
    let mut g = f.to_frequency();
    g.samples.par_iter_mut().enumerate().for_each(|(i, v)| {
        let idx = grid.axis_indices(i)[axis];
        if idx == nyq {
            *v = Complex64::new(0.0, 0.0);
        } else {
            *v *= Complex64::new(0.0, grid.wavenumber(idx));
        }
    });
    Ok(g.into_space(space))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NormKind {
    L2,
    L4,
    HDot1,
    HAlpha(f64),
    /// ‖xφ‖_{L²} about the box center.
    WeightedX,
}

pub fn norm(f: &Field, kind: NormKind) -> f64 {
    let grid = *f.grid();
    match kind {
        NormKind::L2 => match f.space() {
            Space::Position => (grid.cell_volume() * chunked_sum(f.samples(), |_, v| v.norm_sqr())).sqrt(),
            Space::Frequency => chunked_sum(f.samples(), |_, v| v.norm_sqr()).sqrt(),
        },
        NormKind::L4 => {
            let p = f.to_position();
            let s = chunked_sum(p.samples(), |_, v| {
                let a = v.norm_sqr();
                a * a
            });
            (grid.cell_volume() * s).powf(0.25)
        }
        NormKind::HDot1 => {
            let q = f.to_frequency();
            chunked_sum(q.samples(), |i, v| {
                let k = grid.wavevector(i);
                (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) * v.norm_sqr()
            })
            .sqrt()
        }
        NormKind::HAlpha(alpha) => {
            let q = f.to_frequency();
            chunked_sum(q.samples(), |i, v| {
                if alpha == 0.0 {
                    return v.norm_sqr();
                }
                let k = grid.wavevector(i);
                (1.0 + k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).powf(alpha) * v.norm_sqr()
            })
            .sqrt()
        }
        NormKind::WeightedX => {
            let p = f.to_position();
            let s = chunked_sum(p.samples(), |i, v| {
                let x = grid.position(i);
                (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) * v.norm_sqr()
            });
            (grid.cell_volume() * s).sqrt()
        }
    }
}

/// `⟨f, g⟩ = ∫ conj(f) g`, evaluated in `f`'s space.
pub fn inner_product(f: &Field, g: &Field) -> Result<Complex64> {
    f.same_grid(g)?;
    let g = g.to_space(f.space());
    let weight = match f.space() {
        Space::Position => f.grid().cell_volume(),
        Space::Frequency => 1.0,
    };
    let gs = g.samples();
    let re = chunked_sum(f.samples(), |i, a| (a.conj() * gs[i]).re);
    let im = chunked_sum(f.samples(), |i, a| (a.conj() * gs[i]).im);
    Ok(Complex64::new(re, im) * weight)
}

/// A one-body state with its cached L² norm. Samples are kept in position space.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveFunction {
    field: Field,
    l2_norm: f64,
}

impl WaveFunction {
    pub fn new(field: Field) -> Self {
        let field = field.into_space(Space::Position);
        let l2_norm = norm(&field, NormKind::L2);
        Self { field, l2_norm }
    }

    /// Rescales to unit L² norm.
    pub fn normalized(field: Field) -> Result<Self> {
        let w = Self::new(field);
        if w.l2_norm == 0.0 {
            return Err(Error::ZeroField);
        }
        let field = w.field.scaled(Complex64::new(w.l2_norm.recip(), 0.0));
        Ok(Self::new(field))
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn into_field(self) -> Field {
        self.field
    }

    pub fn grid(&self) -> &BoxGrid {
        self.field.grid()
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm
    }

    pub fn is_normalized(&self) -> bool {
        (self.l2_norm - 1.0).abs() <= 1e-10
    }

    pub fn norm(&self, kind: NormKind) -> f64 {
        match kind {
            NormKind::L2 => self.l2_norm,
            other => norm(&self.field, other),
        }
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        Self::new(self.field.scaled(c))
    }

    pub fn with_phase(&self, theta: f64) -> Self {
        self.scaled(Complex64::from_polar(1.0, theta))
    }
}
