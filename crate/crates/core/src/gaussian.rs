//! Closed-form isotropic Gaussians `A e^{iθ} (πσ²)^{-d/4} exp(-|x|²/(2σ²))`.
//!
//! These are the authoritative evaluation path for dyadic shell atoms whose
//! width `σ 2^{-j}` is far below any grid spacing we can afford.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logspace::compensated_sum;
use crate::spectral::{BoxGrid, Field, WaveFunction};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianState {
    pub dim: usize,
    pub sigma: f64,
    pub amplitude: f64,
    pub phase: f64,
}

impl GaussianState {
    pub fn normalized(dim: usize, sigma: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidParameter(format!("dimension {dim}")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("width {sigma} must be positive")));
        }
        Ok(Self { dim, sigma, amplitude: 1.0, phase: 0.0 })
    }

    pub fn with_amplitude(self, amplitude: f64) -> Self {
        Self { amplitude, ..self }
    }

    pub fn with_phase(self, phase: f64) -> Self {
        Self { phase, ..self }
    }

    /// `2^{dj/2} g(2^j x)`: same L² norm, width divided by `2^j`.
    pub fn rescaled(self, j: u32) -> Self {
        Self { sigma: self.sigma / 2f64.powi(j as i32), ..self }
    }

    fn d(&self) -> f64 {
        self.dim as f64
    }

    pub fn l2(&self) -> f64 {
        self.amplitude
    }

    pub fn hdot1(&self) -> f64 {
        self.amplitude * (self.d() / (2.0 * self.sigma * self.sigma)).sqrt()
    }

    pub fn l4(&self) -> f64 {
        self.amplitude * (2.0 * PI * self.sigma * self.sigma).powf(-self.d() / 8.0)
    }

    pub fn x_moment(&self) -> f64 {
        self.amplitude * (self.d() * self.sigma * self.sigma / 2.0).sqrt()
    }

    /// `‖(1-Δ)^{α/2} ψ‖²` by quadrature of the Fourier-side radial density.
    ///
    /// Substituting `|ξ| = e^u` turns the integral into one over the real line
    /// with double-exponential decay at both ends, where the trapezoid rule
    /// converges geometrically.
    pub fn h_alpha_sq(&self, alpha: f64) -> f64 {
        let d = self.dim as i32;
        let s2 = self.sigma * self.sigma;
        let sphere = match self.dim {
            1 => 2.0,
            2 => 2.0 * PI,
            _ => 4.0 * PI,
        };
        let pref = sphere * (s2 / PI).powf(self.d() / 2.0);
        let step = 0.02;
        let u_hi = (40.0 / self.sigma).ln();
        let u_lo = -80.0 / self.d() + u_hi.min(0.0);
        let n = ((u_hi - u_lo) / step).ceil() as usize;
        let vals = (0..=n).map(|i| {
            let u = u_lo + i as f64 * step;
            let xi = u.exp();
            let xi2 = xi * xi;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            w * (1.0 + xi2).powf(alpha) * xi.powi(d) * (-s2 * xi2).exp()
        });
        self.amplitude * self.amplitude * pref * step * compensated_sum(vals)
    }

    pub fn value_at(&self, x: [f64; 3]) -> Complex64 {
        let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
        let norm = (PI * self.sigma * self.sigma).powf(-self.d() / 4.0);
        Complex64::from_polar(
            self.amplitude * norm * (-r2 / (2.0 * self.sigma * self.sigma)).exp(),
            self.phase,
        )
    }

    /// Grid spacing needed so that `4σ` spans at least eight samples.
    pub fn resolved_on(&self, grid: &BoxGrid) -> std::result::Result<(), String> {
        if grid.dim() != self.dim {
            return Err(format!("grid dimension {} != {}", grid.dim(), self.dim));
        }
        let h = grid.spacing();
        if 4.0 * self.sigma < 8.0 * h {
            return Err(format!(
                "width 4σ = {:.3e} spans fewer than 8 samples of spacing {:.3e}",
                4.0 * self.sigma,
                h
            ));
        }
        if grid.extent() / 2.0 < 6.0 * self.sigma {
            return Err(format!(
                "half box {:.3e} is below 6σ = {:.3e}",
                grid.extent() / 2.0,
                6.0 * self.sigma
            ));
        }
        Ok(())
    }

    pub fn sample(&self, grid: BoxGrid) -> WaveFunction {
        let g = *self;
        WaveFunction::new(Field::from_fn(grid, move |x| g.value_at(x)))
    }
}

/// `∫ conj(a) b` for two centered Gaussians.
pub fn overlap(a: &GaussianState, b: &GaussianState) -> Complex64 {
    let (sa, sb) = (a.sigma, b.sigma);
    let mag = (2.0 * sa * sb / (sa * sa + sb * sb)).powf(a.d() / 2.0);
    Complex64::from_polar(a.amplitude * b.amplitude * mag, b.phase - a.phase)
}

/// `⟨∇a, ∇b⟩`.
pub fn gradient_overlap(a: &GaussianState, b: &GaussianState) -> Complex64 {
    overlap(a, b) * (a.d() / (a.sigma * a.sigma + b.sigma * b.sigma))
}

/// `∫ conj(a) b c conj(e)` for centered Gaussians.
pub fn quartic_overlap(a: &GaussianState, b: &GaussianState, c: &GaussianState, e: &GaussianState) -> Complex64 {
    let d = a.d();
    let states = [a, b, c, e];
    let norm: f64 = states
        .iter()
        .map(|s| s.amplitude * (PI * s.sigma * s.sigma).powf(-d / 4.0))
        .product();
    let inv: f64 = states.iter().map(|s| 1.0 / (s.sigma * s.sigma)).sum();
    let gauss = (2.0 * PI / inv).powf(d / 2.0);
    Complex64::from_polar(norm * gauss, b.phase + c.phase - a.phase - e.phase)
}
