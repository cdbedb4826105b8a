//! One-body states as they appear inside measures and tensor factors: either
//! grid samples or a closed-form Gaussian.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::Coupling;
use crate::error::{Error, Result};
use crate::gaussian::{self, GaussianState};
use crate::spectral::{self, bessel_potential, BoxGrid, Field, NormKind, WaveFunction};

/// The four norms every functional in this crate is built from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateNorms {
    pub l2: f64,
    pub hdot1: f64,
    pub l4: f64,
    pub x_moment: f64,
}

impl StateNorms {
    pub fn h1(&self) -> f64 {
        (self.l2 * self.l2 + self.hdot1 * self.hdot1).sqrt()
    }

    pub fn energy(&self, coupling: Coupling) -> f64 {
        0.5 * self.hdot1 * self.hdot1 + coupling.lambda() / 4.0 * self.l4.powi(4)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum OneBody {
    Grid(WaveFunction),
    Gaussian(GaussianState),
}

impl From<WaveFunction> for OneBody {
    fn from(w: WaveFunction) -> Self {
        OneBody::Grid(w)
    }
}

impl From<GaussianState> for OneBody {
    fn from(g: GaussianState) -> Self {
        OneBody::Gaussian(g)
    }
}

impl OneBody {
    pub fn norms(&self) -> StateNorms {
        match self {
            OneBody::Grid(w) => StateNorms {
                l2: w.l2_norm(),
                hdot1: w.norm(NormKind::HDot1),
                l4: w.norm(NormKind::L4),
                x_moment: w.norm(NormKind::WeightedX),
            },
            OneBody::Gaussian(g) => StateNorms {
                l2: g.l2(),
                hdot1: g.hdot1(),
                l4: g.l4(),
                x_moment: g.x_moment(),
            },
        }
    }

    pub fn l2(&self) -> f64 {
        match self {
            OneBody::Grid(w) => w.l2_norm(),
            OneBody::Gaussian(g) => g.l2(),
        }
    }

    /// `‖(1-Δ)^{α/2} φ‖²`, computed from the Fourier side.
    pub fn h_alpha_sq(&self, alpha: f64) -> f64 {
        match self {
            OneBody::Grid(w) => w.norm(NormKind::HAlpha(alpha)).powi(2),
            OneBody::Gaussian(g) => g.h_alpha_sq(alpha),
        }
    }

    pub fn with_phase(&self, theta: f64) -> Self {
        match self {
            OneBody::Grid(w) => OneBody::Grid(w.with_phase(theta)),
            OneBody::Gaussian(g) => OneBody::Gaussian(g.with_phase(g.phase + theta)),
        }
    }

    pub fn grid(&self) -> Option<&BoxGrid> {
        match self {
            OneBody::Grid(w) => Some(w.grid()),
            OneBody::Gaussian(_) => None,
        }
    }

    pub fn field(&self) -> Option<&Field> {
        match self {
            OneBody::Grid(w) => Some(w.field()),
            OneBody::Gaussian(_) => None,
        }
    }

    pub fn to_wave_function(&self, grid: BoxGrid) -> WaveFunction {
        match self {
            OneBody::Grid(w) => w.clone(),
            OneBody::Gaussian(g) => g.sample(grid),
        }
    }

    fn common_grid(&self, other: &OneBody) -> Option<BoxGrid> {
        self.grid().or(other.grid()).copied()
    }

    /// `⟨self, other⟩`.
    pub fn inner(&self, other: &OneBody) -> Result<Complex64> {
        match (self, other) {
            (OneBody::Gaussian(a), OneBody::Gaussian(b)) => Ok(gaussian::overlap(a, b)),
            _ => {
                let grid = self.common_grid(other).expect("one side is on a grid");
                spectral::inner_product(
                    self.to_wave_function(grid).field(),
                    other.to_wave_function(grid).field(),
                )
            }
        }
    }

    /// `⟨self, (1-Δ) other⟩`.
    pub fn h1_pairing(&self, other: &OneBody) -> Result<Complex64> {
        match (self, other) {
            (OneBody::Gaussian(a), OneBody::Gaussian(b)) => {
                Ok(gaussian::overlap(a, b) + gaussian::gradient_overlap(a, b))
            }
            _ => {
                let grid = self.common_grid(other).expect("one side is on a grid");
                let lifted = bessel_potential(other.to_wave_function(grid).field(), 2.0)?;
                spectral::inner_product(self.to_wave_function(grid).field(), &lifted)
            }
        }
    }

    /// `∫ conj(self) b c conj(e)`.
    pub fn quartic(&self, b: &OneBody, c: &OneBody, e: &OneBody) -> Result<Complex64> {
        match (self, b, c, e) {
            (OneBody::Gaussian(a), OneBody::Gaussian(b), OneBody::Gaussian(c), OneBody::Gaussian(e)) => {
                Ok(gaussian::quartic_overlap(a, b, c, e))
            }
            _ => {
                let grid = [self, b, c, e]
                    .iter()
                    .find_map(|s| s.grid().copied())
                    .expect("one side is on a grid");
                let prod = Field::triple_product(
                    b.to_wave_function(grid).field(),
                    c.to_wave_function(grid).field(),
                    e.to_wave_function(grid).field(),
                )?;
                spectral::inner_product(self.to_wave_function(grid).field(), &prod)
            }
        }
    }

    /// Pointwise product `a · b · conj(c)`; closed form when all three are Gaussians.
    pub fn triple(a: &OneBody, b: &OneBody, c: &OneBody) -> Result<OneBody> {
        match (a, b, c) {
            (OneBody::Gaussian(a), OneBody::Gaussian(b), OneBody::Gaussian(c)) => {
                let d = a.dim as f64;
                let peak: f64 = [a, b, c]
                    .iter()
                    .map(|s| s.amplitude * (std::f64::consts::PI * s.sigma * s.sigma).powf(-d / 4.0))
                    .product();
                let inv: f64 = [a, b, c].iter().map(|s| 1.0 / (s.sigma * s.sigma)).sum();
                let sigma = inv.sqrt().recip();
                let norm = (std::f64::consts::PI * sigma * sigma).powf(-d / 4.0);
                let g = GaussianState::normalized(a.dim, sigma)?
                    .with_amplitude(peak / norm)
                    .with_phase(a.phase + b.phase - c.phase);
                Ok(OneBody::Gaussian(g))
            }
            _ => {
                let grid = [a, b, c]
                    .iter()
                    .find_map(|s| s.grid().copied())
                    .expect("one factor is on a grid");
                let f = Field::triple_product(
                    a.to_wave_function(grid).field(),
                    b.to_wave_function(grid).field(),
                    c.to_wave_function(grid).field(),
                )?;
                Ok(OneBody::Grid(WaveFunction::new(f)))
            }
        }
    }

    /// Requires a grid representation.
    pub fn require_field(&self, what: &str) -> Result<&Field> {
        self.field()
            .ok_or_else(|| Error::Unsupported(format!("{what} needs grid-sampled factors")))
    }
}
