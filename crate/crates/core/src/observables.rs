//! Conserved quantities, virial rates and scale-invariant inequality ratios.
//!
//! Momentum and angular momentum use `P = i∫φ̄∇φ` and `L = i∫φ̄ x∧∇φ`, so a
//! plane wave `e^{iξ·x}` carries `P = -ξ`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Coupling, Trajectory};
use crate::error::{Error, Result};
use crate::spectral::{derivative, inner_product, norm, Field, NormKind, WaveFunction};

pub const CSV_HEADER: &str = "t,M,Px,Py,Pz,Lx,Ly,Lz,E,V,H1,Hdot1,L4,virial_rate,virial_accel";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservableRecord {
    pub t: f64,
    pub mass: f64,
    pub momentum: [f64; 3],
    pub angular_momentum: [f64; 3],
    pub energy: f64,
    pub variance: f64,
    pub h1: f64,
    pub hdot1: f64,
    pub l4: f64,
    /// `dV/dt = 4 Im ∫ φ̄ x·∇φ`.
    pub virial_rate: f64,
    /// `d²V/dt² = 8‖∇φ‖² + 2dλ‖φ‖⁴_{L⁴}`.
    pub virial_accel: f64,
}

impl ObservableRecord {
    pub fn csv_row(&self) -> String {
        let vals = [
            self.t,
            self.mass,
            self.momentum[0],
            self.momentum[1],
            self.momentum[2],
            self.angular_momentum[0],
            self.angular_momentum[1],
            self.angular_momentum[2],
            self.energy,
            self.variance,
            self.h1,
            self.hdot1,
            self.l4,
            self.virial_rate,
            self.virial_accel,
        ];
        vals.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
    }
}

/// Second time derivative of the variance; `None` is the free flow.
pub fn virial_acceleration(dim: usize, hdot1: f64, l4: f64, coupling: Option<Coupling>) -> f64 {
    let lambda = coupling.map_or(0.0, Coupling::lambda);
    8.0 * hdot1 * hdot1 + 2.0 * dim as f64 * lambda * l4.powi(4)
}

pub fn measure(phi: &WaveFunction, coupling: Coupling, t: f64) -> ObservableRecord {
    let f = phi.field();
    let grid = *f.grid();
    let dim = grid.dim();
    let grads: Vec<Field> = (0..3)
        .map(|a| derivative(f, a).expect("axis derivative of a position field"))
        .collect();
    let i = Complex64::new(0.0, 1.0);

    let mut momentum = [0.0; 3];
    for (a, g) in grads.iter().enumerate().take(dim) {
        momentum[a] = (i * inner_product(f, g).expect("same grid")).re;
    }

    // moments of the gradient against each coordinate: m[a][b] = ∫ φ̄ x_a ∂_b φ
    let x_fields: Vec<Field> = (0..dim)
        .map(|a| {
            let mut xf = f.clone();
            for (idx, v) in xf.samples_mut().iter_mut().enumerate() {
                *v *= grid.position(idx)[a];
            }
            xf
        })
        .collect();
    let mut m = [[Complex64::new(0.0, 0.0); 3]; 3];
    for a in 0..dim {
        for b in 0..dim {
            m[a][b] = inner_product(&x_fields[a], &grads[b]).expect("same grid");
        }
    }
    let mut angular_momentum = [0.0; 3];
    for (a, slot) in angular_momentum.iter_mut().enumerate() {
        let (b, c) = ((a + 1) % 3, (a + 2) % 3);
        *slot = (i * (m[b][c] - m[c][b])).re;
    }
    let virial_rate = 4.0 * (0..dim).map(|a| m[a][a].im).sum::<f64>();

    let mass = phi.l2_norm().powi(2);
    let hdot1 = norm(f, NormKind::HDot1);
    let l4 = norm(f, NormKind::L4);
    let x = norm(f, NormKind::WeightedX);
    let energy = 0.5 * hdot1 * hdot1 + coupling.lambda() / 4.0 * l4.powi(4);
    ObservableRecord {
        t,
        mass,
        momentum,
        angular_momentum,
        energy,
        variance: x * x,
        h1: (mass + hdot1 * hdot1).sqrt(),
        hdot1,
        l4,
        virial_rate,
        virial_accel: virial_acceleration(dim, hdot1, l4, Some(coupling)),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VirialReport {
    /// `max |ΔV/Δt - V'| / max(1, |V'|)` over interior snapshots.
    pub rate_mismatch: f64,
    /// Same comparison between the differenced rate and the acceleration.
    pub accel_mismatch: f64,
    pub records: Vec<ObservableRecord>,
}

impl VirialReport {
    pub fn max_mismatch(&self) -> f64 {
        self.rate_mismatch.max(self.accel_mismatch)
    }
}

/// Centered differences of `V` and `V'` against the virial formulas.
/// `None` compares against the free flow.
pub fn virial_consistency(trajectory: &Trajectory, coupling: Option<Coupling>) -> Result<VirialReport> {
    let n = trajectory.snapshots.len();
    if n < 5 {
        return Err(Error::TooFewSnapshots { needed: 5, found: n });
    }
    let dt = trajectory.uniform_spacing().ok_or(Error::NonUniformSnapshots)?;
    let records: Vec<ObservableRecord> = trajectory
        .snapshots
        .iter()
        .map(|s| {
            let mut r = measure(&s.state, coupling.unwrap_or(Coupling::Defocusing), s.t);
            r.virial_accel = virial_acceleration(s.state.grid().dim(), r.hdot1, r.l4, coupling);
            r
        })
        .collect();
    let mut rate_mismatch = 0.0_f64;
    let mut accel_mismatch = 0.0_f64;
    for w in records.windows(3) {
        let fd_rate = (w[2].variance - w[0].variance) / (2.0 * dt);
        let fd_accel = (w[2].virial_rate - w[0].virial_rate) / (2.0 * dt);
        rate_mismatch = rate_mismatch.max((fd_rate - w[1].virial_rate).abs() / w[1].virial_rate.abs().max(1.0));
        accel_mismatch =
            accel_mismatch.max((fd_accel - w[1].virial_accel).abs() / w[1].virial_accel.abs().max(1.0));
    }
    Ok(VirialReport { rate_mismatch, accel_mismatch, records })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityRatios {
    /// `‖φ‖_{L⁴} / (‖φ‖_{Ḣ¹}^{d/4} ‖φ‖_{L²}^{1-d/4})`.
    pub gn_ratio: f64,
    /// `‖φ‖²_{L²} / (‖xφ‖ ‖φ‖_{Ḣ¹})`.
    pub uncertainty_ratio: f64,
}

pub fn inequality_ratios(phi: &WaveFunction) -> Result<InequalityRatios> {
    let l2 = phi.l2_norm();
    if l2 == 0.0 {
        return Err(Error::ZeroField);
    }
    let d = phi.grid().dim() as f64;
    let hdot1 = phi.norm(NormKind::HDot1);
    let l4 = phi.norm(NormKind::L4);
    let x = phi.norm(NormKind::WeightedX);
    Ok(InequalityRatios {
        gn_ratio: l4 / (hdot1.powf(d / 4.0) * l2.powf(1.0 - d / 4.0)),
        uncertainty_ratio: l2 * l2 / (x * hdot1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::GaussianState;
    use crate::spectral::BoxGrid;
    use std::f64::consts::PI;

    #[test]
    fn real_field_has_no_currents() {
        let grid = BoxGrid::new(3, 16.0, 32).unwrap();
        let phi = GaussianState::normalized(3, 1.3).unwrap().sample(grid);
        let r = measure(&phi, Coupling::Defocusing, 0.0);
        for a in 0..3 {
            assert!(r.momentum[a].abs() < 1e-13);
            assert!(r.angular_momentum[a].abs() < 1e-13);
        }
        assert!(r.virial_rate.abs() < 1e-13);
        assert!((r.h1 * r.h1 - r.mass - r.hdot1 * r.hdot1).abs() < 1e-10 * r.h1 * r.h1);
    }

    #[test]
    fn plane_wave_momentum_is_minus_xi() {
        let grid = BoxGrid::new(3, 8.0, 16).unwrap();
        let modes = [2, -1, 3];
        let phi = WaveFunction::new(Field::plane_wave(grid, &modes));
        let r = measure(&phi, Coupling::Focusing, 0.0);
        for a in 0..3 {
            let xi = 2.0 * PI * modes[a] as f64 / 8.0;
            assert!((r.momentum[a] + xi).abs() < 1e-12);
        }
    }

    #[test]
    fn angular_momentum_of_vortex() {
        // (x + iy) ψ carries L_z = i∫φ̄(x∂_y - y∂_x)φ = -M for this convention
        let grid = BoxGrid::new(3, 16.0, 32).unwrap();
        let g = GaussianState::normalized(3, 1.0).unwrap();
        let field = Field::from_fn(grid, move |x| g.value_at(x) * Complex64::new(x[0], x[1]));
        let phi = WaveFunction::normalized(field).unwrap();
        let r = measure(&phi, Coupling::Defocusing, 0.0);
        assert!((r.angular_momentum[2] + 1.0).abs() < 1e-10, "{:?}", r.angular_momentum);
        assert!(r.angular_momentum[0].abs() < 1e-12 && r.angular_momentum[1].abs() < 1e-12);
    }

    #[test]
    fn gaussian_energy_closed_form() {
        let grid = BoxGrid::new(3, 16.0, 64).unwrap();
        let phi = GaussianState::normalized(3, 1.0).unwrap().sample(grid);
        let r = measure(&phi, Coupling::Defocusing, 0.0);
        let exact = 0.75 + 0.25 * (2.0 * PI).powf(-1.5);
        assert!((r.energy - exact).abs() < 1e-10);
        assert!((r.variance - 1.5).abs() < 1e-10);
    }

    #[test]
    fn ratios_are_scale_invariant() {
        let grid = BoxGrid::new(3, 16.0, 64).unwrap();
        for sigma in [0.8, 1.0, 1.4] {
            let phi = GaussianState::normalized(3, sigma).unwrap().sample(grid);
            let q = inequality_ratios(&phi).unwrap();
            assert!((q.gn_ratio - (3.0 * PI).powf(-0.375)).abs() < 1e-9);
            assert!((q.uncertainty_ratio - 2.0 / 3.0).abs() < 1e-9);
        }
        let zero = WaveFunction::new(Field::zeros(grid, crate::spectral::Space::Position));
        assert_eq!(inequality_ratios(&zero), Err(Error::ZeroField));
    }

    #[test]
    fn csv_row_has_header_arity() {
        let grid = BoxGrid::new(1, 8.0, 16).unwrap();
        let phi = GaussianState::normalized(1, 1.0).unwrap().sample(grid);
        let row = measure(&phi, Coupling::Defocusing, 0.5).csv_row();
        assert_eq!(row.split(',').count(), CSV_HEADER.split(',').count());
        assert!(row.starts_with("0.5,"));
    }

    #[test]
    fn too_few_snapshots() {
        let grid = BoxGrid::new(1, 8.0, 16).unwrap();
        let phi = GaussianState::normalized(1, 1.0).unwrap().sample(grid);
        let traj = Trajectory::from_snapshots(vec![crate::dynamics::Snapshot { t: 0.0, state: phi }], 1e3).unwrap();
        assert_eq!(
            virial_consistency(&traj, None).unwrap_err(),
            Error::TooFewSnapshots { needed: 5, found: 1 }
        );
    }
}
