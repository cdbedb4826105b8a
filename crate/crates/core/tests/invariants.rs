use num_complex::Complex64;
use proptest::prelude::*;

use gpdf_core::blowup::{instantaneous_blowup_sweep, lemma_sum_check, radii_retaining, BlowupCertificate};
use gpdf_core::dynamics::{evolve, reverse_step, strang_step, Coupling, SolverConfig};
use gpdf_core::ensemble::{
    build_blowup_measure, chebyshev_support_bound, Atom, AtomicMeasure, Functional, GaussianProfile, Representation,
};
use gpdf_core::gaussian::GaussianState;
use gpdf_core::hierarchy::{marginal, rank_one_diff_trace_norm, telescoping_bound, trace_s_alpha};
use gpdf_core::logspace::log_sum_exp;
use gpdf_core::spectral::{norm, BoxGrid, Field, NormKind, WaveFunction};
use gpdf_core::state::OneBody;

fn smooth_field(grid: BoxGrid, coeffs: &[(f64, f64)]) -> Field {
    let l = grid.extent();
    Field::from_fn(grid, |x| {
        coeffs
            .iter()
            .enumerate()
            .map(|(m, (re, im))| {
                let k = 2.0 * std::f64::consts::PI * m as f64 / l;
                Complex64::new(*re, *im) * Complex64::from_polar(1.0, k * x[0])
            })
            .sum()
    })
}

fn coeffs() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 1..5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn functionals_are_constant_on_phase_orbits(sigma in 0.2..3.0f64, amp in 0.1..4.0f64, theta in 0.0..6.3f64) {
        let g: OneBody = GaussianState::normalized(3, sigma).unwrap().with_amplitude(amp).into();
        let h = g.with_phase(theta);
        for f in [Functional::H1NormSq, Functional::Energy(Coupling::Focusing), Functional::XMomentSq, Functional::HAlphaSq(0.6)] {
            let (a, b) = (f.eval(&g), f.eval(&h));
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn grid_phase_orbit_keeps_norms(c in coeffs(), theta in 0.0..6.3f64) {
        let grid = BoxGrid::new(1, 10.0, 32).unwrap();
        let phi = WaveFunction::new(smooth_field(grid, &c));
        let rot = phi.with_phase(theta);
        for kind in [NormKind::L2, NormKind::L4, NormKind::HDot1, NormKind::HAlpha(1.0)] {
            let (a, b) = (phi.norm(kind), rot.norm(kind));
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }
    }

    #[test]
    fn chebyshev_dominates_random_measures(
        atoms in prop::collection::vec((0.01..1.0f64, 0.2..3.0f64, 0.5..3.0f64), 1..8),
        tau in 0.1..20.0f64,
        k in 1u32..12,
    ) {
        let total: f64 = atoms.iter().map(|a| a.0).sum();
        let mu = AtomicMeasure::new(atoms.iter().map(|&(w, s, a)| {
            Atom::new(w / total, GaussianState::normalized(3, s).unwrap().with_amplitude(a))
        }).collect());
        let b = chebyshev_support_bound(&mu, Functional::H1Norm, tau, k).unwrap();
        prop_assert!(b.dominates());
    }

    #[test]
    fn log_sum_exp_matches_direct_sum(xs in prop::collection::vec(-30.0..30.0f64, 1..20)) {
        let direct: f64 = xs.iter().map(|x| x.exp()).sum::<f64>().ln();
        prop_assert!((log_sum_exp(&xs) - direct).abs() <= 1e-12 * direct.abs().max(1.0));
    }

    #[test]
    fn trace_norm_is_symmetric_and_below_telescoping(a in coeffs(), b in coeffs(), k in 1usize..6) {
        let grid = BoxGrid::new(1, 10.0, 32).unwrap();
        let (u, v) = (smooth_field(grid, &a), smooth_field(grid, &b));
        let uv = rank_one_diff_trace_norm(&u, &v, k, 1.0).unwrap().value;
        let vu = rank_one_diff_trace_norm(&v, &u, k, 1.0).unwrap().value;
        let bound = telescoping_bound(&u, &v, k, 1.0).unwrap();
        prop_assert!((uv - vu).abs() <= 1e-9 * uv.max(1.0));
        prop_assert!(uv <= bound * (1.0 + 1e-10) + 1e-300);
        prop_assert_eq!(rank_one_diff_trace_norm(&u, &u, k, 1.0).unwrap().value, 0.0);
    }

    #[test]
    fn certificate_is_a_root(e in -50.0..-1e-3f64, b in 1e-3..10.0f64, c in 0.0..10.0f64) {
        let cert = BlowupCertificate::from_parts(e, b, c);
        prop_assert!(cert.valid && cert.t_bound > 0.0);
        prop_assert!(cert.root_residual() <= 1e-10);
    }

    #[test]
    fn lemma_fit_covers_every_row(r in 1.2..3.0f64, ks in prop::collection::vec(4u32..400, 1..6)) {
        let rep = lemma_sum_check(r, &ks).unwrap();
        for row in &rep.rows {
            prop_assert!(row.log_sum <= rep.c_fit * (row.k as f64).powf(r) * (1.0 + 1e-14));
            if row.split >= 4 {
                prop_assert!(row.tail_below_one());
            }
        }
    }

    #[test]
    fn strang_step_is_unitary_and_reversible(c in coeffs(), dt in 1e-3..0.2f64) {
        let grid = BoxGrid::new(1, 10.0, 32).unwrap();
        let phi = WaveFunction::new(smooth_field(grid, &c));
        let step = strang_step(&phi, dt, Coupling::Focusing, false).unwrap();
        prop_assert!((step.l2_norm() - phi.l2_norm()).abs() <= 1e-12 * phi.l2_norm());
        let back = reverse_step(&step, dt, Coupling::Focusing).unwrap();
        prop_assert!(back.field().max_abs_diff(phi.field()).unwrap() <= 1e-12 * phi.l2_norm().max(1.0));
    }
}

#[test]
fn lemma_tail_needs_large_k_when_r_is_close_to_one() {
    // J = k^{0.2} only separates the peak once k^{0.2} > 4
    let small = lemma_sum_check(1.2, &[17]).unwrap();
    assert!(!small.rows[0].tail_below_one());
    let large = lemma_sum_check(1.2, &[2048]).unwrap();
    assert!(large.rows[0].tail_below_one());
}

#[test]
fn blowup_measure_moments_obey_lemma_constant() {
    let profile = GaussianProfile::default();
    let ks: Vec<u32> = (1..=32).collect();
    for r in [1.5, 2.0, 2.5] {
        let c = lemma_sum_check(r, &ks).unwrap().c_fit;
        for shells in 2..=10 {
            let mu = build_blowup_measure(r, shells, &profile, Representation::Analytic).unwrap();
            for &k in &ks {
                let m = mu.log_moment(Functional::H1NormSq, k as f64).unwrap();
                assert!(m <= c * (k as f64).powf(r) + std::f64::consts::LN_2, "r={r} J={shells} k={k}");
            }
        }
    }
}

#[test]
fn sweep_row_at_five_shells_matches_direct_sum() {
    let profile = GaussianProfile::default();
    let radii = radii_retaining(&profile, 5, 5);
    let rep = instantaneous_blowup_sweep(2.0, 8, 2, &radii, &profile).unwrap();
    let mu = build_blowup_measure(2.0, 8, &profile, Representation::Analytic).unwrap();
    let terms: Vec<f64> = mu
        .atoms
        .iter()
        .filter(|a| a.shell.unwrap() <= 5)
        .map(|a| {
            let g = OneBody::from(profile.shell_state(a.shell.unwrap()));
            let n = g.norms();
            a.log_weight + 2.0 * (n.l2 * n.l2 + n.hdot1 * n.hdot1).ln()
        })
        .collect();
    let direct = log_sum_exp(&terms);
    assert!((rep.rows[0].log_trace_k - direct).abs() <= 1e-12);
    let via_trace = trace_s_alpha(&marginal(&mu.truncate(radii[0]), 2).unwrap(), 1.0).unwrap();
    assert!((via_trace - direct).abs() <= 1e-12);
}

#[test]
fn focusing_run_respects_virial_quadratic() {
    let grid = BoxGrid::new(3, 16.0, 64).unwrap();
    let phi = GaussianState::normalized(3, 1.0).unwrap().with_amplitude(8.0).sample(grid);
    let cert = gpdf_core::blowup::certify_blowup(&OneBody::Grid(phi.clone()));
    let mut cfg = SolverConfig::new(Coupling::Focusing, 5e-4, 0.1);
    cfg.snapshot_interval = 0.01;
    let traj = evolve(&phi, &cfg, &mut []).unwrap();
    let tol = 1e-2 * cert.b * cert.b;
    for s in &traj.snapshots {
        let v = gpdf_core::observables::measure(&s.state, Coupling::Focusing, s.t).variance;
        assert!(v <= cert.quadratic(s.t) + tol, "t={} V={v} q={}", s.t, cert.quadratic(s.t));
    }
}

#[test]
fn free_flow_conserves_every_sobolev_norm() {
    let grid = BoxGrid::new(1, 10.0, 64).unwrap();
    let phi = WaveFunction::new(smooth_field(grid, &[(0.3, 0.1), (0.5, -0.2), (0.1, 0.4)]));
    let moved = gpdf_core::dynamics::free_propagate(&phi, 1.7);
    for alpha in [0.0, 0.5, 1.0, 2.0] {
        let (a, b) = (norm(phi.field(), NormKind::HAlpha(alpha)), norm(moved.field(), NormKind::HAlpha(alpha)));
        assert!((a - b).abs() <= 1e-12 * a);
    }
}
