//! The named end-to-end runs. Each writes its tables into the output
//! directory and returns the assertions it checked.

use std::path::Path;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use gpdf_core::blowup::{
    certify_blowup, dichotomy_check, fit_shell_slope, instantaneous_blowup_sweep, lemma_sum_check,
    negative_energy_onset, radii_retaining, BlowupCertificate, LemmaRow, ShellVariant, SlopeFit, SweepRow,
};
use gpdf_core::dynamics::{evolve, free_propagate, Coupling, Termination, Trajectory};
use gpdf_core::ensemble::{
    build_blowup_measure, chebyshev_support_bound, estimate_rh1, membership_onset, AtomicMeasure, Functional,
    Rh1Estimate, Representation,
};
use gpdf_core::gaussian::GaussianState;
use gpdf_core::hierarchy::{hierarchy_residual, k_functional, trace_growth, TraceDiagnostics};
use gpdf_core::observables::{self, measure};
use gpdf_core::scattering::{asymptotic_measure, extract_scattering_state, scatter_table, ScatterRow};
use gpdf_core::spectral::{BoxGrid, Field, WaveFunction};
use gpdf_core::state::OneBody;

use crate::config::{Scenario, ScenarioConfig};
use crate::manifest::{Assertion, OutputDir, RunManifest, MANIFEST_NAME};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Core(#[from] gpdf_core::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

type Result<T> = std::result::Result<T, RunError>;

#[derive(Default)]
struct Outcome {
    terminations: Vec<String>,
    notes: Vec<String>,
    assertions: Vec<Assertion>,
}

impl Outcome {
    fn assert(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.assertions.push(Assertion { name: name.to_string(), passed, detail: detail.into() });
    }

    fn termination(&mut self, label: &str, traj: &Trajectory) {
        let status = match traj.termination {
            Termination::Completed => "completed".to_string(),
            Termination::BlowupDetected => format!("blowup-detected at t={}", traj.flagged_at.unwrap_or(f64::NAN)),
            Termination::ResolutionLost => format!("resolution-lost at t={}", traj.flagged_at.unwrap_or(f64::NAN)),
        };
        self.terminations.push(format!("{label}: {status}"));
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn initial_state(cfg: &ScenarioConfig, grid: BoxGrid) -> WaveFunction {
    let s = &cfg.state;
    if s.kind == "constant" {
        let value = Complex64::from_polar(s.amplitude, s.phase);
        WaveFunction::new(Field::from_fn(grid, move |_| value))
    } else {
        GaussianState::normalized(grid.dim(), s.sigma)
            .expect("validated")
            .with_amplitude(s.amplitude)
            .with_phase(s.phase)
            .sample(grid)
    }
}

fn observable_rows(traj: &Trajectory, coupling: Coupling) -> Vec<String> {
    traj.snapshots.iter().map(|s| measure(&s.state, coupling, s.t).csv_row()).collect()
}

/// Runs the scenario, writes its outputs and `manifest.json` into `dir`.
pub fn run_scenario(cfg: &ScenarioConfig, dir: &Path) -> Result<RunManifest> {
    let start = Instant::now();
    let mut out = OutputDir::create(dir)?;
    let mut outcome = Outcome::default();
    match cfg.scenario() {
        Scenario::DefocusingScatter => defocusing_scatter(cfg, &mut out, &mut outcome)?,
        Scenario::FocusingBlowup => focusing_blowup(cfg, &mut out, &mut outcome)?,
        Scenario::Dichotomy => dichotomy(cfg, &mut out, &mut outcome)?,
        Scenario::HierarchyResidual => residual(cfg, &mut out, &mut outcome)?,
        Scenario::HigherEnergy => higher_energy(cfg, &mut out, &mut outcome)?,
        Scenario::LemmaSum => lemma_sum(cfg, &mut out, &mut outcome)?,
    }
    let manifest = RunManifest {
        scenario: cfg.scenario().to_string(),
        config: cfg.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_s: start.elapsed().as_secs_f64(),
        terminations: outcome.terminations,
        notes: outcome.notes,
        assertions: outcome.assertions,
        outputs: out.into_files(),
    };
    let mut text = serde_json::to_string_pretty(&manifest).map_err(std::io::Error::other)?;
    text.push('\n');
    std::fs::write(dir.join(MANIFEST_NAME), text)?;
    Ok(manifest)
}

fn defocusing_scatter(cfg: &ScenarioConfig, out: &mut OutputDir, o: &mut Outcome) -> Result<()> {
    let phi = initial_state(cfg, cfg.grid().expect("validated"));
    let sc = cfg.scatter();
    let run = match extract_scattering_state(&phi, &sc) {
        Ok(run) => run,
        Err(gpdf_core::Error::RunFlagged(msg)) => {
            o.terminations.push(format!("scattering run: {msg}"));
            o.assert("run completes", false, msg);
            return Ok(());
        }
        Err(e) => return Err(e.into()),
    };
    o.terminations.push("scattering run: completed".into());
    if run.window_exceeded {
        o.notes.push(format!("T_max = {} exceeds the wraparound window {}", sc.t_max, run.window_limit));
    }
    let rows: Vec<String> = run
        .times
        .iter()
        .zip(&run.pullbacks)
        .map(|(&t, u)| measure(&free_propagate(u, t), Coupling::Defocusing, t).csv_row())
        .collect();
    out.write_csv("observables.csv", observables::CSV_HEADER, rows)?;

    let mu = AtomicMeasure::single(OneBody::Grid(phi));
    let table = scatter_table(&mu, std::slice::from_ref(&run))?;
    out.write_csv("scatter.csv", ScatterRow::CSV_HEADER, table.iter().map(ScatterRow::csv_row))?;
    out.write_json("measure_manifest.json", &mu.manifest())?;
    out.write_json("asymptotic_measure_manifest.json", &asymptotic_measure(&mu, std::slice::from_ref(&run))?.manifest())?;

    o.assert(
        "pull-back increments decrease",
        run.dyadic_decay(),
        format!("{:?}", run.increments),
    );
    let decreasing = (0..3).all(|k| table.windows(2).all(|w| w[1].d[k] < w[0].d[k] || w[1].d[k] == 0.0));
    o.assert("D_k decreases over checkpoints", decreasing, format!("{} checkpoints", table.len()));
    let bounded = table.iter().all(|r| r.d[2] <= r.bound_d3 * (1.0 + 1e-12));
    o.assert("D_3 below telescoping bound", bounded, "");
    Ok(())
}

#[derive(Serialize)]
struct BlowupSummary {
    certificate: BlowupCertificate,
    termination: Termination,
    flagged_at: Option<f64>,
    gaussian_family_fit: Option<SlopeFit>,
    fixed_b_fit: Option<SlopeFit>,
    membership_onset: u32,
    negative_energy_onset: u32,
}

fn focusing_blowup(cfg: &ScenarioConfig, out: &mut OutputDir, o: &mut Outcome) -> Result<()> {
    let phi = initial_state(cfg, cfg.grid().expect("validated"));
    let cert = certify_blowup(&OneBody::Grid(phi.clone()));
    let traj = evolve(&phi, &cfg.solver(), &mut [])?;
    o.termination("focusing run", &traj);
    out.write_csv("observables.csv", observables::CSV_HEADER, observable_rows(&traj, Coupling::Focusing))?;

    let flagged = traj.flagged_at.filter(|_| traj.termination != Termination::Completed);
    o.assert("certificate valid", cert.valid, format!("E = {}", cert.energy));
    if cert.valid {
        let detail = format!("T = {}, flagged at {:?}", cert.t_bound, flagged);
        let in_time = flagged.is_some_and(|t| t <= 1.2 * cert.t_bound);
        o.assert("flag raised by 1.2 T", in_time, detail);
        let tol = 1e-2 * cert.b * cert.b;
        let resolved = traj.snapshots.iter().filter(|s| Some(s.t) != flagged);
        let worst = resolved
            .map(|s| measure(&s.state, Coupling::Focusing, s.t).variance - cert.quadratic(s.t))
            .fold(f64::NEG_INFINITY, f64::max);
        o.assert("variance below virial quadratic", worst <= tol, format!("max excess {worst}"));
    }

    let profile = cfg.profile();
    let spec = cfg.shell_spec();
    let j0 = membership_onset(&profile, spec.c_l4);
    let j1 = negative_energy_onset(&profile);
    let first = cfg.sweep.first_shell;
    let last = cfg.sweep.last_shell;
    let top = last.max(j0.saturating_add(4)).min(60);
    let shell_rows = (0..=top).map(|j| {
        let g = OneBody::from(profile.shell_state(j));
        let n = g.norms();
        let family = certify_blowup(&g).t_bound;
        let fixed = gpdf_core::blowup::shell_blowup_bound(j, &profile, &spec, ShellVariant::FixedB)
            .map_or(f64::INFINITY, |b| b.certificate.t_bound);
        format!(
            "{j},{},{},{},{},{},{family},{fixed}",
            n.h1(),
            n.hdot1,
            n.l4,
            n.x_moment,
            n.energy(Coupling::Focusing)
        )
    });
    out.write_csv("shells.csv", "j,H1,Hdot1,L4,x_moment,E,T_gaussian_family,T_fixed_b", shell_rows)?;

    let family_shells: Vec<u32> = (first.max(j1)..first.max(j1) + 5).collect();
    let fixed_shells: Vec<u32> = (j0..j0.saturating_add(5)).collect();
    let summary = BlowupSummary {
        certificate: cert,
        termination: traj.termination,
        flagged_at: flagged,
        gaussian_family_fit: fit_shell_slope(&family_shells, &profile, &spec, ShellVariant::GaussianFamily).ok(),
        fixed_b_fit: fit_shell_slope(&fixed_shells, &profile, &spec, ShellVariant::FixedB).ok(),
        membership_onset: j0,
        negative_energy_onset: j1,
    };
    out.write_json("blowup.json", &summary)?;

    let radii = radii_retaining(&profile, first, last);
    let sweep = instantaneous_blowup_sweep(cfg.measure.r, last, cfg.sweep.k, &radii, &profile)?;
    out.write_csv("sweep.csv", SweepRow::CSV_HEADER, sweep.rows.iter().map(SweepRow::csv_row))?;
    let mu = build_blowup_measure(cfg.measure.r, last, &profile, Representation::Analytic)?;
    out.write_json("measure_manifest.json", &mu.manifest())?;
    o.assert("sweep trace increases", sweep.trace_strictly_increasing(), "");
    o.assert("sweep window decreases", sweep.window_strictly_decreasing(), "");
    Ok(())
}

#[derive(Serialize)]
struct DichotomySummary {
    r: f64,
    shells: u32,
    c_fit: f64,
    log_c_const: f64,
    ratio_checks: Vec<gpdf_core::blowup::RatioCheck>,
    rh1: Rh1Estimate,
    rh1_expected_exponent: f64,
}

fn dichotomy(cfg: &ScenarioConfig, out: &mut OutputDir, o: &mut Outcome) -> Result<()> {
    let m = &cfg.measure;
    let h = &cfg.hierarchy;
    let profile = cfg.profile();
    let mu = build_blowup_measure(m.r, m.shells, &profile, Representation::Analytic)?;
    out.write_json("measure_manifest.json", &mu.manifest())?;

    let ks: Vec<usize> = h.k_list.iter().map(|&k| k as usize).collect();
    let rows = trace_growth(&mu, &ks, h.alpha, 0.0)?;
    out.write_csv("trace.csv", TraceDiagnostics::CSV_HEADER, rows.iter().map(TraceDiagnostics::csv_row))?;

    let r_max = mu.values(Functional::H1Norm).into_iter().fold(0.0, f64::max);
    let radii = [0.25 * r_max, 0.5 * r_max, 0.99 * r_max];
    let check = dichotomy_check(&mu, m.r, &h.k_list, &radii, 65536.0)?;
    let rh1 = estimate_rh1(&mu, h.k_max)?;
    o.assert(
        "trace below C e^{ck^r} with C <= 2",
        check.h1r_bound_holds(),
        format!("c = {}, ln C = {}", check.c_fit, check.log_c_const),
    );
    o.assert(
        "trace / R^{2k} diverges below the largest atom norm",
        check.ratio_checks.iter().all(|c| c.diverging()),
        format!("R_max = {r_max}"),
    );
    if h.alpha == 1.0 {
        let worst = rows
            .iter()
            .map(|row| Ok((row.value_log - mu.log_moment(Functional::H1NormSq, row.k as f64)?).abs()))
            .collect::<std::result::Result<Vec<f64>, gpdf_core::Error>>()?
            .into_iter()
            .fold(0.0, f64::max);
        o.assert("trace matches moment", worst <= 1e-12, format!("max log difference {worst:.2e}"));
    }
    if let Some(e) = rh1.growth_exponent {
        o.notes.push(format!("R_H1 growth exponent {e} (r - 1 = {})", m.r - 1.0));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.run.seed);
    let mut dominated = true;
    for _ in 0..h.chebyshev_cases {
        let tau = rng.gen_range(0.5..1.2 * r_max);
        let k = rng.gen_range(1..=16);
        dominated &= chebyshev_support_bound(&mu, Functional::H1Norm, tau, k)?.dominates();
    }
    o.assert("Chebyshev bound dominates the atomic tail", dominated, format!("{} cases", h.chebyshev_cases));

    out.write_json(
        "dichotomy.json",
        &DichotomySummary {
            r: m.r,
            shells: m.shells,
            c_fit: check.c_fit,
            log_c_const: check.log_c_const,
            ratio_checks: check.ratio_checks,
            rh1,
            rh1_expected_exponent: m.r - 1.0,
        },
    )?;
    Ok(())
}

fn residual(cfg: &ScenarioConfig, out: &mut OutputDir, o: &mut Outcome) -> Result<()> {
    let phi = initial_state(cfg, cfg.grid().expect("validated"));
    let coupling = cfg.coupling();
    let spacing = cfg.solver.snapshot_interval;
    let mut rows = Vec::new();
    let mut worst = Vec::new();
    for (i, h) in [spacing, spacing / 2.0].into_iter().enumerate() {
        let mut solver = cfg.solver();
        solver.snapshot_interval = h;
        solver.dt_init = solver.dt_init.min(h);
        if let gpdf_core::dynamics::StepPolicy::Adaptive { dt_min, .. } = &mut solver.step_policy {
            *dt_min = dt_min.min(solver.dt_init);
        }
        let traj = evolve(&phi, &solver, &mut [])?;
        o.termination(&format!("run with spacing {h}"), &traj);
        if i == 0 {
            out.write_csv("observables.csv", observables::CSV_HEADER, observable_rows(&traj, coupling))?;
        }
        let one = hierarchy_residual(&traj, coupling, 1)?;
        let two = hierarchy_residual(&traj, coupling, 2)?;
        for j in 0..one.times.len() {
            rows.push(format!("{},{h},{},{}", one.times[j], one.one_body[j], two.k_body_bound[j]));
        }
        worst.push(one.max_one_body());
    }
    out.write_csv("residual.csv", "t,spacing,residual_1,bound_2", rows)?;
    let order = (worst[0] / worst[1]).log2();
    o.assert("residual is second order in the spacing", order >= 1.9, format!("order {order}"));
    Ok(())
}

fn higher_energy(cfg: &ScenarioConfig, out: &mut OutputDir, o: &mut Outcome) -> Result<()> {
    let m_max = cfg.hierarchy.m_max as usize;
    let profile = cfg.profile();
    let mu = build_blowup_measure(cfg.measure.r, cfg.measure.shells, &profile, Representation::Analytic)?;
    out.write_json("measure_manifest.json", &mu.manifest())?;
    let mut atom_rows = Vec::new();
    let mut worst = 0.0_f64;
    for atom in &mu.atoms {
        let n = atom.state.norms();
        let base = 0.5 * n.h1().powi(2) + 0.25 * n.l4.powi(4);
        let single = AtomicMeasure::single(atom.state.clone());
        for m in 1..=m_max {
            let k = k_functional(&single, m, Coupling::Defocusing, true)?;
            let closed = base.powi(m as i32);
            worst = worst.max(rel(k.slot_product, closed));
            atom_rows.push(format!("{},{m},{},{closed}", atom.shell.unwrap_or(0), k.slot_product));
        }
    }
    out.write_csv("k_atoms.csv", "j,m,slot_product,closed_form", atom_rows)?;
    o.assert("slot product matches energy power per atom", worst <= 1e-10, format!("max relative {worst:.2e}"));

    let grid = cfg.grid().expect("validated");
    let phi = WaveFunction::normalized(initial_state(cfg, grid).into_field())?;
    let traj = evolve(&phi, &cfg.solver(), &mut [])?;
    o.termination("defocusing run", &traj);
    out.write_csv("observables.csv", observables::CSV_HEADER, observable_rows(&traj, Coupling::Defocusing))?;
    let mut run_rows = Vec::new();
    let mut drift = 0.0_f64;
    for m in 1..=m_max {
        let mut first = None;
        for s in &traj.snapshots {
            let k = k_functional(&AtomicMeasure::single(OneBody::Grid(s.state.clone())), m, Coupling::Defocusing, true)?;
            let f = *first.get_or_insert(k.slot_product);
            drift = drift.max(rel(k.slot_product, f));
            run_rows.push(format!("{},{m},{},{}", s.t, k.slot_product, k.energy_power));
        }
    }
    out.write_csv("k_run.csv", "t,m,slot_product,energy_power", run_rows)?;
    o.assert("functional conserved along the run", drift <= 1e-5, format!("max relative drift {drift:.2e}"));
    Ok(())
}

fn lemma_sum(cfg: &ScenarioConfig, out: &mut OutputDir, o: &mut Outcome) -> Result<()> {
    let rep = lemma_sum_check(cfg.measure.r, &cfg.hierarchy.k_list)?;
    out.write_csv("lemma.csv", LemmaRow::CSV_HEADER, rep.csv_rows())?;
    out.write_json("lemma.json", &rep)?;
    o.assert("fitted constant is finite", rep.c_fit.is_finite(), format!("c = {}", rep.c_fit));
    let bad: Vec<u32> = rep.rows.iter().filter(|r| r.split >= 4 && !r.tail_below_one()).map(|r| r.k).collect();
    o.assert("tail past k^delta is below one", bad.is_empty(), format!("failing k: {bad:?}"));
    let short: Vec<u32> = rep.rows.iter().filter(|r| r.split < 4).map(|r| r.k).collect();
    if !short.is_empty() {
        o.notes.push(format!("k^delta < 4 for k in {short:?}; tail bound not asserted there"));
    }
    Ok(())
}
