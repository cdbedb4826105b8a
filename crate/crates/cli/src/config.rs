//! Scenario configuration: a TOML file of flat sections layered over the
//! defaults of the chosen scenario.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use gpdf_core::dynamics::{Coupling, SolverConfig, StepPolicy};
use gpdf_core::ensemble::{GaussianProfile, ShellSpec};
use gpdf_core::scattering::{ScatterConfig, WindowPolicy};
use gpdf_core::spectral::BoxGrid;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    DefocusingScatter,
    FocusingBlowup,
    Dichotomy,
    HierarchyResidual,
    HigherEnergy,
    LemmaSum,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::DefocusingScatter,
        Scenario::FocusingBlowup,
        Scenario::Dichotomy,
        Scenario::HierarchyResidual,
        Scenario::HigherEnergy,
        Scenario::LemmaSum,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::DefocusingScatter => "defocusing-scatter",
            Scenario::FocusingBlowup => "focusing-blowup",
            Scenario::Dichotomy => "dichotomy",
            Scenario::HierarchyResidual => "hierarchy-residual",
            Scenario::HigherEnergy => "higher-energy",
            Scenario::LemmaSum => "lemma-sum",
        }
    }

    pub fn summary(self) -> &'static str {
        match self {
            Scenario::DefocusingScatter => "small defocusing data: pull-back Cauchy increments and D_k(t)",
            Scenario::FocusingBlowup => "focusing Gaussian against its virial certificate, shell bounds, A_R sweep",
            Scenario::Dichotomy => "trace growth of the blowup measure against e^{ck^r} and R^{2k}",
            Scenario::HierarchyResidual => "residual of the factorized hierarchy along a run",
            Scenario::HigherEnergy => "higher-order energy functionals per atom and along a run",
            Scenario::LemmaSum => "super-exponential sum bound and its fitted constant",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| ConfigError::new(None, format!("unknown scenario `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn new(line: Option<usize>, message: impl Into<String>) -> Self {
        Self { line, message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// Declares a section with every field required, plus a private mirror with
/// every field optional that is layered onto the defaults.
macro_rules! section {
    ($name:ident / $partial:ident { $($(#[doc = $doc:literal])* $field:ident : $ty:ty,)* }) => {
        #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
        #[serde(deny_unknown_fields)]
        pub struct $name {
            $($(#[doc = $doc])* pub $field: $ty,)*
        }

        #[derive(Default, Deserialize)]
        #[serde(deny_unknown_fields)]
        struct $partial {
            $($field: Option<$ty>,)*
        }

        impl $partial {
            fn apply(self, to: &mut $name) {
                $(if let Some(v) = self.$field {
                    to.$field = v;
                })*
            }
        }
    };
}

section!(RunSection / RunPartial {
    /// Must match the scenario given on the command line when present.
    scenario: Scenario,
    seed: u64,
    /// 0 lets the thread pool pick.
    threads: usize,
});

section!(GridSection / GridPartial {
    dim: usize,
    extent: f64,
    points: usize,
});

section!(StateSection / StatePartial {
    /// `gaussian` or `constant`.
    kind: String,
    sigma: f64,
    amplitude: f64,
    phase: f64,
});

section!(SolverSection / SolverPartial {
    /// +1 defocusing, -1 focusing.
    lambda: i32,
    dt: f64,
    t_max: f64,
    /// `fixed` or `adaptive`.
    step_policy: String,
    beta: f64,
    dt_min: f64,
    dealias: bool,
    snapshot_interval: f64,
    blowup_h1_threshold: f64,
    resolution_guard: f64,
});

section!(MeasureSection / MeasurePartial {
    r: f64,
    shells: u32,
    sigma: f64,
    /// Cap on `‖xφ‖` in the shell sets.
    b: f64,
    c_l4: f64,
});

section!(HierarchySection / HierarchyPartial {
    k_list: Vec<u32>,
    alpha: f64,
    /// Largest `k` in the `R_{H¹}` fit.
    k_max: u32,
    /// Highest order of the energy functionals.
    m_max: u32,
    chebyshev_cases: u32,
});

section!(ScatterSection / ScatterPartial {
    t_max: f64,
    levels: u32,
    dt: f64,
    /// `refuse` or `report`.
    window: String,
});

section!(SweepSection / SweepPartial {
    k: usize,
    first_shell: u32,
    last_shell: u32,
});

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub run: RunSection,
    pub grid: GridSection,
    pub state: StateSection,
    pub solver: SolverSection,
    pub measure: MeasureSection,
    pub hierarchy: HierarchySection,
    pub scatter: ScatterSection,
    pub sweep: SweepSection,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialConfig {
    run: Option<RunPartial>,
    grid: Option<GridPartial>,
    state: Option<StatePartial>,
    solver: Option<SolverPartial>,
    measure: Option<MeasurePartial>,
    hierarchy: Option<HierarchyPartial>,
    scatter: Option<ScatterPartial>,
    sweep: Option<SweepPartial>,
}

impl ScenarioConfig {
    pub fn defaults(scenario: Scenario) -> Self {
        let profile = GaussianProfile::default();
        let mut cfg = ScenarioConfig {
            run: RunSection { scenario, seed: 0, threads: 0 },
            grid: GridSection { dim: 3, extent: 16.0, points: 64 },
            state: StateSection { kind: "gaussian".into(), sigma: 1.0, amplitude: 1.0, phase: 0.0 },
            solver: SolverSection {
                lambda: 1,
                dt: 1e-3,
                t_max: 0.5,
                step_policy: "fixed".into(),
                beta: 2.0,
                dt_min: 1e-8,
                dealias: false,
                snapshot_interval: 0.1,
                blowup_h1_threshold: 1e3,
                resolution_guard: 0.1,
            },
            measure: MeasureSection {
                r: 2.0,
                shells: 8,
                sigma: profile.sigma,
                b: ShellSpec::for_profile(0, &profile).b,
                c_l4: 1.0,
            },
            hierarchy: HierarchySection {
                k_list: (1..=32).collect(),
                alpha: 1.0,
                k_max: 32,
                m_max: 3,
                chebyshev_cases: 200,
            },
            scatter: ScatterSection { t_max: 8.0, levels: 4, dt: 1e-2, window: "report".into() },
            sweep: SweepSection { k: 64, first_shell: 7, last_shell: 12 },
        };
        match scenario {
            Scenario::DefocusingScatter => {
                cfg.grid.extent = 32.0;
                cfg.state.amplitude = 0.1;
            }
            Scenario::FocusingBlowup => {
                cfg.state.amplitude = 8.0;
                cfg.solver.lambda = -1;
                cfg.solver.t_max = 3.0;
                cfg.solver.step_policy = "adaptive".into();
                cfg.solver.dealias = true;
                cfg.solver.snapshot_interval = 0.01;
            }
            Scenario::Dichotomy => {}
            Scenario::HierarchyResidual => {
                cfg.grid.extent = std::f64::consts::TAU;
                cfg.grid.points = 8;
                cfg.state.kind = "constant".into();
                cfg.solver.dt = 0.01;
                cfg.solver.t_max = 0.2;
                cfg.solver.snapshot_interval = 0.01;
            }
            Scenario::HigherEnergy => {}
            Scenario::LemmaSum => {
                cfg.measure.r = 1.5;
                cfg.hierarchy.k_list = vec![20, 40, 80];
            }
        }
        cfg
    }

    pub fn scenario(&self) -> Scenario {
        self.run.scenario
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn grid(&self) -> Result<BoxGrid, ConfigError> {
        BoxGrid::new(self.grid.dim, self.grid.extent, self.grid.points)
            .map_err(|e| ConfigError::new(None, format!("[grid]: {e}")))
    }

    pub fn coupling(&self) -> Coupling {
        Coupling::from_lambda(self.solver.lambda).expect("validated")
    }

    pub fn solver(&self) -> SolverConfig {
        let s = &self.solver;
        let mut cfg = SolverConfig::new(self.coupling(), s.dt, s.t_max);
        cfg.step_policy = match s.step_policy.as_str() {
            "adaptive" => StepPolicy::Adaptive { beta: s.beta, dt_min: s.dt_min },
            _ => StepPolicy::Fixed,
        };
        cfg.dealias = s.dealias;
        cfg.snapshot_interval = s.snapshot_interval;
        cfg.blowup_h1_threshold = s.blowup_h1_threshold;
        cfg.resolution_guard = s.resolution_guard;
        cfg
    }

    pub fn scatter(&self) -> ScatterConfig {
        let s = &self.scatter;
        ScatterConfig {
            window: if s.window == "refuse" { WindowPolicy::Refuse } else { WindowPolicy::Report },
            ..ScatterConfig::new(s.t_max, s.levels, s.dt)
        }
    }

    pub fn profile(&self) -> GaussianProfile {
        GaussianProfile::new(3, self.measure.sigma).expect("validated")
    }

    pub fn shell_spec(&self) -> ShellSpec {
        ShellSpec { j: 0, b: self.measure.b, c_l4: self.measure.c_l4 }
    }

    /// Checks every parameter; `text` is used to point at the offending line.
    pub fn validate(&self, text: &str) -> Result<(), ConfigError> {
        let fail = |section: &str, key: &str, msg: String| {
            Err(ConfigError::new(locate(text, section, key), format!("[{section}] {key}: {msg}")))
        };
        let positive = |section: &str, key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                fail(section, key, format!("must be positive and finite, got {v}"))
            }
        };
        let finite = |section: &str, key: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                fail(section, key, format!("must be finite, got {v}"))
            }
        };
        if let Err(e) = self.grid() {
            return Err(ConfigError::new(locate(text, "grid", "points"), e.message));
        }
        if !["gaussian", "constant"].contains(&self.state.kind.as_str()) {
            return fail("state", "kind", format!("expected `gaussian` or `constant`, got `{}`", self.state.kind));
        }
        positive("state", "sigma", self.state.sigma)?;
        finite("state", "amplitude", self.state.amplitude)?;
        finite("state", "phase", self.state.phase)?;

        let s = &self.solver;
        if Coupling::from_lambda(s.lambda).is_err() {
            return fail("solver", "lambda", format!("must be +1 or -1, got {}", s.lambda));
        }
        if !["fixed", "adaptive"].contains(&s.step_policy.as_str()) {
            return fail("solver", "step_policy", format!("expected `fixed` or `adaptive`, got `{}`", s.step_policy));
        }
        for (key, v) in [
            ("dt", s.dt),
            ("t_max", s.t_max),
            ("beta", s.beta),
            ("dt_min", s.dt_min),
            ("snapshot_interval", s.snapshot_interval),
            ("blowup_h1_threshold", s.blowup_h1_threshold),
            ("resolution_guard", s.resolution_guard),
        ] {
            positive("solver", key, v)?;
        }
        if s.dt_min > s.dt {
            return fail("solver", "dt_min", format!("{} exceeds dt = {}", s.dt_min, s.dt));
        }

        let m = &self.measure;
        if !(m.r > 1.0 && m.r.is_finite()) {
            return fail("measure", "r", format!("must exceed 1, got {}", m.r));
        }
        if m.shells == 0 {
            return fail("measure", "shells", "must be at least 1".into());
        }
        positive("measure", "sigma", m.sigma)?;
        positive("measure", "b", m.b)?;
        positive("measure", "c_l4", m.c_l4)?;

        let h = &self.hierarchy;
        if h.k_list.is_empty() || h.k_list.contains(&0) {
            return fail("hierarchy", "k_list", "must be a non-empty list of positive integers".into());
        }
        if self.scenario() == Scenario::LemmaSum && h.k_list.iter().any(|&k| k < 4) {
            return fail("hierarchy", "k_list", "the sum bound needs k >= 4".into());
        }
        finite("hierarchy", "alpha", h.alpha)?;
        if h.alpha < 0.0 {
            return fail("hierarchy", "alpha", format!("must be non-negative, got {}", h.alpha));
        }
        if h.k_max < 4 {
            return fail("hierarchy", "k_max", format!("must be at least 4, got {}", h.k_max));
        }
        if h.m_max == 0 {
            return fail("hierarchy", "m_max", "must be at least 1".into());
        }

        let sc = &self.scatter;
        positive("scatter", "t_max", sc.t_max)?;
        positive("scatter", "dt", sc.dt)?;
        if sc.levels < 2 {
            return fail("scatter", "levels", format!("must be at least 2, got {}", sc.levels));
        }
        if !["refuse", "report"].contains(&sc.window.as_str()) {
            return fail("scatter", "window", format!("expected `refuse` or `report`, got `{}`", sc.window));
        }

        let sw = &self.sweep;
        if sw.k == 0 {
            return fail("sweep", "k", "must be at least 1".into());
        }
        if sw.first_shell > sw.last_shell {
            return fail("sweep", "last_shell", format!("{} is below first_shell {}", sw.last_shell, sw.first_shell));
        }

        match self.scenario() {
            Scenario::DefocusingScatter | Scenario::HigherEnergy if s.lambda != 1 => {
                fail("solver", "lambda", format!("{} needs lambda = 1", self.scenario()))
            }
            Scenario::FocusingBlowup if s.lambda != -1 => {
                fail("solver", "lambda", "focusing-blowup needs lambda = -1".into())
            }
            _ => Ok(()),
        }
    }
}

/// 1-based line of `key` inside `[section]`, if the text sets it.
fn locate(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = "";
    for (i, line) in text.lines().enumerate() {
        let l = line.trim();
        if let Some(name) = l.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim();
        } else if current == section {
            if let Some((k, _)) = l.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Layers `text` over the defaults of `scenario` and validates the result.
///
/// `scenario` may be omitted when the text names one under `[run]`.
pub fn parse_config(text: &str, scenario: Option<Scenario>) -> Result<ScenarioConfig, ConfigError> {
    let partial: PartialConfig = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| line_of(text, s.start));
        ConfigError::new(line, e.message().trim().to_string())
    })?;
    let named = partial.run.as_ref().and_then(|r| r.scenario);
    let scenario = match (scenario, named) {
        (Some(a), Some(b)) if a != b => {
            return Err(ConfigError::new(
                locate(text, "run", "scenario"),
                format!("config is for scenario `{b}`, command line asked for `{a}`"),
            ))
        }
        (Some(a), _) => a,
        (None, Some(b)) => b,
        (None, None) => return Err(ConfigError::new(None, "missing required key [run] scenario")),
    };
    let mut cfg = ScenarioConfig::defaults(scenario);
    let PartialConfig { run, grid, state, solver, measure, hierarchy, scatter, sweep } = partial;
    if let Some(p) = run {
        p.apply(&mut cfg.run);
    }
    if let Some(p) = grid {
        p.apply(&mut cfg.grid);
    }
    if let Some(p) = state {
        p.apply(&mut cfg.state);
    }
    if let Some(p) = solver {
        p.apply(&mut cfg.solver);
    }
    if let Some(p) = measure {
        p.apply(&mut cfg.measure);
    }
    if let Some(p) = hierarchy {
        p.apply(&mut cfg.hierarchy);
    }
    if let Some(p) = scatter {
        p.apply(&mut cfg.scatter);
    }
    if let Some(p) = sweep {
        p.apply(&mut cfg.sweep);
    }
    cfg.validate(text)?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        for sc in Scenario::ALL {
            assert_eq!(parse_config("", Some(sc)).unwrap(), ScenarioConfig::defaults(sc));
        }
    }

    #[test]
    fn scenario_names_round_trip() {
        for sc in Scenario::ALL {
            assert_eq!(sc.name().parse::<Scenario>().unwrap(), sc);
        }
        assert!("nope".parse::<Scenario>().is_err());
    }

    #[test]
    fn malformed_number_names_key_and_line() {
        let text = "[grid]\npoints = 64\n\n[solver]\ndt = 1e-3x\n";
        let e = parse_config(text, Some(Scenario::Dichotomy)).unwrap_err();
        assert_eq!(e.line, Some(5));
    }

    #[test]
    fn type_mismatch_has_line() {
        let text = "[solver]\n\ndt = \"small\"\n";
        let e = parse_config(text, Some(Scenario::Dichotomy)).unwrap_err();
        assert_eq!(e.line, Some(3));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = parse_config("[grid]\npoints = 64\nspacing = 2\n", Some(Scenario::Dichotomy)).unwrap_err();
        assert_eq!(e.line, Some(3));
        assert!(e.message.contains("spacing"), "{e}");
        let e = parse_config("[gird]\npoints = 64\n", Some(Scenario::Dichotomy)).unwrap_err();
        assert_eq!(e.line, Some(1));
    }

    #[test]
    fn invalid_values_point_at_their_line() {
        let e = parse_config("[run]\nseed = 1\n[solver]\ndt = -1.0\n", Some(Scenario::Dichotomy)).unwrap_err();
        assert_eq!(e.line, Some(4));
        let e = parse_config("[grid]\npoints = 48\n", Some(Scenario::Dichotomy)).unwrap_err();
        assert_eq!(e.line, Some(2));
    }

    #[test]
    fn scenario_key_is_required_somewhere() {
        assert!(parse_config("", None).is_err());
        let cfg = parse_config("[run]\nscenario = \"lemma-sum\"\n", None).unwrap();
        assert_eq!(cfg.scenario(), Scenario::LemmaSum);
        let e = parse_config("[run]\nscenario = \"lemma-sum\"\n", Some(Scenario::Dichotomy)).unwrap_err();
        assert_eq!(e.line, Some(2));
    }

    #[test]
    fn coupling_must_fit_the_scenario() {
        assert!(parse_config("[solver]\nlambda = 1\n", Some(Scenario::FocusingBlowup)).is_err());
        assert!(parse_config("[solver]\nlambda = 2\n", Some(Scenario::Dichotomy)).is_err());
    }
}
