use proptest::prelude::*;

use gpdf_cli::{parse_config, Scenario, ScenarioConfig};

fn scenario() -> impl Strategy<Value = Scenario> {
    prop::sample::select(Scenario::ALL.to_vec())
}

prop_compose! {
    fn config()(
        sc in scenario(),
        seed in any::<u64>(),
        threads in 0usize..16,
        points in prop::sample::select(vec![8usize, 16, 32, 64]),
        extent in 1.0..100.0f64,
        kind in prop::sample::select(vec!["gaussian", "constant"]),
        sigma in 0.05..5.0f64,
        amplitude in -10.0..10.0f64,
        phase in -7.0..7.0f64,
        lambda in prop::sample::select(vec![-1i32, 1]),
        dt in 1e-6..0.1f64,
        dt_frac in 1e-6..1.0f64,
        t_max in 1e-3..10.0f64,
        adaptive in any::<bool>(),
        beta in 0.1..4.0f64,
        dealias in any::<bool>(),
        interval in 1e-3..1.0f64,
        guard in 1e-3..1.0f64,
        r in 1.01..4.0f64,
        shells in 1u32..20,
        b in 0.1..50.0f64,
        c_l4 in 0.01..5.0f64,
        k_list in prop::collection::vec(4u32..200, 1..6),
        alpha in 0.0..3.0f64,
        k_max in 4u32..64,
        m_max in 1u32..5,
        levels in 2u32..8,
        window in prop::sample::select(vec!["refuse", "report"]),
        first in 0u32..20,
        extra in 0u32..10,
        k in 1usize..128,
    ) -> ScenarioConfig {
        let mut c = ScenarioConfig::defaults(sc);
        c.run.seed = seed;
        c.run.threads = threads;
        c.grid.points = points;
        c.grid.extent = extent;
        c.state.kind = kind.to_string();
        c.state.sigma = sigma;
        c.state.amplitude = amplitude;
        c.state.phase = phase;
        c.solver.lambda = match sc {
            Scenario::FocusingBlowup => -1,
            Scenario::DefocusingScatter | Scenario::HigherEnergy => 1,
            _ => lambda,
        };
        c.solver.dt = dt;
        c.solver.dt_min = dt * dt_frac;
        c.solver.t_max = t_max;
        c.solver.step_policy = if adaptive { "adaptive" } else { "fixed" }.to_string();
        c.solver.beta = beta;
        c.solver.dealias = dealias;
        c.solver.snapshot_interval = interval;
        c.solver.resolution_guard = guard;
        c.measure.r = r;
        c.measure.shells = shells;
        c.measure.sigma = sigma;
        c.measure.b = b;
        c.measure.c_l4 = c_l4;
        c.hierarchy.k_list = k_list;
        c.hierarchy.alpha = alpha;
        c.hierarchy.k_max = k_max;
        c.hierarchy.m_max = m_max;
        c.scatter.t_max = t_max;
        c.scatter.levels = levels;
        c.scatter.dt = dt;
        c.scatter.window = window.to_string();
        c.sweep.first_shell = first;
        c.sweep.last_shell = first + extra;
        c.sweep.k = k;
        c
    }
}

proptest! {
    #[test]
    fn parse_serialize_parse_is_identity(cfg in config()) {
        let text = cfg.to_text();
        let back = parse_config(&text, None).unwrap();
        prop_assert_eq!(&back, &cfg);
        let again = parse_config(&back.to_text(), Some(cfg.scenario())).unwrap();
        prop_assert_eq!(again.to_text(), text);
    }
}

#[test]
fn defaults_serialize_every_key() {
    let text = ScenarioConfig::defaults(Scenario::FocusingBlowup).to_text();
    for key in ["scenario", "seed", "extent", "kind", "lambda", "resolution_guard", "c_l4", "k_list", "window", "last_shell"] {
        assert!(text.contains(key), "{key} missing from\n{text}");
    }
}
