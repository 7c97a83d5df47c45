use guided_bo::harness::{aggregate, run_trials, write_outputs, AlgorithmConfig, CampaignConfig};
use guided_bo::optimizers::{initial_design, run, OptimizerSpec, Problem};
use guided_bo::simulator::{DriftModel, SimulatorConfig};
use guided_bo::trace::{Metric, OptimizerKind, TrialTrace};
use guided_bo::transform::KnobPair;
use guided_bo::Bounds;
use proptest::prelude::*;

fn small_sim() -> SimulatorConfig {
    SimulatorConfig {
        dim: 4,
        pairs: vec![KnobPair::new(0, 1), KnobPair::new(2, 3)],
        bounds: Bounds::symmetric(4, 100.0).unwrap(),
        theta_star: vec![14.0, -22.0, -36.0, 8.0],
        gated_axes: vec![0, 1],
        darwin_widths: vec![2.5, 2.5],
        diff_weights: vec![0.5, 0.5],
        common_weights: vec![0.0, 0.0],
        ..SimulatorConfig::default()
    }
}

fn quick(cfg: &mut CampaignConfig) {
    for a in &mut cfg.algorithms {
        a.fit = Some(guided_bo::surrogate::FitConfig {
            n_starts: 2,
            max_iters: 15,
            ..Default::default()
        });
        a.maximizer = Some(guided_bo::acquisition::MaximizerConfig {
            candidates: 150,
            ..Default::default()
        });
    }
}

#[test]
fn single_trial_degenerate_budget() {
    let mut cfg = CampaignConfig::with_simulator(small_sim());
    cfg.algorithms = vec![AlgorithmConfig::of(OptimizerKind::StandardBo)];
    cfg.campaign.n_trials = 1;
    cfg.campaign.budget = 4;
    cfg.campaign.n_init = 4;
    let result = run_trials(&cfg, Some(1)).unwrap();
    let traces = &result.traces[&OptimizerKind::StandardBo];
    assert_eq!(traces.len(), 1);
    assert_eq!(traces[0].rows.len(), 4);
    for m in Metric::ALL {
        let a = aggregate(traces, m).unwrap();
        let col = traces[0].column(m);
        for (r, v) in a.rows.iter().zip(col) {
            assert_eq!((r.median, r.q25, r.q75, r.n_trials), (v, v, v, 1));
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let files = write_outputs(&cfg, &result, dir.path()).unwrap();
    assert_eq!(
        files,
        vec!["traces/standard_bo_trial000.csv", "aggregate_standard_bo.csv", "manifest.json"]
    );
    let text = std::fs::read_to_string(dir.path().join(&files[0])).unwrap();
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn shared_initial_rows_and_invariants() {
    let mut cfg = CampaignConfig::with_simulator(small_sim());
    cfg.campaign.n_trials = 3;
    cfg.campaign.budget = 10;
    quick(&mut cfg);
    let result = run_trials(&cfg, Some(2)).unwrap();
    assert_eq!(result.traces.len(), 6);
    for trial in 0..3 {
        let first = &result.traces[&OptimizerKind::DomainGuided][trial];
        for (kind, traces) in &result.traces {
            let t = &traces[trial];
            assert!(t.is_ok(), "{kind}");
            assert_eq!(t.rows.len(), 10, "{kind}");
            assert_eq!(t.seed, first.seed);
            for i in 0..4 {
                assert_eq!(t.rows[i], first.rows[i], "{kind} trial {trial} row {i}");
            }
            for r in &t.rows {
                assert!(cfg.simulator.bounds.contains(&r.point));
            }
            for w in t.rows.windows(2) {
                assert!(w[1].run_min_f <= w[0].run_min_f);
                assert!(w[1].run_min_error <= w[0].run_min_error);
                assert!(w[1].run_max_intensity >= w[0].run_max_intensity);
            }
            if *kind == OptimizerKind::Turbo {
                for e in &t.extras[4..] {
                    let l = e.trust_region_length.unwrap();
                    assert!((0.5f64.powi(7)..=1.6).contains(&l));
                }
            }
        }
    }
    for m in Metric::ALL {
        for kind in OptimizerKind::ALL {
            let a = result.aggregate(kind, m).unwrap();
            for r in &a.rows {
                assert!(r.q25 <= r.median && r.median <= r.q75);
            }
        }
    }
}

#[test]
fn trials_are_independent_of_trial_count() {
    let mut cfg = CampaignConfig::with_simulator(small_sim());
    cfg.algorithms = vec![AlgorithmConfig::of(OptimizerKind::Turbo)];
    cfg.campaign.budget = 9;
    quick(&mut cfg);
    cfg.campaign.n_trials = 3;
    let big = run_trials(&cfg, Some(2)).unwrap();
    cfg.campaign.n_trials = 1;
    let small = run_trials(&cfg, Some(1)).unwrap();
    assert_eq!(
        big.traces[&OptimizerKind::Turbo][0].rows,
        small.traces[&OptimizerKind::Turbo][0].rows
    );
}

#[test]
fn noisy_initial_design_is_reused_by_every_algorithm() {
    let mut sim = small_sim();
    sim.noise = Some(DriftModel::measured(5));
    let init = initial_design(&sim, 4, 77).unwrap();
    let norm = sim.default_normalization();
    let problem = Problem {
        simulator: &sim,
        normalization: norm,
        initial: &init,
    };
    let mut seen: Option<Vec<f64>> = None;
    for kind in [OptimizerKind::StandardBo, OptimizerKind::Mobo] {
        let mut spec = OptimizerSpec::new(kind, None, 77, 4, 6);
        spec.fit.n_starts = 2;
        spec.maximizer.candidates = 100;
        let t = run(&spec, &problem, 0).unwrap();
        let errs: Vec<f64> = t.rows[..4].iter().map(|r| r.error).collect();
        assert_eq!(errs, init.measurements.iter().map(|m| m.error).collect::<Vec<_>>());
        if let Some(s) = &seen {
            assert_eq!(s, &errs);
        }
        seen = Some(errs);
    }
}

#[test]
fn mobo_initial_front_is_nondominated_subset() {
    let sim = small_sim();
    let init = initial_design(&sim, 4, 8).unwrap();
    let problem = Problem {
        simulator: &sim,
        normalization: sim.default_normalization(),
        initial: &init,
    };
    let mut spec = OptimizerSpec::new(OptimizerKind::Mobo, None, 8, 4, 9);
    spec.fit.n_starts = 2;
    spec.maximizer.candidates = 100;
    let t = run(&spec, &problem, 0).unwrap();
    let pts: Vec<[f64; 2]> = init.measurements.iter().map(|m| [m.error, -m.intensity]).collect();
    let nondominated = pts
        .iter()
        .filter(|p| {
            !pts.iter()
                .any(|q| q[0] <= p[0] && q[1] <= p[1] && (q[0] < p[0] || q[1] < p[1]))
        })
        .count();
    assert_eq!(t.extras[3].front_size, Some(nondominated));
    let hv: Vec<f64> = t.extras.iter().map(|e| e.front_hypervolume.unwrap()).collect();
    assert!(hv.windows(2).all(|w| w[1] >= w[0]));
}

fn synthetic(values: Vec<f64>, trial: usize) -> TrialTrace {
    let mut t = TrialTrace::new(trial, OptimizerKind::StandardBo, 0);
    let mut best = f64::INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        best = best.min(v);
        t.rows.push(guided_bo::trace::TraceRow {
            iter: i + 1,
            point: vec![],
            error: v,
            intensity: 0.0,
            f: v,
            run_min_error: best,
            run_max_intensity: 0.0,
            run_min_f: best,
            beta: None,
        });
    }
    t
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn aggregates_of_monotone_traces_are_monotone(data in prop::collection::vec(prop::collection::vec(0.0f64..100.0, 20), 25)) {
        let traces: Vec<TrialTrace> = data.into_iter().enumerate().map(|(i, v)| synthetic(v, i)).collect();
        let a = aggregate(&traces, Metric::RunMinError).unwrap();
        for w in a.rows.windows(2) {
            prop_assert!(w[1].median <= w[0].median);
            prop_assert!(w[1].q25 <= w[0].q25);
            prop_assert!(w[1].q75 <= w[0].q75);
        }
        for r in &a.rows {
            prop_assert!(r.q25 <= r.median && r.median <= r.q75);
        }
    }
}
