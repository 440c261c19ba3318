//! Cross-checks of the branch-and-cut solver against the enumeration
//! reference on desk-scale instances, over every model and cut mode.

use dcbp::binpack::{
    build_model, build_saa_model, generate_instance, CovMode, GenerateConfig,
};
use dcbp::moments::AmbiguitySpec;
use dcbp::oracle::enumerate_solve;
use dcbp::solver::{solve, CutMode, SolveConfig, SolverError};

fn exact_cfg(cut_mode: CutMode, static_ineqs: bool) -> SolveConfig {
    SolveConfig {
        gap_tol: 1e-9,
        cut_mode,
        static_inequalities: static_ineqs,
        ..SolveConfig::default()
    }
}

#[test]
fn solver_matches_enumeration_on_tiny_instances() {
    let mut checked = 0;
    for seed in 0..6u64 {
        let inst = generate_instance(&GenerateConfig {
            num_bins: 2,
            num_items: 4 + (seed % 3) as usize,
            num_samples: 40,
            cov_mode: if seed % 2 == 0 {
                CovMode::General
            } else {
                CovMode::Diagonal
            },
            seed: 100 + seed,
        })
        .unwrap();
        let specs = [
            AmbiguitySpec::gaussian(0.1).unwrap(),
            AmbiguitySpec::d1(0.1).unwrap(),
            AmbiguitySpec::d2(0.1, 1.0, 2.0).unwrap(),
        ];
        for spec in &specs {
            for (cut_mode, lifted) in [
                (CutMode::None, false),
                (CutMode::Relax, false),
                (CutMode::Lifted, true),
            ] {
                let model = build_model(&inst, spec, lifted).unwrap();
                let reference = enumerate_solve(&model).unwrap();
                let result = solve(&model, &exact_cfg(cut_mode, lifted));
                match (reference.best_objective, result) {
                    (Some(expected), Ok((sol, stats))) => {
                        assert!(
                            (sol.objective - expected).abs() <= 1e-6 * (1.0 + expected.abs()),
                            "seed {seed} mode {cut_mode:?}: solver {} vs oracle {expected} ({stats:?})",
                            sol.objective
                        );
                        sol.validate(&inst).unwrap();
                        checked += 1;
                    }
                    (None, Err(SolverError::Infeasible(_))) => checked += 1,
                    (expected, outcome) => panic!(
                        "seed {seed} mode {cut_mode:?}: oracle {expected:?} but solver {:?}",
                        outcome.map(|(s, _)| s.objective)
                    ),
                }
            }
        }
    }
    assert!(checked >= 50, "only {checked} combinations checked");
}

#[test]
fn saa_matches_scenario_counting_oracle() {
    for seed in 0..4u64 {
        let inst = generate_instance(&GenerateConfig {
            num_bins: 2,
            num_items: 4,
            num_samples: 25,
            cov_mode: CovMode::Diagonal,
            seed: 300 + seed,
        })
        .unwrap();
        let model = build_saa_model(&inst, 0.1, 12).unwrap();
        let reference = enumerate_solve(&model).unwrap();
        match (reference.best_objective, solve(&model, &exact_cfg(CutMode::None, false))) {
            (Some(expected), Ok((sol, _))) => {
                assert!(
                    (sol.objective - expected).abs() <= 1e-6 * (1.0 + expected.abs()),
                    "seed {seed}: solver {} vs oracle {expected}",
                    sol.objective
                );
            }
            (None, Err(SolverError::Infeasible(_))) => {}
            (expected, outcome) => panic!(
                "seed {seed}: oracle {expected:?} but solver {:?}",
                outcome.map(|(s, _)| s.objective)
            ),
        }
    }
}

#[test]
fn infeasible_single_item_instance_is_reported() {
    use dcbp::linalg::Mat;
    use dcbp::moments::MomentData;
    let inst = dcbp::binpack::BinPackInstance {
        num_bins: 1,
        num_items: 1,
        caps: vec![9.0],
        open_costs: vec![5.0],
        assign_costs: vec![vec![1.0]],
        rho: vec![vec![1]],
        moments: vec![MomentData::new(vec![10.0], Mat::diag(&[4.0])).unwrap()],
        samples: None,
        seed: 0,
    };
    let spec = AmbiguitySpec::d1(0.05).unwrap();
    let model = build_model(&inst, &spec, false).unwrap();
    assert_eq!(enumerate_solve(&model).unwrap().feasible_count, 0);
    assert!(matches!(
        solve(&model, &exact_cfg(CutMode::None, false)),
        Err(SolverError::Infeasible(_))
    ));
}

#[test]
fn solve_is_deterministic() {
    let inst = generate_instance(&GenerateConfig {
        num_bins: 3,
        num_items: 6,
        num_samples: 40,
        cov_mode: CovMode::General,
        seed: 5150,
    })
    .unwrap();
    let spec = AmbiguitySpec::d2(0.05, 1.0, 2.0).unwrap();
    let model = build_model(&inst, &spec, false).unwrap();
    let cfg = exact_cfg(CutMode::Relax, false);
    let (sol_a, stats_a) = solve(&model, &cfg).unwrap();
    let (sol_b, stats_b) = solve(&model, &cfg).unwrap();
    assert_eq!(sol_a, sol_b);
    assert_eq!(stats_a.nodes, stats_b.nodes);
    assert_eq!(stats_a.cuts.total(), stats_b.cuts.total());
    assert_eq!(sol_a.objective, sol_b.objective);
}
