// scratch perf probe (not part of the repo)
use dcbp::binpack::*;
use dcbp::moments::AmbiguitySpec;
use dcbp::solver::*;
use std::time::Instant;

fn main() {
    // the previously failing configuration, plus timing at key scales
    let inst = generate_instance(&GenerateConfig {
        num_bins: 6, num_items: 32, num_samples: 200,
        cov_mode: CovMode::Diagonal, seed: 42,
    }).unwrap();
    for (name, spec) in [("gaussian", AmbiguitySpec::gaussian(0.05).unwrap()),
                         ("dcbp1", AmbiguitySpec::d1(0.05).unwrap()),
                         ("dcbp2", AmbiguitySpec::d2(0.05, 1.0, 2.0).unwrap())] {
        let model = build_model(&inst, &spec, false).unwrap();
        let cfg = SolveConfig { gap_tol: 1e-4, cut_mode: CutMode::Relax, time_limit_secs: Some(600.0), ..Default::default() };
        let t = Instant::now();
        match solve(&model, &cfg) {
            Ok((sol, stats)) => println!(
                "I6J32 {name}: obj {:.2} open {} nodes {} cuts {} status {:?} time {:.2}s",
                sol.objective, sol.z.iter().filter(|&&z| z).count(), stats.nodes,
                stats.cuts.total(), stats.status, t.elapsed().as_secs_f64()),
            Err(e) => println!("I6J32 {name}: ERR {e}"),
        }
    }
}
