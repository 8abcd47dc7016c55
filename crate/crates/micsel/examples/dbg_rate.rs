//! Scratch driver for sizing the replication studies before the test
//! suites pin their budgets.  Run one mode at a time:
//!
//! ```text
//! cargo run -p micsel --example dbg_rate -- ar
//! ```

use micsel::{
    rate_diagnostic, run_estimation_experiment, run_selection_experiment, ArBakerParams,
    BakerParams, Criterion, ExperimentConfig, ExperimentReport, PolyBakerParams, Scenario,
    VonMisesParams, XDesign,
};
use std::time::Instant;

fn dump_selection(report: &ExperimentReport) {
    for run in &report.runs {
        println!(
            "n={} completed={} excluded={} secs={:.1}",
            run.n, run.completed, run.excluded, run.runtime.total_secs
        );
        for row in &run.frequency {
            println!(
                "  {:?}: counts={:?} excluded={}",
                row.criterion, row.counts, row.excluded
            );
        }
    }
}

fn dump_estimates(report: &ExperimentReport) {
    for run in &report.runs {
        println!(
            "n={} completed={} excluded={} secs={:.1}",
            run.n, run.completed, run.excluded, run.runtime.total_secs
        );
        if let Some(est) = &run.estimates {
            println!("  names={:?}", est.names);
            println!(
                "  mean={:?}",
                est.mean.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>()
            );
            if let Some(sd) = &est.sd {
                println!(
                    "  sd  ={:?}",
                    sd.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>()
                );
            }
            println!(
                "  completed={} excluded_degenerate={}",
                est.completed, est.excluded_degenerate
            );
        }
    }
}

fn ar_orders(sizes: Vec<usize>, reps: usize) -> Result<(), Box<dyn std::error::Error>> {
    let truth = ArBakerParams::new(vec![0.5, -0.25, 0.1], 3.0, 0.5, 0.5, 1.5)?;
    let scenario = Scenario::ArSelect { truth, k_max: 10 };
    let mut config = ExperimentConfig::new(scenario, sizes, 4242);
    config.replications = reps;
    config.criteria = vec![Criterion::Gicc, Criterion::Mic1, Criterion::Mic2];
    let t0 = Instant::now();
    let report = run_selection_experiment(&config)?;
    dump_selection(&report);
    println!("total secs={:.1}", t0.elapsed().as_secs_f64());
    Ok(())
}

fn poly_degrees(
    sizes: Vec<usize>,
    reps: usize,
    design: XDesign,
    bfgs: bool,
) -> Result<(), Box<dyn std::error::Error>> {
    let truth = PolyBakerParams::new(vec![-1.5, 2.0, 5.0], 3.0, 0.5, 0.5, 1.5)?;
    let scenario = Scenario::PolySelect {
        truth,
        design,
        k_max: 10,
    };
    let mut config = ExperimentConfig::new(scenario, sizes, 4242);
    if bfgs {
        config.fit.optimizer =
            micsel::OptimizerSettings::Bfgs(Default::default());
    }
    config.replications = reps;
    config.criteria = vec![Criterion::Gicc, Criterion::Mic1, Criterion::Mic2];
    let t0 = Instant::now();
    let report = run_selection_experiment(&config)?;
    dump_selection(&report);
    println!("total secs={:.1}", t0.elapsed().as_secs_f64());
    Ok(())
}

fn baker_estimates(sizes: Vec<usize>, reps: usize) -> Result<(), Box<dyn std::error::Error>> {
    let truth = BakerParams::new(0.3, 0.5, 0.5, 1.5)?;
    let scenario = Scenario::BakerFit { truth };
    let mut config = ExperimentConfig::new(scenario, sizes, 4242);
    config.replications = reps;
    let t0 = Instant::now();
    let report = run_estimation_experiment(&config)?;
    dump_estimates(&report);
    println!("total secs={:.1}", t0.elapsed().as_secs_f64());
    Ok(())
}

fn vonmises(sizes: Vec<usize>, reps: usize) -> Result<(), Box<dyn std::error::Error>> {
    let truth = VonMisesParams::coupled(2.0, 1.0, 1.5, 2.5, 3.0)?;
    let scenario = Scenario::VonMisesSelect { truth };
    let mut config = ExperimentConfig::new(scenario.clone(), sizes.clone(), 4242);
    config.replications = reps;
    config.criteria = vec![Criterion::Gicc, Criterion::Mic1, Criterion::Mic2];
    let t0 = Instant::now();
    let report = run_selection_experiment(&config)?;
    dump_selection(&report);
    println!("selection secs={:.1}", t0.elapsed().as_secs_f64());

    let mut config = ExperimentConfig::new(scenario, sizes, 4242);
    config.replications = reps;
    let t0 = Instant::now();
    let report = run_estimation_experiment(&config)?;
    dump_estimates(&report);
    println!("estimation secs={:.1}", t0.elapsed().as_secs_f64());
    Ok(())
}

fn rate_check() -> Result<(), Box<dyn std::error::Error>> {
    let truth = ArBakerParams::new(vec![0.5, -0.25, 0.1], 3.0, 0.5, 0.5, 1.5)?;
    let scenario = Scenario::ArSelect { truth, k_max: 4 };
    let mut config = ExperimentConfig::new(scenario, vec![1000, 4000], 4242);
    config.replications = 100;
    let t0 = Instant::now();
    let diag = rate_diagnostic(&config, (1000, 4000))?;
    println!(
        "completed {}/{} medians {:.6e} {:.6e} ratio {:.4} passes {} secs {:.1}",
        diag.completed_small,
        diag.completed_large,
        diag.median_small,
        diag.median_large,
        diag.ratio,
        diag.passes,
        t0.elapsed().as_secs_f64()
    );
    for w in &diag.warnings {
        println!("warning: {w}");
    }
    Ok(())
}

fn ar_anatomy(reps: std::ops::Range<usize>) -> Result<(), Box<dyn std::error::Error>> {
    use micsel::{fit_candidates, select_from_fits, ArBakerFamily, Dataset, NestedFamily, RngStream};
    let truth = ArBakerParams::new(vec![0.5, -0.25, 0.1], 3.0, 0.5, 0.5, 1.5)?;
    let scenario = Scenario::ArSelect {
        truth: truth.clone(),
        k_max: 10,
    };
    let fit = scenario.default_fit();
    for rep in reps {
        let mut rng = RngStream::new(4242, rep as u64).rng();
        let data: Dataset = scenario.simulate(3000, 200, &mut rng)?;
        let fits = fit_candidates(&data, &ArBakerFamily, 10, &fit)?;
        let scan = select_from_fits(&data, &ArBakerFamily, &fits, Criterion::Mic2, None)?;
        let pick = scan.selected_k;
        if pick == 3 {
            println!("rep {rep}: mic2 -> 3");
            continue;
        }
        println!("rep {rep}: mic2 -> {pick}");
        for cf in &fits.fits {
            match &cf.outcome {
                Ok(f) => {
                    let d = f.params_hat.len();
                    let floor = micsel::ArBakerFamily
                        .scale_floor(&data, cf.order)?
                        .map(|fl| fl.min)
                        .unwrap_or(f64::NAN);
                    println!(
                        "  p={:<2} gic={:<10.5} deg={} conv={} bnd={:?} s={:.4} a={:.3} k={:.3} it={} init_s={:.4} floor={:.4}",
                        cf.order,
                        f.gic_at_opt.value,
                        cf.degenerate,
                        f.converged,
                        f.boundary,
                        f.params_hat[d - 3],
                        f.params_hat[d - 2],
                        f.params_hat[d - 1],
                        f.iterations,
                        f.init_used[d - 3],
                        floor
                    );
                }
                Err(e) => println!("  p={:<2} failed: {e}", cf.order),
            }
        }
    }
    Ok(())
}

fn witness_scan() -> Result<(), Box<dyn std::error::Error>> {
    use micsel::{
        default_init, mgice, retry_init, Baker, Dataset, FamilyTag, FitConfig, OptimizerSettings,
        RngStream, ScaleFloor,
    };
    let truth = BakerParams::new(0.3, 0.53, 0.48, 1.7)?;
    for stream in 0..40u64 {
        let mut rng = RngStream::new(7, stream).rng();
        let (draws, _) = micsel::sample_baker(200, &truth, &mut rng)?;
        let data = Dataset::univariate(draws)?;
        let init = default_init(&data, &FamilyTag::Baker)?;
        let floor = ScaleFloor::from_init(&init, 1);
        let config = FitConfig {
            optimizer: OptimizerSettings::Bfgs(Default::default()),
            scale_floor: Some(floor),
            ..FitConfig::default()
        };
        let base = mgice(&data, &Baker, &init, &config)?;
        let variant_start = retry_init(&FamilyTag::Baker, &init).unwrap();
        let variant = mgice(&data, &Baker, &variant_start, &config)?;
        println!(
            "stream {stream:>2}: base deg={} conv={} s/min={:.2} | variant deg={} conv={} s/min={:.2}",
            floor.degenerate_fit(&base),
            base.converged,
            base.params_hat[1] / floor.min,
            floor.degenerate_fit(&variant),
            variant.converged,
            variant.params_hat[1] / floor.min
        );
    }
    Ok(())
}

fn witness_ar() -> Result<(), Box<dyn std::error::Error>> {
    use micsel::{
        mgice, mgice_retry, ArBakerFamily, FitConfig, NestedFamily, OptimizerSettings, RngStream,
    };
    let truth = ArBakerParams::new(vec![0.5, -0.25, 0.1], 3.0, 0.5, 0.5, 1.5)?;
    let scenario = Scenario::ArSelect {
        truth: truth.clone(),
        k_max: 10,
    };
    for rep in [8u64, 10, 16, 19, 22] {
        let mut rng = RngStream::new(4242, rep).rng();
        let data = scenario.simulate(3000, 200, &mut rng)?;
        for order in [8usize, 9] {
            let model = ArBakerFamily.model(order)?;
            let init = ArBakerFamily.default_init(&data, order)?;
            let floor = ArBakerFamily.scale_floor(&data, order)?.unwrap();
            let config = FitConfig {
                optimizer: OptimizerSettings::Bfgs(Default::default()),
                truncation_l: Some(10),
                scale_floor: Some(floor),
                ..FitConfig::default()
            };
            // A start already inside the funnel: co-adapted small shapes.
            let mut funnel = init.clone();
            let d = funnel.len();
            funnel[d - 3] = 1.45 * floor.min;
            funnel[d - 2] = 0.09;
            funnel[d - 1] = 0.29;
            let first = mgice(&data, &model, &funnel, &config)?;
            let second = mgice(&data, &model, &init, &config)?;
            let (kept, degenerate) =
                mgice_retry(&data, &model, &[funnel.clone(), init.clone()], &config)?;
            println!(
                "rep {rep} p={order}: funnel deg={} conv={} s/min={:.2} | default deg={} conv={} s/min={:.2} | retry deg={} s/min={:.2}",
                floor.degenerate_fit(&first),
                first.converged,
                first.params_hat[d - 3] / floor.min,
                floor.degenerate_fit(&second),
                second.converged,
                second.params_hat[d - 3] / floor.min,
                degenerate,
                kept.params_hat[d - 3] / floor.min,
            );
        }
    }
    Ok(())
}

fn poly_anatomy(reps: std::ops::Range<usize>) -> Result<(), Box<dyn std::error::Error>> {
    use micsel::{fit_candidates, select_from_fits, Dataset, PolyBakerFamily, RngStream};
    let truth = PolyBakerParams::new(vec![-1.5, 2.0, 5.0], 3.0, 0.5, 0.5, 1.5)?;
    let scenario = Scenario::PolySelect {
        truth,
        design: XDesign::StandardNormal,
        k_max: 10,
    };
    let fit = scenario.default_fit();
    for rep in reps {
        let mut rng = RngStream::new(4242, rep as u64).rng();
        let data: Dataset = scenario.simulate(1000, 200, &mut rng)?;
        let fits = fit_candidates(&data, &PolyBakerFamily, 10, &fit)?;
        let picks: Vec<String> = [Criterion::Gicc, Criterion::Mic1, Criterion::Mic2]
            .iter()
            .map(|&c| {
                match select_from_fits(&data, &PolyBakerFamily, &fits, c, None) {
                    Ok(s) => format!("{c:?}={}", s.selected_k),
                    Err(e) => format!("{c:?}=ERR({e})"),
                }
            })
            .collect();
        println!("rep {rep}: {}", picks.join(" "));
        if picks.iter().all(|p| p.ends_with("=3")) {
            continue;
        }
        for cf in &fits.fits {
            match &cf.outcome {
                Ok(f) => {
                    let d = f.params_hat.len();
                    println!(
                        "  p={:<2} gic={:<12.5} deg={} conv={} bnd={:?} s={:.4} a={:.3} k={:.3} it={} init_s={:.4}",
                        cf.order,
                        f.gic_at_opt.value,
                        cf.degenerate,
                        f.converged,
                        f.boundary,
                        f.params_hat[d - 3],
                        f.params_hat[d - 2],
                        f.params_hat[d - 1],
                        f.iterations,
                        f.init_used[d - 3],
                    );
                }
                Err(e) => println!("  p={:<2} failed: {e}", cf.order),
            }
        }
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mode = std::env::args().nth(1).unwrap_or_else(|| "ar".into());
    match mode.as_str() {
        "ar" => ar_orders(vec![3000], 100),
        "ar-anatomy" => ar_anatomy(0..25),
        "witness" => witness_scan(),
        "witness-ar" => witness_ar(),
        "poly-anatomy" => poly_anatomy(0..20),
        "ar-small" => ar_orders(vec![1000], 100),
        "poly" => poly_degrees(vec![1000], 100),
        "poly-small" => poly_degrees(vec![300], 100),
        "baker" => baker_estimates(vec![5000], 20),
        "baker-grid" => baker_estimates(vec![1000, 3000], 20),
        "vm" => vonmises(vec![300], 100),
        "rate" => rate_check(),
        other => {
            eprintln!("unknown mode {other}");
            Ok(())
        }
    }
}
