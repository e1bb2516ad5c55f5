//! Prints the headline numbers of the default experiment so defaults can
//! be sanity-checked end to end: per-seed accuracies, purity per selector,
//! and the ablation matrix.

use sfadapt_core::harness::{ablation_matrix, run, AblationDimension, ExperimentConfig};
use sfadapt_core::proxy::SelectorKind;

fn show(record: &sfadapt_core::harness::ExperimentRecord) {
    println!("== {} ==", record.label);
    if let Some(err) = &record.error {
        println!("  cell error: {err}");
        return;
    }
    for outcome in &record.outcomes {
        match outcome.metrics() {
            Some(m) => {
                let accs: Vec<f64> =
                    m.trace.iter().filter_map(|t| t.target_test_accuracy).collect();
                let head = accs.len().min(5);
                let first5 = accs[..head].iter().sum::<f64>() / head as f64;
                let last5 = accs[accs.len() - head..].iter().sum::<f64>() / head as f64;
                let tail = m.trace.last().unwrap();
                println!(
                    "  seed {}: src_loss {:.3} no_adapt {:.4}/{:.4} adapted {:.4}/{:.4} purity {:.4} first5 {:.4} last5 {:.4} losses ps {:.3} inter {:.3} intra {:.4}",
                    m.seed,
                    m.source_final_loss,
                    m.no_adapt_train_accuracy,
                    m.no_adapt_test_accuracy,
                    m.adapted_train_accuracy,
                    m.adapted_test_accuracy,
                    m.proxy_purity,
                    first5,
                    last5,
                    tail.proxy_loss,
                    tail.inter_loss,
                    tail.intra_loss,
                );
            }
            None => println!("  {outcome:?}"),
        }
    }
    if let Some(a) = record.aggregates {
        println!(
            "  mean: no_adapt {:.4} adapted {:.4} gain {:+.2} pts, purity {:.4}",
            a.no_adapt_test_accuracy.mean,
            a.adapted_test_accuracy.mean,
            100.0 * (a.adapted_test_accuracy.mean - a.no_adapt_test_accuracy.mean),
            a.proxy_purity.mean,
        );
    }
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let stage = args.first().map(String::as_str).unwrap_or("default");
    let cfg = ExperimentConfig::default();

    match stage {
        "default" => {
            let t0 = std::time::Instant::now();
            let record = run(&cfg).unwrap();
            show(&record);
            println!("elapsed {:?}", t0.elapsed());
        }
        "purity" => {
            // Selector purity only: one adaptation epoch keeps it cheap.
            for kind in [
                SelectorKind::Prototype,
                SelectorKind::Entropy,
                SelectorKind::Random,
            ] {
                let mut probe = cfg.clone();
                probe.selector = kind;
                probe.label = format!("{kind:?}").to_lowercase();
                probe.adapt.epochs = 1;
                let record = run(&probe).unwrap();
                show(&record);
            }
        }
        "ablate" => {
            let t0 = std::time::Instant::now();
            let records = ablation_matrix(
                &cfg,
                &[AblationDimension::Losses, AblationDimension::Aggregation],
            )
            .unwrap();
            for record in &records {
                show(record);
            }
            println!("elapsed {:?}", t0.elapsed());
        }
        other => {
            eprintln!("unknown stage {other}; use default|purity|ablate");
            std::process::exit(2);
        }
    }
}
