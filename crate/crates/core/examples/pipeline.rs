//! End-to-end run: demonstrations, training of all three stages, and the
//! supported-weight comparison on the test objects.

use std::time::Instant;

use tactigrasp::adapter::{adapt_sequences, assemble_windows, train_adapter, AdapterConfig, Controller, ZeroPolicy};
use tactigrasp::bench::compare;
use tactigrasp::data::{generate_corpus, CorpusConfig};
use tactigrasp::generator::{grasp_samples, train_generator, GeneratorConfig};
use tactigrasp::par::ExecMode;
use tactigrasp::sim::Catalog;
use tactigrasp::stability::{fit_estimator, EstimatorConfig};

fn variance(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
}

fn main() -> tactigrasp::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let t = Instant::now();
    let catalog = Catalog::builtin();
    let episodes = generate_corpus(&catalog, seed, &CorpusConfig::default(), ExecMode::Parallel)?;
    let frames: usize = episodes.iter().map(|e| e.frames.len()).sum();
    println!("corpus: {} episodes, {frames} frames ({:.1?})", episodes.len(), t.elapsed());

    let t = Instant::now();
    let samples = grasp_samples(&episodes);
    let (generator, gh) = train_generator(&samples, seed, &GeneratorConfig::default())?;
    let labels: Vec<f64> = samples.iter().map(|s| s.a_deg).collect();
    println!(
        "generator: {} samples, val mse {:.3} deg², label var {:.3} ({:.1?})",
        samples.len(),
        gh.final_val_mse().unwrap(),
        variance(&labels),
        t.elapsed()
    );

    let t = Instant::now();
    let fit = fit_estimator(&episodes, seed, &EstimatorConfig::default())?;
    println!(
        "estimator: train {:?} val {:?}, val auc {:.4}, te {:e} in [{:e}, {:e}], clamped {}, J {:.3} ({:.1?})",
        fit.train_counts, fit.val_counts, fit.val_auc, fit.report.te, fit.report.a, fit.report.b, fit.report.clamped,
        fit.report.chosen_j, t.elapsed()
    );

    let t = Instant::now();
    let seqs = adapt_sequences(&episodes);
    let cfg = AdapterConfig::default();
    let windows = assemble_windows(&seqs, cfg.stride);
    let wl: Vec<f64> = windows.iter().map(|w| w.1).collect();
    let (adapter, ah) = train_adapter(&seqs, seed, &cfg)?;
    println!(
        "adapter: {} windows, val mse {:.4}, label var {:.4}, nonzero {} ({:.1?})",
        windows.len(),
        ah.final_val_mse().unwrap(),
        variance(&wl),
        wl.iter().filter(|v| **v > 0.0).count(),
        t.elapsed()
    );

    let t = Instant::now();
    let tests: Vec<_> = catalog.test_objects().into_iter().cloned().collect();
    let base = Controller { generator: Some(&generator), estimator: Some(&fit.estimator), policy: &ZeroPolicy };
    let adapted = Controller { generator: Some(&generator), estimator: Some(&fit.estimator), policy: &adapter };
    let rows = compare(&tests, &base, &adapted, seed, true, ExecMode::Parallel)?;
    for r in &rows {
        println!("{:<12} θ0 {:6.2}  none {:?}  trained {:?}  {:?}", r.object, r.initial_theta_deg, r.without, r.with, r.relative_improvement());
    }
    println!("bench ({:.1?})", t.elapsed());
    Ok(())
}
