use tactigrasp::adapter::{
    adapt_sequences, run_closed_loop, train_adapter, AdapterConfig, AdapterModel, Controller, LoopConfig,
    ScheduledDisturbance, ZeroPolicy,
};
use tactigrasp::data::{generate_corpus, read_dataset, validate_file, write_corpus, CorpusConfig, DatasetKind};
use tactigrasp::generator::{grasp_samples, train_generator, GeneratorConfig, GeneratorModel};
use tactigrasp::par::ExecMode;
use tactigrasp::sim::{Catalog, DisturbanceEvent, DisturbanceKind, SimState};
use tactigrasp::stability::{fit_estimator, EstimatorConfig, StabilityEstimator};

fn small() -> CorpusConfig {
    CorpusConfig {
        gp: 12,
        stab: 12,
        ga: 12,
        ..Default::default()
    }
}

#[test]
fn written_corpus_reads_back_identically_and_validates() {
    let eps = generate_corpus(&Catalog::builtin(), 3, &small(), ExecMode::Parallel).unwrap();
    assert_eq!(eps.len(), 36);
    let dir = tempfile::tempdir().unwrap();
    let paths = write_corpus(dir.path(), &eps).unwrap();
    for (ep, p) in eps.iter().zip(&paths) {
        assert!(p.starts_with(dir.path().join(ep.header.kind.as_str())));
        assert_eq!(&validate_file(p).unwrap(), ep);
        assert_eq!(&read_dataset(p).unwrap(), ep);
    }
    for kind in DatasetKind::ALL {
        assert_eq!(eps.iter().filter(|e| e.header.kind == kind).count(), 12);
    }
}

#[test]
fn execution_mode_does_not_change_results() {
    let seq = generate_corpus(&Catalog::builtin(), 5, &small(), ExecMode::Sequential).unwrap();
    let par = generate_corpus(&Catalog::builtin(), 5, &small(), ExecMode::Parallel).unwrap();
    assert_eq!(seq, par);

    let samples = grasp_samples(&seq);
    let gen = |mode| {
        let cfg = GeneratorConfig {
            epochs: 2,
            mode,
            ..Default::default()
        };
        train_generator(&samples, 5, &cfg).unwrap().0.to_container().to_bytes()
    };
    assert_eq!(gen(ExecMode::Sequential), gen(ExecMode::Parallel));
}

#[test]
fn trained_stages_survive_a_save_load_cycle_and_drive_the_loop() {
    let eps = generate_corpus(&Catalog::builtin(), 7, &small(), ExecMode::Parallel).unwrap();
    let dir = tempfile::tempdir().unwrap();

    let gcfg = GeneratorConfig {
        epochs: 3,
        ..Default::default()
    };
    let (generator, _) = train_generator(&grasp_samples(&eps), 7, &gcfg).unwrap();
    let fit = fit_estimator(&eps, 7, &EstimatorConfig::default()).unwrap();
    let acfg = AdapterConfig {
        epochs: 2,
        ..Default::default()
    };
    let (adapter, _) = train_adapter(&adapt_sequences(&eps), 7, &acfg).unwrap();

    generator.save(&dir.path().join("g.tgm")).unwrap();
    fit.estimator.save(&dir.path().join("e.tgm")).unwrap();
    adapter.save(&dir.path().join("a.tgm")).unwrap();
    let g2 = GeneratorModel::load(&dir.path().join("g.tgm")).unwrap();
    let e2 = StabilityEstimator::load(&dir.path().join("e.tgm")).unwrap();
    let a2 = AdapterModel::load(&dir.path().join("a.tgm")).unwrap();
    assert_eq!(g2, generator);
    assert_eq!(e2, fit.estimator);
    assert_eq!(a2, adapter);

    let object = Catalog::builtin().require("perfume").unwrap().clone();
    let schedule = [ScheduledDisturbance {
        at_tick: 10,
        event: DisturbanceEvent::new(DisturbanceKind::Pull, 0.3, 0.5),
    }];
    let cfg = LoopConfig {
        max_ticks: 320,
        ..Default::default()
    };
    let run = |policy: &dyn tactigrasp::adapter::DeltaPolicy, g: &GeneratorModel, e: &StabilityEstimator| {
        let ctl = Controller {
            generator: Some(g),
            estimator: Some(e),
            policy,
        };
        run_closed_loop(SimState::reset(object.clone(), 7).unwrap(), &ctl, &schedule, &cfg).unwrap()
    };
    let before = run(&adapter, &generator, &fit.estimator);
    let after = run(&a2, &g2, &e2);
    assert_eq!(before.to_tsv(), after.to_tsv());
    assert!(before.trace.iter().all(|r| r.log_likelihood.is_finite()));

    let zero = run(&ZeroPolicy, &g2, &e2);
    assert_eq!(zero.initial_theta_deg, after.initial_theta_deg);
    assert!(zero.trace.iter().all(|r| r.target_deg == zero.trace[0].target_deg));
}
