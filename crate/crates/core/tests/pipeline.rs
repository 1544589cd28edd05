use parity_forecast::audit::{label_counts, unit_errors, ParityReport};
use parity_forecast::debias::DebiasMethod;
use parity_forecast::forecaster::{evaluate_loss, train, ModelConfig, TrainedModel};
use parity_forecast::panel::{make_windows, split_for_test_days, Group};
use parity_forecast::synth::{generate, SynthConfig};

#[test]
fn synthetic_panels_cover_every_majority_label() {
    for seed in 1..=5 {
        let panel = generate(&SynthConfig { seed, ..SynthConfig::default() }).unwrap();
        let counts = label_counts(panel.records());
        for g in Group::ALL {
            assert!(counts[&g] >= 1, "seed {seed}: no {g} unit");
        }
    }
}

#[test]
fn baseline_training_halves_the_loss_at_default_config() {
    let panel = generate(&SynthConfig::default()).unwrap();
    let cfg = ModelConfig::default();
    let split = split_for_test_days(&panel, 14).unwrap();
    let w = make_windows(&panel, cfg.encoder_len, cfg.horizon, split).unwrap();
    let model = train(&w.train, &cfg, DebiasMethod::None).unwrap();
    let first = model.history.initial_loss;
    let last = *model.history.epoch_losses.last().unwrap();
    assert_eq!(model.history.epoch_losses.len(), cfg.epochs);
    assert!(last <= 0.5 * first, "loss went from {first} to {last}");
    assert!(evaluate_loss(&model, &w.train).unwrap() <= 0.5 * first);
}

#[test]
fn trained_model_survives_a_checkpoint_and_audits_identically() {
    let panel = generate(&SynthConfig { n_units: 12, n_days: 70, ..SynthConfig::default() }).unwrap();
    let cfg = ModelConfig { epochs: 3, hidden_sizes: vec![8], ..ModelConfig::default() };
    let split = split_for_test_days(&panel, 14).unwrap();
    let w = make_windows(&panel, cfg.encoder_len, cfg.horizon, split).unwrap();
    let model = train(&w.train, &cfg, DebiasMethod::demopts()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    model.save(&path, None).unwrap();
    let (back, _) = TrainedModel::load(&path).unwrap();
    assert_eq!(back, model);

    let records: Vec<_> = panel.records().cloned().collect();
    let report = |m: &TrainedModel| {
        let f = m.forward(&w.test).unwrap();
        let e = unit_errors(&f, &w.test, &cfg.quantiles, &records).unwrap();
        serde_json::to_string(&ParityReport::build("demopts", 1, "h", e).unwrap()).unwrap()
    };
    assert_eq!(report(&back), report(&model));
}
