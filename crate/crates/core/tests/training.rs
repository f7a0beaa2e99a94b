use hrgad::cli::resolve;
use hrgad::dataio::{generate, split, GeneratorConfig, Split};
use hrgad::layers::Variant;
use hrgad::train::{fit, score_graphs, Workers};

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn ten_epochs_lower_the_training_loss() {
    let gen = GeneratorConfig { num_graphs: 200, anomaly_fraction: 0.15, ..GeneratorConfig::default() };
    let ds = split(&generate(&gen).unwrap(), 0.6, 0.15, 4).unwrap();
    let mut cfg = resolve("profile = \"flowgraph-like\"", "test", &[]).unwrap().model;
    cfg.max_epochs = 10;
    cfg.patience = 100;
    cfg.seed = 4;
    let result = fit(&ds.schema, &cfg, &ds.subset_owned(Split::Train), &ds.subset_owned(Split::Val), 1).unwrap();
    assert_eq!(result.log.len(), 10);
    let first = result.log[0].losses.joint;
    let last = result.log[9].losses.joint;
    assert!(last < first, "epoch 1 loss {first}, epoch 10 loss {last}");

    // A converged model ranks anomalies above normals on the data it saw.
    let best = &result.best;
    let scored = score_graphs(&best.params, &best.svdd, true, &ds.graphs, &Workers::new(1).unwrap()).unwrap();
    let (mut normal, mut anomalous) = (Vec::new(), Vec::new());
    for (s, g) in scored.iter().zip(&ds.graphs) {
        if g.label.is_some_and(|l| l.as_u8() == 1) { &mut anomalous } else { &mut normal }.push(s.score);
    }
    assert!(median(normal.clone()) < median(anomalous.clone()));
}

#[test]
fn plain_svdd_baseline_scores_by_distance() {
    let gen = GeneratorConfig { num_graphs: 80, anomaly_fraction: 0.1, ..GeneratorConfig::default() };
    let ds = split(&generate(&gen).unwrap(), 0.6, 0.15, 2).unwrap();
    let overrides = ["model.variant=HETGCN".to_string(), "model.ssl_weight=0".to_string(), "model.max_epochs=3".to_string()];
    let cfg = resolve("profile = \"flowgraph-like\"", "test", &overrides).unwrap().model;
    assert!(!cfg.ssl_active());
    let result = fit(&ds.schema, &cfg, &ds.subset_owned(Split::Train), &ds.subset_owned(Split::Val), 1).unwrap();
    assert!(result.log.iter().all(|r| r.losses.ssl == 0.0 && r.losses.joint == r.losses.svdd));
    let best = &result.best;
    assert_eq!(best.config.variant, Variant::HetGcn);
    let scored = score_graphs(&best.params, &best.svdd, false, &ds.graphs, &Workers::new(1).unwrap()).unwrap();
    assert!(scored.iter().all(|s| s.score == s.svdd_distance));
}
