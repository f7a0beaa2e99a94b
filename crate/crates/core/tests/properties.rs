mod common;

use common::*;
use hrgad::augment::{augment, edge_perturb, edge_replace, swap_edge_types, swap_node_types, AugmentConfig};
use hrgad::dataio::{load_jsonl, save_jsonl, Dataset};
use hrgad::hetgraph::{type_histograms, validate, Edge, HeteroGraph, Label, TypeHistograms};
use hrgad::layers::{infer, node_embeddings, ModelParams, R2Form, Variant};
use hrgad::metrics::{auc, average_precision};
use hrgad::numerics::{Matrix, Tape};
use hrgad::objective::{anomaly_score, compute_center, ssl_loss, svdd_loss, SvddState};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

const SHAPE: Shape = Shape { max_nodes: 12, node_types: 3, edge_types: 3, feature_dim: 3 };

fn seeded_params(variant: Variant, seed: u64) -> ModelParams {
    let mut p = ModelParams::init(&schema_of(SHAPE), &model_config(variant, 4, 2), seed);
    randomize(&mut p.set, seed);
    p
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn two_copies(g: &HeteroGraph) -> HeteroGraph {
    let n = g.node_count();
    let mut features = Matrix::zeros(2 * n, g.features.cols());
    for i in 0..n {
        features.row_mut(i).copy_from_slice(g.features.row(i));
        features.row_mut(n + i).copy_from_slice(g.features.row(i));
    }
    let mut edges = g.edges.clone();
    edges.extend(g.edges.iter().map(|e| Edge { src: e.src + n, dst: e.dst + n }));
    HeteroGraph {
        id: g.id.clone(),
        node_types: g.node_types.iter().chain(&g.node_types).copied().collect(),
        features,
        edges,
        edge_types: g.edge_types.iter().chain(&g.edge_types).copied().collect(),
        label: g.label,
    }
}

fn histograms_for(g: &HeteroGraph) -> TypeHistograms {
    type_histograms([g]).unwrap_or_default()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn forward_is_permutation_invariant(seed in any::<u64>()) {
        let mut r = rng(seed);
        let g = random_graph(&mut r, SHAPE, "g");
        let mut perm: Vec<usize> = (0..g.node_count()).collect();
        perm.shuffle(&mut r);
        let moved = g.permuted(&perm);
        for variant in Variant::ALL {
            let params = seeded_params(variant, seed);
            let (e1, p1) = infer(&g, &params).unwrap();
            let (e2, p2) = infer(&moved, &params).unwrap();
            prop_assert_eq!(bits(&e1), bits(&e2), "{}", variant.name());
            prop_assert_eq!(p1.to_bits(), p2.to_bits());
        }
    }

    #[test]
    fn disconnected_duplicate_keeps_the_embedding(seed in any::<u64>()) {
        let g = random_graph(&mut rng(seed), SHAPE, "g");
        let doubled = two_copies(&g);
        for variant in Variant::ALL {
            let params = seeded_params(variant, seed);
            let (e1, _) = infer(&g, &params).unwrap();
            let (e2, _) = infer(&doubled, &params).unwrap();
            for (a, b) in e1.iter().zip(&e2) {
                prop_assert!((a - b).abs() <= 1e-9, "{} {a} vs {b}", variant.name());
            }
        }
    }

    #[test]
    fn augmentation_stays_in_schema(seed in any::<u64>(), p in 0.0..=1.0f64) {
        let mut r = rng(seed);
        let g = random_graph(&mut r, SHAPE, "g");
        let schema = schema_of(SHAPE);
        let hist = histograms_for(&g);
        for cfg in [AugmentConfig::tracelog(), AugmentConfig::flowgraph()] {
            prop_assert!(validate(&augment(&g, &hist, &cfg, &mut r), &schema).is_empty());
        }
        let perturbed = edge_perturb(&g, &hist, p, &mut r);
        prop_assert!(validate(&perturbed, &schema).is_empty());
        prop_assert_eq!(&perturbed.node_types, &g.node_types);
        prop_assert_eq!(bits(perturbed.features.as_slice()), bits(g.features.as_slice()));
        if let Ok(replaced) = edge_replace(&g, &hist, p, &mut r) {
            prop_assert!(validate(&replaced, &schema).is_empty());
            prop_assert_eq!(replaced.edge_count(), g.edge_count());
        }
        for swapped in [swap_node_types(&g, p, &mut r), swap_edge_types(&g, p, &mut r)].into_iter().flatten() {
            prop_assert!(validate(&swapped, &schema).is_empty());
            prop_assert_eq!(&swapped.edges, &g.edges);
            prop_assert_eq!(bits(swapped.features.as_slice()), bits(g.features.as_slice()));
        }
    }

    #[test]
    fn auc_ignores_monotone_transforms(seed in any::<u64>(), n in 2usize..40) {
        let mut r = rng(seed);
        let mut labels: Vec<bool> = (0..n).map(|_| r.random()).collect();
        labels[0] = true;
        labels[1] = false;
        let scores: Vec<f64> = (0..n).map(|_| r.random_range(0..20) as f64 / 8.0).collect();
        let base = auc(&scores, &labels).unwrap();
        let exp: Vec<f64> = scores.iter().map(|s| s.exp()).collect();
        let affine: Vec<f64> = scores.iter().map(|s| 3.0 * s - 7.0).collect();
        prop_assert_eq!(auc(&exp, &labels).unwrap(), base);
        prop_assert_eq!(auc(&affine, &labels).unwrap(), base);
    }

    #[test]
    fn ap_ignores_input_order(seed in any::<u64>(), n in 1usize..40) {
        // Labels are a function of the score, so reordering never swaps a
        // tied positive past a tied negative.
        let mut r = rng(seed);
        let label_of: Vec<bool> = (0..10).map(|_| r.random()).collect();
        let mut pairs: Vec<(f64, bool)> = (0..n).map(|_| {
            let k = r.random_range(0..10);
            (k as f64, label_of[k])
        }).collect();
        pairs[0].1 = true;
        let k0 = pairs[0].0 as usize;
        for p in pairs.iter_mut().filter(|p| p.0 as usize == k0) { p.1 = true; }
        let (s, l): (Vec<f64>, Vec<bool>) = pairs.iter().copied().unzip();
        let base = average_precision(&s, &l).unwrap();
        pairs.shuffle(&mut r);
        let (s2, l2): (Vec<f64>, Vec<bool>) = pairs.into_iter().unzip();
        prop_assert_eq!(average_precision(&s2, &l2).unwrap(), base);
    }

    #[test]
    fn ssl_loss_ignores_list_order(seed in any::<u64>(), n in 1usize..20, m in 1usize..20) {
        let mut r = rng(seed);
        let mut a: Vec<f64> = (0..n).map(|_| r.random_range(0.01..0.99)).collect();
        let mut b: Vec<f64> = (0..m).map(|_| r.random_range(0.01..0.99)).collect();
        let base = ssl_loss(&a, &b).unwrap();
        a.shuffle(&mut r);
        b.shuffle(&mut r);
        prop_assert!((ssl_loss(&a, &b).unwrap() - base).abs() <= 1e-12 * base.max(1.0));
    }

    #[test]
    fn svdd_loss_is_nonnegative(seed in any::<u64>(), n in 1usize..10, lambda in 0.0..1.0f64) {
        let mut r = rng(seed);
        let embeddings: Vec<Vec<f64>> = (0..n).map(|_| (0..4).map(|_| r.random_range(-3.0..3.0)).collect()).collect();
        let center = SvddState { center: (0..4).map(|_| r.random_range(-3.0..3.0)).collect(), frozen: true };
        let params = seeded_params(Variant::HrgcnR2, seed);
        prop_assert!(svdd_loss(&embeddings, &center, &params.set, lambda).unwrap() >= 0.0);
        let at_center = vec![center.center.clone(); n];
        let pure = svdd_loss(&at_center, &center, &params.set, lambda).unwrap();
        prop_assert_eq!(pure, svdd_loss(&[], &center, &params.set, lambda).unwrap());
    }

    #[test]
    fn constant_ssl_probability_keeps_the_distance_ranking(seed in any::<u64>(), prob in 0.01..0.99f64) {
        let mut r = rng(seed);
        let embeddings: Vec<Vec<f64>> = (0..12).map(|_| (0..3).map(|_| r.random_range(-2.0..2.0)).collect()).collect();
        let center = compute_center(&embeddings[..4]).unwrap();
        let scored: Vec<_> = embeddings.iter().map(|e| anomaly_score("g", e, prob, &center, true).unwrap()).collect();
        let mut by_score: Vec<usize> = (0..12).collect();
        by_score.sort_by(|&a, &b| scored[a].score.total_cmp(&scored[b].score));
        let mut by_distance: Vec<usize> = (0..12).collect();
        by_distance.sort_by(|&a, &b| scored[a].svdd_distance.total_cmp(&scored[b].svdd_distance));
        prop_assert_eq!(by_score, by_distance);
    }
}

#[test]
fn layers_bound_the_receptive_field() {
    // Path 0 → 1 → … → 5: with two layers node 0 reaches nodes 1 and 2 only.
    let n = 6;
    let mut r = rng(17);
    let features = Matrix::from_vec(n, 3, (0..3 * n).map(|_| r.random_range(-1.0..1.0)).collect());
    let g = HeteroGraph {
        id: "path".into(),
        node_types: (0..n).map(|i| i % 3).collect(),
        features,
        edges: (0..n - 1).map(|i| Edge { src: i, dst: i + 1 }).collect(),
        edge_types: (0..n - 1).map(|i| i % 3).collect(),
        label: None,
    };
    let mut moved = g.clone();
    for v in moved.features.row_mut(0) {
        *v += 10.0;
    }
    for variant in Variant::ALL {
        let params = seeded_params(variant, 3);
        let rows = |graph: &HeteroGraph| {
            let mut tape = Tape::new(&params.set);
            let x = node_embeddings(graph, &params, &mut tape).unwrap();
            tape.value(x).clone()
        };
        let (a, b) = (rows(&g), rows(&moved));
        for i in 3..n {
            assert_eq!(bits(a.row(i)), bits(b.row(i)), "{} node {i}", variant.name());
        }
    }
}

#[test]
fn independent_triples_are_permutation_invariant() {
    let mut r = rng(23);
    for case in 0..20 {
        let g = random_graph(&mut r, SHAPE, "g");
        let mut perm: Vec<usize> = (0..g.node_count()).collect();
        perm.shuffle(&mut r);
        let mut cfg = model_config(Variant::HrgcnR2, 4, 2);
        cfg.r2_form = R2Form::Independent;
        let mut params = ModelParams::init(&schema_of(SHAPE), &cfg, case);
        randomize(&mut params.set, case);
        assert_eq!(infer(&g, &params).unwrap(), infer(&g.permuted(&perm), &params).unwrap());
    }
}

#[test]
fn jsonl_round_trips_random_graphs() {
    let mut r = rng(99);
    let graphs: Vec<HeteroGraph> = (0..100)
        .map(|i| {
            let mut g = random_graph(&mut r, SHAPE, &format!("r{i}"));
            g.label = [None, Some(Label::Normal), Some(Label::Anomalous)][i % 3];
            for v in g.features.as_mut_slice() {
                *v = f64::from_bits(r.random::<u64>() >> 2) * if r.random() { 1.0 } else { -1.0 };
                if !v.is_finite() {
                    *v = 0.1;
                }
            }
            g
        })
        .collect();
    let ds = Dataset::new(schema_of(SHAPE), graphs);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("round.jsonl");
    save_jsonl(&ds, &path).unwrap();
    let back = load_jsonl(&path).unwrap();
    assert_eq!(back.schema, ds.schema);
    assert_eq!(back.graphs.len(), 100);
    for (a, b) in back.graphs.iter().zip(&ds.graphs) {
        assert_eq!(a.id, b.id);
        assert_eq!(a.label, b.label);
        assert_eq!(a.node_types, b.node_types);
        assert_eq!(a.edges, b.edges);
        assert_eq!(a.edge_types, b.edge_types);
        assert_eq!(bits(a.features.as_slice()), bits(b.features.as_slice()));
    }
}
