use std::collections::{BTreeMap, HashMap};

use edgecare::classify::bayes::normalize_log;
use edgecare::classify::entropy::{entropy, gain_ratio, information_gain, split_information};
use edgecare::classify::{
    evaluate_classifier, regression_metrics, train_decision_tree, train_naive_bayes,
    train_random_forest, weighted_index, AttrKind, ClassLabel, Classifier, ClassifierModel,
    FeatureVector, ForestParams, LabeledDataset, ModelDocument, Schema, TreeParams, Value,
    WeightedIndexModel,
};
use proptest::prelude::*;

use ClassLabel::{Stable as A, Worsening as B};

fn one_d(xs: &[(f64, ClassLabel)]) -> LabeledDataset {
    let schema = Schema::simple(&[("x", AttrKind::Numeric)]).unwrap();
    let rows = xs
        .iter()
        .map(|(x, c)| {
            (
                FeatureVector::new(&schema, vec![Some(Value::Num(*x))]).unwrap(),
                *c,
            )
        })
        .collect();
    LabeledDataset::new(schema, rows).unwrap()
}

fn categorical(vals: &[(&str, ClassLabel)]) -> LabeledDataset {
    let schema = Schema::simple(&[("v", AttrKind::Categorical)]).unwrap();
    let rows = vals
        .iter()
        .map(|(v, c)| {
            (
                FeatureVector::new(&schema, vec![Some(Value::Cat(v.to_string()))]).unwrap(),
                *c,
            )
        })
        .collect();
    LabeledDataset::new(schema, rows).unwrap()
}

fn separable() -> LabeledDataset {
    one_d(&[(1.0, A), (2.0, A), (3.0, A), (7.0, B), (8.0, B), (9.0, B)])
}

/// Mixed schema: three numeric columns on a coarse grid and two categorical.
fn mixed_schema() -> Schema {
    Schema::simple(&[
        ("a", AttrKind::Numeric),
        ("b", AttrKind::Numeric),
        ("c", AttrKind::Categorical),
        ("d", AttrKind::Numeric),
        ("e", AttrKind::Categorical),
    ])
    .unwrap()
}

fn mixed_row(schema: &Schema, cells: &(u8, u8, u8, u8, u8)) -> FeatureVector {
    let (a, b, c, d, e) = *cells;
    FeatureVector::new(
        schema,
        vec![
            Some(Value::Num(a as f64 * 0.5)),
            Some(Value::Num(b as f64)),
            Some(Value::Cat(format!("c{c}"))),
            Some(Value::Num(d as f64 - 3.0)),
            Some(Value::Cat(["lo", "mid", "hi"][e as usize % 3].to_string())),
        ],
    )
    .unwrap()
}

fn cells() -> impl Strategy<Value = (u8, u8, u8, u8, u8)> {
    (0u8..6, 0u8..4, 0u8..3, 0u8..5, 0u8..3)
}

/// Rows with a label per distinct feature vector, so the set is consistent.
fn consistent(raw: &[((u8, u8, u8, u8, u8), u8)]) -> LabeledDataset {
    let schema = mixed_schema();
    let mut label: HashMap<(u8, u8, u8, u8, u8), ClassLabel> = HashMap::new();
    let rows = raw
        .iter()
        .map(|(cells, c)| {
            let y = *label
                .entry(*cells)
                .or_insert(ClassLabel::from_index(*c as usize % 3));
            (mixed_row(&schema, cells), y)
        })
        .collect();
    LabeledDataset::new(schema, rows).unwrap()
}

fn accuracy<C: Classifier>(m: &C, d: &LabeledDataset) -> f64 {
    let hits = d
        .rows
        .iter()
        .filter(|(x, y)| m.predict(x).unwrap().0 == *y)
        .count();
    hits as f64 / d.len() as f64
}

#[test]
fn entropy_and_gain_ratio_match_hand_values() {
    // H(3/4, 1/4) = 0.75 log2(4/3) + 0.25 log2(4)
    let h = 0.75 * (4.0f64 / 3.0).log2() + 0.5;
    assert!((h - 0.811_278_124_459_133).abs() < 1e-12);
    let children = vec![vec![3.0, 1.0], vec![1.0, 3.0]];
    assert!((entropy(&[3.0, 1.0]) - h).abs() < 1e-9);
    assert!((information_gain(&[4.0, 4.0], &children) - (1.0 - h)).abs() < 1e-9);
    assert!((split_information(&children) - 1.0).abs() < 1e-9);
    assert!((gain_ratio(&[4.0, 4.0], &children) - 0.188_721_875_540_867).abs() < 1e-9);

    // Uneven split {2 A} | {2 A, 4 B}: gain 1 - 0.75 H(1/3), split info H(1/4).
    let uneven = vec![vec![2.0, 0.0], vec![2.0, 4.0]];
    let h13 = (1.0 / 3.0) * 3f64.log2() + (2.0 / 3.0) * (1.5f64).log2();
    let h14 = 0.25 * 4f64.log2() + 0.75 * (4.0f64 / 3.0).log2();
    let parent_h = 0.5 * 2f64.log2() + 0.5 * 2f64.log2();
    let gain = parent_h - 0.75 * h13;
    assert!((gain_ratio(&[4.0, 4.0], &uneven) - gain / h14).abs() < 1e-9);
}

#[test]
fn tree_picks_midpoint_five() {
    let m = train_decision_tree(&separable(), &TreeParams::default()).unwrap();
    let doc = serde_json::to_value(&m.root).unwrap();
    assert_eq!(doc["threshold"], 5.0);
    assert_eq!(
        doc["le"]["distribution"],
        serde_json::json!([1.0, 0.0, 0.0])
    );
    assert_eq!(
        doc["gt"]["distribution"],
        serde_json::json!([0.0, 0.0, 1.0])
    );
    let x = FeatureVector::new(&m.schema, vec![Some(Value::Num(2.0))]).unwrap();
    assert_eq!(m.predict(&x).unwrap().0, A);
}

#[test]
fn naive_bayes_closed_form() {
    // Three x's in A and one y in B reproduce 0.878.
    let m = train_naive_bayes(&categorical(&[("x", A), ("x", A), ("x", A), ("y", B)])).unwrap();
    let q = FeatureVector::new(&m.schema, vec![Some(Value::Cat("x".into()))]).unwrap();
    let p = m.distribution(&q).unwrap();
    let hand =
        (0.75 * (3.0 + 1.0) / (3.0 + 2.0)) / (0.75 * 4.0 / 5.0 + 0.25 * (0.0 + 1.0) / (1.0 + 2.0));
    assert!((p[0] - 0.878).abs() < 1e-3, "{p:?}");
    assert!((p[0] - hand).abs() < 1e-12);
    // The literal rows x, x, y for A give 0.45 / (0.45 + 1/12).
    let m = train_naive_bayes(&categorical(&[("x", A), ("x", A), ("y", A), ("y", B)])).unwrap();
    let p = m.distribution(&q).unwrap();
    assert!((p[0] - 0.84375).abs() < 1e-12);
}

#[test]
fn uninformative_likelihood_returns_priors() {
    let m = train_naive_bayes(&categorical(&[("x", A), ("y", A), ("x", B), ("y", B)])).unwrap();
    for v in ["x", "y", "unseen"] {
        let q = FeatureVector::new(&m.schema, vec![Some(Value::Cat(v.into()))]).unwrap();
        let p = m.distribution(&q).unwrap();
        assert!(
            (p[0] - 0.5).abs() < 1e-12 && (p[2] - 0.5).abs() < 1e-12,
            "{v}: {p:?}"
        );
    }
}

#[test]
fn forest_separates_the_line() {
    let d = separable();
    let f = train_random_forest(
        &d,
        &ForestParams {
            n_trees: 25,
            attrs_per_split: Some(1),
            seed: 42,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(accuracy(&f, &d), 1.0);
}

#[test]
fn forest_is_thread_count_independent() {
    let d = consistent(
        &(0..60u8)
            .map(|i| ((i % 6, i % 4, i % 3, i % 5, i % 7), i % 3))
            .collect::<Vec<_>>(),
    );
    let p = ForestParams {
        n_trees: 12,
        seed: 9,
        ..Default::default()
    };
    let serial = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| train_random_forest(&d, &p).unwrap());
    let parallel = train_random_forest(&d, &p).unwrap();
    assert_eq!(
        serde_json::to_string(&serial).unwrap(),
        serde_json::to_string(&parallel).unwrap()
    );
}

#[test]
fn metrics_fixtures() {
    let m = regression_metrics(&[0.0, 1.0, 2.0], &[0.0, 1.0, 1.0]).unwrap();
    assert!((m.mae - 1.0 / 3.0).abs() <= 1e-12);
    assert!((m.rmse - 1.0 / 3f64.sqrt()).abs() <= 1e-12);
    assert!((m.rae_pct.unwrap() - 50.0).abs() <= 1e-12);

    let d = separable();
    let tree = train_decision_tree(&d, &TreeParams::default()).unwrap();
    let perfect = evaluate_classifier(&tree, &d).unwrap();
    assert_eq!(
        (perfect.mae, perfect.rmse, perfect.rae_pct),
        (0.0, 0.0, Some(0.0))
    );
    assert_eq!((perfect.correct_count, perfect.instance_count), (6, 6));
    let empty = LabeledDataset::new(d.schema.clone(), vec![]).unwrap();
    assert!(evaluate_classifier(&tree, &empty).is_err());
}

#[test]
fn weighted_index_dot_product() {
    let w: BTreeMap<String, f64> = [("a", 0.5), ("b", 0.3), ("c", 0.2)]
        .iter()
        .map(|(k, v)| (k.to_string(), *v))
        .collect();
    let m = WeightedIndexModel::new(w, 0.6).unwrap();
    let s: BTreeMap<String, Option<f64>> = [("a", 1.0), ("b", 0.0), ("c", 0.5)]
        .iter()
        .map(|(k, v)| (k.to_string(), Some(*v)))
        .collect();
    let r = weighted_index(&m, &s).unwrap();
    assert!((r.index - 0.60).abs() <= 1e-12);
}

#[test]
fn every_model_round_trips() {
    let d = consistent(
        &(0..50u8)
            .map(|i| ((i % 6, i % 4, i % 3, i % 5, i / 7), i % 3))
            .collect::<Vec<_>>(),
    );
    let models = [
        ClassifierModel::Tree(train_decision_tree(&d, &TreeParams::default()).unwrap()),
        ClassifierModel::Forest(
            train_random_forest(
                &d,
                &ForestParams {
                    n_trees: 5,
                    seed: 3,
                    ..Default::default()
                },
            )
            .unwrap(),
        ),
        ClassifierModel::Bayes(train_naive_bayes(&d).unwrap()),
    ];
    for m in models {
        let doc = ModelDocument::new(m);
        let text = doc.to_json().unwrap();
        let back = ModelDocument::from_json(&text).unwrap();
        assert_eq!(back, doc, "{}", doc.model.algorithm());
        assert_eq!(back.to_json().unwrap(), text);
        for (x, _) in &d.rows {
            assert_eq!(
                back.model.distribution(x).unwrap(),
                doc.model.distribution(x).unwrap()
            );
        }
    }
}

#[test]
fn standard_schema_trains() {
    let schema = Schema::chronic().clone();
    let mut rows = vec![];
    for i in 0..30 {
        let mut x = FeatureVector::missing(&schema);
        x.set(
            &schema,
            "mean_hr_bpm",
            Some(Value::Num(60.0 + 3.0 * i as f64)),
        )
        .unwrap();
        x.set(&schema, "q01", Some(Value::Cat((i % 5).to_string())))
            .unwrap();
        let y = if i < 10 {
            A
        } else if i < 20 {
            ClassLabel::LightWorsening
        } else {
            B
        };
        rows.push((x, y));
    }
    let d = LabeledDataset::new(schema, rows).unwrap();
    let t = train_decision_tree(&d, &TreeParams::default()).unwrap();
    assert_eq!(accuracy(&t, &d), 1.0);
    let f = train_random_forest(&d, &ForestParams::default()).unwrap();
    assert_eq!(f.attrs_per_split, 7);
    assert!(train_random_forest(
        &d,
        &ForestParams {
            attrs_per_split: Some(42),
            ..Default::default()
        }
    )
    .is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn unbounded_tree_fits_consistent_data(raw in prop::collection::vec((cells(), 0u8..3), 1..80)) {
        let d = consistent(&raw);
        let m = train_decision_tree(&d, &TreeParams::default()).unwrap();
        prop_assert_eq!(accuracy(&m, &d), 1.0);
        let sum = |n: &serde_json::Value| -> bool {
            fn walk(n: &serde_json::Value) -> bool {
                match n["node"].as_str() {
                    Some("leaf") => (n["distribution"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).sum::<f64>() - 1.0).abs() < 1e-9,
                    Some("numeric") => walk(&n["le"]) && walk(&n["gt"]),
                    _ => n["branches"].as_array().unwrap().iter().all(|b| walk(&b["node"])),
                }
            }
            walk(n)
        };
        prop_assert!(sum(&serde_json::to_value(&m.root).unwrap()));
    }

    #[test]
    fn bounded_tree_respects_depth(raw in prop::collection::vec((cells(), 0u8..3), 1..80), depth in 0usize..4) {
        let d = consistent(&raw);
        let m = train_decision_tree(&d, &TreeParams { max_depth: Some(depth), min_leaf: 1 }).unwrap();
        prop_assert!(m.root.depth() <= depth);
    }

    #[test]
    fn degenerate_forest_is_the_tree(
        raw in prop::collection::vec((cells(), 0u8..3), 1..60),
        queries in prop::collection::vec(cells(), 20),
        seed in any::<u64>(),
    ) {
        let d = consistent(&raw);
        let tree = train_decision_tree(&d, &TreeParams::default()).unwrap();
        let forest = train_random_forest(&d, &ForestParams {
            n_trees: 1,
            attrs_per_split: Some(d.schema.len()),
            seed,
            bootstrap: false,
            tree: TreeParams::default(),
        }).unwrap();
        prop_assert_eq!(&forest.trees[0], &tree.root);
        for q in &queries {
            let x = mixed_row(&d.schema, q);
            prop_assert_eq!(forest.predict(&x).unwrap().0, tree.predict(&x).unwrap().0);
        }
    }

    #[test]
    fn same_seed_forest_serializes_identically(raw in prop::collection::vec((cells(), 0u8..3), 2..60), seed in any::<u64>()) {
        let d = consistent(&raw);
        let p = ForestParams { n_trees: 4, seed, ..Default::default() };
        let a = ModelDocument::new(ClassifierModel::Forest(train_random_forest(&d, &p).unwrap())).to_json().unwrap();
        let b = ModelDocument::new(ClassifierModel::Forest(train_random_forest(&d, &p).unwrap())).to_json().unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn bayes_posterior_normalizes_and_ignores_likelihood_scale(
        raw in prop::collection::vec((cells(), 0u8..3), 1..60),
        q in cells(),
        shift in -50.0f64..50.0,
    ) {
        let d = consistent(&raw);
        let m = train_naive_bayes(&d).unwrap();
        let x = mixed_row(&d.schema, &q);
        let p = m.distribution(&x).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        // Multiplying every class likelihood by e^shift.
        let scores = m.log_joint(&x).unwrap();
        let shifted = scores.map(|s| s.map(|v| v + shift));
        let p2 = normalize_log(&shifted);
        prop_assert_eq!(edgecare::classify::argmax(&p), edgecare::classify::argmax(&p2));
        for k in 0..3 {
            prop_assert!((p[k] - p2[k]).abs() <= 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn weighted_index_is_monotone(
        weights in prop::collection::vec(0.0f64..1.0, 5),
        scores in prop::collection::vec(prop::option::of(0.0f64..=1.0), 5),
        which in 0usize..5,
        bump in 0.0f64..1.0,
    ) {
        prop_assume!(weights.iter().sum::<f64>() > 1e-6);
        let names = ["a", "b", "c", "d", "e"];
        let m = WeightedIndexModel::new(names.iter().map(|n| n.to_string()).zip(weights).collect(), 0.5).unwrap();
        let base: BTreeMap<String, Option<f64>> = names.iter().map(|n| n.to_string()).zip(scores).collect();
        let Ok(before) = weighted_index(&m, &base) else { return Ok(()); };
        let mut raised = base.clone();
        let slot = raised.get_mut(names[which]).unwrap();
        if let Some(v) = slot.as_mut() {
            *v = (*v + bump).min(1.0);
        }
        let after = weighted_index(&m, &raised).unwrap();
        prop_assert!(after.index >= before.index - 1e-12);
        prop_assert!((0.0..=1.0).contains(&after.index));
    }
}
