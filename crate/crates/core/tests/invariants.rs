use std::collections::BTreeSet;

use proptest::prelude::*;
use qtmine_core::corpus::{candidates_at_year, AliasMap, Document, DocumentSet, TrialRecord};
use qtmine_core::model::{forward, ModelConfig, Params};
use qtmine_core::qt::{Aggregation, QuerySpec, Scorer, TargetSpec};
use qtmine_core::Vocab;

fn small_model(seed: u64, vocab: &Vocab) -> Params<f32> {
    let cfg = ModelConfig { n_layers: 1, n_heads: 2, d_model: 16, d_ff: 32, max_seq: 32, vocab_size: vocab.len() };
    // A wide init so the predictive distributions are far from uniform.
    Params::init_with_std(cfg, seed, 0.5).unwrap()
}

fn regular_ids(vocab: &Vocab) -> Vec<u32> {
    vocab.regular_ids().collect()
}

fn doc(id: String, year: Option<i32>) -> Document {
    Document {
        id,
        title: String::new(),
        abstract_text: String::new(),
        body: "x".into(),
        publish_year: year,
        source: String::new(),
        license: String::new(),
    }
}

fn docs_strategy() -> impl Strategy<Value = DocumentSet> {
    prop::collection::vec(prop::option::weighted(0.9, 1990i32..2030), 0..40).prop_map(|years| {
        DocumentSet::new(years.into_iter().enumerate().map(|(i, y)| doc(format!("d{i}"), y)).collect())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn qt_scores_are_bounded_monotone_and_additive(
        seed in 0u64..1_000_000,
        picks in prop::collection::vec(any::<prop::sample::Index>(), 2..12),
        split in any::<prop::sample::Index>(),
        text in "[a-z]{1,6}( [a-z]{1,6}){0,3}",
        n_masks in 1usize..4,
    ) {
        let vocab = Vocab::base();
        let p = small_model(seed, &vocab);
        let scorer = Scorer::new(&p, &vocab);
        let mut query = text.clone();
        for _ in 0..n_masks {
            query.push_str(" <mask>");
        }
        let q = QuerySpec::render(&vocab, &query).unwrap();
        let pool = regular_ids(&vocab);
        let ids: Vec<u32> = picks.iter().map(|i| pool[i.index(pool.len())]).collect::<BTreeSet<_>>().into_iter().collect();
        prop_assume!(ids.len() >= 2);
        let cut = 1 + split.index(ids.len() - 1);
        let (lo, hi) = ids.split_at(cut);
        let all = TargetSpec::from_ids("all", ids.iter().copied()).unwrap();
        let a = TargetSpec::from_ids("a", lo.iter().copied()).unwrap();
        let b = TargetSpec::from_ids("b", hi.iter().copied()).unwrap();
        let sa = scorer.qt_score(&q, &a).unwrap();
        let sb = scorer.qt_score(&q, &b).unwrap();
        let sall = scorer.qt_score(&q, &all).unwrap();
        prop_assert_eq!(sall.per_position.len(), n_masks);
        for i in 0..n_masks {
            let (x, y, z) = (sa.per_position[i], sb.per_position[i], sall.per_position[i]);
            prop_assert!((0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&z));
            // Disjoint targets add; a superset never scores lower.
            prop_assert!((x + y - z).abs() < 1e-12);
            prop_assert!(z + 1e-15 >= x);
        }
        let mean = sall.per_position.iter().sum::<f64>() / n_masks as f64;
        prop_assert!((sall.aggregate - mean).abs() < 1e-15);
        let geo = Scorer::new(&p, &vocab).with_aggregation(Aggregation::Geometric).qt_score(&q, &all).unwrap();
        prop_assert!(geo.aggregate <= sall.aggregate + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn attention_rows_are_stochastic(seed in 0u64..10_000, ids in prop::collection::vec(0u32..261, 1..32)) {
        let vocab = Vocab::base();
        let p = small_model(seed, &vocab);
        let out = forward(&p, &ids).unwrap();
        let s = ids.len();
        for l in 0..p.config.n_layers {
            for h in 0..p.config.n_heads {
                for row in out.attention(l, h).chunks_exact(s) {
                    prop_assert!(row.iter().all(|&x| x >= 0.0));
                    let sum: f32 = row.iter().sum();
                    prop_assert!((sum - 1.0).abs() < 1e-5);
                }
            }
        }
    }

    #[test]
    fn year_filters_compose(docs in docs_strategy(), a in 1985i32..2035, b in 1985i32..2035) {
        let ab = docs.filter_by_year(a).filter_by_year(b);
        prop_assert_eq!(&ab, &docs.filter_by_year(a.min(b)));
        prop_assert_eq!(&ab, &docs.filter_by_year(b).filter_by_year(a));
        prop_assert!(ab.documents.iter().all(|d| d.publish_year.is_some_and(|y| y <= a.min(b))));
    }

    #[test]
    fn split_is_a_deterministic_partition(docs in docs_strategy(), seed in any::<u64>()) {
        let (train, test) = docs.split(seed);
        prop_assert_eq!(docs.split(seed), (train.clone(), test.clone()));
        prop_assert_eq!(train.len() + test.len(), docs.len());
        let tr: BTreeSet<&str> = train.documents.iter().map(|d| d.id.as_str()).collect();
        prop_assert!(test.documents.iter().all(|d| !tr.contains(d.id.as_str())));
        let mut rev = docs.clone();
        rev.documents.reverse();
        let (_, test_rev) = rev.split(seed);
        let ids = |s: &DocumentSet| s.documents.iter().map(|d| d.id.clone()).collect::<BTreeSet<_>>();
        prop_assert_eq!(ids(&test_rev), ids(&test));
    }

    #[test]
    fn alias_canonicalization_is_idempotent(
        pairs in prop::collection::vec(("[a-cA-C ]{1,3}", "[a-cA-C ]{1,3}"), 0..12),
        probe in "[a-cA-C ]{0,4}",
    ) {
        let mut m = AliasMap::new();
        for (t, s) in &pairs {
            m.insert(t, s);
        }
        let once = m.canonical(&probe);
        prop_assert_eq!(m.canonical(&once), once);
    }

    #[test]
    fn candidates_grow_with_year(
        rows in prop::collection::vec((1995i32..2020, prop::collection::vec("[a-e]{1,2}", 1..3)), 0..30),
        a in 1995i32..2020,
        b in 1995i32..2020,
    ) {
        let aliases = AliasMap::new();
        let trials: Vec<TrialRecord> = rows
            .iter()
            .enumerate()
            .filter_map(|(i, (y, ds))| TrialRecord::from_raw(&format!("t{i}"), *y, &ds.join(";"), "c", &aliases))
            .collect();
        let (lo, hi) = (a.min(b), a.max(b));
        let early: BTreeSet<String> = candidates_at_year(&trials, lo).into_iter().collect();
        let late: BTreeSet<String> = candidates_at_year(&trials, hi).into_iter().collect();
        prop_assert!(early.is_subset(&late));
    }
}
