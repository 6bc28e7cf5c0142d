mod common;

use std::collections::HashMap;

use common::{disjoint_ranking, sample_counts};
use proptest::prelude::*;
use snipq::annotation::{
    aggregate_labels, assign_majorities, build_hits, fleiss_kappa, load_labels, majority_vote, overall_kappa,
    quality_check, sample_annotation_pairs, write_labels, HitConfig, LabelRow, PairSampler,
};
use snipq::corpus::Query;
use snipq::Error;

#[test]
fn pair_counts_for_plain_and_hybrid_queries() {
    let methods = ["tfidf", "sbert", "bert"];
    let mut sampler = PairSampler::new(7, 5, 5).unwrap();
    sample_counts(&mut sampler, "q", 100, &methods).unwrap();
    assert_eq!(sampler.pairs().len(), 1500);
    sample_counts(&mut sampler, "h", 14, &methods).unwrap();
    assert_eq!(sampler.pairs().len(), 1710);
    assert!(sampler.collisions().is_empty());
}

#[test]
fn colliding_pairs_are_merged() {
    let q = Query::new("q", "x");
    let ranking = disjoint_ranking("shared", 1, 5);
    let mut sampler = PairSampler::new(1, 5, 5).unwrap();
    sampler.add(&q, "a", &ranking).unwrap();
    sampler.add(&q, "b", &ranking).unwrap();
    assert_eq!(sampler.pairs().len(), 5);
    assert_eq!(sampler.collisions().len(), 5);
    assert!(sampler.pairs().iter().all(|p| p.source_methods == ["a", "b"]));
}

#[test]
fn sampling_is_reproducible_and_seed_sensitive() {
    let q = Query::new("q", "x");
    let ranking = disjoint_ranking("m", 5, 5);
    let draw = |seed| sample_annotation_pairs(&ranking, "m", &q, seed, 5, 5).unwrap();
    assert_eq!(draw(3), draw(3));
    let distinct: std::collections::BTreeSet<String> = (0..40).map(|s| draw(s)[0].snippet_id.clone()).collect();
    assert!(distinct.len() > 1);
    assert!(matches!(sample_annotation_pairs(&[], "m", &q, 0, 5, 5), Err(Error::EmptyRanking)));
}

#[test]
fn fleiss_examples() {
    let perfect = vec![vec![3, 0], vec![0, 3], vec![3, 0]];
    assert_eq!(fleiss_kappa(&perfect, 3).unwrap(), 1.0);
    // Two raters; half the items agree, category totals balanced:
    // P = (0 + 0 + 1 + 1) / 4 = 0.5, Pe = 0.5^2 + 0.5^2 = 0.5.
    let balanced = vec![vec![1, 1], vec![1, 1], vec![2, 0], vec![0, 2]];
    assert!(fleiss_kappa(&balanced, 2).unwrap().abs() <= 1e-12);
    let single = vec![vec![3, 0], vec![3, 0]];
    let err = fleiss_kappa(&single, 3).unwrap_err();
    assert!(matches!(err, Error::DegenerateKappa));
    assert!(err.to_string().contains("degenerate"));
}

#[test]
fn labels_round_trip_and_vote() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("labels.csv");
    let row = |p: &str, a: &str, l: u8| LabelRow {
        pair_id: format!("q1::{p}"),
        query_id: "q1".into(),
        snippet_id: p.into(),
        annotator_id: a.into(),
        label: l,
    };
    let rows = vec![
        row("s1", "w1", 1),
        row("s1", "w2", 1),
        row("s1", "w3", 0),
        row("s2", "w1", 0),
        row("s2", "w2", 0),
        row("s2", "w3", 1),
    ];
    write_labels(&path, &rows).unwrap();
    assert_eq!(load_labels(&path).unwrap(), rows);
    let mut pairs = aggregate_labels(&rows).unwrap();
    assign_majorities(&mut pairs).unwrap();
    assert_eq!(pairs.iter().map(|p| p.majority).collect::<Vec<_>>(), [Some(true), Some(false)]);
    let k = overall_kappa(&pairs, 3).unwrap();
    assert!((-1.0..=1.0).contains(&k));

    let mut short = aggregate_labels(&rows[..5]).unwrap();
    match assign_majorities(&mut short) {
        Err(Error::InvalidVoteCount { count: 2, pair_id: Some(id) }) => assert_eq!(id, "q1::s2"),
        other => panic!("unexpected {other:?}"),
    }
    let mut dup = rows.clone();
    dup.push(row("s1", "w1", 0));
    assert!(aggregate_labels(&dup).is_err());
}

#[test]
fn hits_have_configured_shape() {
    let ids: Vec<String> = (0..50).map(|i| format!("q::s{i}")).collect();
    let gold: Vec<String> = (0..6).map(|i| format!("g::s{i}")).collect();
    let hits = build_hits(&ids, &gold, 9, HitConfig::default()).unwrap();
    assert_eq!(hits.len(), 3);
    assert_eq!(hits.iter().map(|h| h.pair_ids.len()).collect::<Vec<_>>(), [23, 23, 13]);
    let mut regular: Vec<&String> =
        hits.iter().flat_map(|h| h.pair_ids.iter().filter(|p| !h.gold_pairs.contains(p))).collect();
    regular.sort();
    let mut expected: Vec<&String> = ids.iter().collect();
    expected.sort();
    assert_eq!(regular, expected);
    assert!(hits.iter().all(|h| h.gold_pairs.len() == 3));
    assert_eq!(build_hits(&ids, &gold, 9, HitConfig::default()).unwrap(), hits);

    let truth: HashMap<String, bool> = gold.iter().map(|g| (g.clone(), true)).collect();
    let mut answers: HashMap<String, bool> = hits[0].gold_pairs.iter().map(|g| (g.clone(), true)).collect();
    assert!(quality_check(&hits[0], &answers, &truth, 3).unwrap());
    answers.insert(hits[0].gold_pairs[0].clone(), false);
    assert!(!quality_check(&hits[0], &answers, &truth, 3).unwrap());
    answers.remove(&hits[0].gold_pairs[1]);
    assert!(matches!(quality_check(&hits[0], &answers, &truth, 1), Err(Error::MissingGoldAnswer(_))));
}

fn odd_labels() -> impl Strategy<Value = Vec<bool>> {
    (1usize..8).prop_flat_map(|h| proptest::collection::vec(any::<bool>(), 2 * h + 1))
}

fn ratings(raters: usize) -> impl Strategy<Value = Vec<Vec<usize>>> {
    proptest::collection::vec((0..=raters).prop_map(move |a| vec![a, raters - a]), 1..30)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn vote_permutation_invariant(labels in odd_labels(), seed in any::<u64>()) {
        use rand::{seq::SliceRandom, SeedableRng};
        let mut shuffled = labels.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(majority_vote(labels.iter().copied()).unwrap(), majority_vote(shuffled).unwrap());
    }

    #[test]
    fn vote_negation_flips(labels in odd_labels()) {
        let v = majority_vote(labels.iter().copied()).unwrap();
        prop_assert_eq!(majority_vote(labels.iter().map(|l| !l)).unwrap(), !v);
        let ones = labels.iter().filter(|&&l| l).count();
        prop_assert_eq!(v, 2 * ones > labels.len());
    }

    #[test]
    fn vote_rejects_even_or_short(labels in proptest::collection::vec(any::<bool>(), 0..12)) {
        let ok = labels.len() >= 3 && labels.len() % 2 == 1;
        prop_assert_eq!(majority_vote(labels).is_ok(), ok);
    }

    #[test]
    fn kappa_bounded(rows in (2usize..6).prop_flat_map(ratings)) {
        let n = rows[0].iter().sum();
        match fleiss_kappa(&rows, n) {
            Ok(k) => prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&k), "{}", k),
            Err(e) => prop_assert!(matches!(e, Error::DegenerateKappa)),
        }
    }

    #[test]
    fn sampler_reproducible(seed in any::<u64>(), queries in 1usize..10) {
        let run = || {
            let mut s = PairSampler::new(seed, 5, 5).unwrap();
            sample_counts(&mut s, "q", queries, &["a", "b"]).unwrap();
            s.finish().0
        };
        let pairs = run();
        prop_assert_eq!(pairs.len(), queries * 10);
        prop_assert_eq!(pairs, run());
    }
}
