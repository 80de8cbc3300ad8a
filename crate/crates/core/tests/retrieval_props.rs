use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use scenesketch_core::retrieval::{
    rank, rank_indices, recall_at_k, split_by_user, squared_euclidean, triplet_loss, Distance, Gallery, QueryRanking,
};

fn vecs(dim: usize, n: impl Into<prop::collection::SizeRange>) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-2.0..2.0f64, dim), n)
}

fn gallery(items: &[Vec<f64>]) -> Gallery {
    let mut g = Gallery::new();
    for (i, e) in items.iter().enumerate() {
        g.push(format!("g{i}"), e.clone()).unwrap();
    }
    g
}

proptest! {
    #[test]
    fn triplet_matches_formula(v in vecs(4, 3), margin in 0.0..1.0f64) {
        let (a, p, n) = (&v[0], &v[1], &v[2]);
        let d = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let want = (d(a, p) - d(a, n) + margin).max(0.0);
        let got = triplet_loss(a, p, n, margin).unwrap();
        prop_assert!((got - want).abs() <= 1e-12);
        if d(a, p) + margin <= d(a, n) {
            prop_assert_eq!(got, 0.0);
        }
    }

    #[test]
    fn rank_equals_full_sort(items in vecs(3, 1..30), q in prop::collection::vec(-2.0..2.0f64, 3)) {
        let g = gallery(&items);
        let got = rank_indices(&q, &g, Distance::SqEuclidean).unwrap();
        let mut want: Vec<(f64, usize)> = items.iter().enumerate().map(|(i, e)| (squared_euclidean(&q, e).unwrap(), i)).collect();
        want.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        prop_assert_eq!(got.clone(), want.iter().map(|w| w.1).collect::<Vec<_>>());
        let set: BTreeSet<usize> = got.into_iter().collect();
        prop_assert_eq!(set.len(), items.len());
    }

    #[test]
    fn appending_farther_items_keeps_prefix(items in vecs(2, 1..15), extra in 1usize..5) {
        let q = [0.0, 0.0];
        let mut g = gallery(&items);
        let before = rank(&q, &g, Distance::SqEuclidean).unwrap();
        for k in 0..extra {
            g.push(format!("far{k}"), vec![100.0 + k as f64, 0.0]).unwrap();
        }
        let after = rank(&q, &g, Distance::SqEuclidean).unwrap();
        prop_assert_eq!(&after[..before.len()], &before[..]);
    }

    #[test]
    fn query_in_gallery_ranks_first(items in vecs(3, 1..20), pick in any::<prop::sample::Index>()) {
        // Duplicated embeddings tie, and ties go to the earlier item.
        let i = pick.index(items.len());
        let g = gallery(&items);
        let first = rank_indices(&items[i], &g, Distance::SqEuclidean).unwrap()[0];
        prop_assert_eq!(&items[first], &items[i]);
        prop_assert!(first <= i);
    }

    #[test]
    fn recall_matches_count_and_grows_with_k(
        perms in prop::collection::vec(Just((0..8).collect::<Vec<usize>>()).prop_shuffle(), 1..10),
        truths in prop::collection::vec(0usize..8, 10),
    ) {
        let mut gt = BTreeMap::new();
        let results: Vec<QueryRanking> = perms.iter().enumerate().map(|(q, p)| {
            gt.insert(format!("q{q}"), format!("g{}", truths[q]));
            QueryRanking { query_id: format!("q{q}"), ranked: p.iter().map(|i| format!("g{i}")).collect() }
        }).collect();
        let mut prev = 0.0;
        for k in 1..=8 {
            let hits = perms.iter().enumerate().filter(|(q, p)| p[..k].contains(&truths[*q])).count();
            let r = recall_at_k(&results, &gt, k).unwrap();
            prop_assert_eq!(r, 100.0 * hits as f64 / perms.len() as f64);
            prop_assert!(r >= prev && (0.0..=100.0).contains(&r));
            prev = r;
        }
        prop_assert_eq!(prev, 100.0);
    }

    #[test]
    fn split_is_partition_with_per_user_counts(users in prop::collection::vec(0usize..6, 0..60), frac in 0.0..=1.0f64, seed in any::<u64>()) {
        let names: Vec<String> = users.iter().map(|u| format!("u{u}")).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let s = split_by_user(&refs, frac, seed).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..users.len()).collect::<Vec<_>>());
        let mut per_user: BTreeMap<&str, usize> = BTreeMap::new();
        for r in &refs {
            *per_user.entry(r).or_default() += 1;
        }
        for (u, n) in per_user {
            let train = s.train.iter().filter(|&&i| refs[i] == u).count();
            let want = if n < 2 { n } else { ((frac * n as f64) + 1e-9).floor() as usize };
            prop_assert_eq!(train, want);
        }
        prop_assert_eq!(s, split_by_user(&refs, frac, seed).unwrap());
    }
}
