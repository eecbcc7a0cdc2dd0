use std::collections::HashSet;

use proptest::prelude::*;
use protolink::encoding::Vector;
use protolink::eval::{recall_at, MentionResult};
use protolink::index::{dedup_entities, AliasMeta, Candidate, CandidateSet, PrototypeSpace};
use protolink::rerank::{parametric_rerank, RerankParams};

fn unit_vectors(dim: usize, max_rows: usize) -> impl Strategy<Value = Vec<Vec<f32>>> {
    // a small value alphabet makes duplicate rows and exact score ties likely
    let component = prop_oneof![Just(0.0f32), Just(0.5f32), Just(-0.5f32), -1.0f32..1.0];
    prop::collection::vec(prop::collection::vec(component, dim), 1..max_rows)
        .prop_map(|rows| {
            rows.into_iter()
                .map(|mut v| {
                    if v.iter().all(|x| *x == 0.0) {
                        v[0] = 1.0;
                    }
                    v
                })
                .collect()
        })
}

fn space(dim: usize, rows: &[Vec<f32>], entities: usize) -> (PrototypeSpace, Vec<(AliasMeta, Vector)>) {
    let rows: Vec<(AliasMeta, Vector)> = rows
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let meta = AliasMeta {
                cui: format!("C{:04}", i % entities),
                alias: format!("alias {i:05}"),
                alias_index: i / entities,
            };
            (meta, Vector::normalized(v.clone(), "row").unwrap())
        })
        .collect();
    (PrototypeSpace::from_rows(dim, rows.clone()).unwrap(), rows)
}

fn brute_force(rows: &[(AliasMeta, Vector)], q: &Vector, k: usize) -> Vec<(f64, String, String)> {
    let mut all: Vec<(f64, String, String)> = rows
        .iter()
        .map(|(m, v)| {
            let mut s = 0f64;
            for (a, b) in q.as_slice().iter().zip(v.as_slice()) {
                s += f64::from(*a) * f64::from(*b);
            }
            (s, m.cui.clone(), m.alias.clone())
        })
        .collect();
    all.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    all.truncate(k);
    all
}

fn triples(c: &CandidateSet) -> Vec<(f64, String, String)> {
    c.candidates.iter().map(|c| (c.score, c.cui.clone(), c.alias.clone())).collect()
}

fn candidate_set() -> impl Strategy<Value = CandidateSet> {
    prop::collection::vec((0usize..6, 0u8..8), 1..30).prop_map(|items| {
        let mut candidates: Vec<Candidate> = items
            .into_iter()
            .enumerate()
            .map(|(i, (e, s))| Candidate {
                cui: format!("E{e}"),
                alias: format!("a{i:02}"),
                score: f64::from(s) / 8.0,
            })
            .collect();
        candidates.sort_by(protolink::index::candidate_order);
        CandidateSet { query_id: "q".into(), candidates }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn search_matches_brute_force(
        rows in unit_vectors(8, 2000),
        query in prop::collection::vec(-1.0f32..1.0, 8),
        k in 1usize..40,
        entities in 1usize..50,
    ) {
        prop_assume!(query.iter().any(|x| *x != 0.0));
        let (space, rows) = space(8, &rows, entities);
        let q = Vector::normalized(query, "q").unwrap();
        let got = space.search(&q, k, "q").unwrap();
        prop_assert_eq!(triples(&got), brute_force(&rows, &q, k));
    }

    #[test]
    fn smaller_k_is_a_prefix(rows in unit_vectors(6, 300), query in prop::collection::vec(-1.0f32..1.0, 6), k in 1usize..30) {
        prop_assume!(query.iter().any(|x| *x != 0.0));
        let (space, _) = space(6, &rows, 7);
        let q = Vector::normalized(query, "q").unwrap();
        let long = space.search(&q, k + 10, "q").unwrap();
        let short = space.search(&q, k, "q").unwrap();
        prop_assert_eq!(&long.candidates[..short.len()], &short.candidates[..]);
    }

    #[test]
    fn query_scaling_does_not_change_results(
        rows in unit_vectors(6, 300),
        query in prop::collection::vec(-1.0f32..1.0, 6),
        scale in 0.01f32..100.0,
    ) {
        prop_assume!(query.iter().any(|x| x.abs() > 1e-3));
        let (space, _) = space(6, &rows, 7);
        let q = Vector::normalized(query.clone(), "q").unwrap();
        let scaled = Vector::normalized(query.iter().map(|x| x * scale).collect(), "q").unwrap();
        let a: Vec<(String, String)> = space.search(&q, 10, "q").unwrap().candidates.into_iter().map(|c| (c.cui, c.alias)).collect();
        let b: Vec<(String, String)> = space.search(&scaled, 10, "q").unwrap().candidates.into_iter().map(|c| (c.cui, c.alias)).collect();
        // renormalisation may move scores by an ulp, so the cut-off must not
        // fall inside a near-tie
        let scores: Vec<f64> = space.search(&q, 11, "q").unwrap().candidates.iter().map(|c| c.score).collect();
        prop_assume!(scores.len() < 11 || scores[9] - scores[10] > 1e-6);
        let a_set: HashSet<_> = a.iter().collect();
        let b_set: HashSet<_> = b.iter().collect();
        prop_assert_eq!(a_set, b_set);
    }

    #[test]
    fn dedup_keeps_first_occurrence(cands in candidate_set(), n in 1usize..10) {
        let got = dedup_entities(&cands, n);
        let mut want: Vec<(String, f64)> = Vec::new();
        for c in &cands.candidates {
            if want.len() < n && !want.iter().any(|(cui, _)| *cui == c.cui) {
                want.push((c.cui.clone(), c.score));
            }
        }
        prop_assert_eq!(got, want);
    }

    #[test]
    fn rerank_is_a_permutation(cands in candidate_set(), a in 0.1f64..50.0, b in 0.0f64..1.0, c in 0.0f64..1.0) {
        let out = parametric_rerank(&cands, &RerankParams::new(a, b, c).unwrap()).unwrap();
        let mut before: Vec<(String, String)> = cands.candidates.iter().map(|c| (c.cui.clone(), c.alias.clone())).collect();
        let mut after: Vec<(String, String)> = out.candidates.iter().map(|c| (c.cui.clone(), c.alias.clone())).collect();
        before.sort();
        after.sort();
        prop_assert_eq!(before, after);
        for w in out.candidates.windows(2) {
            prop_assert!(w[0].adjusted >= w[1].adjusted);
        }
    }

    #[test]
    fn recall_is_monotone(
        lists in prop::collection::vec((prop::collection::vec(0u8..12, 0..20), 0u8..12), 1..50),
    ) {
        let results: Vec<MentionResult> = lists
            .into_iter()
            .map(|(entities, gold)| {
                let mut seen = HashSet::new();
                MentionResult {
                    article_id: "A".into(),
                    start: 0,
                    end: 1,
                    gold: format!("E{gold}"),
                    entities: entities.into_iter().filter(|e| seen.insert(*e)).map(|e| format!("E{e}")).collect(),
                }
            })
            .collect();
        let mut prev = 0.0;
        for n in 1..=25 {
            let r = recall_at(&results, n).unwrap();
            prop_assert!(r >= prev && r <= 1.0);
            prev = r;
        }
    }
}
