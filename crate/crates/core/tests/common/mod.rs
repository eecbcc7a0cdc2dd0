#![allow(dead_code)]

use std::path::{Path, PathBuf};

use protolink::config::{Config, RunConfig};
use protolink::index::{candidate_order, Candidate, CandidateSet};
use protolink::ontology::{EntityRecord, OntologySnapshot};
use rand::Rng;
use serde_json::Value;

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

/// Fixture config with its output redirected and extra `key=value`
/// overrides applied.
pub fn fixture_run(output: &Path, overrides: &[&str]) -> RunConfig {
    let mut cfg = Config::load(&fixture_dir().join("fixture.conf")).unwrap();
    cfg.set(&format!("paths.output={}", output.display())).unwrap();
    for o in overrides {
        cfg.set(o).unwrap();
    }
    RunConfig::from_config(&cfg).unwrap()
}

pub fn expected() -> Value {
    let text = std::fs::read_to_string(fixture_dir().join("expected.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

pub fn record(cui: &str, aliases: &[&str], type_name: &str, group: &str) -> EntityRecord {
    EntityRecord {
        cui: cui.into(),
        name: aliases[0].into(),
        aliases: aliases[1..].iter().map(|s| s.to_string()).collect(),
        type_ids: vec![format!("T-{type_name}")],
        type_names: vec![type_name.into()],
        group_id: format!("G-{group}"),
        group_name: group.into(),
        status: "active".into(),
        merged_into: None,
    }
}

pub fn snapshot(records: Vec<EntityRecord>) -> OntologySnapshot {
    OntologySnapshot::from_records(records.into_iter().enumerate().collect(), Vec::new(), "test").unwrap()
}

/// Candidate set over cuis `E00..E{n_entities}` in canonical order. With
/// `coarse`, scores are drawn from a handful of values so ties are common.
pub fn random_candidates(rng: &mut impl Rng, n_entities: usize, coarse: bool) -> CandidateSet {
    let len = rng.gen_range(1..=40);
    let mut candidates: Vec<Candidate> = (0..len)
        .map(|i| {
            let score = if coarse {
                f64::from(rng.gen_range(0..5)) / 4.0
            } else {
                rng.gen_range(-1.0..1.0)
            };
            Candidate {
                cui: format!("E{:02}", rng.gen_range(0..n_entities)),
                alias: format!("alias {i}"),
                score,
            }
        })
        .collect();
    candidates.sort_by(candidate_order);
    CandidateSet {
        query_id: "q".into(),
        candidates,
    }
}

pub fn keys(cands: &CandidateSet) -> Vec<(String, String)> {
    cands
        .candidates
        .iter()
        .map(|c| (c.cui.clone(), c.alias.clone()))
        .collect()
}
