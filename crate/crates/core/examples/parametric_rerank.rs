// Reranks a candidate list with the entity-frequency scorer and tunes its
// coefficients on the bundled fixture.
//
//     cargo run --example parametric_rerank

use std::path::Path;

use protolink::encoding::{ReferenceEncoder, TextEncoder};
use protolink::index::{AliasSelection, Candidate, CandidateSet, EmbeddingSource, PrototypeSpace};
use protolink::ontology::OntologySnapshot;
use protolink::corpus::{AbbreviationMap, Corpus};
use protolink::rerank::{grid_search, parametric_rerank, Grid, RerankParams};

pub fn run() -> protolink::Result<()> {
    let cands = CandidateSet {
        query_id: "toy".into(),
        candidates: vec![
            Candidate { cui: "C1".into(), alias: "c1".into(), score: 0.90 },
            Candidate { cui: "C2".into(), alias: "c2a".into(), score: 0.88 },
            Candidate { cui: "C2".into(), alias: "c2b".into(), score: 0.86 },
        ],
    };
    for params in [RerankParams::default(), RerankParams::new(1.0, 0.0, 1.0)?] {
        let out = parametric_rerank(&cands, &params)?;
        let order: Vec<String> = out
            .candidates
            .iter()
            .map(|c| format!("{}={:.3}", c.alias, c.adjusted))
            .collect();
        println!("a={} b={} c={}: {}", params.a, params.b, params.c, order.join(" "));
    }

    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let snapshot = OntologySnapshot::load(
        &fixtures.join("ontology.jsonl"),
        Some(&fixtures.join("relations.jsonl")),
    )?;
    let corpus = Corpus::load(&fixtures.join("corpus.jsonl"))?;
    let abbreviations = AbbreviationMap::load(&fixtures.join("abbreviations.tsv"))?;
    let encoder = ReferenceEncoder::default();
    let space = PrototypeSpace::build(&snapshot, EmbeddingSource::Encoder(&encoder), AliasSelection::All)?;

    let mut dev_set = Vec::new();
    for (_, m) in corpus.mentions() {
        let Ok(gold) = snapshot.resolve_cui(&m.gold_cui) else {
            continue;
        };
        let query = abbreviations.expand(&m.article_id, &m.surface);
        let cands = space.search(&encoder.encode(&query)?, 10, &query)?;
        dev_set.push((cands, gold));
    }
    let result = grid_search(&dev_set, &Grid::default())?;
    let without_c = result
        .evaluations
        .iter()
        .filter(|(p, _)| p.c == 0.0)
        .map(|(_, r1)| *r1)
        .fold(0.0, f64::max);
    println!(
        "\n{} mentions, {} grid points: best a={} b={} c={} with R@1 {:.3} (best with c=0: {:.3})",
        dev_set.len(),
        result.evaluations.len(),
        result.best.a,
        result.best.b,
        result.best.c,
        result.best_r1,
        without_c
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> protolink::Result<()> {
    run()
}
