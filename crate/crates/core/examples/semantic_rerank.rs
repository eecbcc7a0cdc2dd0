// Reranks candidates by how close their semantic types or groups are to
// the mention's.
//
//     cargo run --example semantic_rerank

use std::path::Path;

use protolink::encoding::{ReferenceEncoder, TextEncoder};
use protolink::index::{AliasSelection, EmbeddingSource, PrototypeSpace};
use protolink::ontology::OntologySnapshot;
use protolink::rerank::{group_rerank, type_rerank, SemanticEncodings};

pub fn run() -> protolink::Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let snapshot = OntologySnapshot::load(&fixtures.join("ontology.jsonl"), None)?;
    let encoder = ReferenceEncoder::default();
    let space = PrototypeSpace::build(&snapshot, EmbeddingSource::Encoder(&encoder), AliasSelection::All)?;
    let semantic = SemanticEncodings::build(&snapshot, &encoder)?;

    let query = "kindlin 2";
    let cands = space.search(&encoder.encode(query)?, 5, query)?;
    println!("{query}: baseline");
    for c in &cands.candidates {
        println!("  {:.4}  {}  {}", c.score, c.cui, c.alias);
    }

    let types = vec!["Gene or Genome".to_string()];
    let by_type = type_rerank(&cands, &types, &snapshot, &semantic)?;
    println!("reranked towards type {:?}", types[0]);
    for c in &by_type.candidates {
        println!("  {:.4}  {}  {}", c.adjusted, c.cui, c.alias);
    }

    let group = "Chemicals & Drugs";
    let by_group = group_rerank(&cands, group, &snapshot, &semantic)?;
    println!("reranked towards group {group:?}");
    for c in &by_group.candidates {
        println!("  {:.4}  {}  {}", c.adjusted, c.cui, c.alias);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> protolink::Result<()> {
    run()
}
