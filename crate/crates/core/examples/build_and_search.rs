// Builds a prototype space over the bundled ontology with the reference
// encoder and prints the nearest aliases for a few queries.
//
//     cargo run --example build_and_search

use std::path::Path;

use protolink::encoding::{ReferenceEncoder, TextEncoder};
use protolink::index::{dedup_entities, AliasSelection, EmbeddingSource, PrototypeSpace};
use protolink::ontology::OntologySnapshot;

pub fn run() -> protolink::Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let snapshot = OntologySnapshot::load(
        &fixtures.join("ontology.jsonl"),
        Some(&fixtures.join("relations.jsonl")),
    )?;
    let encoder = ReferenceEncoder::default();
    let space = PrototypeSpace::build(&snapshot, EmbeddingSource::Encoder(&encoder), AliasSelection::All)?;
    println!(
        "{} aliases of {} entities, dim {}",
        space.len(),
        snapshot.active_count(),
        space.dim()
    );

    for query in ["parkinsons disease", "dopamin neurons", "iron overlaod"] {
        let cands = space.search(&encoder.encode(query)?, 5, query)?;
        println!("\n{query}");
        for c in &cands.candidates {
            println!("  {:.4}  {}  {}", c.score, c.cui, c.alias);
        }
        let entities: Vec<String> = dedup_entities(&cands, 3).into_iter().map(|(cui, _)| cui).collect();
        println!("  entities: {}", entities.join(", "));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> protolink::Result<()> {
    run()
}
