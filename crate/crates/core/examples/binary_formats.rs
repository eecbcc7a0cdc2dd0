// Writes and reads back the three binary interchange formats: alias
// embeddings (PROT), token encodings (TOKE) and attention tensors (ATTN).
//
//     cargo run --example binary_formats

use protolink::context::AttentionTensor;
use protolink::encoding::{load_embeddings, reference_encode, write_embeddings, EmbeddingStore, TokenEncodings};
use protolink::Error;

pub fn run() -> protolink::Result<()> {
    let dir = std::env::temp_dir().join(format!("protolink-formats-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

    let mut store = EmbeddingStore::new(64)?;
    for (id, alias) in [
        ("C9000003#0", "substantia nigra"),
        ("C9000003#1", "nigral region"),
        ("C9000005#0", "dopamine"),
    ] {
        store.push(id, reference_encode(alias, 64)?.as_slice().to_vec())?;
    }
    let prot = dir.join("aliases.prot");
    write_embeddings(&store, &prot)?;
    let back = load_embeddings(&prot)?;
    println!("PROT: {} vectors of dim {}", back.len(), back.dim());
    for (id, v) in back.iter() {
        println!("  {id}  norm {:.6}", v.norm());
    }

    let tokens: Vec<String> = ["iron", "in", "the", "nigra"].iter().map(|s| s.to_string()).collect();
    let rows = tokens
        .iter()
        .map(|t| Ok(reference_encode(t, 64)?.as_slice().to_vec()))
        .collect::<protolink::Result<Vec<_>>>()?;
    let toke = TokenEncodings::new(64, tokens, rows)?;
    let toke_path = dir.join("article.toke");
    toke.save(&toke_path)?;
    println!("TOKE: {:?}", TokenEncodings::load(&toke_path)?.tokens());

    let k = 4;
    let attn = AttentionTensor::new(1, 2, k, vec![1.0 / k as f32; 2 * k * k])?;
    let attn_path = dir.join("article.attn");
    attn.save(&attn_path)?;
    let attn_back = AttentionTensor::load(&attn_path)?;
    println!(
        "ATTN: {} layer(s), {} head(s), {} tokens",
        attn_back.layers(),
        attn_back.heads(),
        attn_back.k()
    );

    let mut bytes = std::fs::read(&prot).map_err(|e| Error::io(&prot, e))?;
    bytes[0] = b'X';
    match EmbeddingStore::read_from(bytes.as_slice()) {
        Err(e) => println!("corrupted header: {e}"),
        Ok(_) => println!("corrupted header was accepted"),
    }
    std::fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> protolink::Result<()> {
    run()
}
