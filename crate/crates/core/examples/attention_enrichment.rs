// Enriches mentions with context words picked from attention weights, and
// with a plain neighbouring-word window.
//
//     cargo run --example attention_enrichment

use protolink::context::{attention_enrich, neighboring_context, AttentionTensor, MentionSpan, Stopwords};
use protolink::synthetic::SyntheticProvider;

pub fn run() -> protolink::Result<()> {
    // hand-built weights: the "mice" column attends most to "experiment"
    let tokens: Vec<String> = ["in", "this", "mice", "experiment", "were", "treated"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let k = tokens.len();
    let mut values = vec![0.05f32; k * k];
    values[3 * k + 2] = 0.8;
    let attn = AttentionTensor::new(1, 1, k, values)?;
    let stopwords = Stopwords::english();
    println!("{}", attention_enrich(&attn, &tokens, (2, 2), "mice", &stopwords)?);

    // synthetic multi-layer weights for a whole sentence
    let text = "Iron accumulation in the substantia nigra of aged mice drives neurodegeneration";
    let start = text.find("substantia nigra").expect("present");
    let end = start + "substantia nigra".len();
    let mut mention = MentionSpan {
        article_id: "example".into(),
        start,
        end,
        token_range: None,
        surface: text[start..end].into(),
        gold_cui: "C9000003".into(),
    };
    let article = SyntheticProvider::default().article(text, std::slice::from_ref(&mention))?;
    let span = article.spans[0];
    mention.token_range = Some(span);
    println!(
        "{}",
        attention_enrich(&article.attention, &article.tokens, span, &mention.surface, &stopwords)?
    );
    println!("{}", neighboring_context(text, &mention, 2)?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> protolink::Result<()> {
    run()
}
