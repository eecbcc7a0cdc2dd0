macro_rules! example {
    ($name:ident) => {
        mod $name {
            include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/", stringify!($name), ".rs"));
        }
    };
}

example!(build_and_search);
example!(parametric_rerank);
example!(semantic_rerank);
example!(attention_enrichment);
example!(binary_formats);
example!(evaluate_fixture);

#[test]
fn examples_run() {
    build_and_search::run().unwrap();
    parametric_rerank::run().unwrap();
    semantic_rerank::run().unwrap();
    attention_enrichment::run().unwrap();
    binary_formats::run().unwrap();
    evaluate_fixture::run().unwrap();
}
