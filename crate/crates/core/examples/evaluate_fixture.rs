// Runs the full evaluation on the bundled fixture and prints the headline
// numbers.
//
//     cargo run --example evaluate_fixture

use std::path::Path;

use protolink::config::{Config, RunConfig};
use protolink::pipeline::Session;

pub fn run() -> protolink::Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let mut cfg = Config::load(&fixtures.join("fixture.conf"))?;
    let out = std::env::temp_dir().join(format!("protolink-evaluate-{}", std::process::id()));
    cfg.set(&format!("paths.output={}", out.display()))?;
    cfg.set("rerank.grid=true")?;
    let run = RunConfig::from_config(&cfg)?;

    let eval = Session::open(run)?.evaluate()?;
    let report = &eval.report;
    println!("{} mentions in {} articles", report.mentions, report.articles);
    for (n, r) in &report.baseline.r_at {
        let reranked = report.reranked.as_ref().map_or(f64::NAN, |s| s.r_at[n]);
        println!("  R@{n:<4} baseline {r:.3}  reranked {reranked:.3}");
    }
    let b = report.baseline.breakdown;
    println!(
        "  baseline exact {:.3} related {:.3} missed {:.3}",
        b.exact, b.related, b.missed
    );
    if let Some(grid) = &report.grid {
        println!(
            "  grid optimum a={} b={} c={} (R@1 {:.3}); without c {:.3}",
            grid.best.a, grid.best.b, grid.best.c, grid.best_r1, grid.best_without_c.1
        );
    }
    for row in &report.transition.row_percent {
        println!("  {:>6.1} {:>6.1} {:>6.1}", row[0], row[1], row[2]);
    }
    let _ = std::fs::remove_dir_all(&out);
    Ok(())
}

#[allow(dead_code)]
fn main() -> protolink::Result<()> {
    run()
}
