//! Plain SVG charts rendered from the CSV series written by `evaluate`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::pipeline::{ARTICLE_SIM_CSV, TOPK_CSV, TRANSITION_CSV, WORDCOUNT_CSV};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;
const COLORS: [&str; 3] = ["#1f77b4", "#d62728", "#2ca02c"];

/// Header plus rows of a CSV file written by this crate (no quoting).
struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
    file: String,
}

impl Table {
    fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or(Error::EmptyInput("csv header"))?
            .split(',')
            .map(str::to_owned)
            .collect();
        let rows = lines.map(|l| l.split(',').map(str::to_owned).collect()).collect();
        Ok(Table {
            header,
            rows,
            file: path.display().to_string(),
        })
    }

    fn col(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MalformedRecord {
                file: self.file.clone(),
                line: 1,
                reason: format!("missing column {name}"),
            })
    }

    fn floats(&self, name: &str) -> Result<Vec<f64>> {
        let c = self.col(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r.get(c)
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| Error::MalformedRecord {
                        file: self.file.clone(),
                        line: i + 2,
                        reason: format!("column {name} is not a number"),
                    })
            })
            .collect()
    }

    fn strings(&self, name: &str) -> Result<Vec<String>> {
        let c = self.col(name)?;
        Ok(self.rows.iter().map(|r| r.get(c).cloned().unwrap_or_default()).collect())
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Canvas {
    body: String,
    x: (f64, f64),
    y: (f64, f64),
}

impl Canvas {
    fn new(title: &str, x: (f64, f64), y: (f64, f64), x_label: &str, y_label: &str) -> Self {
        let mut c = Canvas {
            body: String::new(),
            x: widen(x),
            y: widen(y),
        };
        let _ = write!(
            c.body,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="16">{}</text>"#,
            WIDTH / 2.0,
            escape(title)
        );
        let (x0, y0, x1, y1) = (MARGIN, HEIGHT - MARGIN, WIDTH - MARGIN, MARGIN);
        let _ = write!(
            c.body,
            r#"<path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}" fill="none" stroke="black"/>"#
        );
        for i in 0..=4 {
            let t = i as f64 / 4.0;
            let xv = c.x.0 + t * (c.x.1 - c.x.0);
            let yv = c.y.0 + t * (c.y.1 - c.y.0);
            let _ = write!(
                c.body,
                r#"<text x="{}" y="{}" text-anchor="middle" font-size="11">{}</text>"#,
                c.px(xv),
                y0 + 16.0,
                tick(xv)
            );
            let _ = write!(
                c.body,
                r#"<text x="{}" y="{}" text-anchor="end" font-size="11">{}</text>"#,
                x0 - 6.0,
                c.py(yv) + 4.0,
                tick(yv)
            );
        }
        let _ = write!(
            c.body,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{}</text>"#,
            WIDTH / 2.0,
            HEIGHT - 12.0,
            escape(x_label)
        );
        let _ = write!(
            c.body,
            r#"<text x="16" y="{}" text-anchor="middle" font-size="12" transform="rotate(-90 16 {})">{}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            escape(y_label)
        );
        c
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - 2.0 * MARGIN)
    }

    fn line(&mut self, xs: &[f64], ys: &[f64], color: &str) {
        let pts: Vec<String> = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| format!("{:.2},{:.2}", self.px(*x), self.py(*y)))
            .collect();
        let _ = write!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            pts.join(" ")
        );
    }

    fn dots(&mut self, xs: &[f64], ys: &[f64], color: &str) {
        for (x, y) in xs.iter().zip(ys) {
            let _ = write!(
                self.body,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="{color}" fill-opacity="0.5"/>"#,
                self.px(*x),
                self.py(*y)
            );
        }
    }

    fn legend(&mut self, entries: &[(&str, &str)]) {
        for (i, (label, color)) in entries.iter().enumerate() {
            let y = MARGIN + 14.0 * i as f64;
            let _ = write!(
                self.body,
                r#"<rect x="{}" y="{}" width="10" height="10" fill="{color}"/><text x="{}" y="{}" font-size="11">{}</text>"#,
                WIDTH - MARGIN - 120.0,
                y - 9.0,
                WIDTH - MARGIN - 105.0,
                y,
                escape(label)
            );
        }
    }

    fn finish(self) -> String {
        format!(
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}"><rect width="100%" height="100%" fill="white"/>{}</svg>
"#,
            self.body
        )
    }
}

fn widen(r: (f64, f64)) -> (f64, f64) {
    if r.1 > r.0 {
        r
    } else {
        (r.0 - 0.5, r.1 + 0.5)
    }
}

fn tick(v: f64) -> String {
    if v.abs() >= 10.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn range(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)))
}

/// Recall against top-k, alias and entity interpretation.
pub fn topk_svg(csv: &Path) -> Result<String> {
    let t = Table::load(csv)?;
    let k = t.floats("k")?;
    let alias = t.floats("alias_level")?;
    let entity = t.floats("entity_level")?;
    if k.is_empty() {
        return Err(Error::EmptyInput("top-k sweep"));
    }
    let mut c = Canvas::new("Recall by top-k", range(&k), (0.0, 1.0), "k", "recall");
    c.line(&k, &alias, COLORS[0]);
    c.line(&k, &entity, COLORS[1]);
    c.legend(&[("alias rows", COLORS[0]), ("unique entities", COLORS[1])]);
    Ok(c.finish())
}

/// Row-normalised outcome transitions as a 3×3 heatmap.
pub fn transition_svg(csv: &Path) -> Result<String> {
    let t = Table::load(csv)?;
    let from = t.strings("from")?;
    let to = t.strings("to")?;
    let pct = t.floats("row_percent")?;
    let labels = ["Exact", "Related", "Missed"];
    let cell = 90.0;
    let (ox, oy) = (140.0, 70.0);
    let mut body = String::new();
    let _ = write!(
        body,
        r#"<text x="{}" y="30" text-anchor="middle" font-size="16">Outcome transitions (row %)</text>"#,
        ox + 1.5 * cell
    );
    for (i, l) in labels.iter().enumerate() {
        let _ = write!(
            body,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">TO {l}</text><text x="{}" y="{}" text-anchor="end" font-size="12">FROM {l}</text>"#,
            ox + (i as f64 + 0.5) * cell,
            oy - 8.0,
            ox - 8.0,
            oy + (i as f64 + 0.5) * cell + 4.0
        );
    }
    for ((f, to), p) in from.iter().zip(&to).zip(&pct) {
        let (Some(r), Some(col)) = (
            labels.iter().position(|l| l == f),
            labels.iter().position(|l| l == to),
        ) else {
            continue;
        };
        let shade = (255.0 - 2.2 * p.clamp(0.0, 100.0)) as u8;
        let _ = write!(
            body,
            r#"<rect x="{}" y="{}" width="{cell}" height="{cell}" fill="rgb({shade},{shade},255)" stroke="white"/><text x="{}" y="{}" text-anchor="middle" font-size="13">{p:.1}</text>"#,
            ox + col as f64 * cell,
            oy + r as f64 * cell,
            ox + (col as f64 + 0.5) * cell,
            oy + (r as f64 + 0.5) * cell + 4.0
        );
    }
    Ok(format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="460" height="360" viewBox="0 0 460 360"><rect width="100%" height="100%" fill="white"/>{body}</svg>
"#
    ))
}

/// Similarity difference per article with the smoothed per-article R@1.
pub fn article_similarity_svg(csv: &Path) -> Result<String> {
    let t = Table::load(csv)?;
    let rank = t.floats("rank")?;
    let diff = t.floats("diff")?;
    let smoothed = t.floats("smoothed_r1")?;
    if rank.is_empty() {
        return Err(Error::EmptyInput("article similarity series"));
    }
    let (lo, hi) = range(&diff);
    let y = (lo.min(0.0), hi.max(1.0));
    let mut c = Canvas::new("Article similarity difference", range(&rank), y, "article (sorted by S_G - S_P)", "value");
    c.dots(&rank, &diff, COLORS[0]);
    c.line(&rank, &smoothed, COLORS[1]);
    c.legend(&[("S_G - S_P", COLORS[0]), ("moving avg R@1", COLORS[1])]);
    Ok(c.finish())
}

/// Exact and related rates per mention word count.
pub fn wordcount_svg(csv: &Path) -> Result<String> {
    let t = Table::load(csv)?;
    let words = t.floats("words")?;
    let exact = t.floats("exact")?;
    let related = t.floats("related")?;
    let n = words.len().max(1) as f64;
    let mut c = Canvas::new("Performance by mention word count", (0.0, n), (0.0, 1.0), "words in mention", "rate");
    let slot = (WIDTH - 2.0 * MARGIN) / n;
    for (i, (w, (e, r))) in words.iter().zip(exact.iter().zip(&related)).enumerate() {
        let x = MARGIN + i as f64 * slot;
        for (j, (v, color)) in [(*e, COLORS[0]), (*r, COLORS[2])].into_iter().enumerate() {
            let top = c.py(v);
            let _ = write!(
                c.body,
                r#"<rect x="{:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="{color}"/>"#,
                x + slot * (0.1 + 0.4 * j as f64),
                slot * 0.4,
                HEIGHT - MARGIN - top
            );
        }
        let _ = write!(
            c.body,
            r#"<text x="{:.2}" y="{}" text-anchor="middle" font-size="11">{w}</text>"#,
            x + slot / 2.0,
            HEIGHT - MARGIN + 30.0
        );
    }
    c.legend(&[("exact", COLORS[0]), ("related", COLORS[2])]);
    Ok(c.finish())
}

/// Renders every chart whose CSV exists in `dir`; returns the SVG paths
/// written.
pub fn export_plots(dir: &Path) -> Result<Vec<PathBuf>> {
    type Render = fn(&Path) -> Result<String>;
    let charts: [(&str, &str, Render); 4] = [
        (TOPK_CSV, "topk.svg", topk_svg),
        (TRANSITION_CSV, "transition.svg", transition_svg),
        (ARTICLE_SIM_CSV, "article_similarity.svg", article_similarity_svg),
        (WORDCOUNT_CSV, "wordcount.svg", wordcount_svg),
    ];
    let mut written = Vec::new();
    for (csv, svg, render) in charts {
        let src = dir.join(csv);
        if !src.exists() {
            log::warn!("{} not found, skipping {svg}", src.display());
            continue;
        }
        let out = dir.join(svg);
        fs::write(&out, render(&src)?).map_err(|e| Error::io(&out, e))?;
        written.push(out);
    }
    if written.is_empty() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no evaluation series to plot"),
        ));
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_all_charts() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path();
        fs::write(p.join(TOPK_CSV), "k,alias_level,entity_level\n1,0.5,0.5\n5,0.7,0.8\n").unwrap();
        fs::write(
            p.join(TRANSITION_CSV),
            "from,to,count,row_percent\nExact,Exact,3,100\nRelated,Exact,1,50\nRelated,Missed,1,50\n",
        )
        .unwrap();
        fs::write(
            p.join(ARTICLE_SIM_CSV),
            "rank,article_id,s_g,s_p,diff,r1,r1_baseline,region,smoothed_r1,smoothed_r1_baseline\n0,a,1,1,0,1,,,1,\n1,b,0.9,0.8,0.1,0.5,,B,0.75,\n",
        )
        .unwrap();
        fs::write(p.join(WORDCOUNT_CSV), "words,count,exact,related\n1,120,0.6,0.2\n").unwrap();
        let written = export_plots(p).unwrap();
        assert_eq!(written.len(), 4);
        for f in written {
            let s = fs::read_to_string(f).unwrap();
            assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        }
    }

    #[test]
    fn empty_directory_is_an_input_error() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(export_plots(dir.path()).unwrap_err().exit_code(), 2);
    }
}
