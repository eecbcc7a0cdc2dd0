//! Retrieval metrics, exact/related/missed breakdowns, outcome transitions
//! between two runs, and the article-level similarity analysis.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::Article;
use crate::encoding::TextEncoder;
use crate::error::{Error, Result};
use crate::ontology::OntologySnapshot;

/// Window of the centred moving average over per-article R@1.
pub const SMOOTHING_WINDOW: usize = 200;
/// Smallest word-count bucket reported.
pub const MIN_BUCKET_SIZE: usize = 100;

/// Linking result for one mention: unique predicted entities in rank order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MentionResult {
    pub article_id: String,
    pub start: usize,
    pub end: usize,
    pub gold: String,
    pub entities: Vec<String>,
}

impl MentionResult {
    fn key(&self) -> (&str, usize, usize) {
        (self.article_id.as_str(), self.start, self.end)
    }
}

/// Fraction of mentions whose gold entity is among the first `n` unique
/// predictions.
pub fn recall_at(results: &[MentionResult], n: usize) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::EmptyInput("results"));
    }
    let hits = results
        .iter()
        .filter(|r| r.entities.iter().take(n).any(|e| *e == r.gold))
        .count();
    Ok(hits as f64 / results.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Outcome {
    Exact,
    Related,
    Missed,
}

impl Outcome {
    pub const ALL: [Outcome; 3] = [Outcome::Exact, Outcome::Related, Outcome::Missed];

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchOutcome {
    pub article_id: String,
    pub start: usize,
    pub end: usize,
    pub gold_cui: String,
    pub predicted_cui: Option<String>,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    pub exact: f64,
    pub related: f64,
    pub missed: f64,
}

impl Breakdown {
    pub fn of(outcomes: &[MatchOutcome]) -> Self {
        let mut counts = [0usize; 3];
        for o in outcomes {
            counts[o.outcome.index()] += 1;
        }
        let n = outcomes.len().max(1) as f64;
        Breakdown {
            exact: counts[0] as f64 / n,
            related: counts[1] as f64 / n,
            missed: counts[2] as f64 / n,
        }
    }
}

/// Classifies each mention's top-1 unique prediction against its gold entity.
pub fn classify_matches(
    results: &[MentionResult],
    snapshot: &OntologySnapshot,
) -> Result<(Vec<MatchOutcome>, Breakdown)> {
    let mut outcomes = Vec::with_capacity(results.len());
    for r in results {
        let gold = snapshot.resolve_cui(&r.gold)?;
        let predicted = r.entities.first().cloned();
        let outcome = match &predicted {
            None => Outcome::Missed,
            Some(p) => {
                let p = snapshot.resolve_cui(p)?;
                if p == gold {
                    Outcome::Exact
                } else if snapshot.is_related(&p, &gold)? {
                    Outcome::Related
                } else {
                    Outcome::Missed
                }
            }
        };
        outcomes.push(MatchOutcome {
            article_id: r.article_id.clone(),
            start: r.start,
            end: r.end,
            gold_cui: gold,
            predicted_cui: predicted,
            outcome,
        });
    }
    let breakdown = Breakdown::of(&outcomes);
    Ok((outcomes, breakdown))
}

/// Rows are the outcome before, columns the outcome after, both in
/// Exact, Related, Missed order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    pub counts: [[u64; 3]; 3],
    pub row_percent: [[f64; 3]; 3],
}

pub fn transition_heatmap(before: &[MatchOutcome], after: &[MatchOutcome]) -> Result<TransitionMatrix> {
    if before.len() != after.len() {
        return Err(Error::MismatchedMentions(format!(
            "{} mentions before, {} after",
            before.len(),
            after.len()
        )));
    }
    let after_by_key: HashMap<(&str, usize, usize), Outcome> = after
        .iter()
        .map(|o| ((o.article_id.as_str(), o.start, o.end), o.outcome))
        .collect();
    if after_by_key.len() != after.len() {
        return Err(Error::MismatchedMentions("duplicate mention in second run".into()));
    }
    let mut counts = [[0u64; 3]; 3];
    for o in before {
        let to = after_by_key
            .get(&(o.article_id.as_str(), o.start, o.end))
            .ok_or_else(|| {
                Error::MismatchedMentions(format!("{}:{}..{}", o.article_id, o.start, o.end))
            })?;
        counts[o.outcome.index()][to.index()] += 1;
    }
    let mut row_percent = [[0f64; 3]; 3];
    for (row, pct) in counts.iter().zip(row_percent.iter_mut()) {
        let total: u64 = row.iter().sum();
        if total > 0 {
            for (c, p) in row.iter().zip(pct.iter_mut()) {
                *p = *c as f64 * 100.0 / total as f64;
            }
        }
    }
    Ok(TransitionMatrix {
        counts,
        row_percent,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    /// Predictions semantically closer to the article than the gold entities.
    A,
    /// Gold entities semantically closer than the predictions.
    B,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArticleSimRecord {
    pub article_id: String,
    pub s_g: f64,
    pub s_p: f64,
    pub diff: f64,
    pub r1: f64,
    /// Per-article R@1 of a second (e.g. reranked) run, when available.
    pub r1_alt: Option<f64>,
    pub region: Option<Region>,
}

fn replace_spans(text: &str, mut edits: Vec<(usize, usize, &str)>) -> String {
    // right to left keeps earlier offsets valid
    edits.sort_by_key(|e| std::cmp::Reverse(e.0));
    let mut out = text.to_owned();
    for (start, end, with) in edits {
        out.replace_range(start..end, with);
    }
    out
}

fn canonical<'s>(snapshot: &'s OntologySnapshot, cui: &str) -> Result<&'s str> {
    let resolved = snapshot.resolve_cui(cui)?;
    Ok(snapshot
        .entity(&resolved)
        .map(|e| e.canonical_name.as_str())
        .expect("resolved cui is active"))
}

/// Builds the prediction-substituted and gold-substituted variants of an
/// article and compares each with the original under `encoder`.
///
/// Related and missed mentions are replaced by the predicted canonical name
/// in the prediction variant and by the gold canonical name in the gold
/// variant; with `gold_replace_all` every mention is replaced in the gold
/// variant.
pub fn article_similarity(
    article: &Article,
    outcomes: &[MatchOutcome],
    snapshot: &OntologySnapshot,
    encoder: &dyn TextEncoder,
    gold_replace_all: bool,
) -> Result<ArticleSimRecord> {
    if article.has_overlaps() {
        return Err(Error::OverlappingSpans(article.id.clone()));
    }
    let by_span: HashMap<(usize, usize), &MatchOutcome> = outcomes
        .iter()
        .filter(|o| o.article_id == article.id)
        .map(|o| ((o.start, o.end), o))
        .collect();
    if article.mentions.is_empty() {
        return Err(Error::EmptyInput("article mentions"));
    }
    let mut pred_edits = Vec::new();
    let mut gold_edits = Vec::new();
    let mut exact = 0usize;
    for m in &article.mentions {
        let o = by_span.get(&(m.start, m.end)).ok_or_else(|| {
            Error::MismatchedMentions(format!("no outcome for {}:{}..{}", article.id, m.start, m.end))
        })?;
        if o.outcome == Outcome::Exact {
            exact += 1;
            if gold_replace_all {
                gold_edits.push((m.start, m.end, canonical(snapshot, &o.gold_cui)?));
            }
            continue;
        }
        if let Some(p) = &o.predicted_cui {
            pred_edits.push((m.start, m.end, canonical(snapshot, p)?));
        }
        gold_edits.push((m.start, m.end, canonical(snapshot, &o.gold_cui)?));
    }
    let original = encoder.encode(&article.text)?;
    let a_p = replace_spans(&article.text, pred_edits);
    let a_g = replace_spans(&article.text, gold_edits);
    let s_p = if a_p == article.text {
        original.cosine(&original)
    } else {
        original.cosine(&encoder.encode(&a_p)?)
    };
    let s_g = if a_g == a_p {
        s_p
    } else {
        original.cosine(&encoder.encode(&a_g)?)
    };
    Ok(ArticleSimRecord {
        article_id: article.id.clone(),
        s_g,
        s_p,
        diff: s_g - s_p,
        r1: exact as f64 / article.mentions.len() as f64,
        r1_alt: None,
        region: None,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RegionAnalysis {
    pub mean: f64,
    pub std: f64,
    /// Records sorted by diff ascending (ties by article id), with region
    /// labels.
    pub records: Vec<ArticleSimRecord>,
    /// Centred moving average of per-article R@1 over `records`.
    pub smoothed_r1: Vec<f64>,
    /// Same for `r1_alt`, when every record carries it.
    pub smoothed_r1_alt: Option<Vec<f64>>,
}

/// Mean over `[i - w/2, i + w - w/2 - 1]`, clipped to the series.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let n = values.len();
    let window = window.max(1);
    let mut prefix = vec![0f64; n + 1];
    for (i, v) in values.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v;
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(window / 2);
            let hi = (i + window - window / 2).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Flags articles whose diff lies more than one standard deviation below
/// (region A) or above (region B) the mean diff.
pub fn select_regions(records: &[ArticleSimRecord], window: usize) -> Result<RegionAnalysis> {
    if records.is_empty() {
        return Err(Error::EmptyInput("article similarity records"));
    }
    let n = records.len() as f64;
    let (mean, std) = if records.iter().all(|r| r.diff == records[0].diff) {
        (records[0].diff, 0.0)
    } else {
        let mean = records.iter().map(|r| r.diff).sum::<f64>() / n;
        let var = records.iter().map(|r| (r.diff - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    };
    let mut out: Vec<ArticleSimRecord> = records
        .iter()
        .cloned()
        .map(|mut r| {
            r.region = if r.diff < mean - std {
                Some(Region::A)
            } else if r.diff > mean + std {
                Some(Region::B)
            } else {
                None
            };
            r
        })
        .collect();
    out.sort_by(|x, y| {
        x.diff
            .total_cmp(&y.diff)
            .then_with(|| x.article_id.cmp(&y.article_id))
    });
    let r1: Vec<f64> = out.iter().map(|r| r.r1).collect();
    let alt: Option<Vec<f64>> = out.iter().map(|r| r.r1_alt).collect();
    Ok(RegionAnalysis {
        mean,
        std,
        smoothed_r1: moving_average(&r1, window),
        smoothed_r1_alt: alt.map(|a| moving_average(&a, window)),
        records: out,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BucketRates {
    pub count: usize,
    pub exact: f64,
    pub related: f64,
}

/// Exact and related rates per mention word count, dropping buckets with
/// fewer than `min_count` mentions. `surfaces` are parallel to `outcomes`.
pub fn wordcount_buckets(
    outcomes: &[MatchOutcome],
    surfaces: &[&str],
    min_count: usize,
) -> Result<BTreeMap<usize, BucketRates>> {
    if outcomes.len() != surfaces.len() {
        return Err(Error::MismatchedMentions(format!(
            "{} outcomes for {} mentions",
            outcomes.len(),
            surfaces.len()
        )));
    }
    let mut tally: BTreeMap<usize, [usize; 3]> = BTreeMap::new();
    for (o, s) in outcomes.iter().zip(surfaces) {
        tally.entry(s.split_whitespace().count()).or_default()[o.outcome.index()] += 1;
    }
    Ok(tally
        .into_iter()
        .filter_map(|(words, c)| {
            let count = c.iter().sum::<usize>();
            (count >= min_count).then(|| {
                (
                    words,
                    BucketRates {
                        count,
                        exact: c[0] as f64 / count as f64,
                        related: c[1] as f64 / count as f64,
                    },
                )
            })
        })
        .collect())
}

/// Summary of one evaluation run.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub r_at: BTreeMap<usize, f64>,
    pub breakdown: Breakdown,
    pub per_article_r1: BTreeMap<String, f64>,
}

impl EvalReport {
    pub fn compute(
        results: &[MentionResult],
        ns: &[usize],
        snapshot: &OntologySnapshot,
    ) -> Result<(Self, Vec<MatchOutcome>)> {
        let mut r_at = BTreeMap::new();
        for &n in ns {
            r_at.insert(n, recall_at(results, n)?);
        }
        let (outcomes, breakdown) = classify_matches(results, snapshot)?;
        let mut per_article: BTreeMap<String, (usize, usize)> = BTreeMap::new();
        for o in &outcomes {
            let e = per_article.entry(o.article_id.clone()).or_default();
            e.1 += 1;
            if o.outcome == Outcome::Exact {
                e.0 += 1;
            }
        }
        let per_article_r1 = per_article
            .into_iter()
            .map(|(k, (hit, n))| (k, hit as f64 / n as f64))
            .collect();
        Ok((
            EvalReport {
                r_at,
                breakdown,
                per_article_r1,
            },
            outcomes,
        ))
    }
}

/// Mentions keyed by position, for aligning two runs.
pub fn index_results(results: &[MentionResult]) -> HashMap<(&str, usize, usize), &MentionResult> {
    results.iter().map(|r| (r.key(), r)).collect()
}
