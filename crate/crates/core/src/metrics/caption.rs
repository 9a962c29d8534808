//! BLEU, ROUGE-L and CIDEr over whitespace tokens.

use std::collections::HashMap;

/// Stand-in for a zero n-gram precision so the geometric mean stays defined.
pub const BLEU_SMOOTHING: f64 = 1e-9;
pub const ROUGE_BETA: f64 = 1.2;
pub const CIDER_SCALE: f64 = 10.0;

fn ngrams<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut out = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *out.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
        }
    }
    out
}

/// Clipped n-gram precisions for orders `1..=n`.
pub fn modified_precisions<S: AsRef<str>>(candidate: &[S], references: &[Vec<S>], n: usize) -> Vec<f64> {
    (1..=n)
        .map(|k| {
            let cand = ngrams(candidate, k);
            let total: usize = cand.values().sum();
            let ref_counts: Vec<_> = references.iter().map(|r| ngrams(r, k)).collect();
            let clipped: usize = cand
                .iter()
                .map(|(g, &c)| {
                    let max_ref = ref_counts.iter().map(|r| r.get(g).copied().unwrap_or(0)).max().unwrap_or(0);
                    c.min(max_ref)
                })
                .sum();
            if clipped == 0 || total == 0 {
                BLEU_SMOOTHING
            } else {
                clipped as f64 / total as f64
            }
        })
        .collect()
}

/// Reference length closest to `c`; ties prefer the shorter one.
fn closest_ref_len<S>(c: usize, references: &[Vec<S>]) -> usize {
    references
        .iter()
        .map(Vec::len)
        .min_by_key(|&r| (r.abs_diff(c), r))
        .unwrap_or(0)
}

/// Sentence BLEU-n with uniform weights and brevity penalty.
pub fn bleu<S: AsRef<str>>(candidate: &[S], references: &[Vec<S>], n: usize) -> f64 {
    if candidate.is_empty() || references.is_empty() || n == 0 {
        return 0.0;
    }
    let c = candidate.len();
    let r = closest_ref_len(c, references);
    let bp = if c >= r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    let log_mean = modified_precisions(candidate, references, n)
        .iter()
        .map(|p| p.ln())
        .sum::<f64>()
        / n as f64;
    bp * log_mean.exp()
}

pub fn lcs_len<S: AsRef<str>>(a: &[S], b: &[S]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    for x in a {
        let mut cur = vec![0usize; b.len() + 1];
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x.as_ref() == y.as_ref() {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        prev = cur;
    }
    prev[b.len()]
}

/// LCS F-measure weighting recall by `ROUGE_BETA`.
pub fn rouge_l<S: AsRef<str>>(candidate: &[S], reference: &[S]) -> f64 {
    let lcs = lcs_len(candidate, reference);
    if lcs == 0 {
        return 0.0;
    }
    let p = lcs as f64 / candidate.len() as f64;
    let r = lcs as f64 / reference.len() as f64;
    let b2 = ROUGE_BETA * ROUGE_BETA;
    (1.0 + b2) * p * r / (r + b2 * p)
}

/// Corpus CIDEr: the mean per-candidate score and the scores themselves.
///
/// For each order n in 1..=4, candidate and references become TF-IDF
/// vectors with document frequency counted over the reference sets (one
/// document per candidate); the score is the mean cosine against the
/// references, averaged over n and multiplied by `CIDER_SCALE`.
pub fn cider<S: AsRef<str>>(candidates: &[Vec<S>], references: &[Vec<Vec<S>>]) -> (f64, Vec<f64>) {
    assert_eq!(candidates.len(), references.len(), "one reference set per candidate");
    if candidates.is_empty() {
        return (0.0, Vec::new());
    }
    let docs = candidates.len() as f64;
    let mut scores = vec![0.0; candidates.len()];
    for n in 1..=4 {
        let mut df: HashMap<Vec<&str>, usize> = HashMap::new();
        for refs in references {
            let mut seen: Vec<Vec<&str>> = refs.iter().flat_map(|r| ngrams(r, n).into_keys()).collect();
            seen.sort();
            seen.dedup();
            for g in seen {
                *df.entry(g).or_insert(0) += 1;
            }
        }
        for (i, (cand, refs)) in candidates.iter().zip(references).enumerate() {
            if refs.is_empty() {
                continue;
            }
            let cv = tfidf(ngrams(cand, n), &df, docs);
            let mut total = 0.0;
            for r in refs {
                let rv = tfidf(ngrams(r, n), &df, docs);
                total += cosine(&cv, &rv);
            }
            scores[i] += total / refs.len() as f64 / 4.0;
        }
    }
    for s in &mut scores {
        *s *= CIDER_SCALE;
    }
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    (mean, scores)
}

fn tfidf<'a>(counts: HashMap<Vec<&'a str>, usize>, df: &HashMap<Vec<&str>, usize>, docs: f64) -> HashMap<Vec<&'a str>, f64> {
    counts
        .into_iter()
        .map(|(g, c)| {
            let d = df.get(&g).copied().unwrap_or(0).max(1) as f64;
            (g, c as f64 * (docs / d).ln())
        })
        .collect()
}

fn cosine(a: &HashMap<Vec<&str>, f64>, b: &HashMap<Vec<&str>, f64>) -> f64 {
    let na: f64 = a.values().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = b.values().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let dot: f64 = a.iter().map(|(g, v)| v * b.get(g).copied().unwrap_or(0.0)).sum();
    dot / (na * nb)
}
