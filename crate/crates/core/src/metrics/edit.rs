use super::MetricsError;

/// Unit-cost edit distance over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    levenshtein_chars(&a, &b)
}

pub(crate) fn levenshtein_chars(a: &[char], b: &[char]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Levenshtein distance divided by the longer length.
pub fn nld(truth: &str, extracted: &str) -> Result<f64, MetricsError> {
    let t: Vec<char> = truth.chars().collect();
    if t.is_empty() {
        return Err(MetricsError::EmptyTruth);
    }
    let e: Vec<char> = extracted.chars().collect();
    let d = levenshtein_chars(&t, &e);
    Ok(d as f64 / t.len().max(e.len()) as f64)
}

/// Character error rate in percent, normalized by the reference length.
pub fn cer(reference: &str, hypothesis: &str) -> Result<f64, MetricsError> {
    let r: Vec<char> = reference.chars().collect();
    if r.is_empty() {
        return Err(MetricsError::EmptyReference);
    }
    let h: Vec<char> = hypothesis.chars().collect();
    Ok(100.0 * levenshtein_chars(&r, &h) as f64 / r.len() as f64)
}
