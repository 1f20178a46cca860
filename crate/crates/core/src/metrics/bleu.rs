use std::collections::HashMap;
use std::hash::Hash;

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram matches and the candidate's n-gram total.
/// Maps both sequences onto shared integer ids so n-gram hashing works on
/// `u32` slices instead of strings.
pub(crate) fn intern_pair<S: AsRef<str>>(a: &[S], b: &[S]) -> (Vec<u32>, Vec<u32>) {
    let mut ids: HashMap<&str, u32> = HashMap::new();
    let mut out = [Vec::with_capacity(a.len()), Vec::with_capacity(b.len())];
    for (dst, seq) in out.iter_mut().zip([a, b]) {
        for s in seq {
            let next = ids.len() as u32;
            dst.push(*ids.entry(s.as_ref()).or_insert(next));
        }
    }
    let [a, b] = out;
    (a, b)
}

pub(crate) fn clipped_matches<T: Eq + Hash>(candidate: &[T], reference: &[T], n: usize) -> (usize, usize) {
    let cand = ngram_counts(candidate, n);
    let refc = ngram_counts(reference, n);
    let matched = cand
        .iter()
        .map(|(gram, &c)| c.min(refc.get(gram).copied().unwrap_or(0)))
        .sum();
    (matched, candidate.len().saturating_sub(n - 1))
}

/// Modified precision for order `n`. Orders above one get add-one smoothing
/// when nothing matches; a zero unigram precision stays zero.
pub(crate) fn smoothed_precision(matched: f64, total: f64, n: usize) -> f64 {
    if matched > 0.0 {
        matched / total
    } else if n >= 2 {
        1.0 / (total + 1.0)
    } else {
        0.0
    }
}

pub(crate) fn brevity_penalty(candidate_len: usize, reference_len: usize) -> f64 {
    if candidate_len < reference_len {
        (1.0 - reference_len as f64 / candidate_len as f64).exp()
    } else {
        1.0
    }
}

/// Sentence BLEU of `candidate` against a single `reference`, uniform weights
/// over orders `1..=max_n`.
pub fn bleu_tokens<T: Eq + Hash>(candidate: &[T], reference: &[T], max_n: usize) -> f64 {
    assert!(max_n >= 1, "BLEU order must be at least 1");
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let (matched, total) = clipped_matches(candidate, reference, n);
        let p = smoothed_precision(matched as f64, total as f64, n);
        if p == 0.0 {
            return 0.0;
        }
        log_sum += p.ln();
    }
    let score = brevity_penalty(candidate.len(), reference.len()) * (log_sum / max_n as f64).exp();
    score.clamp(0.0, 1.0)
}
