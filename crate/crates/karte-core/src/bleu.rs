//! Corpus-level BLEU over character n-grams, plus exact-match accuracy on
//! the normal finding.
//!
//! Precisions are modified n-gram precisions with per-reference clipping;
//! the brevity penalty is `exp(1 − r/h)` when the hypothesis total is
//! shorter than the reference total. A zero match count for some n is
//! smoothed to `1/(2·candidate-ngram-count)` and flagged in the report so
//! short-finding corpora keep a usable early-stopping signal.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum MetricError {
    EmptyPairList,
    BadMaxN(usize),
    NoNormalReferences,
}

impl fmt::Display for MetricError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricError::EmptyPairList => write!(f, "BLEU needs at least one hypothesis/reference pair"),
            MetricError::BadMaxN(n) => write!(f, "max_n must be in 1..=4, got {n}"),
            MetricError::NoNormalReferences => {
                write!(f, "no reference equals the normal finding string")
            }
        }
    }
}

impl core::error::Error for MetricError {}

#[derive(Debug, Clone, PartialEq)]
pub struct BleuReport {
    /// `bleu[n-1]` is the BLEU score using n-grams up to n.
    pub bleu: Vec<f64>,
    /// Modified precision per order; smoothed values appear as stored.
    pub precisions: Vec<f64>,
    /// True where the raw match count was zero and the floor was applied.
    pub smoothed: Vec<bool>,
    pub brevity_penalty: f64,
    pub hypothesis_len: usize,
    pub reference_len: usize,
}

fn ngram_counts(chars: &[char], n: usize) -> BTreeMap<&[char], u64> {
    let mut counts: BTreeMap<&[char], u64> = BTreeMap::new();
    if chars.len() >= n {
        for window in chars.windows(n) {
            *counts.entry(window).or_insert(0) += 1;
        }
    }
    counts
}

/// Character-level corpus BLEU with one reference per hypothesis.
pub fn corpus_bleu(pairs: &[(String, String)], max_n: usize) -> Result<BleuReport, MetricError> {
    if pairs.is_empty() {
        return Err(MetricError::EmptyPairList);
    }
    if !(1..=4).contains(&max_n) {
        return Err(MetricError::BadMaxN(max_n));
    }

    let tokenized: Vec<(Vec<char>, Vec<char>)> = pairs
        .iter()
        .map(|(h, r)| (h.chars().collect(), r.chars().collect()))
        .collect();

    let hypothesis_len: usize = tokenized.iter().map(|(h, _)| h.len()).sum();
    let reference_len: usize = tokenized.iter().map(|(_, r)| r.len()).sum();

    let mut precisions = Vec::with_capacity(max_n);
    let mut smoothed = Vec::with_capacity(max_n);
    for n in 1..=max_n {
        let mut matched: u64 = 0;
        let mut total: u64 = 0;
        for (hyp, reference) in &tokenized {
            let hyp_counts = ngram_counts(hyp, n);
            let ref_counts = ngram_counts(reference, n);
            for (gram, &count) in &hyp_counts {
                total += count;
                let clip = ref_counts.get(gram).copied().unwrap_or(0);
                matched += count.min(clip);
            }
        }
        if matched == 0 {
            // reciprocal-double-count floor; a zero denominator clamps to 1
            precisions.push(1.0 / (2.0 * total.max(1) as f64));
            smoothed.push(true);
        } else {
            precisions.push(matched as f64 / total as f64);
            smoothed.push(false);
        }
    }

    let brevity_penalty = if hypothesis_len == 0 {
        0.0
    } else if hypothesis_len < reference_len {
        libm::exp(1.0 - reference_len as f64 / hypothesis_len as f64)
    } else {
        1.0
    };

    let bleu = (1..=max_n)
        .map(|n| {
            let log_mean: f64 =
                precisions[..n].iter().map(|p| libm::log(*p)).sum::<f64>() / n as f64;
            brevity_penalty * libm::exp(log_mean)
        })
        .collect();

    Ok(BleuReport {
        bleu,
        precisions,
        smoothed,
        brevity_penalty,
        hypothesis_len,
        reference_len,
    })
}

/// Over pairs whose reference equals `normal`, the fraction predicted
/// verbatim.
pub fn exact_match_normal(pairs: &[(String, String)], normal: &str) -> Result<f64, MetricError> {
    let mut total = 0usize;
    let mut hit = 0usize;
    for (hyp, reference) in pairs {
        if reference == normal {
            total += 1;
            if hyp == normal {
                hit += 1;
            }
        }
    }
    if total == 0 {
        return Err(MetricError::NoNormalReferences);
    }
    Ok(hit as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;
    use alloc::format;
    use alloc::string::ToString;
    use alloc::vec;

    fn pair(h: &str, r: &str) -> (String, String) {
        (h.to_string(), r.to_string())
    }

    #[test]
    fn identity_pairs_score_one() {
        let pairs = vec![pair("異常なし", "異常なし"), pair("左上円影", "左上円影")];
        let rep = corpus_bleu(&pairs, 4).unwrap();
        for &b in &rep.bleu {
            assert!((b - 1.0).abs() < 1e-12);
        }
        assert_eq!(rep.brevity_penalty, 1.0);
    }

    #[test]
    fn disjoint_pair_hits_smoothing_floor() {
        let pairs = vec![pair("abc", "xyz")];
        let rep = corpus_bleu(&pairs, 1).unwrap();
        assert!(rep.smoothed[0]);
        assert!(rep.bleu[0] <= 1.0 / (2.0 * 3.0) + 1e-12);
    }

    #[test]
    fn hand_computed_bleu3() {
        // hyp "abcd" vs ref "abce": p1 = 3/4, p2 = 2/3, p3 = 1/2, BP = 1
        let pairs = vec![pair("abcd", "abce")];
        let rep = corpus_bleu(&pairs, 3).unwrap();
        assert!((rep.precisions[0] - 0.75).abs() < 1e-12);
        assert!((rep.precisions[1] - 2.0 / 3.0).abs() < 1e-12);
        assert!((rep.precisions[2] - 0.5).abs() < 1e-12);
        assert_eq!(rep.brevity_penalty, 1.0);
        let want = libm::pow(0.75 * (2.0 / 3.0) * 0.5, 1.0 / 3.0);
        assert!((rep.bleu[2] - want).abs() < 1e-12);
        assert!((rep.bleu[2] - 0.6300).abs() < 1e-4);
    }

    #[test]
    fn brevity_penalty_applies_when_short() {
        // hyp "ab" vs ref "abcd": p1 = 1, BP = exp(1 - 4/2)
        let pairs = vec![pair("ab", "abcd")];
        let rep = corpus_bleu(&pairs, 1).unwrap();
        assert!((rep.brevity_penalty - libm::exp(-1.0)).abs() < 1e-12);
        assert!((rep.bleu[0] - libm::exp(-1.0)).abs() < 1e-12);
    }

    #[test]
    fn empty_pair_list_is_an_error() {
        assert_eq!(corpus_bleu(&[], 4), Err(MetricError::EmptyPairList));
    }

    #[test]
    fn order_invariance() {
        let a = vec![pair("abcd", "abce"), pair("xy", "xz"), pair("異常なし", "異常なし")];
        let mut b = a.clone();
        b.reverse();
        assert_eq!(corpus_bleu(&a, 4).unwrap(), corpus_bleu(&b, 4).unwrap());
    }

    /// Brute-force counter: for each n-gram occurrence position in the
    /// hypothesis, count it as matched if the same string occurs in the
    /// reference more times than already consumed. Deliberately written as
    /// position scanning rather than hash counting.
    fn brute_force_precision(pairs: &[(String, String)], n: usize) -> (u64, u64) {
        let mut matched = 0u64;
        let mut total = 0u64;
        for (h, r) in pairs {
            let hyp: Vec<char> = h.chars().collect();
            let reference: Vec<char> = r.chars().collect();
            if hyp.len() < n {
                continue;
            }
            let mut consumed: Vec<Vec<char>> = Vec::new();
            for i in 0..=hyp.len() - n {
                total += 1;
                let gram = hyp[i..i + n].to_vec();
                let avail = if reference.len() >= n {
                    (0..=reference.len() - n)
                        .filter(|&j| reference[j..j + n] == gram[..])
                        .count()
                } else {
                    0
                };
                let used = consumed.iter().filter(|g| **g == gram).count();
                if used < avail {
                    matched += 1;
                    consumed.push(gram);
                }
            }
        }
        (matched, total)
    }

    #[test]
    fn precisions_match_brute_force_on_random_pairs() {
        let mut rng = RngState::new(77);
        let alphabet: Vec<char> = "ab異常な影左".chars().collect();
        let mut pairs = Vec::new();
        for _ in 0..300 {
            let mut h = String::new();
            let mut r = String::new();
            for _ in 0..rng.below(9) {
                h.push(alphabet[rng.below(alphabet.len())]);
            }
            for _ in 0..1 + rng.below(8) {
                r.push(alphabet[rng.below(alphabet.len())]);
            }
            pairs.push((h, r));
        }
        let rep = corpus_bleu(&pairs, 4).unwrap();
        for n in 1..=4 {
            let (matched, total) = brute_force_precision(&pairs, n);
            let want = if matched == 0 {
                1.0 / (2.0 * total.max(1) as f64)
            } else {
                matched as f64 / total as f64
            };
            assert_eq!(
                rep.precisions[n - 1], want,
                "n={n} matched={matched} total={total}"
            );
        }
    }

    #[test]
    fn bleu1_at_least_bleu4_on_random_pairs() {
        let mut rng = RngState::new(101);
        let alphabet: Vec<char> = "abcd".chars().collect();
        for round in 0..50 {
            let mut pairs = Vec::new();
            for _ in 0..4 {
                let mut h = String::new();
                let mut r = String::new();
                for _ in 0..4 + rng.below(6) {
                    h.push(alphabet[rng.below(alphabet.len())]);
                }
                for _ in 0..4 + rng.below(6) {
                    r.push(alphabet[rng.below(alphabet.len())]);
                }
                pairs.push((h, r));
            }
            let rep = corpus_bleu(&pairs, 4).unwrap();
            if rep.smoothed.iter().any(|&s| s) {
                continue; // smoothing can break monotonicity; reported, not hidden
            }
            assert!(
                rep.bleu[0] >= rep.bleu[3] - 1e-12,
                "round {round}: {:?}",
                rep.bleu
            );
        }
    }

    #[test]
    fn exact_match_counts_only_normal_references() {
        let pairs = vec![
            pair("異常なし", "異常なし"),
            pair("左上円影", "異常なし"),
            pair("異常なし", "異常なし"),
            pair("異常なし", "異常なし"),
            pair("異常なし", "左上円影"),
        ];
        let acc = exact_match_normal(&pairs, "異常なし").unwrap();
        assert!((acc - 0.75).abs() < 1e-12);
    }

    #[test]
    fn exact_match_all_or_none() {
        let all = vec![pair("異常なし", "異常なし")];
        assert_eq!(exact_match_normal(&all, "異常なし").unwrap(), 1.0);
        let none = vec![pair("x", "異常なし")];
        assert_eq!(exact_match_normal(&none, "異常なし").unwrap(), 0.0);
        let empty = vec![pair("x", "y")];
        assert!(matches!(
            exact_match_normal(&empty, "異常なし"),
            Err(MetricError::NoNormalReferences)
        ));
    }

    #[test]
    fn report_fields_are_consistent() {
        let pairs = vec![pair("abc", "abcd"), pair("xy", "xy")];
        let rep = corpus_bleu(&pairs, 2).unwrap();
        assert_eq!(rep.hypothesis_len, 5);
        assert_eq!(rep.reference_len, 6);
        assert_eq!(rep.bleu.len(), 2);
        assert_eq!(rep.precisions.len(), 2);
        let _ = format!("{rep:?}");
    }
}
