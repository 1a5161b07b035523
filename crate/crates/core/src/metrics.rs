//! Edit distance, edit similarity and exact match.

use serde::{Deserialize, Serialize};

use crate::trace::{CompletionSample, PredictionTrace};

/// Levenshtein distance over Unicode scalar values, two-row DP.
pub fn levenshtein(a: &str, b: &str) -> usize {
    if a == b {
        return 0;
    }
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    // Keep the shorter string on the row axis.
    let (a, b) = if a.len() < b.len() { (b, a) } else { (a, b) };
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

/// `1 - lev(y, y_hat) / max(|y|, |y_hat|)` on raw strings; two empty strings score 1.
pub fn edit_similarity(y: &str, y_hat: &str) -> f64 {
    let longest = y.chars().count().max(y_hat.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - levenshtein(y, y_hat) as f64 / longest as f64
}

fn normalize(s: &str) -> Vec<&str> {
    let mut lines: Vec<&str> = s.lines().map(str::trim_end).collect();
    while lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    lines
}

/// Equality after stripping trailing whitespace per line and trailing empty lines.
pub fn exact_match(y: &str, y_hat: &str) -> bool {
    normalize(y) == normalize(y_hat)
}

/// Cuts `prediction` to the number of lines in `reference`.
pub fn truncate_lines<'a>(prediction: &'a str, reference: &str) -> &'a str {
    let keep = reference.lines().count().max(1);
    match prediction.match_indices('\n').nth(keep - 1) {
        Some((pos, _)) => &prediction[..pos],
        None => prediction,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub es: f64,
    pub em: bool,
}

/// ES and EM of a prediction, optionally truncated to the reference's line count first.
pub fn measure(y: &str, y_hat: &str, truncate: bool) -> MetricValue {
    let y_hat = if truncate { truncate_lines(y_hat, y) } else { y_hat };
    MetricValue {
        es: edit_similarity(y, y_hat),
        em: exact_match(y, y_hat),
    }
}

/// Regression label for a trace: ES between ground truth and the raw prediction.
pub fn score_target(sample: &CompletionSample, trace: &PredictionTrace) -> f64 {
    edit_similarity(&sample.ground_truth, &trace.text)
}

/// Label with optional line truncation of the prediction.
pub fn score_target_with(sample: &CompletionSample, trace: &PredictionTrace, truncate: bool) -> f64 {
    measure(&sample.ground_truth, &trace.text, truncate).es
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dp_oracle(a: &str, b: &str) -> usize {
        let a: Vec<char> = a.chars().collect();
        let b: Vec<char> = b.chars().collect();
        let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for (i, row) in d.iter_mut().enumerate() {
            row[0] = i;
        }
        for (j, cell) in d[0].iter_mut().enumerate() {
            *cell = j;
        }
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                let cost = usize::from(a[i - 1] != b[j - 1]);
                d[i][j] = (d[i - 1][j] + 1).min(d[i][j - 1] + 1).min(d[i - 1][j - 1] + cost);
            }
        }
        d[a.len()][b.len()]
    }

    #[test]
    fn known_distances() {
        assert_eq!(levenshtein("kitten", "sitting"), 3);
        assert_eq!(dp_oracle("kitten", "sitting"), 3);
        assert_eq!(levenshtein("", "abc"), 3);
        assert_eq!(levenshtein("λx", "λy"), 1);
    }

    #[test]
    fn similarity_values() {
        assert_eq!(edit_similarity("abc", "abc"), 1.0);
        assert!((edit_similarity("abc", "abd") - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(edit_similarity("", ""), 1.0);
        assert_eq!(edit_similarity("ab", ""), 0.0);
        assert_eq!(edit_similarity("abcd", "abXd"), 0.75);
    }

    #[test]
    fn exact_match_normalizes_trailing_whitespace() {
        assert!(exact_match("x = 1", "x = 1"));
        assert!(exact_match("x = 1  \n", "x = 1"));
        assert!(exact_match("a\n\n\n", "a"));
        assert!(!exact_match("x = 1", "x = 2"));
        assert!(!exact_match("  x", "x"));
    }

    #[test]
    fn score_target_is_raw_es() {
        let sample = CompletionSample {
            id: "s".into(),
            prompt: String::new(),
            ground_truth: "ab".into(),
            corpus_ref: None,
        };
        let mut trace = PredictionTrace::default();
        assert_eq!(score_target(&sample, &trace), 0.0);
        trace.text = "ab".into();
        assert_eq!(score_target(&sample, &trace), 1.0);
    }

    #[test]
    fn truncation_keeps_reference_line_count() {
        assert_eq!(truncate_lines("a\nb\nc", "x\ny"), "a\nb");
        assert_eq!(truncate_lines("a", "x\ny"), "a");
        assert_eq!(truncate_lines("a\nb", ""), "a");
        let m = measure("a\nb", "a\nb\nextra", true);
        assert!(m.em && m.es == 1.0);
        assert!(measure("a\nb", "a\nb\nextra", false).es < 1.0);
    }

    proptest! {
        #[test]
        fn matches_full_dp(a in "[abλ ]{0,12}", b in "[abλ ]{0,12}") {
            prop_assert_eq!(levenshtein(&a, &b), dp_oracle(&a, &b));
        }

        #[test]
        fn metric_axioms(a in "[abc]{0,8}", b in "[abc]{0,8}", c in "[abc]{0,8}") {
            prop_assert_eq!(levenshtein(&a, &b), levenshtein(&b, &a));
            prop_assert!(levenshtein(&a, &c) <= levenshtein(&a, &b) + levenshtein(&b, &c));
            let es = edit_similarity(&a, &b);
            prop_assert!((0.0..=1.0).contains(&es));
            prop_assert_eq!(es, edit_similarity(&b, &a));
            prop_assert_eq!(es == 1.0, a == b);
        }

        #[test]
        fn exact_match_implies_full_similarity_without_trailing_blanks(a in "[ab]{0,6}", b in "[ab]{0,6}") {
            if exact_match(&a, &b) {
                prop_assert_eq!(edit_similarity(&a, &b), 1.0);
            }
        }
    }
}
