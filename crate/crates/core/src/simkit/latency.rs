//! Expected per-sample latency of the critiqued pipeline versus always retrieving.
//!
//! A decision costs `t_d`, a retrieval `t_r`, the zero-shot generation `t_g0`
//! and every retrieval-augmented generation `t_gi`. In single RAG the
//! zero-shot generation runs in parallel with the first retrieval, so every
//! sample pays `max(t_g0, t_r)` up front and only the samples that decide to
//! retrieve pay the second generation.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LatencyParams {
    pub t_d: f64,
    pub t_r: f64,
    pub t_g0: f64,
    pub t_gi: f64,
}

impl Default for LatencyParams {
    fn default() -> Self {
        Self {
            t_d: 1.0,
            t_r: 866.0,
            t_g0: 755.0,
            t_gi: 1025.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyRow {
    /// 1 for the single-RAG stage, i ≥ 2 for the i-th iterative round.
    pub iteration: usize,
    pub art: f64,
    pub card_ms: f64,
    pub baseline_ms: f64,
    /// `1 - card / baseline`.
    pub reduced: f64,
}

pub fn latency_model(p: &LatencyParams, art_single: f64, art_marginal: &[f64]) -> Result<Vec<LatencyRow>, String> {
    for (name, v) in [("t_d", p.t_d), ("t_r", p.t_r), ("t_g0", p.t_g0), ("t_gi", p.t_gi)] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(format!("{name} must be a nonnegative number, got {v}"));
        }
    }
    for &art in std::iter::once(&art_single).chain(art_marginal) {
        if !(0.0..=1.0).contains(&art) {
            return Err(format!("retrieval rate {art} outside [0, 1]"));
        }
    }
    let baseline = p.t_r + p.t_gi;
    let row = |iteration, art, card: f64| LatencyRow {
        iteration,
        art,
        card_ms: card,
        baseline_ms: baseline,
        reduced: if baseline > 0.0 { 1.0 - card / baseline } else { 0.0 },
    };
    let mut rows = vec![row(1, art_single, p.t_g0.max(p.t_r) + p.t_d + art_single * p.t_gi)];
    for (k, &art) in art_marginal.iter().enumerate() {
        rows.push(row(k + 2, art, p.t_d + art * (p.t_r + p.t_gi)));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(t_r: f64, t_d: f64) -> LatencyParams {
        LatencyParams {
            t_r,
            t_d,
            ..LatencyParams::default()
        }
    }

    #[test]
    fn single_rag_row() {
        let rows = latency_model(&params(728.0, 1.0), 0.746, &[]).unwrap();
        assert!((rows[0].reduced - 0.131).abs() <= 0.005, "{}", rows[0].reduced);
    }

    #[test]
    fn marginal_rows_are_one_minus_art_without_decision_cost() {
        let rows = latency_model(&params(728.0, 0.0), 0.746, &[0.432, 1.0]).unwrap();
        assert!((rows[1].reduced - 0.568).abs() < 1e-12);
        assert_eq!(rows[2].reduced, 0.0);
    }

    #[test]
    fn never_retrieving_costs_the_parallel_stage() {
        let p = params(900.0, 1.0);
        let rows = latency_model(&p, 0.0, &[]).unwrap();
        assert_eq!(rows[0].card_ms, 901.0);
    }

    #[test]
    fn rejects_bad_rates() {
        assert!(latency_model(&LatencyParams::default(), 1.2, &[]).is_err());
        assert!(latency_model(&LatencyParams::default(), 0.5, &[-0.1]).is_err());
    }

    #[test]
    fn reduction_falls_as_retrieval_rises() {
        let p = LatencyParams::default();
        let mut last = f64::INFINITY;
        for k in 0..=20 {
            let art = k as f64 / 20.0;
            let rows = latency_model(&p, art, &[art]).unwrap();
            assert!(rows[0].reduced < last);
            assert!((rows[1].reduced - (1.0 - (p.t_d + art * (p.t_r + p.t_gi)) / (p.t_r + p.t_gi))).abs() < 1e-12);
            last = rows[0].reduced;
        }
    }
}
