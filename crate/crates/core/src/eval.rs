//! Ranking metrics over similarity matrices and quality rates for the
//! bootstrap sample sets.

use crate::error::{EchoError, Result};
use crate::kg::{PairSet, SeedPairs};
use crate::sim::SimilarityMatrix;

/// Evaluation direction: which side issues the queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalDirection {
    LeftToRight,
    RightToLeft,
    Averaged,
}

impl EvalDirection {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "left_to_right" => Ok(Self::LeftToRight),
            "right_to_left" => Ok(Self::RightToLeft),
            "averaged" => Ok(Self::Averaged),
            other => Err(EchoError::Config(format!(
                "unknown direction {other:?} (expected left_to_right, right_to_left or averaged)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::LeftToRight => "left_to_right",
            Self::RightToLeft => "right_to_left",
            Self::Averaged => "averaged",
        }
    }
}

/// Hits@k and mean reciprocal rank.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub hits1: f64,
    pub hits10: f64,
    pub mrr: f64,
    pub direction: EvalDirection,
}

/// 1-based rank of the true column within row `i`; ties ahead of the true
/// column (equal score, lower index) count against it.
fn rank_in_row(s: &SimilarityMatrix, i: usize, true_col: usize) -> usize {
    let target = s.data[[i, true_col]];
    let mut rank = 1usize;
    for j in 0..s.data.ncols() {
        let v = s.data[[i, j]];
        if v > target || (v == target && j < true_col) {
            rank += 1;
        }
    }
    rank
}

fn rank_in_col(s: &SimilarityMatrix, j: usize, true_row: usize) -> usize {
    let target = s.data[[true_row, j]];
    let mut rank = 1usize;
    for i in 0..s.data.nrows() {
        let v = s.data[[i, j]];
        if v > target || (v == target && i < true_row) {
            rank += 1;
        }
    }
    rank
}

fn truth_positions(s: &SimilarityMatrix, truth: &SeedPairs) -> Result<Vec<(usize, usize)>> {
    if truth.is_empty() {
        return Err(EchoError::Argument("empty truth set".into()));
    }
    truth
        .pairs
        .iter()
        .map(|&(e1, e2)| {
            let i = s
                .row_of(e1)
                .ok_or_else(|| EchoError::Argument(format!("truth entity {e1} not in rows")))?;
            let j = s
                .col_of(e2)
                .ok_or_else(|| EchoError::Argument(format!("truth entity {e2} not in columns")))?;
            Ok((i, j))
        })
        .collect()
}

/// Fraction of truth pairs whose correct target ranks within the top k of
/// the query row (left-to-right).
pub fn hits_at_k(s: &SimilarityMatrix, truth: &SeedPairs, k: usize) -> Result<f64> {
    let pos = truth_positions(s, truth)?;
    let hits = pos.iter().filter(|&&(i, j)| rank_in_row(s, i, j) <= k).count();
    Ok(hits as f64 / pos.len() as f64)
}

/// Mean reciprocal rank of the correct target per query row.
pub fn mrr(s: &SimilarityMatrix, truth: &SeedPairs) -> Result<f64> {
    let pos = truth_positions(s, truth)?;
    let total: f64 = pos
        .iter()
        .map(|&(i, j)| 1.0 / rank_in_row(s, i, j) as f64)
        .sum();
    Ok(total / pos.len() as f64)
}

/// Hits@{1,10} and MRR in the requested direction.
pub fn eval_report(s: &SimilarityMatrix, truth: &SeedPairs, direction: EvalDirection) -> Result<EvalReport> {
    let pos = truth_positions(s, truth)?;
    let metrics = |ranks: &[usize]| {
        let n = ranks.len() as f64;
        (
            ranks.iter().filter(|&&r| r <= 1).count() as f64 / n,
            ranks.iter().filter(|&&r| r <= 10).count() as f64 / n,
            ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n,
        )
    };
    let l2r: Vec<usize> = pos.iter().map(|&(i, j)| rank_in_row(s, i, j)).collect();
    let r2l: Vec<usize> = pos.iter().map(|&(i, j)| rank_in_col(s, j, i)).collect();
    let (hits1, hits10, m) = match direction {
        EvalDirection::LeftToRight => metrics(&l2r),
        EvalDirection::RightToLeft => metrics(&r2l),
        EvalDirection::Averaged => {
            let a = metrics(&l2r);
            let b = metrics(&r2l);
            ((a.0 + b.0) / 2.0, (a.1 + b.1) / 2.0, (a.2 + b.2) / 2.0)
        }
    };
    Ok(EvalReport {
        hits1,
        hits10,
        mrr: m,
        direction,
    })
}

/// Hits@1 of a one-to-one matching against the truth pairs: a truth pair
/// counts iff the matching pairs it exactly.
pub fn matching_hits_at_1(matching: &PairSet, truth: &SeedPairs) -> Result<f64> {
    if truth.is_empty() {
        return Err(EchoError::Argument("empty truth set".into()));
    }
    let hits = truth.pairs.iter().filter(|p| matching.contains(p)).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Quality rates of one bootstrap round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapQuality {
    /// (|P_iter+| + |P_iter-|) / |P'|
    pub r_u: f64,
    /// share of iterative positives not in the truth; absent when no
    /// positives were generated
    pub r_p: Option<f64>,
    /// share of iterative negatives that are in fact true pairs; absent when
    /// no negatives were generated
    pub r_n: Option<f64>,
}

pub fn bootstrap_quality(
    p_iter_plus: &PairSet,
    p_iter_minus: &PairSet,
    truth: &PairSet,
) -> Result<BootstrapQuality> {
    if truth.is_empty() {
        return Err(EchoError::Argument(
            "bootstrap_quality needs a nonempty candidate ground truth".into(),
        ));
    }
    let r_u = (p_iter_plus.len() + p_iter_minus.len()) as f64 / truth.len() as f64;
    let r_p = (!p_iter_plus.is_empty()).then(|| {
        p_iter_plus.iter().filter(|p| !truth.contains(p)).count() as f64 / p_iter_plus.len() as f64
    });
    let r_n = (!p_iter_minus.is_empty()).then(|| {
        p_iter_minus.iter().filter(|p| truth.contains(p)).count() as f64 / p_iter_minus.len() as f64
    });
    Ok(BootstrapQuality { r_u, r_p, r_n })
}


#[cfg(test)]
mod prop_tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn hits_monotone_in_k_and_mrr_bounded(
            values in proptest::collection::vec(0.0f64..1.0, 16),
            k1 in 1usize..4,
        ) {
            let data = Array2::from_shape_vec((4, 4), values).unwrap();
            let s = SimilarityMatrix::from_raw(data);
            let truth = SeedPairs::new((0..4).map(|i| (i, (i + 1) % 4)).collect()).unwrap();
            let h1 = hits_at_k(&s, &truth, k1).unwrap();
            let h2 = hits_at_k(&s, &truth, k1 + 1).unwrap();
            prop_assert!(h2 >= h1);
            let m = mrr(&s, &truth).unwrap();
            let hits1 = hits_at_k(&s, &truth, 1).unwrap();
            prop_assert!(m >= hits1 - 1e-15);
            prop_assert!(m <= 1.0 + 1e-15);
        }
    }
}
