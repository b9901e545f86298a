//! Leave-one-out ranking evaluation: score each tested user's held-out item
//! against its sampled negatives, rank, and report NDCG@K (single relevant
//! item, so IDCG = 1) and the One-Product Hit Ratio.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acf::{AcfModel, AcfMode};
use crate::als::FactorModel;
use crate::dataset::{InteractionMatrix, LeaveOneOutSplit};
use crate::error::{Error, Result};
use crate::ncf::NeuMfModel;

/// Scores a batch of candidate items for one user. Implementations must be
/// read-only: evaluation fans out across users in parallel.
pub trait ItemScorer: Sync {
    fn score_items(&self, user: usize, items: &[u32]) -> Result<Vec<f64>>;
}

impl ItemScorer for FactorModel {
    fn score_items(&self, user: usize, items: &[u32]) -> Result<Vec<f64>> {
        items
            .iter()
            .map(|&i| self.score(user, i as usize))
            .collect()
    }
}

impl ItemScorer for NeuMfModel {
    fn score_items(&self, user: usize, items: &[u32]) -> Result<Vec<f64>> {
        let users = vec![user; items.len()];
        let items: Vec<usize> = items.iter().map(|&i| i as usize).collect();
        self.logits(&users, &items)
    }
}

/// Autoencoder scoring needs the user's training row to reconstruct from.
pub struct AcfScorer<'a> {
    pub model: &'a AcfModel,
    pub train: &'a InteractionMatrix,
}

impl ItemScorer for AcfScorer<'_> {
    fn score_items(&self, user: usize, items: &[u32]) -> Result<Vec<f64>> {
        if self.train.n_items() != self.model.n_items() {
            return Err(Error::ShapeMismatch {
                context: "acf scorer item universe",
                got: format!("{}", self.train.n_items()),
                expected: format!("{}", self.model.n_items()),
            });
        }
        let x = crate::acf::user_vectors(self.train, &[user]);
        let recon = crate::acf::forward_user(self.model, x.row(0), &AcfMode::Inference)?;
        items
            .iter()
            .map(|&i| {
                recon.get(i as usize).copied().ok_or(Error::IndexOutOfRange {
                    what: "item",
                    index: i as usize,
                    bound: recon.len(),
                })
            })
            .collect()
    }
}

impl<F> ItemScorer for F
where
    F: Fn(usize, &[u32]) -> Vec<f64> + Sync,
{
    fn score_items(&self, user: usize, items: &[u32]) -> Result<Vec<f64>> {
        Ok(self(user, items))
    }
}

/// One user's candidates ordered by descending score, ties broken by
/// ascending item index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedList {
    pub user_index: u32,
    pub ranked_items: Vec<u32>,
    /// 1-based rank of the held-out positive.
    pub position_of_positive: usize,
}

/// Ranks `candidates` (the positive plus the negatives) by the given scores.
pub fn rank_candidates(
    user: u32,
    positive: u32,
    candidates: &[u32],
    scores: &[f64],
) -> Result<RankedList> {
    debug_assert_eq!(candidates.len(), scores.len());
    for (&item, &score) in candidates.iter().zip(scores.iter()) {
        if !score.is_finite() {
            return Err(Error::NonFiniteScore { user, item });
        }
    }
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("scores checked finite")
            .then(candidates[a].cmp(&candidates[b]))
    });
    let ranked_items: Vec<u32> = order.iter().map(|&ix| candidates[ix]).collect();
    let position_of_positive = ranked_items
        .iter()
        .position(|&i| i == positive)
        .expect("positive is part of the candidate set")
        + 1;
    Ok(RankedList {
        user_index: user,
        ranked_items,
        position_of_positive,
    })
}

/// With one relevant item: 1 / log2(rank + 1) inside the cutoff, else 0.
pub fn ndcg_at_k(rank_of_positive: usize, k: usize) -> f64 {
    debug_assert!(rank_of_positive >= 1 && k >= 1);
    if rank_of_positive <= k {
        1.0 / ((rank_of_positive + 1) as f64).log2()
    } else {
        0.0
    }
}

/// 1 when the positive made the top-k list.
pub fn one_product_hit(rank_of_positive: usize, k: usize) -> u32 {
    debug_assert!(rank_of_positive >= 1 && k >= 1);
    (rank_of_positive <= k) as u32
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerUserResult {
    pub user: u32,
    pub rank: usize,
    pub ndcg: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub k: usize,
    pub ndcg_mean: f64,
    /// Population standard deviation of the per-user NDCG values.
    pub ndcg_std: f64,
    pub one_product_hit_ratio: f64,
    pub n_users: usize,
    pub per_user: Vec<PerUserResult>,
}

/// Scores every tested user's candidate set in parallel and aggregates in
/// user order.
pub fn evaluate<S: ItemScorer>(scorer: &S, split: &LeaveOneOutSplit, k: usize) -> Result<EvalReport> {
    if split.test_positives.is_empty() {
        return Err(Error::NoTestedUsers);
    }
    let per_user: Result<Vec<PerUserResult>> = split
        .test_positives
        .par_iter()
        .zip(split.test_negatives.par_iter())
        .map(|(&(user, positive), negatives)| {
            let mut candidates = Vec::with_capacity(1 + negatives.len());
            candidates.push(positive);
            candidates.extend_from_slice(negatives);
            let scores = scorer.score_items(user as usize, &candidates)?;
            let ranked = rank_candidates(user, positive, &candidates, &scores)?;
            Ok(PerUserResult {
                user,
                rank: ranked.position_of_positive,
                ndcg: ndcg_at_k(ranked.position_of_positive, k),
            })
        })
        .collect();
    let per_user = per_user?;

    let n = per_user.len() as f64;
    let ndcg_mean = per_user.iter().map(|r| r.ndcg).sum::<f64>() / n;
    let variance = per_user
        .iter()
        .map(|r| (r.ndcg - ndcg_mean) * (r.ndcg - ndcg_mean))
        .sum::<f64>()
        / n;
    let hits: u32 = per_user.iter().map(|r| one_product_hit(r.rank, k)).sum();
    Ok(EvalReport {
        k,
        ndcg_mean,
        ndcg_std: variance.max(0.0).sqrt(),
        one_product_hit_ratio: hits as f64 / n,
        n_users: per_user.len(),
        per_user,
    })
}

/// Top-k items for one user over the full catalog, seen items excluded when
/// requested. Returns (item, score) pairs in rank order.
pub fn recommend_top_k<S: ItemScorer>(
    scorer: &S,
    train: &InteractionMatrix,
    user: usize,
    k: usize,
    exclude_seen: bool,
) -> Result<Vec<(u32, f64)>> {
    if user >= train.n_users() {
        return Err(Error::IndexOutOfRange {
            what: "user",
            index: user,
            bound: train.n_users(),
        });
    }
    let candidates: Vec<u32> = if exclude_seen {
        let (seen, _) = train.row(user);
        (0..train.n_items() as u32)
            .filter(|i| !seen.contains(i))
            .collect()
    } else {
        (0..train.n_items() as u32).collect()
    };
    if k > candidates.len() {
        return Err(Error::NotEnoughCandidates {
            requested: k,
            available: candidates.len(),
        });
    }
    let scores = scorer.score_items(user, &candidates)?;
    for (&item, &score) in candidates.iter().zip(scores.iter()) {
        if !score.is_finite() {
            return Err(Error::NonFiniteScore {
                user: user as u32,
                item,
            });
        }
    }
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("checked finite")
            .then(candidates[a].cmp(&candidates[b]))
    });
    Ok(order
        .into_iter()
        .take(k)
        .map(|ix| (candidates[ix], scores[ix]))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{build_matrix, leave_one_out_split, InteractionRecord};
    use proptest::prelude::*;

    fn rec(u: u32, i: u32) -> InteractionRecord {
        InteractionRecord {
            user_key: format!("u{u}"),
            item_key: format!("i{i}"),
            count: 1,
            timestamp: Some((u * 100 + i) as i64),
        }
    }

    fn split_fixture() -> LeaveOneOutSplit {
        let mut records = Vec::new();
        for u in 0..6u32 {
            for j in 0..4u32 {
                records.push(rec(u, (u + 3 * j) % 20));
            }
        }
        let m = build_matrix(&records).unwrap();
        leave_one_out_split(&m, 5, 77).unwrap()
    }

    #[test]
    fn ndcg_closed_form() {
        assert_eq!(ndcg_at_k(1, 12), 1.0);
        assert_eq!(ndcg_at_k(3, 12), 0.5);
        assert_eq!(ndcg_at_k(13, 12), 0.0);
        assert_eq!(ndcg_at_k(12, 12), 1.0 / 13f64.log2());
    }

    #[test]
    fn ndcg_matches_brute_force_dcg() {
        // Relevance list with a single 1 at the positive's position; IDCG = 1.
        for k in [1usize, 5, 12] {
            for rank in 1..=30usize {
                let mut dcg = 0.0;
                for pos in 1..=k.min(30) {
                    let rel = if pos == rank { 1.0 } else { 0.0 };
                    dcg += rel / ((pos + 1) as f64).log2();
                }
                assert_eq!(ndcg_at_k(rank, k), dcg, "rank {rank} k {k}");
            }
        }
    }

    #[test]
    fn hit_is_boundary_inclusive() {
        assert_eq!(one_product_hit(12, 12), 1);
        assert_eq!(one_product_hit(13, 12), 0);
        assert_eq!(one_product_hit(1, 1), 1);
    }

    #[test]
    fn ndcg_monotone_in_rank() {
        for k in [1usize, 5, 12] {
            for rank in 1..40usize {
                assert!(ndcg_at_k(rank, k) >= ndcg_at_k(rank + 1, k));
            }
        }
    }

    #[test]
    fn oracle_scorer_is_perfect() {
        let split = split_fixture();
        let positives: std::collections::HashMap<u32, u32> =
            split.test_positives.iter().copied().collect();
        let oracle = move |user: usize, items: &[u32]| -> Vec<f64> {
            items
                .iter()
                .map(|&i| {
                    if positives.get(&(user as u32)) == Some(&i) {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect()
        };
        let report = evaluate(&oracle, &split, 12).unwrap();
        assert_eq!(report.ndcg_mean, 1.0);
        assert_eq!(report.one_product_hit_ratio, 1.0);
        assert_eq!(report.ndcg_std, 0.0);
    }

    #[test]
    fn antioracle_scores_zero() {
        let split = split_fixture();
        let positives: std::collections::HashMap<u32, u32> =
            split.test_positives.iter().copied().collect();
        let antioracle = move |user: usize, items: &[u32]| -> Vec<f64> {
            items
                .iter()
                .map(|&i| {
                    if positives.get(&(user as u32)) == Some(&i) {
                        -1.0
                    } else {
                        1.0
                    }
                })
                .collect()
        };
        // 5 negatives, k = 3 < candidate count, positive ranked last.
        let report = evaluate(&antioracle, &split, 3).unwrap();
        assert_eq!(report.ndcg_mean, 0.0);
        assert_eq!(report.one_product_hit_ratio, 0.0);
    }

    #[test]
    fn hit_ratio_is_mean_of_hits() {
        let split = split_fixture();
        let scorer = |user: usize, items: &[u32]| -> Vec<f64> {
            items
                .iter()
                .map(|&i| ((user as u32 ^ i) % 7) as f64)
                .collect()
        };
        let k = 2;
        let report = evaluate(&scorer, &split, k).unwrap();
        let mean: f64 = report
            .per_user
            .iter()
            .map(|r| one_product_hit(r.rank, k) as f64)
            .sum::<f64>()
            / report.per_user.len() as f64;
        assert_eq!(report.one_product_hit_ratio, mean);
    }

    #[test]
    fn non_finite_score_is_reported() {
        let split = split_fixture();
        let scorer = |_: usize, items: &[u32]| -> Vec<f64> {
            items
                .iter()
                .map(|&i| if i == 0 { f64::NAN } else { 1.0 })
                .collect()
        };
        // Item 0 appears somewhere in the fixture's candidate sets.
        let err = evaluate(&scorer, &split, 12);
        assert!(matches!(err, Err(Error::NonFiniteScore { .. })));
    }

    #[test]
    fn empty_split_errors() {
        let m = build_matrix(&[rec(0, 0), rec(1, 1)]).unwrap();
        let split = leave_one_out_split(&m, 1, 1).unwrap();
        assert!(split.test_positives.is_empty());
        let scorer = |_: usize, items: &[u32]| vec![0.0; items.len()];
        assert!(matches!(
            evaluate(&scorer, &split, 12),
            Err(Error::NoTestedUsers)
        ));
    }

    #[test]
    fn recommend_full_catalog_is_argsort() {
        let m = build_matrix(&[rec(0, 0), rec(0, 1), rec(1, 2)]).unwrap();
        let scorer = |_: usize, items: &[u32]| -> Vec<f64> {
            items.iter().map(|&i| -(i as f64)).collect()
        };
        let top = recommend_top_k(&scorer, &m, 0, m.n_items(), false).unwrap();
        let items: Vec<u32> = top.iter().map(|&(i, _)| i).collect();
        assert_eq!(items, vec![0, 1, 2]);
    }

    #[test]
    fn recommend_excludes_seen_and_errors_when_short() {
        // User 0 bought all but 3 items of a 10-item catalog.
        let mut records = Vec::new();
        for i in 0..7u32 {
            records.push(rec(0, i));
        }
        for i in 0..10u32 {
            records.push(rec(1, i));
        }
        let m = build_matrix(&records).unwrap();
        let scorer = |_: usize, items: &[u32]| -> Vec<f64> {
            items.iter().map(|&i| i as f64).collect()
        };
        let top = recommend_top_k(&scorer, &m, 0, 3, true).unwrap();
        let items: Vec<u32> = top.iter().map(|&(i, _)| i).collect();
        assert_eq!(items, vec![9, 8, 7]);
        assert!(matches!(
            recommend_top_k(&scorer, &m, 0, 4, true),
            Err(Error::NotEnoughCandidates { .. })
        ));
    }

    #[test]
    fn recommend_matches_brute_force_sort() {
        let m = build_matrix(&[rec(0, 0), rec(0, 5), rec(1, 3)]).unwrap();
        let scorer = |user: usize, items: &[u32]| -> Vec<f64> {
            items
                .iter()
                .map(|&i| (((user + 3) as u32 * 37 + i * 17) % 11) as f64)
                .collect()
        };
        let n = m.n_items();
        let top = recommend_top_k(&scorer, &m, 1, n, false).unwrap();
        let all: Vec<u32> = (0..n as u32).collect();
        let scores = scorer(1, &all);
        let mut expected: Vec<u32> = all.clone();
        expected.sort_by(|&a, &b| {
            scores[b as usize]
                .partial_cmp(&scores[a as usize])
                .unwrap()
                .then(a.cmp(&b))
        });
        let got: Vec<u32> = top.iter().map(|&(i, _)| i).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn tie_break_is_deterministic() {
        let candidates = vec![9u32, 4, 7, 1];
        let scores = vec![1.0, 1.0, 2.0, 1.0];
        let a = rank_candidates(0, 9, &candidates, &scores).unwrap();
        let b = rank_candidates(0, 9, &candidates, &scores).unwrap();
        assert_eq!(a, b);
        // 7 wins on score; the tied rest order by ascending item index.
        assert_eq!(a.ranked_items, vec![7, 1, 4, 9]);
        assert_eq!(a.position_of_positive, 4);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// Ranks depend only on score order: any strictly increasing
        /// transform of the scores leaves the ranked list untouched.
        #[test]
        fn ranking_invariant_under_monotone_transform(
            scores in proptest::collection::vec(-100.0f64..100.0, 6),
        ) {
            let candidates: Vec<u32> = (0..6).collect();
            let base = rank_candidates(0, 2, &candidates, &scores).unwrap();
            let transformed: Vec<f64> = scores.iter().map(|s| 3.0 * s + 1.0).collect();
            let shifted = rank_candidates(0, 2, &candidates, &transformed).unwrap();
            prop_assert_eq!(&base, &shifted);
            let exp: Vec<f64> = scores.iter().map(|s| (s / 50.0).exp()).collect();
            let warped = rank_candidates(0, 2, &candidates, &exp).unwrap();
            prop_assert_eq!(&base, &warped);
        }
    }
}
