//! Leave-one-out train/test split with sampled negatives.

use std::collections::HashSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::matrix::{InteractionMatrix, NO_TIMESTAMP};
use crate::error::{Error, Result};

/// Per user with at least two interactions, the latest interaction is held
/// out and ranked against `n_neg` sampled non-interacted items. Users with a
/// single interaction stay wholly in train.
#[derive(Debug, Clone)]
pub struct LeaveOneOutSplit {
    pub train: InteractionMatrix,
    /// (user index, held-out item index), one entry per tested user.
    pub test_positives: Vec<(u32, u32)>,
    /// Sampled negatives, parallel to `test_positives`.
    pub test_negatives: Vec<Vec<u32>>,
    pub excluded_users: Vec<u32>,
}

pub fn leave_one_out_split(
    matrix: &InteractionMatrix,
    n_neg: usize,
    seed: u64,
) -> Result<LeaveOneOutSplit> {
    if n_neg < 1 {
        return Err(Error::InvalidConfig("n_neg must be at least 1".to_string()));
    }
    let n_items = matrix.n_items();
    let mut test_positives = Vec::new();
    let mut test_negatives = Vec::new();
    let mut excluded_users = Vec::new();

    // Train CSR assembled as held-out cells are dropped.
    let mut row_ptr = vec![0usize];
    let mut item_idx = Vec::new();
    let mut counts = Vec::new();
    let mut timestamps = matrix.timestamps().map(|_| Vec::new());

    for u in 0..matrix.n_users() {
        let (items, row_counts) = matrix.row(u);
        let row_times = matrix.row_timestamps(u);
        let held = if items.len() < 2 {
            excluded_users.push(u as u32);
            None
        } else {
            let pool = n_items - items.len();
            if pool < n_neg {
                return Err(Error::NegativePoolTooSmall {
                    user: u as u32,
                    needed: n_neg,
                    available: pool,
                });
            }
            // Latest timestamp wins; ties and missing timestamps fall back to
            // the position of first appearance, later position winning.
            let mut best = 0usize;
            let mut best_ts = row_times.map(|t| t[0]).unwrap_or(NO_TIMESTAMP);
            for pos in 1..items.len() {
                let ts = row_times.map(|t| t[pos]).unwrap_or(NO_TIMESTAMP);
                if ts >= best_ts {
                    best = pos;
                    best_ts = ts;
                }
            }
            let positive = items[best];
            test_positives.push((u as u32, positive));

            let interacted: HashSet<u32> = items.iter().copied().collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(u as u64);
            test_negatives.push(sample_distinct_negatives(
                &mut rng,
                n_items,
                &interacted,
                n_neg,
            ));
            Some(best)
        };

        for (pos, (&i, &c)) in items.iter().zip(row_counts.iter()).enumerate() {
            if Some(pos) == held {
                continue;
            }
            item_idx.push(i);
            counts.push(c);
            if let (Some(out), Some(times)) = (timestamps.as_mut(), row_times) {
                out.push(times[pos]);
            }
        }
        row_ptr.push(item_idx.len());
    }

    let train = InteractionMatrix::from_parts(
        matrix.n_users(),
        n_items,
        row_ptr,
        item_idx,
        counts,
        timestamps,
        matrix.user_keys().to_vec(),
        matrix.item_keys().to_vec(),
    )?;
    Ok(LeaveOneOutSplit {
        train,
        test_positives,
        test_negatives,
        excluded_users,
    })
}

/// Uniform sample of `k` distinct items outside `excluded`. Rejection
/// sampling when the pool is comfortably larger than `k`, otherwise an
/// explicit shuffle of the complement.
fn sample_distinct_negatives(
    rng: &mut ChaCha8Rng,
    n_items: usize,
    excluded: &HashSet<u32>,
    k: usize,
) -> Vec<u32> {
    let pool = n_items - excluded.len();
    if k * 2 <= pool {
        let mut chosen = Vec::with_capacity(k);
        let mut seen: HashSet<u32> = HashSet::with_capacity(k);
        while chosen.len() < k {
            let candidate = rng.gen_range(0..n_items as u32);
            if !excluded.contains(&candidate) && seen.insert(candidate) {
                chosen.push(candidate);
            }
        }
        chosen
    } else {
        let mut complement: Vec<u32> = (0..n_items as u32)
            .filter(|i| !excluded.contains(i))
            .collect();
        // Partial Fisher-Yates for the first k slots.
        for slot in 0..k {
            let pick = rng.gen_range(slot..complement.len());
            complement.swap(slot, pick);
        }
        complement.truncate(k);
        complement
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::matrix::{build_matrix, InteractionRecord};

    fn rec(u: &str, i: &str, ts: Option<i64>) -> InteractionRecord {
        InteractionRecord {
            user_key: u.into(),
            item_key: i.into(),
            count: 1,
            timestamp: ts,
        }
    }

    #[test]
    fn latest_timestamp_is_held_out() {
        let m = build_matrix(&[
            rec("u", "p1", Some(5)),
            rec("u", "p2", Some(9)),
            rec("v", "p1", Some(1)),
            rec("v", "p3", Some(2)),
        ])
        .unwrap();
        let split = leave_one_out_split(&m, 1, 7).unwrap();
        let p2 = m.item_index("p2").unwrap();
        assert_eq!(split.test_positives[0], (0, p2));
        // p1 remains in train for user u
        assert!(split.train.row_contains(0, m.item_index("p1").unwrap()));
        assert!(!split.train.row_contains(0, p2));
    }

    #[test]
    fn single_interaction_users_are_excluded() {
        let m = build_matrix(&[
            rec("lonely", "p1", None),
            rec("active", "p1", None),
            rec("active", "p2", None),
            rec("pad", "p3", None),
        ])
        .unwrap();
        let split = leave_one_out_split(&m, 1, 7).unwrap();
        assert_eq!(split.excluded_users, vec![0, 2]);
        assert_eq!(split.test_positives.len(), 1);
        assert_eq!(split.test_positives[0].0, 1);
        // The lonely user's row is intact in train.
        assert_eq!(split.train.row_len(0), 1);
    }

    #[test]
    fn no_timestamps_hold_out_last_in_file_order() {
        let m = build_matrix(&[
            rec("u", "a", None),
            rec("u", "b", None),
            rec("pad", "c", None),
            rec("pad", "d", None),
        ])
        .unwrap();
        let split = leave_one_out_split(&m, 1, 3).unwrap();
        assert_eq!(split.test_positives[0], (0, m.item_index("b").unwrap()));
    }

    #[test]
    fn tie_timestamps_prefer_later_position() {
        let m = build_matrix(&[
            rec("u", "a", Some(7)),
            rec("u", "b", Some(7)),
            rec("u", "c", Some(3)),
            rec("pad", "d", Some(1)),
            rec("pad", "e", Some(2)),
        ])
        .unwrap();
        let split = leave_one_out_split(&m, 1, 3).unwrap();
        assert_eq!(split.test_positives[0], (0, m.item_index("b").unwrap()));
    }

    #[test]
    fn negatives_are_distinct_and_non_interacted() {
        // One user with 30 interactions over 500 items, 100 negatives.
        let mut records = Vec::new();
        for i in 0..30 {
            records.push(rec("u", &format!("p{i}"), None));
        }
        // Pad the item universe to 500 with single-interaction users, which
        // are excluded from testing.
        for i in 30..500 {
            records.push(rec(&format!("pad{i}"), &format!("p{i}"), None));
        }
        let m = build_matrix(&records).unwrap();
        let split = leave_one_out_split(&m, 100, 11).unwrap();
        let (user, _) = split.test_positives[0];
        assert_eq!(user, 0);
        let negatives = &split.test_negatives[0];
        assert_eq!(negatives.len(), 100);
        let distinct: HashSet<u32> = negatives.iter().copied().collect();
        assert_eq!(distinct.len(), 100);
        let (items, _) = m.row(0);
        let interacted: HashSet<u32> = items.iter().copied().collect();
        assert!(negatives.iter().all(|n| !interacted.contains(n)));
    }

    #[test]
    fn pool_too_small_errors() {
        let m = build_matrix(&[rec("u", "a", None), rec("u", "b", None), rec("u", "c", None)])
            .unwrap();
        // 3 items total, user u interacted with all but... holds 2 in train;
        // pool = 3 - 3 = 0 < 1 negative.
        let err = leave_one_out_split(&m, 1, 0).unwrap_err();
        assert!(matches!(err, Error::NegativePoolTooSmall { .. }));
    }

    #[test]
    fn deterministic_given_seed() {
        let mut records = Vec::new();
        for u in 0..10 {
            for i in 0..5 {
                records.push(rec(&format!("u{u}"), &format!("p{}", (u + i) % 20), None));
            }
        }
        let m = build_matrix(&records).unwrap();
        let a = leave_one_out_split(&m, 5, 99).unwrap();
        let b = leave_one_out_split(&m, 5, 99).unwrap();
        assert_eq!(a.test_positives, b.test_positives);
        assert_eq!(a.test_negatives, b.test_negatives);
        let c = leave_one_out_split(&m, 5, 100).unwrap();
        assert_ne!(a.test_negatives, c.test_negatives);
    }

    #[test]
    fn train_plus_positives_reconstruct_original() {
        let mut records = Vec::new();
        for u in 0..8 {
            for i in 0..=(u % 4) + 1 {
                records.push(rec(&format!("u{u}"), &format!("p{}", (3 * u + i) % 15), Some(i as i64)));
            }
        }
        let m = build_matrix(&records).unwrap();
        let split = leave_one_out_split(&m, 2, 5).unwrap();
        for u in 0..m.n_users() {
            let mut original: Vec<u32> = m.row(u).0.to_vec();
            let mut rebuilt: Vec<u32> = split.train.row(u).0.to_vec();
            if let Some(&(_, item)) = split.test_positives.iter().find(|(tu, _)| *tu == u as u32) {
                rebuilt.push(item);
            }
            original.sort_unstable();
            rebuilt.sort_unstable();
            assert_eq!(original, rebuilt, "user {u}");
        }
    }
}
