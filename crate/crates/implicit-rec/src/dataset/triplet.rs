//! Pairwise-ranking triplet sampling: (user, observed item, unobserved item).

use std::collections::HashSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::matrix::InteractionMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triplet {
    pub user: u32,
    pub pos_item: u32,
    pub neg_item: u32,
}

/// Draws `n` triplets: the user uniformly over users with interactions, the
/// positive uniformly from that user's row, the negative by rejection from
/// the non-interacted items. Deterministic for a given seed.
pub fn sample_triplets(train: &InteractionMatrix, n: usize, seed: u64) -> Result<Vec<Triplet>> {
    let eligible: Vec<u32> = (0..train.n_users())
        .filter(|&u| train.row_len(u) > 0)
        .map(|u| u as u32)
        .collect();
    if eligible.is_empty() {
        return Err(Error::NoInteractions);
    }
    for &u in &eligible {
        if train.row_len(u as usize) == train.n_items() {
            return Err(Error::UserHasAllItems { user: u });
        }
    }

    let mut row_sets: Vec<Option<HashSet<u32>>> = vec![None; train.n_users()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_items = train.n_items() as u32;
    let mut triplets = Vec::with_capacity(n);
    for _ in 0..n {
        let user = eligible[rng.gen_range(0..eligible.len())];
        let (items, _) = train.row(user as usize);
        let pos_item = items[rng.gen_range(0..items.len())];
        let set = row_sets[user as usize]
            .get_or_insert_with(|| items.iter().copied().collect());
        let neg_item = loop {
            let candidate = rng.gen_range(0..n_items);
            if !set.contains(&candidate) {
                break candidate;
            }
        };
        triplets.push(Triplet {
            user,
            pos_item,
            neg_item,
        });
    }
    Ok(triplets)
}
