//! Sparse user-item interaction matrix in CSR form with bidirectional id maps.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

/// One raw transaction row: how many times a user bought an item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionRecord {
    pub user_key: String,
    pub item_key: String,
    pub count: u32,
    pub timestamp: Option<i64>,
}

/// Sentinel for "this cell never saw a timestamp" when other cells did.
/// It loses every max-timestamp comparison, so file order decides.
pub const NO_TIMESTAMP: i64 = i64::MIN;

/// Immutable CSR matrix of purchase counts. Row entries keep the order in
/// which each (user, item) pair was first seen, which the leave-one-out split
/// uses as its timestamp tie-breaker.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionMatrix {
    n_users: usize,
    n_items: usize,
    row_ptr: Vec<usize>,
    item_idx: Vec<u32>,
    counts: Vec<f64>,
    timestamps: Option<Vec<i64>>,
    user_keys: Vec<String>,
    item_keys: Vec<String>,
    user_index: HashMap<String, u32>,
    item_index: HashMap<String, u32>,
}

impl InteractionMatrix {
    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn nnz(&self) -> usize {
        self.item_idx.len()
    }

    pub fn sparsity(&self) -> f64 {
        let cells = (self.n_users * self.n_items) as f64;
        if cells == 0.0 {
            0.0
        } else {
            1.0 - self.nnz() as f64 / cells
        }
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn item_indices(&self) -> &[u32] {
        &self.item_idx
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn timestamps(&self) -> Option<&[i64]> {
        self.timestamps.as_deref()
    }

    pub fn user_keys(&self) -> &[String] {
        &self.user_keys
    }

    pub fn item_keys(&self) -> &[String] {
        &self.item_keys
    }

    pub fn user_index(&self, key: &str) -> Option<u32> {
        self.user_index.get(key).copied()
    }

    pub fn item_index(&self, key: &str) -> Option<u32> {
        self.item_index.get(key).copied()
    }

    /// Item indices and counts of one user's row.
    pub fn row(&self, user: usize) -> (&[u32], &[f64]) {
        let lo = self.row_ptr[user];
        let hi = self.row_ptr[user + 1];
        (&self.item_idx[lo..hi], &self.counts[lo..hi])
    }

    pub fn row_len(&self, user: usize) -> usize {
        self.row_ptr[user + 1] - self.row_ptr[user]
    }

    pub fn row_timestamps(&self, user: usize) -> Option<&[i64]> {
        self.timestamps
            .as_ref()
            .map(|t| &t[self.row_ptr[user]..self.row_ptr[user + 1]])
    }

    pub fn row_contains(&self, user: usize, item: u32) -> bool {
        self.row(user).0.contains(&item)
    }

    pub fn count(&self, user: usize, item: u32) -> f64 {
        let (items, counts) = self.row(user);
        items
            .iter()
            .position(|&i| i == item)
            .map(|p| counts[p])
            .unwrap_or(0.0)
    }

    /// CSR of the transposed matrix (items as rows), entries ordered by user.
    pub fn transposed_csr(&self) -> (Vec<usize>, Vec<u32>, Vec<f64>) {
        let mut counts_per_item = vec![0usize; self.n_items];
        for &i in &self.item_idx {
            counts_per_item[i as usize] += 1;
        }
        let mut row_ptr = vec![0usize; self.n_items + 1];
        for i in 0..self.n_items {
            row_ptr[i + 1] = row_ptr[i] + counts_per_item[i];
        }
        let mut cursor = row_ptr.clone();
        let mut idx = vec![0u32; self.nnz()];
        let mut vals = vec![0.0; self.nnz()];
        for u in 0..self.n_users {
            let (items, counts) = self.row(u);
            for (&i, &c) in items.iter().zip(counts.iter()) {
                let slot = cursor[i as usize];
                idx[slot] = u as u32;
                vals[slot] = c;
                cursor[i as usize] += 1;
            }
        }
        (row_ptr, idx, vals)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        n_users: usize,
        n_items: usize,
        row_ptr: Vec<usize>,
        item_idx: Vec<u32>,
        counts: Vec<f64>,
        timestamps: Option<Vec<i64>>,
        user_keys: Vec<String>,
        item_keys: Vec<String>,
    ) -> Result<Self> {
        if row_ptr.len() != n_users + 1 || *row_ptr.last().unwrap_or(&0) != item_idx.len() {
            return Err(Error::CorruptSnapshot("row pointers inconsistent".into()));
        }
        if counts.len() != item_idx.len() {
            return Err(Error::CorruptSnapshot("counts length mismatch".into()));
        }
        if let Some(t) = &timestamps {
            if t.len() != item_idx.len() {
                return Err(Error::CorruptSnapshot("timestamps length mismatch".into()));
            }
        }
        if user_keys.len() != n_users || item_keys.len() != n_items {
            return Err(Error::CorruptSnapshot("id map length mismatch".into()));
        }
        if item_idx.iter().any(|&i| i as usize >= n_items) {
            return Err(Error::CorruptSnapshot("item index out of range".into()));
        }
        if counts.iter().any(|&c| !(c >= 1.0) || !c.is_finite()) {
            return Err(Error::CorruptSnapshot("count below 1".into()));
        }
        if row_ptr.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::CorruptSnapshot("row pointers not monotone".into()));
        }
        let user_index = user_keys
            .iter()
            .enumerate()
            .map(|(i, k)| (k.clone(), i as u32))
            .collect();
        let item_index = item_keys
            .iter()
            .enumerate()
            .map(|(i, k)| (k.clone(), i as u32))
            .collect();
        Ok(InteractionMatrix {
            n_users,
            n_items,
            row_ptr,
            item_idx,
            counts,
            timestamps,
            user_keys,
            item_keys,
            user_index,
            item_index,
        })
    }
}

/// Aggregates records into a matrix. Dense indices are assigned in first-seen
/// order; duplicate (user, item) pairs sum their counts and keep the latest
/// timestamp.
pub fn build_matrix(records: &[InteractionRecord]) -> Result<InteractionMatrix> {
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    let mut user_index: HashMap<String, u32> = HashMap::new();
    let mut item_index: HashMap<String, u32> = HashMap::new();
    let mut user_keys: Vec<String> = Vec::new();
    let mut item_keys: Vec<String> = Vec::new();
    // Per user: (item, count, timestamp) in first-seen order.
    let mut rows: Vec<Vec<(u32, f64, i64)>> = Vec::new();
    let mut any_timestamp = false;

    for rec in records {
        let u = *user_index.entry(rec.user_key.clone()).or_insert_with(|| {
            user_keys.push(rec.user_key.clone());
            rows.push(Vec::new());
            (user_keys.len() - 1) as u32
        });
        let i = *item_index.entry(rec.item_key.clone()).or_insert_with(|| {
            item_keys.push(rec.item_key.clone());
            (item_keys.len() - 1) as u32
        });
        let ts = rec.timestamp.unwrap_or(NO_TIMESTAMP);
        if rec.timestamp.is_some() {
            any_timestamp = true;
        }
        let row = &mut rows[u as usize];
        match row.iter_mut().find(|(item, _, _)| *item == i) {
            Some(cell) => {
                cell.1 += rec.count as f64;
                cell.2 = cell.2.max(ts);
            }
            None => row.push((i, rec.count as f64, ts)),
        }
    }

    let n_users = user_keys.len();
    let n_items = item_keys.len();
    let mut row_ptr = Vec::with_capacity(n_users + 1);
    row_ptr.push(0usize);
    let mut item_idx = Vec::new();
    let mut counts = Vec::new();
    let mut timestamps = Vec::new();
    for row in &rows {
        for &(i, c, t) in row {
            item_idx.push(i);
            counts.push(c);
            timestamps.push(t);
        }
        row_ptr.push(item_idx.len());
    }

    Ok(InteractionMatrix {
        n_users,
        n_items,
        row_ptr,
        item_idx,
        counts,
        timestamps: any_timestamp.then_some(timestamps),
        user_keys,
        item_keys,
        user_index,
        item_index,
    })
}

/// Writes the matrix back out as a transaction CSV (`user,item,count` plus a
/// `timestamp` column when present). Counts are written as integers.
pub fn write_csv(matrix: &InteractionMatrix, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let with_time = matrix.timestamps().is_some();
    if with_time {
        writer.write_record(["user", "item", "count", "timestamp"])?;
    } else {
        writer.write_record(["user", "item", "count"])?;
    }
    for u in 0..matrix.n_users() {
        let (items, counts) = matrix.row(u);
        let times = matrix.row_timestamps(u);
        for (pos, (&i, &c)) in items.iter().zip(counts.iter()).enumerate() {
            let user = &matrix.user_keys()[u];
            let item = &matrix.item_keys()[i as usize];
            let count = format!("{}", c as u64);
            if with_time {
                let ts = times.map(|t| t[pos]).unwrap_or(NO_TIMESTAMP);
                let ts_field = if ts == NO_TIMESTAMP {
                    String::new()
                } else {
                    format!("{ts}")
                };
                writer.write_record([user.as_str(), item.as_str(), &count, &ts_field])?;
            } else {
                writer.write_record([user.as_str(), item.as_str(), &count])?;
            }
        }
    }
    writer.flush().map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}
