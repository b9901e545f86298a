//! Little-endian binary helpers and the interaction-matrix snapshot format.
//!
//! A snapshot directory holds `meta.json` (dimensions, row pointers, id maps)
//! and `rows.bin` (all item indices as u32, then all counts as f64, in CSR
//! order). When the matrix carries timestamps an additional `times.bin`
//! stores one i64 per stored count, same order.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::InteractionMatrix;
use crate::error::{Error, Result};

pub fn write_f64s(out: &mut impl Write, values: &[f64]) -> std::io::Result<()> {
    for v in values {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_u32s(out: &mut impl Write, values: &[u32]) -> std::io::Result<()> {
    for v in values {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_i64s(out: &mut impl Write, values: &[i64]) -> std::io::Result<()> {
    for v in values {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_f64s(input: &mut impl Read, n: usize) -> std::io::Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    input.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn read_u32s(input: &mut impl Read, n: usize) -> std::io::Result<Vec<u32>> {
    let mut buf = vec![0u8; n * 4];
    input.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn read_i64s(input: &mut impl Read, n: usize) -> std::io::Result<Vec<i64>> {
    let mut buf = vec![0u8; n * 8];
    input.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| i64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn write_f64_file(path: &Path, values: &[f64]) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    write_f64s(&mut file, values).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_f64_file(path: &Path, n: usize) -> Result<Vec<f64>> {
    let mut file = fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    read_f64s(&mut file, n).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_json_file<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Debug, Serialize, Deserialize)]
struct SnapshotMeta {
    n_users: usize,
    n_items: usize,
    nnz: usize,
    row_ptr: Vec<usize>,
    user_keys: Vec<String>,
    item_keys: Vec<String>,
    has_timestamps: bool,
}

pub fn save_matrix_snapshot(dir: &Path, matrix: &InteractionMatrix) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let meta = SnapshotMeta {
        n_users: matrix.n_users(),
        n_items: matrix.n_items(),
        nnz: matrix.nnz(),
        row_ptr: matrix.row_ptr().to_vec(),
        user_keys: matrix.user_keys().to_vec(),
        item_keys: matrix.item_keys().to_vec(),
        has_timestamps: matrix.timestamps().is_some(),
    };
    write_json_file(&dir.join("meta.json"), &meta)?;

    let rows_path = dir.join("rows.bin");
    let mut rows =
        fs::File::create(&rows_path).map_err(|e| Error::io(rows_path.display().to_string(), e))?;
    write_u32s(&mut rows, matrix.item_indices())
        .and_then(|_| write_f64s(&mut rows, matrix.counts()))
        .map_err(|e| Error::io(rows_path.display().to_string(), e))?;

    if let Some(times) = matrix.timestamps() {
        let times_path = dir.join("times.bin");
        let mut file = fs::File::create(&times_path)
            .map_err(|e| Error::io(times_path.display().to_string(), e))?;
        write_i64s(&mut file, times).map_err(|e| Error::io(times_path.display().to_string(), e))?;
    }
    Ok(())
}

pub fn load_matrix_snapshot(dir: &Path) -> Result<InteractionMatrix> {
    let meta: SnapshotMeta = read_json_file(&dir.join("meta.json"))?;
    let rows_path = dir.join("rows.bin");
    let mut rows =
        fs::File::open(&rows_path).map_err(|e| Error::io(rows_path.display().to_string(), e))?;
    let item_indices = read_u32s(&mut rows, meta.nnz)
        .map_err(|e| Error::io(rows_path.display().to_string(), e))?;
    let counts = read_f64s(&mut rows, meta.nnz)
        .map_err(|e| Error::io(rows_path.display().to_string(), e))?;
    let timestamps = if meta.has_timestamps {
        let times_path = dir.join("times.bin");
        let mut file = fs::File::open(&times_path)
            .map_err(|e| Error::io(times_path.display().to_string(), e))?;
        Some(
            read_i64s(&mut file, meta.nnz)
                .map_err(|e| Error::io(times_path.display().to_string(), e))?,
        )
    } else {
        None
    };
    InteractionMatrix::from_parts(
        meta.n_users,
        meta.n_items,
        meta.row_ptr,
        item_indices,
        counts,
        timestamps,
        meta.user_keys,
        meta.item_keys,
    )
}
