use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Minimum record count accepted by the splitters.
pub const MIN_SPLIT: usize = 5;

/// Seeded shuffle of `0..n`, cut at `floor(0.8·n)`.
pub fn split_indices(n: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < MIN_SPLIT {
        return Err(Error::Data(format!("need at least {MIN_SPLIT} records to split, got {n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = n * 8 / 10;
    let val = idx.split_off(cut);
    Ok((idx, val))
}

/// 8:2 train/validation split of `records`.
pub fn split_dataset<T: Clone>(records: &[T], seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    let (tr, va) = split_indices(records.len(), seed)?;
    Ok((
        tr.iter().map(|&i| records[i].clone()).collect(),
        va.iter().map(|&i| records[i].clone()).collect(),
    ))
}
