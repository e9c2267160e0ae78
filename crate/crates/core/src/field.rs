//! Dense linear algebra over prime fields `F_p` with `2^30 <= p < 2^31`.
//!
//! Entries are stored as `u32` residues in row-major order. Products fit in a
//! `u64` before reduction, so no Montgomery or Barrett machinery is needed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Refuse matrices with more entries than this unless the caller overrides it.
pub const DEFAULT_MAX_ENTRIES: u64 = 1 << 30;

const PRIME_LO: u64 = 1 << 30;
const PRIME_HI: u64 = 1 << 31;

/// Rows below the pivot are eliminated in parallel once the remaining block
/// holds at least this many entries.
const PAR_THRESHOLD: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u64", into = "u64")]
pub struct PrimeModulus(u32);

impl PrimeModulus {
    pub fn new(p: u64) -> Result<Self> {
        if !(PRIME_LO..PRIME_HI).contains(&p) || !is_prime(p) {
            return Err(Error::Hypothesis(format!(
                "{p} is not a prime in [2^30, 2^31)"
            )));
        }
        Ok(Self(p as u32))
    }

    pub fn get(self) -> u32 {
        self.0
    }

    #[inline]
    pub fn mul(self, a: u32, b: u32) -> u32 {
        ((a as u64 * b as u64) % self.0 as u64) as u32
    }

    #[inline]
    pub fn add(self, a: u32, b: u32) -> u32 {
        let s = a as u64 + b as u64;
        let p = self.0 as u64;
        (if s >= p { s - p } else { s }) as u32
    }

    pub fn neg(self, a: u32) -> u32 {
        if a == 0 {
            0
        } else {
            self.0 - a
        }
    }

    pub fn pow(self, mut base: u32, mut exp: u64) -> u32 {
        let mut acc = 1u32;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse of a nonzero residue (Fermat).
    pub fn inv(self, a: u32) -> u32 {
        debug_assert!(a != 0);
        self.pow(a, self.0 as u64 - 2)
    }

    /// Reduces a signed integer into `[0, p)`.
    pub fn reduce_i64(self, v: i64) -> u32 {
        v.rem_euclid(self.0 as i64) as u32
    }
}

impl TryFrom<u64> for PrimeModulus {
    type Error = Error;
    fn try_from(p: u64) -> Result<Self> {
        Self::new(p)
    }
}

impl From<PrimeModulus> for u64 {
    fn from(p: PrimeModulus) -> Self {
        p.0 as u64
    }
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin, exact for every `n < 3_215_031_751`.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for q in [2u64, 3, 5, 7] {
        if n.is_multiple_of(q) {
            return n == q;
        }
    }
    assert!(n < 3_215_031_751, "primality check is only exact below 3.2e9");
    let mut d = n - 1;
    let mut r = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        r += 1;
    }
    'witness: for a in [2u64, 3, 5, 7] {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..r {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// A prime in `[2^30, 2^31)`, deterministic in `seed`.
pub fn random_prime(seed: u64) -> PrimeModulus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let candidate = rng.gen_range(PRIME_LO..PRIME_HI) | 1;
        if is_prime(candidate) {
            return PrimeModulus(candidate as u32);
        }
    }
}

/// Row-major dense matrix of residues.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldMatrix {
    rows: usize,
    cols: usize,
    data: Vec<u32>,
}

impl FieldMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    /// Like [`FieldMatrix::zeros`] but refuses to allocate past `max_entries`.
    pub fn zeros_capped(rows: usize, cols: usize, max_entries: u64) -> Result<Self> {
        let entries = rows as u128 * cols as u128;
        if entries > max_entries as u128 {
            return Err(Error::MemoryCap {
                rows,
                cols,
                entries,
                cap: max_entries,
            });
        }
        Ok(Self::zeros(rows, cols))
    }

    /// Builds a matrix from signed rows, reducing every entry mod `p`.
    pub fn from_rows(rows: &[Vec<i64>], p: PrimeModulus) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut m = Self::zeros(rows.len(), cols);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), cols, "ragged rows");
            for (dst, &v) in m.row_mut(i).iter_mut().zip(row) {
                *dst = p.reduce_i64(v);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> u32 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: u32) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[u32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [u32] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `count` consecutive rows starting at `start`, as one slice.
    pub fn row_block_mut(&mut self, start: usize, count: usize) -> &mut [u32] {
        &mut self.data[start * self.cols..(start + count) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.set(c, r, self.get(r, c));
            }
        }
        t
    }

    pub fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        let (lo, hi) = (a.min(b), a.max(b));
        let (head, tail) = self.data.split_at_mut(hi * self.cols);
        head[lo * self.cols..(lo + 1) * self.cols].swap_with_slice(&mut tail[..self.cols]);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankProfile {
    pub rank: usize,
    /// Pivot columns of the row echelon form, strictly increasing.
    pub pivots: Vec<usize>,
}

/// Rank of `m` over `F_p`. The matrix is consumed by in-place elimination.
pub fn rank(m: FieldMatrix, p: PrimeModulus) -> usize {
    rank_profile(m, p).rank
}

/// Row echelon reduction, columns left to right, first nonzero entry as pivot.
pub fn rank_profile(mut m: FieldMatrix, p: PrimeModulus) -> RankProfile {
    let (rows, cols) = (m.rows, m.cols);
    let modulus = p.get() as u64;
    let mut pivots = Vec::new();
    let mut next = 0usize;
    for c in 0..cols {
        if next == rows {
            break;
        }
        let Some(found) = (next..rows).find(|&r| m.get(r, c) != 0) else {
            continue;
        };
        m.swap_rows(next, found);

        let inv = p.inv(m.get(next, c));
        for v in &mut m.row_mut(next)[c..] {
            *v = p.mul(*v, inv);
        }

        let (head, tail) = m.data.split_at_mut((next + 1) * cols);
        let pivot = &head[next * cols + c..next * cols + cols];
        let eliminate = |row: &mut [u32]| {
            let f = row[c];
            if f == 0 {
                return;
            }
            let neg = modulus - f as u64;
            for (x, &y) in row[c..].iter_mut().zip(pivot) {
                *x = ((*x as u64 + neg * y as u64) % modulus) as u32;
            }
        };
        if tail.len() * (cols - c) / cols.max(1) >= PAR_THRESHOLD {
            tail.par_chunks_mut(cols).for_each(eliminate);
        } else {
            tail.chunks_mut(cols).for_each(eliminate);
        }

        pivots.push(c);
        next += 1;
    }
    RankProfile {
        rank: pivots.len(),
        pivots,
    }
}
