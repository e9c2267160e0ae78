//! Monte-Carlo verification of statements through tangent spans.
//!
//! At a point `v_1 (x) ... (x) v_k` of the Segre variety the affine tangent
//! space is the sum of the partial spaces `v_1 .. V_j .. v_k`. A statement is
//! checked by sampling points over `F_p`, stacking generators of
//! `L = T_s X + sum_j (T_{a_j} X)_j` and computing the rank. Reduction mod `p`
//! and specialization can only lower the rank, so reaching the expected
//! dimension proves the statement; falling short is evidence, not proof.

use std::collections::HashMap;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{self, random_prime, FieldMatrix, PrimeModulus, DEFAULT_MAX_ENTRIES};
use crate::segre::{SegreShape, Statement};

/// One point of the Segre variety: a nonzero vector per factor.
pub type Point = Vec<Vec<u32>>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PointSample {
    pub points: Vec<Point>,
    pub seed: u64,
    pub prime: PrimeModulus,
}

/// Uniform residues, resampling any all-zero coordinate vector.
pub fn sample_points(shape: &SegreShape, count: usize, p: PrimeModulus, seed: u64) -> PointSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..count)
        .map(|_| {
            shape
                .dims()
                .iter()
                .map(|&n| loop {
                    let v: Vec<u32> = (0..=n).map(|_| rng.gen_range(0..p.get())).collect();
                    if v.iter().any(|&x| x != 0) {
                        break v;
                    }
                })
                .collect()
        })
        .collect();
    PointSample {
        points,
        seed,
        prime: p,
    }
}

fn kron(vectors: &[Vec<u32>], p: PrimeModulus) -> Vec<u32> {
    let mut acc = vec![1u32];
    for v in vectors {
        let mut next = Vec::with_capacity(acc.len() * v.len());
        for &x in &acc {
            next.extend(v.iter().map(|&y| p.mul(x, y)));
        }
        acc = next;
    }
    acc
}

fn check_point(point: &[Vec<u32>], shape: &SegreShape) {
    assert_eq!(point.len(), shape.k(), "point has wrong factor count");
    for (v, &n) in point.iter().zip(shape.dims()) {
        assert_eq!(v.len() as u64, n + 1, "coordinate vector has wrong length");
    }
}

/// Writes the `n_j + 1` rows `v_1 .. e_t .. v_k` into `out`, one per chunk.
fn write_partial(point: &[Vec<u32>], j: usize, p: PrimeModulus, out: &mut [u32]) {
    let left = kron(&point[..j], p);
    let right = kron(&point[j + 1..], p);
    let width = point[j].len();
    let cols = left.len() * width * right.len();
    for (t, row) in out.chunks_mut(cols).take(width).enumerate() {
        row.fill(0);
        for (l, &x) in left.iter().enumerate() {
            let base = (l * width + t) * right.len();
            for (r, &y) in right.iter().enumerate() {
                row[base + r] = p.mul(x, y);
            }
        }
    }
}

/// Generators of the partial tangent space `(T_p X)_j`.
pub fn partial_tangent_rows(
    point: &[Vec<u32>],
    shape: &SegreShape,
    j: usize,
    p: PrimeModulus,
) -> Result<Vec<Vec<u32>>> {
    if j >= shape.k() {
        return Err(Error::FactorIndex {
            index: j,
            k: shape.k(),
        });
    }
    check_point(point, shape);
    let cols = shape.ambient() as usize;
    let rows = shape.factor_size(j) as usize;
    let mut buf = vec![0u32; rows * cols];
    write_partial(point, j, p, &mut buf);
    Ok(buf.chunks(cols).map(<[u32]>::to_vec).collect())
}

/// Generators of `T_p X`: the partial blocks for every factor in order. The
/// `k - 1` redundant copies of the point itself are kept.
pub fn tangent_rows(point: &[Vec<u32>], shape: &SegreShape, p: PrimeModulus) -> Vec<Vec<u32>> {
    (0..shape.k())
        .flat_map(|j| partial_tangent_rows(point, shape, j, p).expect("j < k"))
        .collect()
}

/// Number of generator rows `assemble_l` emits for `st`.
pub fn assembled_rows(st: &Statement) -> u64 {
    let shape = st.shape();
    let full: u64 = (0..shape.k()).map(|j| shape.factor_size(j)).sum();
    st.s() * full
        + st
            .a()
            .iter()
            .enumerate()
            .map(|(j, aj)| aj * shape.factor_size(j))
            .sum::<u64>()
}

/// Errors if the generator matrix of `st` would exceed `max_entries`.
pub fn check_cap(st: &Statement, max_entries: u64) -> Result<()> {
    let rows = assembled_rows(st);
    let cols = st.shape().ambient();
    let entries = rows as u128 * cols as u128;
    if entries > max_entries as u128 {
        return Err(Error::MemoryCap {
            rows: rows as usize,
            cols: cols as usize,
            entries,
            cap: max_entries,
        });
    }
    Ok(())
}

/// Generator matrix of `L`. Points come from one stream: the `s` full points
/// first, then `a_1` points for factor 1, then `a_2` for factor 2, and so on.
pub fn assemble_l(st: &Statement, p: PrimeModulus, seed: u64, max_entries: u64) -> Result<FieldMatrix> {
    check_cap(st, max_entries)?;
    let shape = st.shape();
    let rows = assembled_rows(st) as usize;
    let cols = shape.ambient() as usize;
    let mut m = FieldMatrix::zeros_capped(rows, cols, max_entries)?;
    let sample = sample_points(shape, st.point_count() as usize, p, seed);
    let mut points = sample.points.iter();
    let mut next_row = 0usize;
    let mut emit = |m: &mut FieldMatrix, point: &Point, j: usize| {
        let width = shape.factor_size(j) as usize;
        write_partial(point, j, p, m.row_block_mut(next_row, width));
        next_row += width;
    };
    for _ in 0..st.s() {
        let point = points.next().expect("sampled s + sum a points");
        for j in 0..shape.k() {
            emit(&mut m, point, j);
        }
    }
    for (j, &aj) in st.a().iter().enumerate() {
        for _ in 0..aj {
            emit(&mut m, points.next().expect("sampled s + sum a points"), j);
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifyConfig {
    /// Independent (prime, seed) trials; each uses a fresh prime.
    pub trials: u32,
    pub base_seed: u64,
    pub max_entries: u64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            trials: 3,
            base_seed: 0,
            max_entries: DEFAULT_MAX_ENTRIES,
        }
    }
}

impl VerifyConfig {
    pub fn with_seed(self, base_seed: u64) -> Self {
        Self { base_seed, ..self }
    }

    /// Point seed and prime seed for trial `t`.
    pub fn trial_seeds(&self, t: u32) -> (u64, u64) {
        let point = splitmix64(self.base_seed ^ splitmix64(t as u64));
        let prime = splitmix64(point ^ 0xa076_1d64_78bd_642f);
        (point, prime)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Verdict {
    ProbablyFalse,
    ProvenTrue,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationResult {
    pub statement: Statement,
    pub verdict: Verdict,
    #[serde(rename = "rank")]
    pub best_rank: u64,
    pub expected: u64,
    pub deficiency: u64,
    #[serde(rename = "trials")]
    pub trials_run: u32,
    #[serde(rename = "primes")]
    pub primes_used: Vec<u64>,
    #[serde(rename = "seeds")]
    pub seeds_used: Vec<u64>,
}

impl VerificationResult {
    pub fn is_true(&self) -> bool {
        self.verdict == Verdict::ProvenTrue
    }
}

/// Runs up to `cfg.trials` trials, stopping at the first that reaches `D`.
pub fn verify(st: &Statement, cfg: &VerifyConfig) -> Result<VerificationResult> {
    let expected = st.expected_dim();
    let ambient = st.shape().ambient();
    if st.room() <= 0 && st.point_count() >= ambient {
        // s + sum a general points already span the ambient space.
        return Ok(VerificationResult {
            statement: st.clone(),
            verdict: Verdict::ProvenTrue,
            best_rank: expected,
            expected,
            deficiency: 0,
            trials_run: 0,
            primes_used: vec![],
            seeds_used: vec![],
        });
    }
    check_cap(st, cfg.max_entries)?;
    let trials = cfg.trials.max(1);
    let mut best = 0u64;
    let mut primes = Vec::new();
    let mut seeds = Vec::new();
    for t in 0..trials {
        let (seed, prime_seed) = cfg.trial_seeds(t);
        let p = random_prime(prime_seed);
        let m = assemble_l(st, p, seed, cfg.max_entries)?;
        let r = field::rank(m, p) as u64;
        debug_assert!(r <= expected, "rank {r} above expected {expected} for {st}");
        primes.push(p.get() as u64);
        seeds.push(seed);
        best = best.max(r);
        if best == expected {
            break;
        }
    }
    Ok(VerificationResult {
        statement: st.clone(),
        verdict: if best == expected {
            Verdict::ProvenTrue
        } else {
            Verdict::ProbablyFalse
        },
        best_rank: best,
        expected,
        deficiency: expected - best,
        trials_run: primes.len() as u32,
        primes_used: primes,
        seeds_used: seeds,
    })
}

/// Anything that can decide statements.
pub trait Verifier: Sync {
    fn verify(&self, st: &Statement) -> Result<VerificationResult>;
}

impl Verifier for VerifyConfig {
    fn verify(&self, st: &Statement) -> Result<VerificationResult> {
        verify(st, self)
    }
}

impl<V: Verifier + ?Sized> Verifier for &V {
    fn verify(&self, st: &Statement) -> Result<VerificationResult> {
        (**self).verify(st)
    }
}

/// In-memory memo keyed by canonical statement. Results are re-labelled
/// with the statement that was asked for.
pub struct MemoVerifier<V> {
    inner: V,
    memo: Mutex<HashMap<Statement, VerificationResult>>,
}

impl<V: Verifier> MemoVerifier<V> {
    pub fn new(inner: V) -> Self {
        Self {
            inner,
            memo: Mutex::new(HashMap::new()),
        }
    }

    pub fn inner(&self) -> &V {
        &self.inner
    }

    /// Stores `result` unless a stronger verdict is already known.
    pub fn record(&self, result: VerificationResult) {
        let key = result.statement.canonicalize();
        let mut memo = self.memo.lock().expect("memo lock");
        match memo.get(&key) {
            Some(old) if old.verdict > result.verdict => {}
            _ => {
                memo.insert(key, result);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.memo.lock().expect("memo lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl<V: Verifier> Verifier for MemoVerifier<V> {
    fn verify(&self, st: &Statement) -> Result<VerificationResult> {
        let key = st.canonicalize();
        if let Some(hit) = self.memo.lock().expect("memo lock").get(&key) {
            return Ok(VerificationResult {
                statement: st.clone(),
                ..hit.clone()
            });
        }
        let result = self.inner.verify(st)?;
        self.record(result.clone());
        Ok(result)
    }
}
