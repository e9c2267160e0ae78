//! Brute-force reference computations for tests.
//!
//! Everything here works over the integers (fraction-free Bareiss elimination
//! with big integers) and assembles tangent spans by explicit multi-index
//! enumeration. It shares no code with the modular path it checks.

#![allow(dead_code)]

use num_bigint::BigInt;

/// Rank over the rationals of an integer matrix.
pub fn rational_rank(rows: &[Vec<i64>]) -> usize {
    let mut m: Vec<Vec<BigInt>> = rows
        .iter()
        .map(|r| r.iter().map(|&v| BigInt::from(v)).collect())
        .collect();
    let nrows = m.len();
    let ncols = m.first().map_or(0, Vec::len);
    let zero = BigInt::from(0);
    let mut prev = BigInt::from(1);
    let mut rank = 0;
    for c in 0..ncols {
        if rank == nrows {
            break;
        }
        let Some(pr) = (rank..nrows).find(|&r| m[r][c] != zero) else {
            continue;
        };
        m.swap(rank, pr);
        for r in rank + 1..nrows {
            for cc in c + 1..ncols {
                let v = (&m[rank][c] * &m[r][cc] - &m[r][c] * &m[rank][cc]) / &prev;
                m[r][cc] = v;
            }
            m[r][c] = zero.clone();
        }
        prev = m[rank][c].clone();
        rank += 1;
    }
    rank
}

/// Deterministic small nonzero integer vectors, entries in [-4, 4].
pub fn small_points(dims: &[u64], count: usize, seed: u64) -> Vec<Vec<Vec<i64>>> {
    let mut state = seed ^ 0x9e37_79b9_7f4a_7c15;
    let mut next = move || {
        state = state
            .wrapping_mul(6_364_136_223_846_793_005)
            .wrapping_add(1_442_695_040_888_963_407);
        ((state >> 33) % 9) as i64 - 4
    };
    (0..count)
        .map(|_| {
            dims.iter()
                .map(|&n| loop {
                    let v: Vec<i64> = (0..=n).map(|_| next()).collect();
                    if v.iter().any(|&x| x != 0) {
                        break v;
                    }
                })
                .collect()
        })
        .collect()
}

/// Flattened `u_1 (x) ... (x) u_k` by direct multi-index enumeration.
fn outer(factors: &[Vec<i64>]) -> Vec<i64> {
    let total: usize = factors.iter().map(Vec::len).product();
    (0..total)
        .map(|mut idx| {
            let mut prod = 1i64;
            for f in factors.iter().rev() {
                prod *= f[idx % f.len()];
                idx /= f.len();
            }
            prod
        })
        .collect()
}

fn unit(len: usize, t: usize) -> Vec<i64> {
    (0..len).map(|i| i64::from(i == t)).collect()
}

/// Rows spanning the partial tangent space along `j` at `point`.
pub fn partial_rows(point: &[Vec<i64>], j: usize) -> Vec<Vec<i64>> {
    (0..point[j].len())
        .map(|t| {
            let mut f = point.to_vec();
            f[j] = unit(point[j].len(), t);
            outer(&f)
        })
        .collect()
}

/// Integer generator matrix of `L` for `T(dims; s; a)`, point order: `s` full
/// points, then `a_1` points for factor 1, and so on.
pub fn integer_l_rows(dims: &[u64], s: usize, a: &[u64], points: &[Vec<Vec<i64>>]) -> Vec<Vec<i64>> {
    let mut rows = Vec::new();
    let mut it = points.iter();
    for _ in 0..s {
        let p = it.next().expect("enough points");
        for j in 0..dims.len() {
            rows.extend(partial_rows(p, j));
        }
    }
    for (j, &aj) in a.iter().enumerate() {
        for _ in 0..aj {
            rows.extend(partial_rows(it.next().expect("enough points"), j));
        }
    }
    rows
}

/// Rank over `Q` of `L` at small random integer points.
pub fn rational_l_rank(dims: &[u64], s: usize, a: &[u64], seed: u64) -> usize {
    let count = s + a.iter().sum::<u64>() as usize;
    let points = small_points(dims, count, seed);
    let rows = integer_l_rows(dims, s, a, &points);
    if rows.is_empty() {
        return 0;
    }
    rational_rank(&rows)
}
