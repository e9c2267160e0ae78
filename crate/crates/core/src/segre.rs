//! Arithmetic of Segre shapes and the statements `T(n; s; a)`.
//!
//! A statement asks whether the span of `s` full tangent spaces and `a_i`
//! partial tangent spaces along factor `i`, taken at general points of
//! `P^{n_1} x ... x P^{n_k}`, has the expected affine dimension
//! `min(s (1 + sum n_i) + sum a_i (n_i + 1), prod (n_i + 1))`.
//!
//! All quantities are affine. Construction rejects shapes and statements whose
//! ambient dimension or generator count do not fit in an `i64`.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LIMIT: u128 = i64::MAX as u128;

/// Factor dimensions `n_1..n_k` of `P^{n_1} x ... x P^{n_k}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<u64>", into = "Vec<u64>")]
pub struct SegreShape {
    dims: Vec<u64>,
}

impl SegreShape {
    pub fn new(dims: Vec<u64>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::EmptyShape);
        }
        let mut ambient: u128 = 1;
        let mut tangent: u128 = 1;
        for &n in &dims {
            ambient = ambient
                .checked_mul(n as u128 + 1)
                .filter(|v| *v <= LIMIT)
                .ok_or(Error::Overflow("ambient dimension"))?;
            tangent = tangent
                .checked_add(n as u128)
                .filter(|v| *v <= LIMIT)
                .ok_or(Error::Overflow("tangent dimension"))?;
        }
        Ok(Self { dims })
    }

    pub fn dims(&self) -> &[u64] {
        &self.dims
    }

    /// Number of factors `k`.
    pub fn k(&self) -> usize {
        self.dims.len()
    }

    /// `n_i + 1`, the dimension of the i-th vector space.
    pub fn factor_size(&self, i: usize) -> u64 {
        self.dims[i] + 1
    }

    /// `prod (n_i + 1)`.
    pub fn ambient(&self) -> u64 {
        self.dims.iter().map(|n| n + 1).product()
    }

    /// `1 + sum n_i`, the affine dimension of a tangent space.
    pub fn tangent_count(&self) -> u64 {
        1 + self.dims.iter().sum::<u64>()
    }

    /// `ceil(ambient / tangent_count)`: the generic rank when no secant
    /// variety of the shape is defective.
    pub fn generic_rank(&self) -> u64 {
        self.ambient().div_ceil(self.tangent_count())
    }

    /// Product of `n_i + 1` over every factor except `j`.
    pub fn ambient_without(&self, j: usize) -> u64 {
        self.dims
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != j)
            .map(|(_, n)| n + 1)
            .product()
    }

    /// Sum of `n_i` over every factor except `j`.
    pub fn dim_sum_without(&self, j: usize) -> u64 {
        self.dims
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != j)
            .map(|(_, n)| *n)
            .sum()
    }

    pub fn is_sorted_ascending(&self) -> bool {
        self.dims.windows(2).all(|w| w[0] <= w[1])
    }
}

impl TryFrom<Vec<u64>> for SegreShape {
    type Error = Error;
    fn try_from(dims: Vec<u64>) -> Result<Self> {
        Self::new(dims)
    }
}

impl From<SegreShape> for Vec<u64> {
    fn from(shape: SegreShape) -> Self {
        shape.dims
    }
}

impl fmt::Display for SegreShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})", join(&self.dims))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Abundance {
    Subabundant,
    Superabundant,
    Equiabundant,
}

impl Abundance {
    pub fn from_room(room: i64) -> Self {
        match room.cmp(&0) {
            Ordering::Greater => Abundance::Subabundant,
            Ordering::Less => Abundance::Superabundant,
            Ordering::Equal => Abundance::Equiabundant,
        }
    }

    /// Subabundant in the wide sense (room >= 0).
    pub fn is_sub(self) -> bool {
        self != Abundance::Superabundant
    }

    /// Superabundant in the wide sense (room <= 0).
    pub fn is_super(self) -> bool {
        self != Abundance::Subabundant
    }

    /// Whether two statements can sit together in an eligible reduction.
    pub fn compatible(self, other: Abundance) -> bool {
        (self.is_sub() && other.is_sub()) || (self.is_super() && other.is_super())
    }
}

impl fmt::Display for Abundance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Abundance::Subabundant => "sub",
            Abundance::Superabundant => "super",
            Abundance::Equiabundant => "equi",
        })
    }
}

/// The statement `T(n_1..n_k; s; a_1..a_k)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "RawStatement")]
pub struct Statement {
    shape: SegreShape,
    s: u64,
    a: Vec<u64>,
}

#[derive(Deserialize)]
struct RawStatement {
    shape: SegreShape,
    s: u64,
    a: Vec<u64>,
}

impl TryFrom<RawStatement> for Statement {
    type Error = Error;
    fn try_from(raw: RawStatement) -> Result<Self> {
        Statement::new(raw.shape, raw.s, raw.a)
    }
}

impl Statement {
    pub fn new(shape: SegreShape, s: u64, a: Vec<u64>) -> Result<Self> {
        if a.len() != shape.k() {
            return Err(Error::LengthMismatch {
                k: shape.k(),
                a_len: a.len(),
            });
        }
        let mut generators = (s as u128)
            .checked_mul(shape.tangent_count() as u128)
            .ok_or(Error::Overflow("generator count"))?;
        for (i, &ai) in a.iter().enumerate() {
            generators = (ai as u128)
                .checked_mul(shape.factor_size(i) as u128)
                .and_then(|t| generators.checked_add(t))
                .ok_or(Error::Overflow("generator count"))?;
        }
        if generators > LIMIT {
            return Err(Error::Overflow("generator count"));
        }
        Ok(Self { shape, s, a })
    }

    /// Convenience constructor from raw dimension and count lists.
    pub fn from_parts(dims: &[u64], s: u64, a: &[u64]) -> Result<Self> {
        Self::new(SegreShape::new(dims.to_vec())?, s, a.to_vec())
    }

    /// The `s`-secant statement `T(n; s; 0..0)`.
    pub fn secant(shape: &SegreShape, s: u64) -> Result<Self> {
        Self::new(shape.clone(), s, vec![0; shape.k()])
    }

    pub fn shape(&self) -> &SegreShape {
        &self.shape
    }

    pub fn dims(&self) -> &[u64] {
        self.shape.dims()
    }

    pub fn s(&self) -> u64 {
        self.s
    }

    pub fn a(&self) -> &[u64] {
        &self.a
    }

    pub fn k(&self) -> usize {
        self.shape.k()
    }

    /// Same shape, different counts.
    pub fn with_counts(&self, s: u64, a: Vec<u64>) -> Result<Self> {
        Self::new(self.shape.clone(), s, a)
    }

    /// `s (1 + sum n_i) + sum a_i (n_i + 1)`: the number of independent
    /// generators expected in `L`.
    pub fn generator_count(&self) -> u64 {
        let full = self.s * self.shape.tangent_count();
        full + self
            .a
            .iter()
            .enumerate()
            .map(|(i, ai)| ai * self.shape.factor_size(i))
            .sum::<u64>()
    }

    /// Number of sampled points, `s + sum a_i`.
    pub fn point_count(&self) -> u64 {
        self.s + self.a.iter().sum::<u64>()
    }

    /// Signed room: ambient minus generator count.
    pub fn room(&self) -> i64 {
        self.shape.ambient() as i64 - self.generator_count() as i64
    }

    pub fn abundance(&self) -> Abundance {
        Abundance::from_room(self.room())
    }

    /// Expected affine dimension `D` of `L`.
    pub fn expected_dim(&self) -> u64 {
        self.generator_count().min(self.shape.ambient())
    }

    /// Sorts the `(n_i, a_i)` pairs in descending lexicographic order. Truth
    /// is invariant under this permutation of factors.
    pub fn canonicalize(&self) -> Statement {
        let mut pairs: Vec<(u64, u64)> = self
            .shape
            .dims()
            .iter()
            .copied()
            .zip(self.a.iter().copied())
            .collect();
        pairs.sort_unstable_by(|x, y| y.cmp(x));
        let (dims, a): (Vec<u64>, Vec<u64>) = pairs.into_iter().unzip();
        Statement {
            shape: SegreShape { dims },
            s: self.s,
            a,
        }
    }

    pub fn is_canonical(&self) -> bool {
        self.shape
            .dims()
            .iter()
            .zip(&self.a)
            .collect::<Vec<_>>()
            .windows(2)
            .all(|w| w[0] >= w[1])
    }
}

/// Coordinatewise order on `(n, s, a)`: `lo <= hi` in every entry.
///
/// Truth of subabundant statements propagates from `hi` down to `lo` and
/// truth of superabundant statements propagates from `lo` up to `hi`, in
/// both the counts and the shape. Callers pick the direction.
pub fn dominates(lo: &Statement, hi: &Statement) -> Result<bool> {
    if lo.k() != hi.k() {
        return Err(Error::FactorCountMismatch(lo.k(), hi.k()));
    }
    Ok(lo.s <= hi.s
        && lo.a.iter().zip(&hi.a).all(|(x, y)| x <= y)
        && lo.dims().iter().zip(hi.dims()).all(|(x, y)| x <= y))
}

impl fmt::Display for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "T({};{};{})",
            join(self.shape.dims()),
            self.s,
            join(&self.a)
        )
    }
}

fn join(values: &[u64]) -> String {
    values
        .iter()
        .map(u64::to_string)
        .collect::<Vec<_>>()
        .join(",")
}
