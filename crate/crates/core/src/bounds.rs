//! Closed-form bounds on safety regions and non-defectivity thresholds.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::segre::{SegreShape, Statement};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundKind {
    /// `O+ >= n_k (sum_{i<k} n_i - 1)` from an explicit false statement.
    WitnessLowerBound,
    /// `O+` of `(P^1)^k`.
    BinaryBand,
    /// Safety bounds transferred from `(P^{c-1})^k` through halving.
    HalvingTransfer,
    /// Threshold with `Theta_k`, any shape.
    GeneralThreshold,
    /// Threshold with `Delta_k`, every `n_i + 1` a power of two.
    PowerOfTwoThreshold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub shape: SegreShape,
    #[serde(rename = "theorem")]
    pub kind: BoundKind,
    pub values: BTreeMap<String, Value>,
    pub assumptions: Vec<String>,
}

fn require_k3(k: usize) -> Result<()> {
    if k < 3 {
        return Err(Error::Hypothesis(format!("needs k >= 3, got k = {k}")));
    }
    Ok(())
}

fn sorted(shape: &SegreShape) -> Vec<u64> {
    let mut dims = shape.dims().to_vec();
    dims.sort_unstable();
    dims
}

/// `T(n; 1; 0, ..., 0, a_k)` with `a_k = prod_{i<k}(n_i + 1) - sum_{i<k} n_i`
/// on the ascending-sorted shape. This statement is false, with room
/// `n_k (sum_{i<k} n_i - 1) - 1`.
pub fn witness_statement(shape: &SegreShape) -> Result<Statement> {
    if shape.k() < 2 {
        return Err(Error::Hypothesis(format!("needs k >= 2, got {shape}")));
    }
    let dims = sorted(shape);
    let k = dims.len();
    let head_prod: u64 = dims[..k - 1].iter().map(|&n| n + 1).product();
    let head_sum: u64 = dims[..k - 1].iter().sum();
    let mut a = vec![0; k];
    a[k - 1] = head_prod - head_sum;
    Statement::from_parts(&dims, 1, &a)
}

/// `n_k (sum_{i<k} n_i - 1)` on the ascending-sorted shape.
pub fn witness_lower_bound(shape: &SegreShape) -> i64 {
    let dims = sorted(shape);
    let k = dims.len();
    let head_sum: i64 = dims[..k - 1].iter().map(|&n| n as i64).sum();
    dims[k - 1] as i64 * (head_sum - 1)
}

/// Inclusive band for `O+` of `(P^1)^k`; exact for `k <= 7`.
pub fn binary_band(k: usize) -> Result<(u64, u64)> {
    require_k3(k)?;
    let lo = k as u64 - 2;
    Ok(if k <= 7 { (lo, lo) } else { (lo, lo + 1) })
}

/// `Delta_k = 1 - (3k^2 - 5k + 2) / 2^{k+1}`.
pub fn delta(k: usize) -> Result<BigRational> {
    require_k3(k)?;
    let k_big = BigInt::from(k);
    let num = BigInt::from(3) * &k_big * &k_big - BigInt::from(5) * &k_big + 2;
    let den = BigInt::one() << (k + 1);
    Ok(BigRational::one() - BigRational::new(num, den))
}

/// `Theta_k = Delta_k / 2^k`.
pub fn theta(k: usize) -> Result<BigRational> {
    Ok(delta(k)? / BigRational::from_integer(BigInt::one() << k))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Threshold {
    pub s_max: u64,
    pub coefficient: BigRational,
    pub kind: BoundKind,
}

/// Largest `s` known to be non-defective from the closed-form estimates:
/// `floor(coef * prod(n_i + 1) / (1 + sum n_i))`.
pub fn nondefectivity_threshold(shape: &SegreShape) -> Result<Threshold> {
    require_k3(shape.k())?;
    let powers = (0..shape.k()).all(|i| {
        let m = shape.factor_size(i);
        m >= 2 && m.is_power_of_two()
    });
    let (coefficient, kind) = if powers {
        (delta(shape.k())?, BoundKind::PowerOfTwoThreshold)
    } else {
        (theta(shape.k())?, BoundKind::GeneralThreshold)
    };
    let value = &coefficient * BigRational::new(shape.ambient().into(), shape.tangent_count().into());
    let s_max = value.floor().to_integer().to_u64().ok_or(Error::Overflow("threshold"))?;
    Ok(Threshold {
        s_max,
        coefficient,
        kind,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transfer {
    /// `d_i` with `n_i + 1 = 2^{d_i} c`.
    pub exponents: Vec<u32>,
    /// `c (k-1)^2 - k (k-1) / 2`.
    pub error_term: i64,
    pub o_plus_upper: BigInt,
    pub o_minus_lower: Option<BigInt>,
}

/// Transfers the safety bounds of `(P^{c-1})^k` to `shape` when every
/// `n_i + 1 = 2^{d_i} c`:
/// `O+ <= 2^{sum d}(O+(Y) + C)` and `O- >= 2^{sum d}(O-(Y) - C)`.
pub fn halving_transfer(shape: &SegreShape, c: u64, o_plus_y: i64, o_minus_y: Option<i64>) -> Result<Transfer> {
    let k = shape.k();
    require_k3(k)?;
    if c == 0 {
        return Err(Error::Hypothesis("c must be positive".into()));
    }
    let mut exponents = Vec::with_capacity(k);
    for i in 0..k {
        let m = shape.factor_size(i);
        let q = m / c;
        if !m.is_multiple_of(c) || !q.is_power_of_two() {
            return Err(Error::Hypothesis(format!(
                "factor {i}: n + 1 = {m} is not a power of two times c = {c}"
            )));
        }
        exponents.push(q.trailing_zeros());
    }
    let k = k as i64;
    let error_term = (c as i64)
        .checked_mul((k - 1) * (k - 1))
        .ok_or(Error::Overflow("transfer constant"))?
        - k * (k - 1) / 2;
    let scale = BigInt::one() << exponents.iter().sum::<u32>();
    Ok(Transfer {
        o_plus_upper: &scale * (o_plus_y + error_term),
        o_minus_lower: o_minus_y.map(|om| &scale * (om - error_term)),
        exponents,
        error_term,
    })
}

fn ratio_value(r: &BigRational) -> Value {
    Value::String(if r.is_integer() {
        r.to_integer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    })
}

fn report(shape: &SegreShape, kind: BoundKind, values: Vec<(&str, Value)>, assumptions: Vec<String>) -> BoundReport {
    BoundReport {
        shape: shape.clone(),
        kind,
        values: values.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        assumptions,
    }
}

/// Optional inputs for the transfer report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransferInputs {
    pub c: u64,
    pub o_plus_y: i64,
    pub o_minus_y: Option<i64>,
}

/// Every report that applies to `shape`.
pub fn all_reports(shape: &SegreShape, transfer: Option<TransferInputs>) -> Result<Vec<BoundReport>> {
    let mut out = Vec::new();
    let k = shape.k();
    if k >= 2 {
        let w = witness_statement(shape)?;
        let mut assumptions = vec!["factors sorted ascending".to_string()];
        if k == 2 {
            assumptions.push("k = 2 lies outside the proven range k >= 3".into());
        }
        out.push(report(
            shape,
            BoundKind::WitnessLowerBound,
            vec![
                ("o_plus_lower", witness_lower_bound(shape).into()),
                ("witness", serde_json::to_value(&w).expect("statement serializes")),
                ("witness_room", w.room().into()),
            ],
            assumptions,
        ));
    }
    if k >= 3 && shape.dims().iter().all(|&n| n == 1) {
        let (lo, hi) = binary_band(k)?;
        let mut values = vec![("o_plus_min", lo.into()), ("o_plus_max", hi.into())];
        if lo == hi {
            values.push(("o_plus", lo.into()));
        }
        out.push(report(shape, BoundKind::BinaryBand, values, vec!["every n_i = 1".into()]));
    }
    if k >= 3 {
        let t = nondefectivity_threshold(shape)?;
        let (name, assumption) = match t.kind {
            BoundKind::PowerOfTwoThreshold => ("delta", "every n_i + 1 a power of two"),
            _ => ("theta", "none"),
        };
        out.push(report(
            shape,
            t.kind,
            vec![
                ("s_max", t.s_max.into()),
                (name, ratio_value(&t.coefficient)),
                ("ambient", shape.ambient().into()),
                ("tangent_count", shape.tangent_count().into()),
            ],
            vec![assumption.to_string()],
        ));
    }
    if let Some(inp) = transfer {
        let t = halving_transfer(shape, inp.c, inp.o_plus_y, inp.o_minus_y)?;
        let mut values = vec![
            ("c", inp.c.into()),
            ("error_term", t.error_term.into()),
            ("exponent_sum", t.exponents.iter().sum::<u32>().into()),
            ("o_plus_upper", Value::String(t.o_plus_upper.to_string())),
        ];
        if let Some(lo) = &t.o_minus_lower {
            values.push(("o_minus_lower", Value::String(lo.to_string())));
        }
        out.push(report(
            shape,
            BoundKind::HalvingTransfer,
            values,
            vec![
                format!("every n_i + 1 = 2^d_i * {}", inp.c),
                format!("O+(Y) = {} supplied for Y = (P^{})^{k}", inp.o_plus_y, inp.c - 1),
            ],
        ));
    }
    Ok(out)
}

/// True when `r` lies strictly between 0 and 1.
pub fn in_unit_interval(r: &BigRational) -> bool {
    r.is_positive() && *r < BigRational::one()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tangent::{verify, VerifyConfig};
    use proptest::prelude::*;

    fn shape(d: &[u64]) -> SegreShape {
        SegreShape::new(d.to_vec()).unwrap()
    }

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn delta_theta_values() {
        assert_eq!(delta(3).unwrap(), q(1, 8));
        assert_eq!(theta(3).unwrap(), q(1, 64));
        assert_eq!(delta(4).unwrap(), q(1, 16));
        assert_eq!(theta(4).unwrap(), q(1, 256));
        assert_eq!(delta(5).unwrap(), q(3, 16));
        assert!(delta(2).is_err() && theta(1).is_err());
    }

    #[test]
    fn delta_positive_up_to_64() {
        for k in 3..=64usize {
            // independent check: 2^{k+1} > 3k^2 - 5k + 2
            let lhs = BigInt::one() << (k + 1);
            let rhs = BigInt::from(3 * k * k - 5 * k + 2);
            assert!(lhs > rhs, "k = {k}");
            assert!(delta(k).unwrap().is_positive());
            assert!(in_unit_interval(&theta(k).unwrap()));
        }
    }

    #[test]
    fn thresholds() {
        let t = nondefectivity_threshold(&shape(&[3, 3, 3, 3])).unwrap();
        assert_eq!((t.s_max, t.kind), (1, BoundKind::PowerOfTwoThreshold));
        let t = nondefectivity_threshold(&shape(&[1, 1, 1])).unwrap();
        assert_eq!((t.s_max, t.kind), (0, BoundKind::PowerOfTwoThreshold));
        let t = nondefectivity_threshold(&shape(&[2, 2, 2])).unwrap();
        assert_eq!((t.s_max, t.kind), (0, BoundKind::GeneralThreshold));
        assert!(nondefectivity_threshold(&shape(&[3, 3])).is_err());
        // P^0 factors (n + 1 = 1) do not count as powers of two here
        let t = nondefectivity_threshold(&shape(&[0, 1, 1])).unwrap();
        assert_eq!(t.kind, BoundKind::GeneralThreshold);
    }

    #[test]
    fn thresholds_are_sound() {
        let cfg = VerifyConfig::default();
        for d in [&[1u64, 1, 1][..], &[2, 2, 2], &[3, 3, 3, 3], &[7, 7, 7], &[3, 3, 3, 3, 3]] {
            let sh = shape(d);
            let t = nondefectivity_threshold(&sh).unwrap();
            for s in 1..=t.s_max {
                let st = Statement::secant(&sh, s).unwrap();
                assert!(verify(&st, &cfg).unwrap().is_true(), "{st}");
            }
        }
    }

    #[test]
    fn witness_examples() {
        let w = witness_statement(&shape(&[1, 1, 1])).unwrap();
        assert_eq!(w, Statement::from_parts(&[1, 1, 1], 1, &[0, 0, 2]).unwrap());
        assert_eq!(w.room(), 0);
        let w = witness_statement(&shape(&[2, 1, 1])).unwrap();
        assert_eq!(w, Statement::from_parts(&[1, 1, 2], 1, &[0, 0, 2]).unwrap());
        assert_eq!(w.room(), 1);
        assert_eq!(witness_lower_bound(&shape(&[1, 1, 1])), 1);
        assert_eq!(witness_lower_bound(&shape(&[1, 1, 2])), 2);
        assert_eq!(witness_lower_bound(&shape(&[2, 2, 2])), 6);
        let cfg = VerifyConfig::default();
        for d in [&[1u64, 1, 1][..], &[1, 1, 2], &[2, 2, 2]] {
            let r = verify(&witness_statement(&shape(d)).unwrap(), &cfg).unwrap();
            assert!(!r.is_true() && r.deficiency >= 1, "{d:?}");
        }
    }

    #[test]
    fn bands() {
        assert_eq!(binary_band(5).unwrap(), (3, 3));
        assert_eq!(binary_band(3).unwrap(), (1, 1));
        assert_eq!(binary_band(8).unwrap(), (6, 7));
        assert!(binary_band(2).is_err());
    }

    #[test]
    fn transfer_examples() {
        let t = halving_transfer(&shape(&[3, 1, 1]), 2, 1, Some(-1)).unwrap();
        assert_eq!((t.error_term, t.o_plus_upper.clone()), (5, BigInt::from(12)));
        assert_eq!(t.o_minus_lower, Some(BigInt::from(-12)));
        let t = halving_transfer(&shape(&[1, 1, 1]), 2, 1, None).unwrap();
        assert_eq!(t.o_plus_upper, BigInt::from(6));
        let t = halving_transfer(&shape(&[2, 2, 2]), 3, 6, Some(-6)).unwrap();
        assert_eq!((t.error_term, t.o_plus_upper), (9, BigInt::from(15)));
        let err = halving_transfer(&shape(&[3, 2, 1]), 2, 1, None).unwrap_err();
        assert!(err.to_string().contains("factor 1"), "{err}");
    }

    #[test]
    fn report_set() {
        let reports = all_reports(&shape(&[1, 1, 1, 1, 1]), None).unwrap();
        let band = reports.iter().find(|r| r.kind == BoundKind::BinaryBand).unwrap();
        assert_eq!(band.values["o_plus"], 3);
        let reports = all_reports(&shape(&[3, 3, 3, 3]), None).unwrap();
        let t = reports.iter().find(|r| r.kind == BoundKind::PowerOfTwoThreshold).unwrap();
        assert_eq!(t.values["s_max"], 1);
        assert_eq!(t.values["delta"], "1/16");
        let reports = all_reports(&shape(&[2, 2, 2]), None).unwrap();
        assert_eq!(reports[0].values["o_plus_lower"], 6);
        let v = serde_json::to_value(&reports[0]).unwrap();
        assert_eq!(v["theorem"], "witness-lower-bound");
        let with = all_reports(
            &shape(&[3, 1, 1]),
            Some(TransferInputs {
                c: 2,
                o_plus_y: 1,
                o_minus_y: None,
            }),
        )
        .unwrap();
        assert_eq!(with.last().unwrap().values["o_plus_upper"], "12");
    }

    proptest! {
        #[test]
        fn witness_room_identity(dims in proptest::collection::vec(0u64..6, 2..6)) {
            let sh = SegreShape::new(dims).unwrap();
            let w = witness_statement(&sh).unwrap();
            prop_assert_eq!(w.room(), witness_lower_bound(&sh) - 1);
            prop_assert!(w.shape().is_sorted_ascending());
        }
    }
}
