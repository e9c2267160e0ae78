//! Secant scans `T(n; s; 0)` for `s = 1..`, using monotonicity in `s`.

use anyhow::Result;
use segre_core::tangent::{Verdict, Verifier};
use segre_core::{Error, SegreShape, Statement};
use serde::Serialize;

use crate::{EXIT_INFEASIBLE, EXIT_NOT_PROVEN, EXIT_TRUE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RowVerdict {
    ProvenTrue,
    ProbablyFalse,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Row {
    pub s: u64,
    pub room: i64,
    pub verdict: RowVerdict,
    pub rank: Option<u64>,
    pub expected: u64,
    /// Deduced from a neighbouring proven statement, not computed.
    pub implied: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SecantTable {
    pub shape: SegreShape,
    pub generic_rank: u64,
    pub rows: Vec<Row>,
}

impl SecantTable {
    pub fn exit_code(&self) -> u8 {
        if self.rows.iter().any(|r| r.verdict == RowVerdict::Infeasible) {
            EXIT_INFEASIBLE
        } else if self.rows.iter().any(|r| r.verdict == RowVerdict::ProbablyFalse) {
            EXIT_NOT_PROVEN
        } else {
            EXIT_TRUE
        }
    }
}

fn check<V: Verifier>(st: &Statement, verifier: &V) -> Result<Row> {
    let base = Row {
        s: st.s(),
        room: st.room(),
        verdict: RowVerdict::Infeasible,
        rank: None,
        expected: st.expected_dim(),
        implied: false,
    };
    match verifier.verify(st) {
        Ok(r) => Ok(Row {
            verdict: match r.verdict {
                Verdict::ProvenTrue => RowVerdict::ProvenTrue,
                Verdict::ProbablyFalse => RowVerdict::ProbablyFalse,
            },
            rank: Some(r.best_rank),
            ..base
        }),
        Err(Error::MemoryCap { .. }) => Ok(base),
        Err(e) => Err(e.into()),
    }
}

fn implied(st: &Statement) -> Row {
    Row {
        s: st.s(),
        room: st.room(),
        verdict: RowVerdict::ProvenTrue,
        rank: Some(st.expected_dim()),
        expected: st.expected_dim(),
        implied: true,
    }
}

/// Subabundant `s` are checked downward from the last one, where one proof
/// covers every smaller `s`; superabundant `s` upward from the first, where
/// one proof covers every larger `s`.
pub fn scan_secants<V: Verifier>(
    shape: &SegreShape,
    verifier: &V,
    s_max: Option<u64>,
    exhaustive: bool,
) -> Result<SecantTable> {
    let s_max = s_max.unwrap_or_else(|| shape.generic_rank());
    let stmts: Vec<Statement> = (1..=s_max)
        .map(|s| Statement::secant(shape, s))
        .collect::<segre_core::Result<_>>()?;
    let mut rows: Vec<Option<Row>> = vec![None; stmts.len()];
    let split = stmts.iter().position(|st| st.room() < 0).unwrap_or(stmts.len());

    for i in (0..split).rev() {
        let row = check(&stmts[i], verifier)?;
        let proven = row.verdict == RowVerdict::ProvenTrue;
        rows[i] = Some(row);
        if proven && !exhaustive {
            for j in 0..i {
                rows[j] = Some(implied(&stmts[j]));
            }
            break;
        }
    }
    for i in split..stmts.len() {
        let row = check(&stmts[i], verifier)?;
        let proven = row.verdict == RowVerdict::ProvenTrue;
        rows[i] = Some(row);
        if proven && !exhaustive {
            for j in i + 1..stmts.len() {
                rows[j] = Some(implied(&stmts[j]));
            }
            break;
        }
    }
    Ok(SecantTable {
        shape: shape.clone(),
        generic_rank: shape.generic_rank(),
        rows: rows.into_iter().map(|r| r.expect("every s visited")).collect(),
    })
}
