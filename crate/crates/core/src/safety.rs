//! Safety bounds of a Segre shape.
//!
//! `R+` is the largest room of a false subabundant statement and `R-` the
//! smallest room of a false superabundant one; the safety bounds are
//! `O+ = R+ + 1` and `O- = R- - 1`. Every statement whose room lies outside
//! `(O-, O+)` is true.
//!
//! Falseness here means `ProbablyFalse`: witnesses are Monte-Carlo, while
//! every pruning step rests on a proven-true statement.

use std::collections::{BTreeSet, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segre::{dominates, SegreShape, Statement};
use crate::tangent::{MemoVerifier, VerificationResult, Verifier, VerifyConfig};

pub const CAVEAT: &str = "false witnesses are Monte-Carlo (probably false); pruned statements are proven true";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub statement: Statement,
    pub room: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanReport {
    /// Extreme room over the witnesses; `None` when no false statement exists.
    pub extreme_room: Option<i64>,
    pub witnesses: Vec<Witness>,
    pub verified: usize,
    pub pruned: usize,
    /// Scans rerun because a recheck overturned a false verdict.
    pub restarts: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SafetyRegion {
    pub shape: SegreShape,
    /// `R+ + 1`, or 0 when no false subabundant statement was found.
    pub o_plus: i64,
    /// `R- - 1`, or 0 when no false superabundant statement was found;
    /// `None` when the superabundant side was not scanned.
    pub o_minus: Option<i64>,
    pub false_sub_witnesses: Vec<Witness>,
    pub false_super_witnesses: Vec<Witness>,
    pub sub_none_found: bool,
    pub super_none_found: bool,
    pub caveat: String,
}

/// Puts `(s, a)` in a normal form that keeps the factor order of `shape`:
/// counts on factors of equal dimension are sorted ascending.
fn normalize(shape: &SegreShape, s: u64, mut a: Vec<u64>) -> Result<Statement> {
    let dims = shape.dims();
    let mut seen = vec![false; dims.len()];
    for i in 0..dims.len() {
        if seen[i] {
            continue;
        }
        let group: Vec<usize> = (i..dims.len()).filter(|&j| dims[j] == dims[i]).collect();
        let mut values: Vec<u64> = group.iter().map(|&j| a[j]).collect();
        values.sort_unstable();
        for (&j, v) in group.iter().zip(values) {
            a[j] = v;
            seen[j] = true;
        }
    }
    Statement::new(shape.clone(), s, a)
}

/// All normalized statements on `shape` with exactly `generators` generators.
fn level(shape: &SegreShape, generators: u64) -> Result<Vec<Statement>> {
    let weights: Vec<u64> = (0..shape.k()).map(|i| shape.factor_size(i)).collect();
    let t = shape.tangent_count();
    let mut out = BTreeSet::new();
    let mut a = vec![0u64; shape.k()];
    for s in 0..=generators / t {
        fill(&weights, 0, generators - s * t, &mut a, &mut |a| {
            out.insert((s, a.to_vec()));
        });
    }
    out.into_iter().map(|(s, a)| normalize(shape, s, a)).collect::<Result<BTreeSet<_>>>().map(|set| set.into_iter().collect())
}

fn fill(weights: &[u64], i: usize, rest: u64, a: &mut [u64], emit: &mut impl FnMut(&[u64])) {
    if i == weights.len() {
        if rest == 0 {
            emit(a);
        }
        return;
    }
    for x in 0..=rest / weights[i] {
        a[i] = x;
        fill(weights, i + 1, rest - x * weights[i], a, emit);
    }
    a[i] = 0;
}

fn require_k(shape: &SegreShape) -> Result<()> {
    if shape.k() < 2 {
        return Err(Error::Hypothesis(format!("safety scans need at least two factors, got {shape}")));
    }
    Ok(())
}

fn verify_all<V: Verifier>(memo: &MemoVerifier<&V>, batch: &[Statement]) -> Result<Vec<VerificationResult>> {
    batch.par_iter().map(|st| memo.verify(st)).collect()
}

/// Reruns `scan` until every false witness survives a recheck with `recheck`.
fn with_rechecks<V: Verifier, R: Verifier>(
    verifier: &V,
    recheck: &R,
    scan: impl Fn(&MemoVerifier<&V>) -> Result<ScanReport>,
) -> Result<ScanReport> {
    let memo = MemoVerifier::new(verifier);
    let mut restarts = 0;
    loop {
        let mut report = scan(&memo)?;
        let rechecked: Vec<VerificationResult> = report
            .witnesses
            .par_iter()
            .map(|w| recheck.verify(&w.statement))
            .collect::<Result<_>>()?;
        let overturned: Vec<_> = rechecked.into_iter().filter(VerificationResult::is_true).collect();
        if overturned.is_empty() {
            report.restarts = restarts;
            return Ok(report);
        }
        for r in overturned {
            memo.record(r);
        }
        restarts += 1;
    }
}

/// Scans subabundant statements by ascending room.
///
/// A false subabundant statement stays false when some `a_i` is raised, as
/// long as it stays subabundant, and that lowers its room by `n_i + 1`. So a
/// window of `min(n_i) + 1` consecutive all-true room levels rules out false
/// statements at every higher room, and the scan stops there.
pub fn scan_subabundant<V: Verifier, R: Verifier>(shape: &SegreShape, verifier: &V, recheck: &R) -> Result<ScanReport> {
    require_k(shape)?;
    with_rechecks(verifier, recheck, |memo| scan_sub_once(shape, memo))
}

fn scan_sub_once<V: Verifier>(shape: &SegreShape, memo: &MemoVerifier<&V>) -> Result<ScanReport> {
    let ambient = shape.ambient();
    let window = shape.dims().iter().min().expect("k >= 1") + 1;
    let mut known_true: Vec<Statement> = Vec::new();
    let mut witnesses = Vec::new();
    let (mut verified, mut pruned) = (0, 0);
    let mut clean_levels = 0u64;
    for room in 0..=ambient {
        let candidates = level(shape, ambient - room)?;
        let mut todo = Vec::new();
        for st in candidates {
            let mut implied = false;
            for t in &known_true {
                if dominates(&st, t)? {
                    implied = true;
                    break;
                }
            }
            if implied {
                pruned += 1;
            } else {
                todo.push(st);
            }
        }
        verified += todo.len();
        let results = verify_all(memo, &todo)?;
        let mut clean = true;
        for r in results {
            if r.is_true() {
                known_true.push(r.statement);
            } else {
                clean = false;
                witnesses.push(Witness {
                    room: room as i64,
                    statement: r.statement,
                });
            }
        }
        clean_levels = if clean { clean_levels + 1 } else { 0 };
        if clean_levels >= window {
            break;
        }
    }
    Ok(ScanReport {
        extreme_room: witnesses.iter().map(|w| w.room).max(),
        witnesses,
        verified,
        pruned,
        restarts: 0,
    })
}

/// Scans superabundant statements upward from the band of rooms in
/// `(-(1 + sum n_i), 0]`.
///
/// Truth of a superabundant statement survives adding generators, so every
/// false superabundant statement is reached from a false one in the band by
/// adding one generator at a time through false statements. The search only
/// expands false nodes.
pub fn scan_superabundant<V: Verifier, R: Verifier>(shape: &SegreShape, verifier: &V, recheck: &R) -> Result<ScanReport> {
    require_k(shape)?;
    with_rechecks(verifier, recheck, |memo| scan_super_once(shape, memo))
}

fn scan_super_once<V: Verifier>(shape: &SegreShape, memo: &MemoVerifier<&V>) -> Result<ScanReport> {
    let ambient = shape.ambient();
    let t = shape.tangent_count();
    let mut seen: HashSet<Statement> = HashSet::new();
    let mut frontier = Vec::new();
    for g in ambient..ambient + t {
        for st in level(shape, g)? {
            if seen.insert(st.clone()) {
                frontier.push(st);
            }
        }
    }
    let mut witnesses = Vec::new();
    let mut verified = 0;
    let mut pruned = 0;
    while !frontier.is_empty() {
        frontier.sort();
        verified += frontier.len();
        let results = verify_all(memo, &frontier)?;
        let mut next = Vec::new();
        for r in results {
            if r.is_true() {
                pruned += 1;
                continue;
            }
            let st = r.statement;
            for succ in successors(&st)? {
                if seen.insert(succ.clone()) {
                    next.push(succ);
                }
            }
            witnesses.push(Witness {
                room: st.room(),
                statement: st,
            });
        }
        frontier = next;
    }
    witnesses.sort_by(|x, y| x.room.cmp(&y.room).then_with(|| x.statement.cmp(&y.statement)));
    Ok(ScanReport {
        extreme_room: witnesses.iter().map(|w| w.room).min(),
        witnesses,
        verified,
        pruned,
        restarts: 0,
    })
}

fn successors(st: &Statement) -> Result<Vec<Statement>> {
    let mut out = vec![normalize(st.shape(), st.s() + 1, st.a().to_vec())?];
    for i in 0..st.k() {
        let mut a = st.a().to_vec();
        a[i] += 1;
        out.push(normalize(st.shape(), st.s(), a)?);
    }
    Ok(out)
}

/// Both scans (or only the subabundant one), rechecking witnesses with a
/// second seed.
pub fn safety_region_with<V: Verifier, R: Verifier>(
    shape: &SegreShape,
    verifier: &V,
    recheck: &R,
    o_plus_only: bool,
) -> Result<SafetyRegion> {
    let sub = scan_subabundant(shape, verifier, recheck)?;
    let sup = if o_plus_only {
        None
    } else {
        Some(scan_superabundant(shape, verifier, recheck)?)
    };
    Ok(SafetyRegion {
        shape: shape.clone(),
        o_plus: sub.extreme_room.map_or(0, |r| r + 1),
        o_minus: sup.as_ref().map(|s| s.extreme_room.map_or(0, |r| r - 1)),
        sub_none_found: sub.extreme_room.is_none(),
        super_none_found: sup.as_ref().is_some_and(|s| s.extreme_room.is_none()),
        false_sub_witnesses: sub.witnesses,
        false_super_witnesses: sup.map(|s| s.witnesses).unwrap_or_default(),
        caveat: CAVEAT.to_string(),
    })
}

/// Seed offset for witness rechecks.
pub const RECHECK_SEED: u64 = 0x5eed_c4ec;

pub fn safety_region(shape: &SegreShape, cfg: &VerifyConfig) -> Result<SafetyRegion> {
    let recheck = cfg.with_seed(cfg.base_seed ^ RECHECK_SEED);
    safety_region_with(shape, cfg, &recheck, false)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConjectureReport {
    pub shape: SegreShape,
    pub o_plus: i64,
    pub o_minus: Option<i64>,
    /// `O- == -O+`.
    pub symmetric: Option<bool>,
    /// `O+ == (sum_{i<k} n_i - 1) n_k` with factors sorted ascending.
    pub formula: i64,
    pub formula_holds: bool,
    /// `T(n; n_k; 0, ..., 0, a_k)` with `a_k = prod_{i<k}(n_i + 1) - (n_k + 1)`,
    /// when `a_k >= 0`.
    pub witness: Option<Statement>,
    pub witness_false: Option<bool>,
    /// The witness has room `R- = O- + 1`.
    pub witness_room_matches: Option<bool>,
}

/// The symmetry and formula for the safety bounds, and the candidate false
/// superabundant statement of room `R-`.
pub fn conjecture_check<V: Verifier>(region: &SafetyRegion, verifier: &V) -> Result<ConjectureReport> {
    let mut dims = region.shape.dims().to_vec();
    dims.sort_unstable();
    let k = dims.len();
    let nk = dims[k - 1];
    let head_sum: i64 = dims[..k - 1].iter().map(|&n| n as i64).sum();
    let formula = (head_sum - 1) * nk as i64;
    let head_prod: u64 = dims[..k - 1].iter().map(|&n| n + 1).product();
    let witness = match head_prod.checked_sub(nk + 1) {
        Some(ak) => {
            let mut a = vec![0; k];
            a[k - 1] = ak;
            Some(Statement::from_parts(&dims, nk, &a)?)
        }
        None => None,
    };
    let witness_false = match &witness {
        Some(w) => Some(!verifier.verify(w)?.is_true()),
        None => None,
    };
    let witness_room_matches = match (&witness, region.o_minus) {
        (Some(w), Some(om)) if !region.super_none_found => Some(w.room() == om + 1),
        _ => None,
    };
    Ok(ConjectureReport {
        shape: region.shape.clone(),
        o_plus: region.o_plus,
        o_minus: region.o_minus,
        symmetric: region.o_minus.map(|om| om == -region.o_plus),
        formula,
        formula_holds: region.o_plus == formula,
        witness,
        witness_false,
        witness_room_matches,
    })
}
