//! Inductive reduction of statements.
//!
//! A statement is split along one factor `j` by partitioning
//! `n_j + 1 = (n'_j + 1) + (n''_j + 1)`, `s = s' + s''` and `a_i = a'_i + a''_i`
//! for `i != j`, with `a'_j = a_j + s''` and `a''_j = a_j + s'`. If both children
//! are true and share the parent's abundance, the parent is true. Room is
//! additive across a split, so a whole tree is eligible exactly when all of
//! its leaves have a common abundance.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segre::{Abundance, Statement};
use crate::tangent::{Verdict, VerificationResult, Verifier};

/// Split spaces up to this size are searched exhaustively.
pub const EXHAUSTIVE_LIMIT: u128 = 1_000_000;

/// One application of the splitting rule on factor `factor`. The `a` vectors
/// are the complete child vectors, including entry `factor`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Split {
    pub factor: usize,
    pub left_dim: u64,
    pub right_dim: u64,
    pub left_s: u64,
    pub right_s: u64,
    pub left_a: Vec<u64>,
    pub right_a: Vec<u64>,
}

impl Split {
    /// Completes a split from the left child's choices. Entry `factor` of
    /// `left_a` is ignored and recomputed.
    pub fn from_left(st: &Statement, factor: usize, left_dim: u64, left_s: u64, left_a: &[u64]) -> Result<Self> {
        let k = st.k();
        if factor >= k {
            return Err(Error::FactorIndex { index: factor, k });
        }
        let n = st.dims()[factor];
        if left_dim >= n {
            return Err(Error::InvalidSplit(format!(
                "cannot cut factor of dimension {n} at {left_dim}"
            )));
        }
        if left_s > st.s() || left_a.len() != k {
            return Err(Error::InvalidSplit("left counts out of range".into()));
        }
        let right_s = st.s() - left_s;
        let mut la = Vec::with_capacity(k);
        let mut ra = Vec::with_capacity(k);
        for i in 0..k {
            if i == factor {
                la.push(st.a()[i] + right_s);
                ra.push(st.a()[i] + left_s);
            } else {
                let ai = st.a()[i];
                if left_a[i] > ai {
                    return Err(Error::InvalidSplit(format!("a'_{i} = {} > a_{i} = {ai}", left_a[i])));
                }
                la.push(left_a[i]);
                ra.push(ai - left_a[i]);
            }
        }
        Ok(Split {
            factor,
            left_dim,
            right_dim: n - 1 - left_dim,
            left_s,
            right_s,
            left_a: la,
            right_a: ra,
        })
    }

    fn validate(&self, st: &Statement) -> Result<()> {
        let k = st.k();
        let j = self.factor;
        let bad = |m: String| Err(Error::InvalidSplit(m));
        if j >= k {
            return Err(Error::FactorIndex { index: j, k });
        }
        if self.left_a.len() != k || self.right_a.len() != k {
            return bad("child a-vectors have the wrong length".into());
        }
        if (self.left_dim + 1) + (self.right_dim + 1) != st.dims()[j] + 1 {
            return bad(format!(
                "({} + 1) + ({} + 1) != {} + 1",
                self.left_dim,
                self.right_dim,
                st.dims()[j]
            ));
        }
        if self.left_s + self.right_s != st.s() {
            return bad(format!("{} + {} != s = {}", self.left_s, self.right_s, st.s()));
        }
        for i in 0..k {
            let ai = st.a()[i];
            if i == j {
                if self.left_a[i] != ai + self.right_s || self.right_a[i] != ai + self.left_s {
                    return bad(format!("partial counts on the split factor {j} must be a_j + s'' and a_j + s'"));
                }
            } else if self.left_a[i] + self.right_a[i] != ai {
                return bad(format!("a'_{i} + a''_{i} != a_{i} = {ai}"));
            }
        }
        Ok(())
    }
}

/// The two children of `st` under `split`.
pub fn apply_split(st: &Statement, split: &Split) -> Result<(Statement, Statement)> {
    split.validate(st)?;
    let child = |dim: u64, s: u64, a: &[u64]| {
        let mut dims = st.dims().to_vec();
        dims[split.factor] = dim;
        Statement::from_parts(&dims, s, a)
    };
    Ok((
        child(split.left_dim, split.left_s, &split.left_a)?,
        child(split.right_dim, split.right_s, &split.right_a)?,
    ))
}

/// A split chosen to divide the room in proportion to the factor cut.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProportionalSplit {
    pub split: Split,
    /// `|R' - gamma' R|` with `gamma' = (n'_j + 1) / (n_j + 1)`.
    pub deviation: Ratio<i128>,
    /// `(1/2) sum_{i != j} n_i`.
    pub bound: Ratio<i128>,
    /// Whether the inputs satisfy the hypotheses under which `deviation <= bound`
    /// is guaranteed.
    pub within_hypotheses: bool,
    /// Whether the split came from exhaustive search (else the constructive walk).
    pub exhaustive: bool,
}

impl ProportionalSplit {
    pub fn within_bound(&self) -> bool {
        self.deviation <= self.bound
    }

    /// Sufficient condition for both children to share the parent's abundance:
    /// `(1/2) sum_{i != j} n_i <= min(gamma', gamma'') |R|`.
    pub fn eligibility_guaranteed(&self, st: &Statement) -> bool {
        let n = st.dims()[self.split.factor] as i128 + 1;
        let small = (self.split.left_dim.min(self.split.right_dim)) as i128 + 1;
        self.bound <= Ratio::new(small * (st.room() as i128).abs(), n)
    }
}

struct Objective {
    /// Room of the left child at `s' = 0`, `a' = 0`.
    base: i128,
    s_weight: i128,
    /// Per-factor weight `n_i + 1`; zero on the split factor.
    a_weight: Vec<i128>,
    factor_size: i128,
    /// `(n'_j + 1) R`, i.e. the target scaled by `n_j + 1`.
    target_scaled: i128,
}

impl Objective {
    fn new(st: &Statement, j: usize, left_dim: u64) -> Self {
        let shape = st.shape();
        let left = left_dim as i128 + 1;
        let base = left * (shape.ambient_without(j) as i128 - st.s() as i128 - st.a()[j] as i128);
        let a_weight = (0..st.k())
            .map(|i| if i == j { 0 } else { shape.factor_size(i) as i128 })
            .collect();
        Objective {
            base,
            s_weight: shape.dim_sum_without(j) as i128,
            a_weight,
            factor_size: shape.factor_size(j) as i128,
            target_scaled: left * st.room() as i128,
        }
    }

    fn left_room(&self, s: u64, a: &[u64]) -> i128 {
        self.base
            - self.s_weight * s as i128
            - a.iter().zip(&self.a_weight).map(|(&x, w)| x as i128 * w).sum::<i128>()
    }

    /// `|R' - gamma' R|` scaled by `n_j + 1`.
    fn scaled_gap(&self, s: u64, a: &[u64]) -> i128 {
        (self.left_room(s, a) * self.factor_size - self.target_scaled).abs()
    }
}

fn check_cut(st: &Statement, j: usize, left_dim: u64) -> Result<()> {
    if j >= st.k() {
        return Err(Error::FactorIndex { index: j, k: st.k() });
    }
    if left_dim >= st.dims()[j] {
        return Err(Error::InvalidSplit(format!(
            "factor {j} of dimension {} cannot be cut with n' = {left_dim}",
            st.dims()[j]
        )));
    }
    Ok(())
}

fn split_space(st: &Statement, j: usize) -> u128 {
    let mut size = st.s() as u128 + 1;
    for (i, &ai) in st.a().iter().enumerate() {
        if i != j {
            size = size.saturating_mul(ai as u128 + 1);
        }
    }
    size
}

fn within_hypotheses(st: &Statement, j: usize) -> bool {
    let others_zero = st.a().iter().enumerate().all(|(i, &x)| i == j || x == 0);
    st.k() >= 3 && st.dims().iter().all(|&n| n >= 1) && (st.s() >= 1 || others_zero)
}

/// Visits every `(s', a')` with `a'_j = 0` in lexicographic order.
fn for_each_choice(st: &Statement, j: usize, mut f: impl FnMut(u64, &[u64])) {
    let k = st.k();
    let mut a = vec![0u64; k];
    for s in 0..=st.s() {
        a.iter_mut().for_each(|x| *x = 0);
        loop {
            f(s, &a);
            // odometer, last coordinate fastest
            let mut i = k;
            loop {
                if i == 0 {
                    break;
                }
                i -= 1;
                if i == j {
                    continue;
                }
                if a[i] < st.a()[i] {
                    a[i] += 1;
                    break;
                }
                a[i] = 0;
            }
            if a.iter().all(|&x| x == 0) {
                break;
            }
        }
    }
}

fn finish(st: &Statement, j: usize, left_dim: u64, s: u64, a: &[u64], gap: i128, exhaustive: bool) -> ProportionalSplit {
    let factor_size = st.shape().factor_size(j) as i128;
    ProportionalSplit {
        split: Split::from_left(st, j, left_dim, s, a).expect("choice within range"),
        deviation: Ratio::new(gap, factor_size),
        bound: Ratio::new(st.shape().dim_sum_without(j) as i128, 2),
        within_hypotheses: within_hypotheses(st, j),
        exhaustive,
    }
}

/// Every legal split for the cut, best first: by deviation, then by
/// lexicographically smallest `(s', a')`.
pub fn ranked_splits(st: &Statement, j: usize, left_dim: u64) -> Result<Vec<ProportionalSplit>> {
    check_cut(st, j, left_dim)?;
    if split_space(st, j) > EXHAUSTIVE_LIMIT {
        return Err(Error::Hypothesis(format!(
            "split space of {st} on factor {j} is too large to rank"
        )));
    }
    let obj = Objective::new(st, j, left_dim);
    let mut all = Vec::new();
    for_each_choice(st, j, |s, a| all.push((obj.scaled_gap(s, a), s, a.to_vec())));
    // stable sort keeps lexicographic order among equal gaps
    all.sort_by_key(|(gap, _, _)| *gap);
    Ok(all
        .into_iter()
        .map(|(gap, s, a)| finish(st, j, left_dim, s, &a, gap, true))
        .collect())
}

/// The split of `st` on factor `j` with `n'_j = left_dim` whose left room is
/// closest to `gamma' R`.
pub fn find_proportional_split(st: &Statement, j: usize, left_dim: u64) -> Result<ProportionalSplit> {
    check_cut(st, j, left_dim)?;
    let obj = Objective::new(st, j, left_dim);
    if split_space(st, j) <= EXHAUSTIVE_LIMIT {
        let mut best: Option<(i128, u64, Vec<u64>)> = None;
        for_each_choice(st, j, |s, a| {
            let gap = obj.scaled_gap(s, a);
            if best.as_ref().is_none_or(|(g, _, _)| gap < *g) {
                best = Some((gap, s, a.to_vec()));
            }
        });
        let (gap, s, a) = best.expect("at least one choice");
        return Ok(finish(st, j, left_dim, s, &a, gap, true));
    }
    let (s, a) = constructive_walk(st, j, &obj);
    let gap = obj.scaled_gap(s, &a);
    Ok(finish(st, j, left_dim, s, &a, gap, false))
}

/// Greedy walk: fill each `a'_i` (largest weight first) as far as the left
/// room stays at or above the target, then round the last free variable.
/// With `s >= 1`, `k >= 3` and every `n_i >= 1`, the rounding step lands
/// within `(1/2) sum_{i != j} n_i` of the target.
fn constructive_walk(st: &Statement, j: usize, obj: &Objective) -> (u64, Vec<u64>) {
    let k = st.k();
    let mut order: Vec<usize> = (0..k).filter(|&i| i != j && st.a()[i] > 0).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(obj.a_weight[i]));
    // variables: (weight, max, slot) where slot k means s'
    let mut vars: Vec<(i128, u64, usize)> = order.iter().map(|&i| (obj.a_weight[i], st.a()[i], i)).collect();
    if st.s() > 0 {
        vars.push((obj.s_weight, st.s(), k));
    }
    let mut a = vec![0u64; k];
    let mut s = 0u64;
    // residual of (left room) - target, in units scaled by n_j + 1
    let mut residual = obj.base * obj.factor_size - obj.target_scaled;
    let n_vars = vars.len();
    for (idx, &(w, max, slot)) in vars.iter().enumerate() {
        let w_scaled = w * obj.factor_size;
        if w_scaled == 0 || residual <= 0 {
            continue;
        }
        let mut take = (residual / w_scaled).min(max as i128);
        if idx + 1 == n_vars && take < max as i128 {
            let rem = residual - take * w_scaled;
            if 2 * rem > w_scaled {
                take += 1;
            }
        }
        residual -= take * w_scaled;
        if slot == k {
            s = take as u64;
        } else {
            a[slot] = take as u64;
        }
    }
    (s, a)
}

/// Which consequences of removing a zero-dimensional factor are sound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Implications {
    /// Stripped true implies original true (always).
    pub lifts_truth: bool,
    /// Original true and subabundant implies stripped true and subabundant.
    pub descends_sub: bool,
    /// Original true and superabundant with `a_i = 0` implies stripped true
    /// and superabundant.
    pub descends_super: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stripped {
    pub statement: Statement,
    pub factor: usize,
    pub implications: Implications,
}

/// Removes the first zero-dimensional factor of `st`.
pub fn strip_zero_factor(st: &Statement) -> Result<Stripped> {
    let factor = st
        .dims()
        .iter()
        .position(|&n| n == 0)
        .ok_or_else(|| Error::NoZeroFactor(st.to_string()))?;
    if st.k() == 1 {
        return Err(Error::Hypothesis(format!("cannot strip the only factor of {st}")));
    }
    let mut dims = st.dims().to_vec();
    let mut a = st.a().to_vec();
    dims.remove(factor);
    let dropped = a.remove(factor);
    let abundance = st.abundance();
    Ok(Stripped {
        statement: Statement::from_parts(&dims, st.s(), &a)?,
        factor,
        implications: Implications {
            lifts_truth: true,
            descends_sub: abundance.is_sub(),
            descends_super: abundance.is_super() && dropped == 0,
        },
    })
}

/// Strips zero factors one at a time until none is left (or one factor remains).
pub fn strip_zero_factors(st: &Statement) -> Result<Vec<Stripped>> {
    let mut chain = vec![strip_zero_factor(st)?];
    loop {
        let last = &chain.last().expect("non-empty").statement;
        match strip_zero_factor(last) {
            Ok(next) => chain.push(next),
            Err(_) => return Ok(chain),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreePolicy {
    /// A node is a leaf once every `n_i` is strictly below this.
    pub leaf_dim_below: u64,
    /// A node is also a leaf once its ambient dimension is at most this.
    pub leaf_max_cols: Option<u64>,
    pub strip_zero_factors: bool,
    /// Cut points by factor dimension, `n -> n'`; central cut otherwise.
    pub cuts: BTreeMap<u64, u64>,
    /// Use the i-th best proportional split instead of the best one.
    pub alternative: usize,
    /// Split the root with this split instead of searching.
    pub root_split: Option<Split>,
}

impl Default for TreePolicy {
    fn default() -> Self {
        Self {
            leaf_dim_below: 3,
            leaf_max_cols: None,
            strip_zero_factors: true,
            cuts: BTreeMap::new(),
            alternative: 0,
            root_split: None,
        }
    }
}

impl TreePolicy {
    fn is_leaf(&self, st: &Statement) -> bool {
        st.dims().iter().all(|&n| n < self.leaf_dim_below)
            || self.leaf_max_cols.is_some_and(|c| st.shape().ambient() <= c)
    }

    /// `n'` for a factor of dimension `n`: `n' + 1 = ceil((n + 1) / 2)` unless
    /// overridden.
    pub fn cut(&self, n: u64) -> u64 {
        self.cuts.get(&n).copied().unwrap_or((n + 1).div_ceil(2) - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeVerdict {
    ProvenTrue,
    ProbablyFalse,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReductionTree {
    pub statement: Statement,
    pub room: i64,
    pub abundance: Abundance,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub split: Option<Split>,
    /// Index of the zero-dimensional factor removed to get the only child.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub strip: Option<usize>,
    pub children: Vec<ReductionTree>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub verdict: Option<NodeVerdict>,
}

impl ReductionTree {
    fn leaf(statement: Statement) -> Self {
        Self {
            room: statement.room(),
            abundance: statement.abundance(),
            statement,
            split: None,
            strip: None,
            children: vec![],
            verdict: None,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// Leaves in left-to-right order.
    pub fn leaves(&self) -> Vec<&ReductionTree> {
        let mut out = Vec::new();
        self.walk(&mut |n| {
            if n.is_leaf() {
                out.push(n)
            }
        });
        out
    }

    pub fn node_count(&self) -> usize {
        let mut count = 0;
        self.walk(&mut |_| count += 1);
        count
    }

    pub fn depth(&self) -> usize {
        1 + self.children.iter().map(ReductionTree::depth).max().unwrap_or(0)
    }

    fn walk<'a>(&'a self, f: &mut impl FnMut(&'a ReductionTree)) {
        f(self);
        for c in &self.children {
            c.walk(f);
        }
    }

    /// Graphviz rendering, one node per statement.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph reduction {\n  node [shape=record];\n");
        let mut next = 0usize;
        self.dot_node(&mut out, &mut next);
        out.push_str("}\n");
        out
    }

    fn dot_node(&self, out: &mut String, next: &mut usize) -> usize {
        let id = *next;
        *next += 1;
        let verdict = match self.verdict {
            Some(NodeVerdict::ProvenTrue) => "proven",
            Some(NodeVerdict::ProbablyFalse) => "probably false",
            Some(NodeVerdict::Inconclusive) => "inconclusive",
            None => "unverified",
        };
        let _ = writeln!(
            out,
            "  n{id} [label=\"{} | {} | {} | {}\"];",
            self.statement, self.room, self.abundance, verdict
        );
        for c in &self.children {
            let cid = c.dot_node(out, next);
            let _ = writeln!(out, "  n{id} -> n{cid};");
        }
        id
    }
}

/// Splits the largest factor with central cuts until every node is a leaf
/// under `policy`; zero factors are stripped on the way when enabled.
pub fn build_tree(st: &Statement, policy: &TreePolicy) -> Result<ReductionTree> {
    if st.k() < 3 {
        return Err(Error::Hypothesis(format!(
            "reduction trees need at least three factors, got {st}"
        )));
    }
    if policy.leaf_dim_below == 0 {
        return Err(Error::Hypothesis("leaf threshold must be at least 1".into()));
    }
    build_node(st, policy, policy.root_split.as_ref())
}

fn build_node(st: &Statement, policy: &TreePolicy, forced: Option<&Split>) -> Result<ReductionTree> {
    let mut node = ReductionTree::leaf(st.clone());
    let split = match forced {
        Some(split) => split.clone(),
        None => {
            if policy.is_leaf(st) {
                return Ok(node);
            }
            if policy.strip_zero_factors && st.k() > 1 && st.dims().contains(&0) {
                let stripped = strip_zero_factor(st)?;
                node.strip = Some(stripped.factor);
                node.children = vec![build_node(&stripped.statement, policy, None)?];
                return Ok(node);
            }
            let (j, &n) = st
                .dims()
                .iter()
                .enumerate()
                .max_by_key(|&(i, n)| (*n, std::cmp::Reverse(i)))
                .expect("k >= 1");
            let left_dim = policy.cut(n);
            if left_dim >= n {
                return Err(Error::InvalidSplit(format!(
                    "cut n' = {left_dim} is not legal for a factor of dimension {n} in {st}"
                )));
            }
            choose_split(st, j, left_dim, policy.alternative)?
        }
    };
    let (left, right) = apply_split(st, &split)?;
    node.children = vec![build_node(&left, policy, None)?, build_node(&right, policy, None)?];
    node.split = Some(split);
    Ok(node)
}

fn choose_split(st: &Statement, j: usize, left_dim: u64, alternative: usize) -> Result<Split> {
    if alternative == 0 || split_space(st, j) > EXHAUSTIVE_LIMIT {
        return Ok(find_proportional_split(st, j, left_dim)?.split);
    }
    let mut ranked = ranked_splits(st, j, left_dim)?;
    let idx = alternative.min(ranked.len() - 1);
    Ok(ranked.swap_remove(idx).split)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeafInfo {
    pub statement: Statement,
    pub room: i64,
    pub abundance: Abundance,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EligibilityReport {
    pub eligible: bool,
    pub leaves: Vec<LeafInfo>,
    pub offending: Vec<LeafInfo>,
}

/// Checks that the leaves of every split component share one abundance.
///
/// A component is a maximal subtree connected by splits; a stripped node ends
/// the component above it (its truth follows from its child without any
/// abundance condition) and starts a new one below.
pub fn check_eligibility(tree: &ReductionTree) -> EligibilityReport {
    let mut leaves = Vec::new();
    let mut offending = Vec::new();
    let mut eligible = true;
    let mut roots = vec![tree];
    while let Some(root) = roots.pop() {
        let mut component = Vec::new();
        collect_component(root, &mut component, &mut roots);
        let info: Vec<LeafInfo> = component
            .iter()
            .map(|n| LeafInfo {
                statement: n.statement.clone(),
                room: n.room,
                abundance: n.abundance,
            })
            .collect();
        let sub = info.iter().filter(|l| l.room > 0).count();
        let sup = info.iter().filter(|l| l.room < 0).count();
        if sub > 0 && sup > 0 {
            eligible = false;
            let drop_super = match root.abundance {
                Abundance::Subabundant => true,
                Abundance::Superabundant => false,
                Abundance::Equiabundant => sup <= sub,
            };
            offending.extend(
                info.iter()
                    .filter(|l| if drop_super { l.room < 0 } else { l.room > 0 })
                    .cloned(),
            );
        }
        leaves.extend(info);
    }
    EligibilityReport {
        eligible,
        leaves,
        offending,
    }
}

fn collect_component<'a>(
    node: &'a ReductionTree,
    leaves: &mut Vec<&'a ReductionTree>,
    roots: &mut Vec<&'a ReductionTree>,
) {
    if node.split.is_some() {
        for c in &node.children {
            collect_component(c, leaves, roots);
        }
    } else {
        leaves.push(node);
        if node.strip.is_some() {
            roots.extend(node.children.iter());
        }
    }
}

/// Verifies every leaf and propagates truth upward, annotating each node.
///
/// The root is proven only when every split component is eligible and every
/// leaf it depends on is proven. A leaf that fails makes its ancestors
/// inconclusive: falseness does not propagate through a split.
pub fn verify_tree<V: Verifier>(tree: &mut ReductionTree, verifier: &V) -> Result<NodeVerdict> {
    if !check_eligibility(tree).eligible {
        return Err(Error::Ineligible);
    }
    let leaves: Vec<Statement> = tree.leaves().iter().map(|l| l.statement.clone()).collect();
    let results: Vec<VerificationResult> = leaves
        .par_iter()
        .map(|st| verifier.verify(st))
        .collect::<Result<_>>()?;
    let mut it = results.into_iter();
    annotate(tree, &mut it, verifier)
}

fn annotate<V: Verifier>(
    node: &mut ReductionTree,
    leaf_results: &mut impl Iterator<Item = VerificationResult>,
    verifier: &V,
) -> Result<NodeVerdict> {
    let verdict = if node.is_leaf() {
        match leaf_results.next().expect("one result per leaf").verdict {
            Verdict::ProvenTrue => NodeVerdict::ProvenTrue,
            Verdict::ProbablyFalse => NodeVerdict::ProbablyFalse,
        }
    } else if node.strip.is_some() {
        match annotate(&mut node.children[0], leaf_results, verifier)? {
            NodeVerdict::ProvenTrue => NodeVerdict::ProvenTrue,
            _ => match verifier.verify(&node.statement)?.verdict {
                Verdict::ProvenTrue => NodeVerdict::ProvenTrue,
                Verdict::ProbablyFalse => NodeVerdict::Inconclusive,
            },
        }
    } else {
        let mut all = true;
        for c in &mut node.children {
            all &= annotate(c, leaf_results, verifier)? == NodeVerdict::ProvenTrue;
        }
        if all {
            NodeVerdict::ProvenTrue
        } else {
            NodeVerdict::Inconclusive
        }
    };
    node.verdict = Some(verdict);
    Ok(verdict)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReduceOutcome {
    pub verdict: NodeVerdict,
    pub attempts: usize,
    pub eligibility: EligibilityReport,
    pub tree: ReductionTree,
}

/// Builds and verifies trees, moving to the next-best split on each retry.
/// Reports the first proven tree, or the best near miss.
pub fn reduce<V: Verifier>(st: &Statement, policy: &TreePolicy, verifier: &V, retries: usize) -> Result<ReduceOutcome> {
    let mut near_miss: Option<(usize, ReduceOutcome)> = None;
    for attempt in 0..=retries {
        let policy = TreePolicy {
            alternative: policy.alternative + attempt,
            ..policy.clone()
        };
        let mut tree = build_tree(st, &policy)?;
        let eligibility = check_eligibility(&tree);
        let (verdict, misses) = if eligibility.eligible {
            let v = verify_tree(&mut tree, verifier)?;
            let misses = tree
                .leaves()
                .iter()
                .filter(|l| l.verdict != Some(NodeVerdict::ProvenTrue))
                .count();
            (v, misses)
        } else {
            (NodeVerdict::Inconclusive, usize::MAX / 2 + eligibility.offending.len())
        };
        let outcome = ReduceOutcome {
            verdict,
            attempts: attempt + 1,
            eligibility,
            tree,
        };
        if verdict == NodeVerdict::ProvenTrue {
            return Ok(outcome);
        }
        if near_miss.as_ref().is_none_or(|(m, _)| misses < *m) {
            near_miss = Some((misses, outcome));
        }
        if policy.root_split.is_some() {
            break;
        }
    }
    let (_, mut outcome) = near_miss.expect("at least one attempt");
    outcome.verdict = NodeVerdict::Inconclusive;
    outcome.attempts = retries + 1;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tangent::{verify, VerifyConfig};
    use proptest::prelude::*;

    fn st(dims: &[u64], s: u64, a: &[u64]) -> Statement {
        Statement::from_parts(dims, s, a).unwrap()
    }

    fn fine_policy() -> TreePolicy {
        TreePolicy {
            leaf_dim_below: 2,
            ..TreePolicy::default()
        }
    }

    #[test]
    fn apply_split_examples() {
        let parent = st(&[1, 1, 3], 2, &[0, 0, 0]);
        let split = Split::from_left(&parent, 2, 1, 1, &[0, 0, 0]).unwrap();
        let (l, r) = apply_split(&parent, &split).unwrap();
        assert_eq!(l, st(&[1, 1, 1], 1, &[0, 0, 1]));
        assert_eq!(r, st(&[1, 1, 1], 1, &[0, 0, 1]));
        assert_eq!((l.room(), r.room(), parent.room()), (2, 2, 4));

        let parent = st(&[1, 1, 1], 1, &[0, 0, 0]);
        let split = Split::from_left(&parent, 2, 0, 1, &[0, 0, 0]).unwrap();
        let (l, r) = apply_split(&parent, &split).unwrap();
        assert_eq!(l, st(&[1, 1, 0], 1, &[0, 0, 0]));
        assert_eq!(r, st(&[1, 1, 0], 0, &[0, 0, 1]));
    }

    #[test]
    fn apply_split_rejects_bad_arithmetic() {
        let parent = st(&[1, 1, 3], 2, &[1, 0, 0]);
        let good = Split::from_left(&parent, 2, 1, 1, &[1, 0, 0]).unwrap();
        let mut bad = good.clone();
        bad.right_s = 2;
        assert!(matches!(apply_split(&parent, &bad), Err(Error::InvalidSplit(_))));
        let mut bad = good.clone();
        bad.right_a[0] = 1;
        assert!(matches!(apply_split(&parent, &bad), Err(Error::InvalidSplit(_))));
        let mut bad = good.clone();
        bad.left_a[2] = 0;
        assert!(matches!(apply_split(&parent, &bad), Err(Error::InvalidSplit(_))));
        let mut bad = good.clone();
        bad.right_dim = 2;
        assert!(matches!(apply_split(&parent, &bad), Err(Error::InvalidSplit(_))));
        let mut bad = good;
        bad.factor = 5;
        assert!(matches!(apply_split(&parent, &bad), Err(Error::FactorIndex { .. })));
        assert!(Split::from_left(&parent, 0, 1, 0, &[0, 0, 0]).is_err());
    }

    #[test]
    fn proportional_split_example() {
        let parent = st(&[1, 1, 3], 2, &[0, 0, 0]);
        let ps = find_proportional_split(&parent, 2, 1).unwrap();
        let (l, r) = apply_split(&parent, &ps.split).unwrap();
        assert_eq!((l.room(), r.room()), (2, 2));
        assert_eq!(ps.deviation, Ratio::from_integer(0));
        assert_eq!(ps.bound, Ratio::from_integer(1));
        assert!(ps.within_hypotheses && ps.exhaustive && ps.within_bound());
        assert!(ps.eligibility_guaranteed(&parent));
    }

    #[test]
    fn ranked_splits_lead_with_the_best() {
        let parent = st(&[2, 3, 3], 3, &[1, 2, 0]);
        let ranked = ranked_splits(&parent, 1, 1).unwrap();
        assert_eq!(ranked.len(), 4 * 2);
        assert_eq!(ranked[0], find_proportional_split(&parent, 1, 1).unwrap());
        assert!(ranked.windows(2).all(|w| w[0].deviation <= w[1].deviation));
    }

    #[test]
    fn constructive_walk_respects_bound() {
        // Exercise the walk directly on statements small enough to compare.
        for (dims, s, a, j, cut) in [
            (vec![3u64, 3, 3], 5u64, vec![2u64, 1, 0], 2usize, 1u64),
            (vec![2, 4, 3, 1], 4, vec![1, 0, 3, 2], 1, 1),
            (vec![1, 1, 5], 7, vec![4, 4, 2], 2, 2),
            (vec![6, 6, 6, 6, 6], 40, vec![9, 0, 11, 3, 7], 3, 3),
        ] {
            let x = st(&dims, s, &a);
            let obj = Objective::new(&x, j, cut);
            let (ws, wa) = constructive_walk(&x, j, &obj);
            let gap = obj.scaled_gap(ws, &wa);
            let walked = finish(&x, j, cut, ws, &wa, gap, false);
            assert!(walked.within_bound(), "{x}: {:?}", walked.deviation);
            apply_split(&x, &walked.split).unwrap();
        }
    }

    #[test]
    fn large_spaces_use_the_walk() {
        let x = st(&[7, 7, 7, 7], 200, &[30, 40, 20, 10]);
        let ps = find_proportional_split(&x, 0, 3).unwrap();
        assert!(!ps.exhaustive);
        assert!(ps.within_hypotheses && ps.within_bound());
        let (l, r) = apply_split(&x, &ps.split).unwrap();
        assert_eq!(l.room() + r.room(), x.room());
    }

    #[test]
    fn hypotheses_flag() {
        assert!(!find_proportional_split(&st(&[1, 1, 3], 0, &[2, 0, 0]), 2, 1).unwrap().within_hypotheses);
        assert!(find_proportional_split(&st(&[1, 1, 3], 0, &[0, 0, 5]), 2, 1).unwrap().within_hypotheses);
        assert!(!find_proportional_split(&st(&[1, 3], 2, &[0, 0]), 1, 1).unwrap().within_hypotheses);
        assert!(find_proportional_split(&st(&[1, 1, 0], 1, &[0, 0, 0]), 2, 0).is_err());
    }

    #[test]
    fn s_zero_with_only_split_factor_counts_is_exact() {
        let x = st(&[1, 2, 3], 0, &[0, 0, 3]);
        let ps = find_proportional_split(&x, 2, 1).unwrap();
        assert_eq!(ps.deviation, Ratio::from_integer(0));
    }

    #[test]
    fn strip_examples() {
        let x = st(&[0, 1, 1], 1, &[0, 0, 0]);
        let s = strip_zero_factor(&x).unwrap();
        assert_eq!(s.statement, st(&[1, 1], 1, &[0, 0]));
        assert_eq!((x.room(), s.statement.room()), (1, 1));
        assert!(s.implications.lifts_truth && s.implications.descends_sub);
        assert!(!s.implications.descends_super);

        let y = st(&[0, 1, 1], 1, &[2, 0, 0]);
        assert_eq!(y.abundance(), Abundance::Superabundant);
        let s = strip_zero_factor(&y).unwrap();
        assert!(!s.implications.descends_sub && !s.implications.descends_super);
        let y0 = st(&[0, 1, 1], 2, &[0, 0, 0]);
        assert!(strip_zero_factor(&y0).unwrap().implications.descends_super);

        let z = st(&[0, 0, 1, 1], 2, &[1, 0, 0, 1]);
        let chain = strip_zero_factors(&z).unwrap();
        assert_eq!(chain.len(), 2);
        assert_eq!(chain[1].statement, st(&[1, 1], 2, &[0, 1]));

        assert!(matches!(strip_zero_factor(&st(&[1, 1], 1, &[0, 0])), Err(Error::NoZeroFactor(_))));
        assert!(strip_zero_factor(&st(&[0], 1, &[0])).is_err());
    }

    #[test]
    fn stripping_is_sound_on_small_cases() {
        // stripped true => original true, by direct verification
        let cfg = VerifyConfig::default();
        for (d, s, a) in [
            (vec![0u64, 1, 1], 1u64, vec![2u64, 0, 0]),
            (vec![0, 1, 2], 2, vec![1, 0, 1]),
            (vec![0, 2, 2], 1, vec![3, 1, 0]),
        ] {
            let x = st(&d, s, &a);
            let stripped = strip_zero_factor(&x).unwrap().statement;
            if verify(&stripped, &cfg).unwrap().is_true() {
                assert!(verify(&x, &cfg).unwrap().is_true(), "{x}");
            }
        }
    }

    #[test]
    fn tree_for_p1_p1_p3() {
        let root = st(&[1, 1, 3], 2, &[0, 0, 0]);
        let mut tree = build_tree(&root, &TreePolicy::default()).unwrap();
        assert_eq!(tree.node_count(), 3);
        assert_eq!(tree.depth(), 2);
        let leaves: Vec<_> = tree.leaves().iter().map(|l| l.statement.clone()).collect();
        assert_eq!(leaves, vec![st(&[1, 1, 1], 1, &[0, 0, 1]); 2]);
        assert!(check_eligibility(&tree).eligible);
        let v = verify_tree(&mut tree, &VerifyConfig::default()).unwrap();
        assert_eq!(v, NodeVerdict::ProvenTrue);
        let dot = tree.to_dot();
        assert!(dot.contains("T(1,1,3;2;0,0,0) | 4 | sub | proven"));
        assert_eq!(dot.matches("->").count(), 2);
    }

    #[test]
    fn tree_for_p3_fourth_power() {
        let root = st(&[3, 3, 3, 3], 10, &[0; 4]);
        let tree = build_tree(&root, &TreePolicy::default()).unwrap();
        assert_eq!(tree.leaves().len(), 16);
        assert!(tree.leaves().iter().all(|l| l.statement.dims() == [1, 1, 1, 1]));
        let sum: i64 = tree.leaves().iter().map(|l| l.room).sum();
        assert_eq!(sum, root.room());
        assert_eq!(tree.depth(), 5);
    }

    #[test]
    fn leaf_count_matches_halving_schedule() {
        // n_i + 1 = 2^{d_i} c with c = 2 and c = 3
        for (dims, c, d_sum) in [
            (vec![7u64, 3, 1], 2u64, 3u32),
            (vec![3, 3, 3], 2, 3),
            (vec![5, 2, 11], 3, 3),
            (vec![2, 2, 2, 5], 3, 1),
            (vec![15, 7, 3], 2, 6),
        ] {
            let root = Statement::from_parts(&dims, 1, &vec![0; dims.len()]).unwrap();
            let policy = TreePolicy {
                leaf_dim_below: c,
                ..TreePolicy::default()
            };
            let tree = build_tree(&root, &policy).unwrap();
            assert_eq!(tree.leaves().len(), 1 << d_sum, "{root}");
            assert!(tree.leaves().iter().all(|l| l.statement.dims().iter().all(|&n| n == c - 1)));
        }
    }

    #[test]
    fn eligibility_reports() {
        let mk = |rooms: &[i64]| {
            // synthesize a one-split tree with the given leaf rooms
            let leaf = |r: i64| {
                let mut t = ReductionTree::leaf(st(&[1, 1, 1], 0, &[0, 0, 0]));
                t.room = r;
                t.abundance = Abundance::from_room(r);
                t
            };
            let total: i64 = rooms.iter().sum();
            let mut root = ReductionTree::leaf(st(&[1, 1, 3], 0, &[0, 0, 0]));
            root.room = total;
            root.abundance = Abundance::from_room(total);
            root.split = Some(Split::from_left(&root.statement, 2, 1, 0, &[0, 0, 0]).unwrap());
            root.children = rooms.iter().map(|&r| leaf(r)).collect();
            check_eligibility(&root)
        };
        assert!(mk(&[2, 2]).eligible);
        let bad = mk(&[3, -1]);
        assert!(!bad.eligible);
        assert_eq!(bad.offending.len(), 1);
        assert_eq!(bad.offending[0].room, -1);
        assert!(mk(&[0, 5]).eligible);
        assert!(mk(&[0, -5]).eligible);
    }

    #[test]
    fn ineligible_tree_is_rejected() {
        // leaf rooms 2 and -4 under a superabundant parent
        let root = st(&[1, 1, 3], 3, &[0, 0, 0]);
        let forced = Split::from_left(&root, 2, 1, 0, &[0, 0, 0]).unwrap();
        let policy = TreePolicy {
            root_split: Some(forced),
            ..TreePolicy::default()
        };
        let mut tree = build_tree(&root, &policy).unwrap();
        let report = check_eligibility(&tree);
        assert!(!report.eligible);
        assert!(matches!(verify_tree(&mut tree, &VerifyConfig::default()), Err(Error::Ineligible)));
        let outcome = reduce(&root, &policy, &VerifyConfig::default(), 3).unwrap();
        assert_eq!(outcome.verdict, NodeVerdict::Inconclusive);
        assert!(!outcome.eligibility.eligible);
    }

    #[test]
    fn failing_leaf_makes_root_inconclusive() {
        // (P1)^4 with s = 3 is defective; embed it as a leaf of a split of (P1)^3 x P3.
        let root = st(&[1, 1, 1, 3], 6, &[0; 4]);
        let policy = fine_policy();
        let mut tree = build_tree(&root, &policy).unwrap();
        if check_eligibility(&tree).eligible {
            let v = verify_tree(&mut tree, &VerifyConfig::default()).unwrap();
            let any_false = tree.leaves().iter().any(|l| l.verdict == Some(NodeVerdict::ProbablyFalse));
            assert_eq!(v == NodeVerdict::ProvenTrue, !any_false);
        }
        // A verifier that rejects everything can never yield a proof.
        struct Never;
        impl Verifier for Never {
            fn verify(&self, st: &Statement) -> Result<VerificationResult> {
                Ok(VerificationResult {
                    statement: st.clone(),
                    verdict: Verdict::ProbablyFalse,
                    best_rank: 0,
                    expected: st.expected_dim(),
                    deficiency: st.expected_dim(),
                    trials_run: 1,
                    primes_used: vec![],
                    seeds_used: vec![],
                })
            }
        }
        let mut tree = build_tree(&st(&[1, 1, 3], 2, &[0, 0, 0]), &TreePolicy::default()).unwrap();
        assert_eq!(verify_tree(&mut tree, &Never).unwrap(), NodeVerdict::Inconclusive);
        assert_eq!(tree.verdict, Some(NodeVerdict::Inconclusive));
    }

    #[test]
    fn strips_zero_factors_in_trees() {
        let root = st(&[2, 2, 2], 2, &[0, 0, 0]);
        let tree = build_tree(&root, &fine_policy()).unwrap();
        let mut saw_strip = false;
        tree.walk(&mut |n| saw_strip |= n.strip.is_some());
        assert!(saw_strip);
        assert!(tree.leaves().iter().all(|l| l.statement.dims().iter().all(|&n| n < 2)));
    }

    #[test]
    fn tree_json_shape() {
        let tree = build_tree(&st(&[1, 1, 3], 2, &[0, 0, 0]), &TreePolicy::default()).unwrap();
        let v = serde_json::to_value(&tree).unwrap();
        assert_eq!(v["statement"]["shape"], serde_json::json!([1, 1, 3]));
        assert_eq!(v["children"].as_array().unwrap().len(), 2);
        assert!(v["split"].is_object());
        let back: ReductionTree = serde_json::from_value(v).unwrap();
        assert_eq!(back, tree);
    }

    #[test]
    fn build_tree_rejects_small_k() {
        assert!(build_tree(&st(&[3, 3], 1, &[0, 0]), &TreePolicy::default()).is_err());
    }

    fn arb_split() -> impl Strategy<Value = (Statement, Split)> {
        (3usize..=5)
            .prop_flat_map(|k| {
                (
                    proptest::collection::vec(1u64..=6, k),
                    0u64..30,
                    proptest::collection::vec(0u64..8, k),
                    0..k,
                    any::<u64>(),
                )
            })
            .prop_map(|(dims, s, a, j, r)| {
                let x = Statement::from_parts(&dims, s, &a).unwrap();
                let left_dim = r % dims[j];
                let left_s = (r >> 8) % (s + 1);
                let left_a: Vec<u64> = a.iter().enumerate().map(|(i, &ai)| (r >> (12 + 4 * i)) % (ai + 1)).collect();
                let split = Split::from_left(&x, j, left_dim, left_s, &left_a).unwrap();
                (x, split)
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn room_is_additive((x, split) in arb_split()) {
            let (l, r) = apply_split(&x, &split).unwrap();
            prop_assert_eq!(l.room() + r.room(), x.room());
            prop_assert_eq!(split.left_a[split.factor], x.a()[split.factor] + split.right_s);
            prop_assert_eq!(split.right_a[split.factor], x.a()[split.factor] + split.left_s);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]

        #[test]
        fn proportional_bound_holds((x, split) in arb_split()) {
            prop_assume!(x.s() >= 1);
            let j = split.factor;
            let ps = find_proportional_split(&x, j, split.left_dim).unwrap();
            prop_assert!(ps.within_hypotheses);
            prop_assert!(ps.within_bound(), "{} on {}: {:?}", x, j, ps.deviation);
            // exhaustive optimum agrees with a direct scan of all splits
            let best = ranked_splits(&x, j, split.left_dim).unwrap()[0].deviation;
            prop_assert_eq!(best, ps.deviation);
            let obj = Objective::new(&x, j, split.left_dim);
            let (ws, wa) = constructive_walk(&x, j, &obj);
            let walked = finish(&x, j, split.left_dim, ws, &wa, obj.scaled_gap(ws, &wa), false);
            prop_assert!(walked.within_bound());
            if ps.eligibility_guaranteed(&x) {
                let (l, r) = apply_split(&x, &ps.split).unwrap();
                prop_assert!(l.abundance().compatible(x.abundance()) && r.abundance().compatible(x.abundance()));
            }
        }
    }
}
