//! Verification engine for the defectivity of (partial) secant varieties of
//! Segre varieties.
//!
//! Statements `T(n; s; a)` are decided by exact rank computation over prime
//! fields ([`tangent`]), reduced to smaller statements through splitting
//! trees ([`reduction`]), scanned for safety regions ([`safety`]), and
//! bounded by closed-form estimates ([`bounds`]).

pub mod bounds;
pub mod error;
pub mod field;
pub mod reduction;
pub mod safety;
pub mod segre;
pub mod tangent;

#[cfg(test)]
mod oracle;

pub use error::{Error, Result};
pub use segre::{dominates, Abundance, SegreShape, Statement};
pub use tangent::{verify, Verdict, VerificationResult, Verifier, VerifyConfig};
pub use reduction::{
    apply_split, build_tree, check_eligibility, find_proportional_split, reduce, strip_zero_factor,
    verify_tree, NodeVerdict, ReductionTree, Split, TreePolicy,
};
pub use safety::{conjecture_check, safety_region, SafetyRegion};
pub use tangent::MemoVerifier;
