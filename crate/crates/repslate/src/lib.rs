//! Selection of representative statement slates for large groups.
//!
//! The library provides:
//! - core domain types (instances, slates, balanced matchings) and the
//!   rank-selection arithmetic underlying everything else;
//! - query oracles (exact, adversarial, box-space) behind one interface;
//! - democratic processes: a greedy slate builder with a balanced-matching
//!   guarantee, a sampling variant for size-limited queries, and a
//!   subset-enumeration simulation of large generative queries;
//! - verifiers for the representation axioms the processes target;
//! - instance builders and Monte Carlo experiment harnesses;
//! - an LLM-backed query adapter with a scripted offline transport.

pub mod axiom;
pub mod builders;
pub mod experiment;
pub mod instance;
pub mod llm;
pub mod oracle;
pub mod process;
pub mod seed;

pub use instance::{
    balance_quotas, is_balanced, rth_largest, AgentId, BalancedMatching, ExtendedReal, Instance,
    InstanceDoc, Slate, Statement, StatementId,
};
pub use oracle::{QueryOracle, Transcript};
