//! Query oracles: the discriminative/generative interface through which
//! democratic processes access an instance, plus three implementations
//! (exact finite-matrix, adversarial lazy-fabrication, structured box space).

use crate::instance::{AgentId, CoreError, ExtendedReal, Instance, StatementId};
use serde::{Deserialize, Serialize};
use thiserror::Error;

mod adversarial;
mod boxspace;
mod exact;

pub use adversarial::{AdversarialConfig, AdversarialOracle, Construction};
pub use boxspace::{BoxOracle, BoxRegion, BoxSpace};
pub use exact::ExactOracle;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("generative query set of size {size} exceeds the oracle's size limit {limit}")]
    SizeLimit { size: usize, limit: usize },
    #[error("rank {r} out of range for a query set of size {size}")]
    RankOutOfRange { r: usize, size: usize },
    #[error("empty agent set in generative query")]
    EmptyAgentSet,
    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),
    #[error("unknown statement {0}")]
    UnknownStatement(StatementId),
    #[error(transparent)]
    Core(#[from] CoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryKind {
    Disc,
    Gen,
}

/// One transcript entry. For discriminative queries `set_size` is 1 and
/// `r` is absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub kind: QueryKind,
    pub set_size: usize,
    pub r: Option<usize>,
    pub statement: StatementId,
}

/// Append-only log of every query answered by an oracle.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Transcript {
    pub entries: Vec<QueryRecord>,
}

impl Transcript {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn gen_entries(&self) -> impl Iterator<Item = &QueryRecord> {
        self.entries.iter().filter(|e| e.kind == QueryKind::Gen)
    }

    pub(crate) fn log_disc(&mut self, statement: StatementId) {
        self.entries.push(QueryRecord {
            kind: QueryKind::Disc,
            set_size: 1,
            r: None,
            statement,
        });
    }

    pub(crate) fn log_gen(&mut self, set_size: usize, r: usize, statement: StatementId) {
        self.entries.push(QueryRecord {
            kind: QueryKind::Gen,
            set_size,
            r: Some(r),
            statement,
        });
    }

    /// CSV export: `query_index,kind,set_size,r,statement_id`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("query_index,kind,set_size,r,statement_id\n");
        for (i, e) in self.entries.iter().enumerate() {
            let kind = match e.kind {
                QueryKind::Disc => "disc",
                QueryKind::Gen => "gen",
            };
            let r = e.r.map(|r| r.to_string()).unwrap_or_default();
            out.push_str(&format!("{i},{kind},{},{r},{}\n", e.set_size, e.statement));
        }
        out
    }
}

/// The query interface a democratic process runs against.
///
/// `gen` takes the agent set sorted by id (callers in this crate keep their
/// remaining-agent sets sorted) and an integer rank `r` in `[0, |agents|]`.
pub trait QueryOracle {
    /// Utility of `agent` for `statement`, exactly.
    fn disc(&mut self, agent: AgentId, statement: StatementId) -> Result<f64, OracleError>;

    /// A statement maximizing the `r`-th largest utility within `agents`.
    fn gen(&mut self, agents: &[AgentId], r: usize) -> Result<StatementId, OracleError>;

    /// The oracle's current view of the universe, including any statements
    /// fabricated by earlier queries.
    fn instance(&self) -> &Instance;

    /// Generative size limit `t`, if any.
    fn size_limit(&self) -> Option<usize>;

    fn transcript(&self) -> &Transcript;

    /// Designated inert statement used by the sampling process when a round
    /// draws too few surviving agents.
    fn fallback_statement(&self) -> StatementId {
        self.instance().statement(0).id
    }
}

pub(crate) fn check_gen_preconditions(
    agents: &[AgentId],
    r: usize,
    n: usize,
    limit: Option<usize>,
) -> Result<(), OracleError> {
    if agents.is_empty() {
        return Err(OracleError::EmptyAgentSet);
    }
    if let Some(t) = limit {
        if agents.len() > t {
            return Err(OracleError::SizeLimit {
                size: agents.len(),
                limit: t,
            });
        }
    }
    if r > agents.len() {
        return Err(OracleError::RankOutOfRange {
            r,
            size: agents.len(),
        });
    }
    if let Some(&bad) = agents.iter().find(|&&a| a >= n) {
        return Err(OracleError::UnknownAgent(bad));
    }
    Ok(())
}

/// Exhaustive scan of a finite universe: the statement (by lowest index on
/// ties) maximizing the `r`-th largest utility within `agents`, with the
/// value attained.
pub(crate) fn best_statement_by_rank(
    instance: &Instance,
    agents: &[AgentId],
    r: usize,
) -> (usize, ExtendedReal) {
    debug_assert!(!agents.is_empty() && r <= agents.len());
    let mut best_idx = 0;
    let mut best_val: Option<ExtendedReal> = None;
    for idx in 0..instance.num_statements() {
        let values: Vec<f64> = agents
            .iter()
            .map(|&a| instance.utility_at(a, idx))
            .collect();
        let val = crate::instance::rth_largest(&values, r).expect("rank checked");
        if best_val.map_or(true, |b| val > b) {
            best_val = Some(val);
            best_idx = idx;
        }
    }
    (best_idx, best_val.expect("non-empty universe"))
}
