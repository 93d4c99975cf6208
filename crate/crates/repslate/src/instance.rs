//! Core domain types: instances, slates, balanced matchings, and the
//! rank-selection / balance arithmetic everything else is built on.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("rank {r} out of range for a set of {len} values")]
    RankOutOfRange { r: usize, len: usize },
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("malformed matching: {0}")]
    MalformedMatching(String),
    #[error("instance document: {0}")]
    Document(String),
}

/// Identifier of a statement. Unique within an instance; slates are
/// multisets, so the same id may appear several times in a slate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StatementId(pub u64);

impl fmt::Display for StatementId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Agents are indexed `0..n` within an instance.
pub type AgentId = usize;

/// A real value extended with a positive-infinity sentinel, used for the
/// rank-selection convention that rank 0 of any set is infinite.
///
/// Derived `PartialOrd` puts `Finite(_) < Infinity`, and compares finite
/// payloads numerically, which is exactly the intended order.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub enum ExtendedReal {
    Finite(f64),
    Infinity,
}

impl ExtendedReal {
    pub fn as_f64(self) -> f64 {
        match self {
            ExtendedReal::Finite(v) => v,
            ExtendedReal::Infinity => f64::INFINITY,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, ExtendedReal::Infinity)
    }
}

/// Returns the `r`-th largest element of `values`, counting multiplicity.
/// Rank 0 is positive infinity by convention; ranks beyond the multiset
/// size are an error.
pub fn rth_largest(values: &[f64], r: usize) -> Result<ExtendedReal, CoreError> {
    if r == 0 {
        return Ok(ExtendedReal::Infinity);
    }
    if r > values.len() {
        return Err(CoreError::RankOutOfRange {
            r,
            len: values.len(),
        });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    Ok(ExtendedReal::Finite(sorted[r - 1]))
}

/// Per-round removal quotas: the first `n - k*floor(n/k)` rounds get
/// `ceil(n/k)` agents, the rest `floor(n/k)`. Entries sum to `n`.
pub fn balance_quotas(n: usize, k: usize) -> Result<Vec<usize>, CoreError> {
    if k == 0 || n == 0 || k > n {
        return Err(CoreError::InvalidInstance(format!(
            "balance quotas require 1 <= k <= n, got n={n}, k={k}"
        )));
    }
    let floor = n / k;
    let ceil_rounds = n - k * floor;
    Ok((1..=k)
        .map(|j| if j <= ceil_rounds { floor + 1 } else { floor })
        .collect())
}

/// One statement of an instance. `text` and `box_bounds` are both optional
/// payloads: finite universes carry text, box spaces carry interval bounds,
/// fabricated adversarial statements may carry neither.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Statement {
    pub id: StatementId,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    /// Per-dimension closed interval `[lo, hi]`, for box-space statements.
    #[serde(rename = "box", skip_serializing_if = "Option::is_none")]
    pub box_bounds: Option<Vec<[f64; 2]>>,
}

impl Statement {
    pub fn text(id: u64, text: impl Into<String>) -> Self {
        Statement {
            id: StatementId(id),
            text: Some(text.into()),
            box_bounds: None,
        }
    }

    pub fn bare(id: u64) -> Self {
        Statement {
            id: StatementId(id),
            text: None,
            box_bounds: None,
        }
    }

    pub fn with_box(id: u64, bounds: Vec<[f64; 2]>) -> Self {
        Statement {
            id: StatementId(id),
            text: None,
            box_bounds: Some(bounds),
        }
    }
}

/// A statement-selection instance: `n` agents, a finite (possibly growing)
/// statement universe, an `n x |U|` utility matrix, and the slate size `k`.
///
/// Instances are immutable through the public API; only oracles in this
/// crate may append fabricated statements.
#[derive(Debug, Clone)]
pub struct Instance {
    n: usize,
    k: usize,
    statements: Vec<Statement>,
    /// Column-major: one utility column of length `n` per statement.
    columns: Vec<Vec<f64>>,
    index: HashMap<StatementId, usize>,
}

impl Instance {
    /// Build an instance from row-major utilities (`rows[i][j]` = utility of
    /// agent `i` for statement `j`).
    pub fn new(
        k: usize,
        statements: Vec<Statement>,
        rows: Vec<Vec<f64>>,
    ) -> Result<Self, CoreError> {
        let n = rows.len();
        if n == 0 {
            return Err(CoreError::InvalidInstance("no agents".into()));
        }
        if k == 0 || k > n {
            return Err(CoreError::InvalidInstance(format!(
                "slate size k={k} must satisfy 1 <= k <= n={n}"
            )));
        }
        let m = statements.len();
        if m == 0 {
            return Err(CoreError::InvalidInstance(
                "empty statement universe".into(),
            ));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(CoreError::InvalidInstance(format!(
                    "utility row {i} has {} entries, expected {m}",
                    row.len()
                )));
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite()) {
                return Err(CoreError::InvalidInstance(format!(
                    "non-finite utility {v} in row {i}"
                )));
            }
        }
        let mut index = HashMap::with_capacity(m);
        for (j, s) in statements.iter().enumerate() {
            if index.insert(s.id, j).is_some() {
                return Err(CoreError::InvalidInstance(format!(
                    "duplicate statement id {}",
                    s.id
                )));
            }
        }
        let columns = (0..m)
            .map(|j| rows.iter().map(|row| row[j]).collect())
            .collect();
        Ok(Instance {
            n,
            k,
            statements,
            columns,
            index,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn num_statements(&self) -> usize {
        self.statements.len()
    }

    pub fn statements(&self) -> &[Statement] {
        &self.statements
    }

    pub fn statement(&self, idx: usize) -> &Statement {
        &self.statements[idx]
    }

    pub fn index_of(&self, id: StatementId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn agents(&self) -> impl Iterator<Item = AgentId> {
        0..self.n
    }

    /// Utility of `agent` for the statement at universe index `idx`.
    pub fn utility_at(&self, agent: AgentId, idx: usize) -> f64 {
        self.columns[idx][agent]
    }

    pub fn utility(&self, agent: AgentId, id: StatementId) -> Option<f64> {
        self.index_of(id).map(|idx| self.columns[idx][agent])
    }

    /// Full utility column of the statement at universe index `idx`.
    pub fn column(&self, idx: usize) -> &[f64] {
        &self.columns[idx]
    }

    pub fn next_statement_id(&self) -> StatementId {
        StatementId(
            self.statements
                .iter()
                .map(|s| s.id.0 + 1)
                .max()
                .unwrap_or(0),
        )
    }

    /// Append a fabricated statement with its utility column. Crate-private:
    /// only oracles extend a universe.
    pub(crate) fn push_statement(
        &mut self,
        statement: Statement,
        column: Vec<f64>,
    ) -> Result<usize, CoreError> {
        if column.len() != self.n {
            return Err(CoreError::InvalidInstance(format!(
                "utility column has {} entries, expected {}",
                column.len(),
                self.n
            )));
        }
        if self.index.contains_key(&statement.id) {
            return Err(CoreError::InvalidInstance(format!(
                "duplicate statement id {}",
                statement.id
            )));
        }
        let idx = self.statements.len();
        self.index.insert(statement.id, idx);
        self.statements.push(statement);
        self.columns.push(column);
        Ok(idx)
    }
}

/// A multiset of `k` statement references returned by a democratic process.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Slate {
    pub members: Vec<StatementId>,
}

impl Slate {
    pub fn new(members: Vec<StatementId>) -> Self {
        Slate { members }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Assignment of every agent to one slate *slot* (position in the slate).
/// Slots rather than ids: a multiset slate may contain a statement twice,
/// and balance is accounted per slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BalancedMatching {
    /// `slots[i]` is the slate slot agent `i` is matched to.
    pub slots: Vec<usize>,
}

impl BalancedMatching {
    pub fn new(slots: Vec<usize>) -> Self {
        BalancedMatching { slots }
    }

    pub fn slot_of(&self, agent: AgentId) -> usize {
        self.slots[agent]
    }

    /// Per-slot agent counts.
    pub fn loads(&self, k: usize) -> Result<Vec<usize>, CoreError> {
        let mut loads = vec![0usize; k];
        for (agent, &slot) in self.slots.iter().enumerate() {
            if slot >= k {
                return Err(CoreError::MalformedMatching(format!(
                    "agent {agent} assigned to slot {slot}, slate has {k} slots"
                )));
            }
            loads[slot] += 1;
        }
        Ok(loads)
    }
}

/// True iff the matching covers exactly `n` agents and every slate slot
/// holds `floor(n/k)` or `ceil(n/k)` of them.
pub fn is_balanced(matching: &BalancedMatching, n: usize, k: usize) -> Result<bool, CoreError> {
    if matching.slots.len() != n {
        return Err(CoreError::MalformedMatching(format!(
            "matching covers {} agents, instance has {n}",
            matching.slots.len()
        )));
    }
    let loads = matching.loads(k)?;
    let floor = n / k;
    let ceil = floor + usize::from(n % k != 0);
    Ok(loads.iter().all(|&l| l == floor || l == ceil))
}

/// Versioned on-disk form of an [`Instance`]: row-major utilities plus an
/// optional oracle section describing how the universe extends beyond the
/// materialized statements.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceDoc {
    pub version: u32,
    pub n: usize,
    pub k: usize,
    pub statements: Vec<Statement>,
    /// Row-major `n * |U|` utilities.
    pub utilities: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<serde_json::Value>,
    /// The construction spec (including its seed) the instance came from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builder: Option<serde_json::Value>,
}

pub const INSTANCE_DOC_VERSION: u32 = 1;

impl Instance {
    pub fn to_doc(&self) -> InstanceDoc {
        let mut utilities = Vec::with_capacity(self.n * self.num_statements());
        for agent in 0..self.n {
            for col in &self.columns {
                utilities.push(col[agent]);
            }
        }
        InstanceDoc {
            version: INSTANCE_DOC_VERSION,
            n: self.n,
            k: self.k,
            statements: self.statements.clone(),
            utilities,
            oracle: None,
            builder: None,
        }
    }

    pub fn from_doc(doc: &InstanceDoc) -> Result<Self, CoreError> {
        if doc.version != INSTANCE_DOC_VERSION {
            return Err(CoreError::Document(format!(
                "unsupported instance version {}",
                doc.version
            )));
        }
        let m = doc.statements.len();
        if doc.utilities.len() != doc.n * m {
            return Err(CoreError::Document(format!(
                "utilities length {} does not match n*|U| = {}",
                doc.utilities.len(),
                doc.n * m
            )));
        }
        let rows = (0..doc.n)
            .map(|i| doc.utilities[i * m..(i + 1) * m].to_vec())
            .collect();
        Instance::new(doc.k, doc.statements.clone(), rows)
    }
}
