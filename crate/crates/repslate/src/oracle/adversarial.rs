//! Adversarial oracle for the size-constrained impossibility constructions.
//!
//! Both constructions drown a handful of "popular" statements in a sea of
//! "unpopular" ones whose supports are tailored to the query sets, so that
//! size-bounded generative queries never have to reveal a popular
//! statement. The unpopular universe is exponential, so statements are
//! fabricated lazily and persisted into the instance, giving post-run axiom
//! checks a concrete finite universe.

use super::{check_gen_preconditions, OracleError, QueryOracle, Transcript};
use crate::instance::{AgentId, Instance, Statement, StatementId};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Which impossibility construction the oracle is configured with.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "construction")]
pub enum Construction {
    /// One popular statement approved by everyone; an unpopular statement
    /// with support exactly `S` for every agent set `S` of size at most `t`.
    SinglePopular,
    /// Agents carry i.i.d. colors; one popular statement per color; an
    /// unpopular statement for every agent set of size exactly
    /// `support_size = n/(2k)`.
    ColorOvershadow {
        /// Agent colors, values in `1..=k/2`.
        colors: Vec<u32>,
        support_size: usize,
    },
}

/// Construction plus the generative size limit `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialConfig {
    pub t: usize,
    #[serde(flatten)]
    pub construction: Construction,
}

#[derive(Debug, Clone)]
pub struct AdversarialOracle {
    instance: Instance,
    config: AdversarialConfig,
    /// Ids of the popular statements (prefix of the universe).
    popular: Vec<StatementId>,
    /// Fabricated supports, deduplicated.
    by_support: HashMap<Vec<AgentId>, StatementId>,
    transcript: Transcript,
}

impl AdversarialOracle {
    /// `instance` must hold exactly the construction's popular statements
    /// (its materialized prefix); everything else is fabricated on demand.
    pub fn new(instance: Instance, config: AdversarialConfig) -> Self {
        let popular = instance.statements().iter().map(|s| s.id).collect();
        AdversarialOracle {
            instance,
            config,
            popular,
            by_support: HashMap::new(),
            transcript: Transcript::default(),
        }
    }

    pub fn config(&self) -> &AdversarialConfig {
        &self.config
    }

    pub fn popular_statements(&self) -> &[StatementId] {
        &self.popular
    }

    pub fn into_instance(self) -> Instance {
        self.instance
    }

    /// Best utility-1 coverage of `agents` attainable by an unpopular
    /// statement.
    fn best_unpopular_coverage(&self, agents: &[AgentId]) -> usize {
        match &self.config.construction {
            Construction::SinglePopular => agents.len(),
            Construction::ColorOvershadow { support_size, .. } => agents.len().min(*support_size),
        }
    }

    /// Coverage of the best popular statement, with the statement's index.
    fn best_popular(&self, agents: &[AgentId]) -> (usize, usize) {
        match &self.config.construction {
            Construction::SinglePopular => (agents.len(), 0),
            Construction::ColorOvershadow { colors, .. } => {
                let mut counts: HashMap<u32, usize> = HashMap::new();
                for &a in agents {
                    *counts.entry(colors[a]).or_insert(0) += 1;
                }
                let (best_color, best_count) = counts
                    .into_iter()
                    .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
                    .expect("non-empty agent set");
                (best_count, (best_color - 1) as usize)
            }
        }
    }

    /// Fabricate (or reuse) the unpopular statement answering a query on
    /// `agents`: its support takes the first `coverage` members of `agents`
    /// and, for the fixed-support-size construction, pads with the
    /// lowest-id agents outside the query set.
    fn fabricate_unpopular(&mut self, agents: &[AgentId]) -> StatementId {
        let n = self.instance.n();
        let coverage = self.best_unpopular_coverage(agents);
        let mut support: Vec<AgentId> = agents[..coverage].to_vec();
        if let Construction::ColorOvershadow { support_size, .. } = &self.config.construction {
            let target = *support_size;
            let mut outside = (0..n).filter(|a| !agents.contains(a));
            while support.len() < target {
                support.push(outside.next().expect("support size at most n"));
            }
        }
        support.sort_unstable();
        if let Some(&id) = self.by_support.get(&support) {
            return id;
        }
        let id = self.instance.next_statement_id();
        let mut column = vec![0.0; n];
        for &a in &support {
            column[a] = 1.0;
        }
        self.instance
            .push_statement(Statement::bare(id.0), column)
            .expect("fresh statement id");
        self.by_support.insert(support, id);
        id
    }
}

impl QueryOracle for AdversarialOracle {
    fn disc(&mut self, agent: AgentId, statement: StatementId) -> Result<f64, OracleError> {
        if agent >= self.instance.n() {
            return Err(OracleError::UnknownAgent(agent));
        }
        let u = self
            .instance
            .utility(agent, statement)
            .ok_or(OracleError::UnknownStatement(statement))?;
        self.transcript.log_disc(statement);
        Ok(u)
    }

    /// Most-favorable tie-breaking: answer with a statement covering as
    /// many query agents as possible, preferring unpopular statements
    /// whenever one ties with the best popular coverage.
    fn gen(&mut self, agents: &[AgentId], r: usize) -> Result<StatementId, OracleError> {
        check_gen_preconditions(agents, r, self.instance.n(), Some(self.config.t))?;
        let unpop = self.best_unpopular_coverage(agents);
        let (pop, pop_idx) = self.best_popular(agents);
        let id = if pop > unpop {
            self.popular[pop_idx]
        } else {
            self.fabricate_unpopular(agents)
        };
        self.transcript.log_gen(agents.len(), r, id);
        Ok(id)
    }

    fn instance(&self) -> &Instance {
        &self.instance
    }

    fn size_limit(&self) -> Option<usize> {
        Some(self.config.t)
    }

    fn transcript(&self) -> &Transcript {
        &self.transcript
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builders::{build, ConstructionSpec};

    #[test]
    fn single_popular_fabricates_on_the_query_set() {
        let built = build(&ConstructionSpec::SinglePopular { n: 8, k: 2 }).unwrap();
        let mut o = built.into_oracle().unwrap();
        let id = o.gen(&[2, 5], 1).unwrap();
        let inst = o.instance();
        let idx = inst.index_of(id).unwrap();
        // utility 1 exactly on the queried pair
        let expected: Vec<f64> = (0..8)
            .map(|a| if a == 2 || a == 5 { 1.0 } else { 0.0 })
            .collect();
        assert_eq!(inst.column(idx), &expected[..]);
        // repeated query reuses the fabricated statement
        let again = o.gen(&[2, 5], 1).unwrap();
        assert_eq!(id, again);
    }

    #[test]
    fn single_popular_rejects_oversized_sets() {
        let built = build(&ConstructionSpec::SinglePopular { n: 8, k: 2 }).unwrap();
        let mut o = built.into_oracle().unwrap();
        assert!(matches!(
            o.gen(&[0, 1, 2], 1),
            Err(OracleError::SizeLimit { size: 3, limit: 2 })
        ));
    }

    #[test]
    fn overshadow_pads_support_to_fixed_size() {
        // n=8, k=2: one color, support size n/(2k) = 2, t = 1
        let built = build(&ConstructionSpec::ColorOvershadow {
            n: 8,
            k: 2,
            seed: 3,
        })
        .unwrap();
        let mut o = built.into_oracle().unwrap();
        let id = o.gen(&[4], 1).unwrap();
        let inst = o.instance();
        let idx = inst.index_of(id).unwrap();
        let support: Vec<usize> = inst
            .column(idx)
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == 1.0)
            .map(|(a, _)| a)
            .collect();
        assert_eq!(support, vec![0, 4]); // queried agent plus lowest-id padding
    }

    #[test]
    fn popular_returned_only_when_it_strictly_beats_every_unpopular_option() {
        // n=48, k=6: support size n/(2k) = 4, t = n/8 = 6, colors in {1,2,3}
        let built = build(&ConstructionSpec::ColorOvershadow {
            n: 48,
            k: 6,
            seed: 1,
        })
        .unwrap();
        let cfg = match &built.oracle_spec {
            crate::builders::OracleSpec::Adversarial(cfg) => cfg.clone(),
            _ => unreachable!(),
        };
        let colors = match &cfg.construction {
            Construction::ColorOvershadow { colors, .. } => colors.clone(),
            _ => unreachable!(),
        };
        let mut o = AdversarialOracle::new(built.instance, cfg);

        let same_color: Vec<AgentId> = (0..48).filter(|&a| colors[a] == colors[0]).collect();
        assert!(
            same_color.len() >= 5,
            "seed chosen so color 0 has >= 5 agents"
        );

        // coverage 4 ties the support cap: most-favorable break picks unpopular
        let tied = o.gen(&same_color[..4], 1).unwrap();
        assert!(!o.popular_statements().contains(&tied));

        // coverage 5 strictly beats any unpopular statement's cap of 4
        let won = o.gen(&same_color[..5], 1).unwrap();
        assert!(o.popular_statements().contains(&won));
    }
}
