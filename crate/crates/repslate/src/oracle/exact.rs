//! Exact oracle over a finite utility matrix.

use super::{
    best_statement_by_rank, check_gen_preconditions, OracleError, QueryOracle, Transcript,
};
use crate::instance::{AgentId, Instance, StatementId};

/// Answers queries by direct lookup / exhaustive scan of the finite
/// universe. Generative ties break toward the lowest statement index, so
/// every run against this oracle is deterministic.
#[derive(Debug, Clone)]
pub struct ExactOracle {
    instance: Instance,
    size_limit: Option<usize>,
    transcript: Transcript,
}

impl ExactOracle {
    pub fn new(instance: Instance) -> Self {
        ExactOracle {
            instance,
            size_limit: None,
            transcript: Transcript::default(),
        }
    }

    pub fn with_size_limit(instance: Instance, t: usize) -> Self {
        ExactOracle {
            instance,
            size_limit: Some(t),
            transcript: Transcript::default(),
        }
    }

    pub fn into_instance(self) -> Instance {
        self.instance
    }
}

impl QueryOracle for ExactOracle {
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

    fn gen(&mut self, agents: &[AgentId], r: usize) -> Result<StatementId, OracleError> {
        check_gen_preconditions(agents, r, self.instance.n(), self.size_limit)?;
        let (idx, _) = best_statement_by_rank(&self.instance, agents, r);
        let id = self.instance.statement(idx).id;
        self.transcript.log_gen(agents.len(), r, id);
        Ok(id)
    }

    fn instance(&self) -> &Instance {
        &self.instance
    }

    fn size_limit(&self) -> Option<usize> {
        self.size_limit
    }

    fn transcript(&self) -> &Transcript {
        &self.transcript
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::Statement;

    /// k=n=3 example: agents 1,2 approve the first two statements, agent 3
    /// the last two.
    fn first_example() -> Instance {
        let stmts = vec![
            Statement::text(0, "alpha"),
            Statement::text(1, "alpha_prime"),
            Statement::text(2, "beta"),
            Statement::text(3, "beta_prime"),
        ];
        let rows = vec![
            vec![1.0, 1.0, 0.0, 0.0],
            vec![1.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 1.0],
        ];
        Instance::new(3, stmts, rows).unwrap()
    }

    /// k=n=2 example: each agent has one specific statement at utility 3,
    /// plus two generic statements at utility 2 apiece.
    fn second_example() -> Instance {
        let stmts = vec![
            Statement::text(0, "alpha_1"),
            Statement::text(1, "alpha_2"),
            Statement::text(2, "beta"),
            Statement::text(3, "beta_prime"),
        ];
        let rows = vec![vec![3.0, 0.0, 2.0, 2.0], vec![0.0, 3.0, 2.0, 2.0]];
        Instance::new(2, stmts, rows).unwrap()
    }

    #[test]
    fn disc_is_matrix_lookup() {
        let mut o = ExactOracle::new(first_example());
        assert_eq!(o.disc(0, StatementId(0)).unwrap(), 1.0);
        assert_eq!(o.disc(2, StatementId(0)).unwrap(), 0.0);
        assert!(matches!(
            o.disc(5, StatementId(0)),
            Err(OracleError::UnknownAgent(5))
        ));
        assert!(matches!(
            o.disc(0, StatementId(99)),
            Err(OracleError::UnknownStatement(_))
        ));
    }

    #[test]
    fn gen_maximizes_rank_with_lowest_index_ties() {
        let mut o = ExactOracle::new(first_example());
        // sigma_2 values: alpha 1, alpha' 1, beta 0, beta' 0
        assert_eq!(o.gen(&[0, 1, 2], 2).unwrap(), StatementId(0));
        // single agent 3: first statement with utility 1 is beta
        assert_eq!(o.gen(&[2], 1).unwrap(), StatementId(2));

        let mut o2 = ExactOracle::new(second_example());
        // sigma_2: alpha_1 0, alpha_2 0, beta 2, beta' 2
        assert_eq!(o2.gen(&[0, 1], 2).unwrap(), StatementId(2));
    }

    #[test]
    fn gen_rank_zero_is_canonical() {
        let mut o = ExactOracle::new(first_example());
        assert_eq!(o.gen(&[1], 0).unwrap(), StatementId(0));
    }

    #[test]
    fn size_limit_enforced_and_logged() {
        let mut o = ExactOracle::with_size_limit(first_example(), 2);
        assert!(matches!(
            o.gen(&[0, 1, 2], 1),
            Err(OracleError::SizeLimit { size: 3, limit: 2 })
        ));
        o.gen(&[0, 1], 1).unwrap();
        o.disc(0, StatementId(0)).unwrap();
        // rejected queries are not logged
        assert_eq!(o.transcript().len(), 2);
        assert!(o.transcript().gen_entries().all(|e| e.set_size <= 2));
        let csv = o.transcript().to_csv();
        assert!(csv.starts_with("query_index,kind,set_size,r,statement_id\n"));
        assert!(csv.contains("0,gen,2,1,0\n"));
        assert!(csv.contains("1,disc,1,,0\n"));
    }

    #[test]
    fn gen_rank_above_set_size_errors() {
        let mut o = ExactOracle::new(first_example());
        assert!(matches!(
            o.gen(&[0, 1], 3),
            Err(OracleError::RankOutOfRange { r: 3, size: 2 })
        ));
        assert!(matches!(o.gen(&[], 0), Err(OracleError::EmptyAgentSet)));
    }
}
