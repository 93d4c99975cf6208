//! Structured statement space: agents are points in `R^d`, statements are
//! axis-aligned boxes, utility is 0/1 membership. VC dimension is `2d`.

use super::{check_gen_preconditions, OracleError, QueryOracle, Transcript};
use crate::instance::{AgentId, Instance, Statement, StatementId};
use serde::{Deserialize, Serialize};

/// An axis-aligned box: one closed interval per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub bounds: Vec<[f64; 2]>,
}

impl BoxRegion {
    /// The unit box `[0,1]^d`.
    pub fn unit(dims: usize) -> Self {
        BoxRegion {
            bounds: vec![[0.0, 1.0]; dims],
        }
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        self.bounds
            .iter()
            .zip(point)
            .all(|(b, &x)| b[0] <= x && x <= b[1])
    }

    /// Coordinate-wise bounding box of a set of points.
    pub fn bounding(points: &[&[f64]]) -> Self {
        let dims = points[0].len();
        let bounds = (0..dims)
            .map(|d| {
                let lo = points.iter().map(|p| p[d]).fold(f64::INFINITY, f64::min);
                let hi = points
                    .iter()
                    .map(|p| p[d])
                    .fold(f64::NEG_INFINITY, f64::max);
                [lo, hi]
            })
            .collect();
        BoxRegion { bounds }
    }
}

/// Agent geometry of a box-space instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSpace {
    pub dims: usize,
    /// One point per agent.
    pub points: Vec<Vec<f64>>,
}

impl BoxSpace {
    pub fn new(dims: usize, points: Vec<Vec<f64>>) -> Self {
        debug_assert!(points.iter().all(|p| p.len() == dims));
        BoxSpace { dims, points }
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn vc_dim(&self) -> usize {
        2 * self.dims
    }

    fn membership_column(&self, region: &BoxRegion) -> Vec<f64> {
        self.points
            .iter()
            .map(|p| if region.contains(p) { 1.0 } else { 0.0 })
            .collect()
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Oracle over a box space. Generated boxes are materialized into the
/// instance so that post-run axiom checks operate on a concrete universe.
/// Statement 0 is always the unit box at the origin (the sampling
/// process's fallback).
#[derive(Debug, Clone)]
pub struct BoxOracle {
    space: BoxSpace,
    instance: Instance,
    size_limit: Option<usize>,
    transcript: Transcript,
}

impl BoxOracle {
    pub fn new(space: BoxSpace, k: usize) -> Self {
        Self::with_size_limit_opt(space, k, None)
    }

    pub fn with_size_limit(space: BoxSpace, k: usize, t: usize) -> Self {
        Self::with_size_limit_opt(space, k, Some(t))
    }

    fn with_size_limit_opt(space: BoxSpace, k: usize, t: Option<usize>) -> Self {
        let fallback = BoxRegion::unit(space.dims);
        let rows = space
            .membership_column(&fallback)
            .into_iter()
            .map(|v| vec![v])
            .collect();
        let statement = Statement::with_box(0, fallback.bounds);
        let instance = Instance::new(k, vec![statement], rows).expect("valid fallback instance");
        BoxOracle {
            space,
            instance,
            size_limit: t,
            transcript: Transcript::default(),
        }
    }

    pub fn space(&self) -> &BoxSpace {
        &self.space
    }

    pub fn into_instance(self) -> Instance {
        self.instance
    }

    /// Grow a cluster of `r` agents: seed at the lowest id in `agents`,
    /// then repeatedly add the member of `agents` closest (in Euclidean
    /// distance) to the cluster so far, ties by lowest id. Minimum
    /// distances to the cluster are cached, so growth is O(r * |agents|).
    fn select_cluster(&self, agents: &[AgentId], r: usize) -> Vec<AgentId> {
        let seed = *agents.iter().min().expect("non-empty agent set");
        let mut cluster = Vec::with_capacity(r);
        cluster.push(seed);
        let mut remaining: Vec<AgentId> = agents.iter().copied().filter(|&a| a != seed).collect();
        let mut best: Vec<f64> = remaining
            .iter()
            .map(|&a| squared_distance(&self.space.points[a], &self.space.points[seed]))
            .collect();
        while cluster.len() < r {
            let mut pick = 0;
            for i in 1..remaining.len() {
                match best[i].total_cmp(&best[pick]) {
                    std::cmp::Ordering::Less => pick = i,
                    std::cmp::Ordering::Equal if remaining[i] < remaining[pick] => pick = i,
                    _ => {}
                }
            }
            let added = remaining.swap_remove(pick);
            best.swap_remove(pick);
            cluster.push(added);
            for (i, &a) in remaining.iter().enumerate() {
                let d = squared_distance(&self.space.points[a], &self.space.points[added]);
                if d < best[i] {
                    best[i] = d;
                }
            }
        }
        cluster
    }

    fn materialize(&mut self, region: BoxRegion) -> StatementId {
        // reuse an identical box if one was generated before
        for s in self.instance.statements() {
            if s.box_bounds.as_deref() == Some(&region.bounds[..]) {
                return s.id;
            }
        }
        let id = self.instance.next_statement_id();
        let column = self.space.membership_column(&region);
        let statement = Statement::with_box(id.0, region.bounds);
        self.instance
            .push_statement(statement, column)
            .expect("fresh statement id");
        id
    }
}

impl QueryOracle for BoxOracle {
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
        // rank 0 makes every statement tie at infinity; canonical answer is
        // the lowest-index statement, the fallback box
        if r == 0 {
            let id = self.instance.statement(0).id;
            self.transcript.log_gen(agents.len(), r, id);
            return Ok(id);
        }
        let cluster = self.select_cluster(agents, r);
        let points: Vec<&[f64]> = cluster
            .iter()
            .map(|&a| self.space.points[a].as_slice())
            .collect();
        let id = self.materialize(BoxRegion::bounding(&points));
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
