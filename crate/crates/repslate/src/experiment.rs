//! Monte Carlo harnesses: empirical validation of the sampling deviation
//! bound, demonstrations of the size-limited-query impossibilities, and
//! success rates of the sampling process. Every trial derives its seed
//! from the master seed and trial index, so reports replay exactly.

use crate::axiom::{check_jr, find_bjr_violation};
use crate::builders::{build, make_oracle, ConstructionSpec};
use crate::instance::{balance_quotas, AgentId, Instance, Slate, StatementId};
use crate::oracle::QueryOracle;
use crate::process::{sample_agents, sampled_bjr, ProcessError, SamplingParams};
use crate::seed::{derive_seed, rng_for};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error(transparent)]
    Process(#[from] ProcessError),
    #[error(transparent)]
    Build(#[from] crate::builders::BuildError),
    #[error(transparent)]
    Oracle(#[from] crate::oracle::OracleError),
    #[error(transparent)]
    Axiom(#[from] crate::axiom::AxiomError),
    #[error(transparent)]
    Core(#[from] crate::instance::CoreError),
}

/// One trial of any experiment. Unused fields stay `None` and serialize
/// as empty CSV cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub trial: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub violation: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub success: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deviation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gen_queries: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_gen_set_size: Option<f64>,
}

impl TrialRow {
    fn new(trial: usize, seed: u64) -> Self {
        TrialRow {
            trial,
            seed,
            violation: None,
            success: None,
            deviation: None,
            gen_queries: None,
            mean_gen_set_size: None,
        }
    }
}

/// Aggregate statistics over the trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub trials: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub violation_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub success_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_deviation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub median_deviation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q10_deviation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q90_deviation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub experiment: String,
    pub master_seed: u64,
    pub rows: Vec<TrialRow>,
    pub summary: Summary,
}

impl TrialReport {
    fn assemble(experiment: &str, master_seed: u64, rows: Vec<TrialRow>) -> Self {
        let trials = rows.len();
        let rate = |get: fn(&TrialRow) -> Option<bool>| {
            let hits: Vec<bool> = rows.iter().filter_map(get).collect();
            if hits.is_empty() {
                None
            } else {
                Some(hits.iter().filter(|&&b| b).count() as f64 / hits.len() as f64)
            }
        };
        let deviations: Vec<f64> = rows.iter().filter_map(|r| r.deviation).collect();
        let summary = Summary {
            trials,
            violation_rate: rate(|r| r.violation),
            success_rate: rate(|r| r.success),
            mean_deviation: if deviations.is_empty() {
                None
            } else {
                Some(deviations.iter().sum::<f64>() / deviations.len() as f64)
            },
            median_deviation: quantile(&deviations, 0.5),
            q10_deviation: quantile(&deviations, 0.1),
            q90_deviation: quantile(&deviations, 0.9),
        };
        TrialReport {
            experiment: experiment.to_string(),
            master_seed,
            rows,
            summary,
        }
    }

    /// One row per trial: `trial,seed,violation,success,deviation,gen_queries,mean_gen_set_size`.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("trial,seed,violation,success,deviation,gen_queries,mean_gen_set_size\n");
        for r in &self.rows {
            let opt_b = |v: Option<bool>| v.map(|b| b.to_string()).unwrap_or_default();
            let opt_f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            let opt_u = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.trial,
                r.seed,
                opt_b(r.violation),
                opt_b(r.success),
                opt_f(r.deviation),
                opt_u(r.gen_queries),
                opt_f(r.mean_gen_set_size),
            ));
        }
        out
    }
}

/// Empirical quantile by linear interpolation on the sorted sample.
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Some(sorted[lo] * (1.0 - frac) + sorted[hi] * frac)
}

/// Supremum over statements and observed thresholds of the gap between the
/// sample's and the population's covered fraction. Thresholds are
/// restricted to each statement's observed utility values, which is
/// lossless for the supremum.
pub fn sup_supp_deviation(instance: &Instance, sample: &[AgentId]) -> f64 {
    let n = instance.n() as f64;
    let m = sample.len() as f64;
    let mut sup: f64 = 0.0;
    for idx in 0..instance.num_statements() {
        let column = instance.column(idx);
        let mut thetas = column.to_vec();
        thetas.sort_by(f64::total_cmp);
        thetas.dedup();
        for &theta in &thetas {
            let pop = column.iter().filter(|&&u| u >= theta).count() as f64 / n;
            let sam = sample.iter().filter(|&&a| column[a] >= theta).count() as f64 / m;
            sup = sup.max((sam - pop).abs());
        }
    }
    sup
}

/// One deviation trial: sample `m` agents uniformly without replacement and
/// return the supremum deviation. Requires `m <= n/2`, the regime the
/// without-replacement bound is stated for.
pub fn pac_deviation_trial(
    instance: &Instance,
    m: usize,
    seed: u64,
) -> Result<f64, ExperimentError> {
    let n = instance.n();
    if m == 0 || 2 * m > n {
        return Err(ExperimentError::Precondition(format!(
            "sample size must satisfy 1 <= m <= n/2, got m={m}, n={n}"
        )));
    }
    let mut rng = rng_for(seed, "pac-sample", 0);
    let all: Vec<AgentId> = (0..n).collect();
    let sample = sample_agents(&all, m, &mut rng);
    Ok(sup_supp_deviation(instance, &sample))
}

/// Run `trials` deviation trials at sample size `m`.
pub fn pac_deviation_trials(
    instance: &Instance,
    m: usize,
    trials: usize,
    master_seed: u64,
) -> Result<TrialReport, ExperimentError> {
    let mut rows = Vec::with_capacity(trials);
    for t in 0..trials {
        let seed = derive_seed(master_seed, "pac-trial", t as u64);
        let mut row = TrialRow::new(t, seed);
        row.deviation = Some(pac_deviation_trial(instance, m, seed)?);
        rows.push(row);
    }
    Ok(TrialReport::assemble(
        &format!("pac-m{m}"),
        master_seed,
        rows,
    ))
}

/// How the demonstration process picks its size-limited query sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsetPolicy {
    /// Uniform random subsets of the surviving agents.
    Random,
    /// The lowest-id block of surviving agents.
    SequentialBlocks,
}

/// Run a size-limited subset-greedy process against an adversarial
/// construction and check the relaxed representation axiom on the
/// materialized universe. `max_gen_queries` caps generative queries (the
/// remaining rounds repeat the last answer); `None` allows one per round.
pub fn impossibility_demo(
    spec: &ConstructionSpec,
    policy: SubsetPolicy,
    trials: usize,
    master_seed: u64,
    max_gen_queries: Option<usize>,
) -> Result<TrialReport, ExperimentError> {
    let mut rows = Vec::with_capacity(trials);
    for t in 0..trials {
        let seed = derive_seed(master_seed, "impossibility-trial", t as u64);
        // fresh instance per trial: probabilistic constructions redraw
        let spec = reseed(spec, seed);
        let built = build(&spec)?;
        let k = built.instance.k();
        let mut oracle = make_oracle(built.instance, &built.oracle_spec, None)?;
        let t_limit = oracle
            .size_limit()
            .expect("adversarial oracles carry a size limit");

        let (slate, gen_issued) =
            subset_greedy(oracle.as_mut(), k, t_limit, policy, max_gen_queries, seed)?;
        if let Some(budget) = max_gen_queries {
            let logged = oracle.transcript().gen_entries().count();
            if logged > budget {
                return Err(ExperimentError::Precondition(format!(
                    "policy issued {logged} generative queries, budget is {budget}"
                )));
            }
        }
        let violation = check_jr(oracle.instance(), &slate)?;
        let mut row = TrialRow::new(t, seed);
        row.violation = Some(violation.is_some());
        row.gen_queries = Some(gen_issued);
        rows.push(row);
    }
    Ok(TrialReport::assemble("impossibility", master_seed, rows))
}

fn reseed(spec: &ConstructionSpec, seed: u64) -> ConstructionSpec {
    match spec {
        ConstructionSpec::ColorOvershadow { n, k, .. } => {
            ConstructionSpec::ColorOvershadow { n: *n, k: *k, seed }
        }
        ConstructionSpec::Box {
            n,
            k,
            dims,
            clusters,
            ..
        } => ConstructionSpec::Box {
            n: *n,
            k: *k,
            dims: *dims,
            clusters: *clusters,
            seed,
        },
        other => other.clone(),
    }
}

/// Greedy slate construction restricted to generative queries over subsets
/// of size at most `t_limit`. Returns the slate and the number of
/// generative queries issued.
pub fn subset_greedy(
    oracle: &mut dyn QueryOracle,
    k: usize,
    t_limit: usize,
    policy: SubsetPolicy,
    max_gen_queries: Option<usize>,
    seed: u64,
) -> Result<(Slate, usize), ExperimentError> {
    let n = oracle.instance().n();
    let quotas = balance_quotas(n, k)?;
    let mut rng = rng_for(seed, "subset-policy", 0);
    let mut remaining: Vec<AgentId> = (0..n).collect();
    let mut slate: Vec<StatementId> = Vec::with_capacity(k);
    let mut issued = 0usize;

    for &quota in &quotas {
        let budget_left = max_gen_queries.map_or(true, |b| issued < b);
        let statement = if budget_left {
            let size = t_limit.min(remaining.len());
            let subset = match policy {
                SubsetPolicy::Random => sample_agents(&remaining, size, &mut rng),
                SubsetPolicy::SequentialBlocks => remaining[..size].to_vec(),
            };
            let r = quota.min(subset.len());
            issued += 1;
            oracle.gen(&subset, r)?
        } else {
            *slate
                .last()
                .expect("at least one query before the budget ends")
        };
        // retire the quota agents that like the statement most
        let mut scored = Vec::with_capacity(remaining.len());
        for &a in &remaining {
            scored.push((a, oracle.disc(a, statement)?));
        }
        scored.sort_by(|(a1, u1), (a2, u2)| u2.total_cmp(u1).then(a1.cmp(a2)));
        let removed: Vec<AgentId> = scored.into_iter().take(quota).map(|(a, _)| a).collect();
        remaining.retain(|a| !removed.contains(a));
        slate.push(statement);
    }
    Ok((Slate::new(slate), issued))
}

/// Strict upper bound on generative queries for the color-overshadow
/// construction; processes below it fail representation with high
/// probability.
pub fn overshadow_query_budget(n: usize, k: usize) -> f64 {
    (2.0 / k as f64) * (n as f64 / (12.0 * k as f64)).exp()
}

/// Largest query count strictly below the budget.
pub fn overshadow_max_queries(n: usize, k: usize) -> usize {
    let budget = overshadow_query_budget(n, k);
    let floor = budget.floor();
    let max = if budget == floor { floor - 1.0 } else { floor };
    max.max(0.0) as usize
}

/// Per-trial settings for [`sampled_bjr_success_rate`].
#[derive(Debug, Clone)]
pub struct SamplingExperiment {
    pub spec: ConstructionSpec,
    pub params: SamplingParams,
    pub trials: usize,
}

/// Run the sampling process repeatedly with fresh seeds and check each
/// run's own matching for violations over the materialized universe.
pub fn sampled_bjr_success_rate(
    exp: &SamplingExperiment,
    master_seed: u64,
) -> Result<TrialReport, ExperimentError> {
    let built = build(&exp.spec)?;
    let k = built.instance.k();
    let mut rows = Vec::with_capacity(exp.trials);
    for t in 0..exp.trials {
        let seed = derive_seed(master_seed, "sampling-trial", t as u64);
        let mut oracle = make_oracle(built.instance.clone(), &built.oracle_spec, None)?;
        let run = sampled_bjr(oracle.as_mut(), k, &exp.params, seed)?;
        let violation = find_bjr_violation(oracle.instance(), &run.slate, &run.matching)?;
        let gens: Vec<usize> = oracle
            .transcript()
            .gen_entries()
            .map(|e| e.set_size)
            .collect();
        let mut row = TrialRow::new(t, seed);
        row.violation = Some(violation.is_some());
        row.success = Some(violation.is_none());
        row.gen_queries = Some(gens.len());
        row.mean_gen_set_size = if gens.is_empty() {
            None
        } else {
            Some(gens.iter().sum::<usize>() as f64 / gens.len() as f64)
        };
        rows.push(row);
    }
    Ok(TrialReport::assemble("sampling", master_seed, rows))
}
