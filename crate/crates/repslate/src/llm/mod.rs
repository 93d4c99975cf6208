//! Model-backed query adapter: expected-value discriminative queries read
//! off first-token log-probabilities, the ensemble generative query, the
//! nearest-neighbor agent ordering, balanced assignment, and pilot-data
//! ingestion. All model traffic goes through a pluggable [`Transport`];
//! the scripted transport keeps tests fully offline.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

mod assignment;
mod pilot;
pub mod prompts;
mod transport;

pub use assignment::{assignment_total, balanced_assignment, hungarian_min_cost};
pub use pilot::{
    confusion_matrix, ingest_pilot_data, ConfusionMatrix, PilotData, Predictions, ValidationTable,
};
pub use prompts::PromptAssets;
#[cfg(feature = "live")]
pub use transport::live::{LiveConfig, LiveTransport};
pub use transport::{
    exchange_key, CompletionRequest, CompletionResponse, RecordedExchange, ScriptedTransport,
    Transport,
};

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("unparseable model response: {0}")]
    UnparseableResponse(String),
    #[error("ingestion: {0}")]
    Ingestion(String),
    #[error("validation: {0}")]
    Validation(String),
    #[error("prediction/actual length mismatch: {predicted} vs {actual}")]
    LengthMismatch { predicted: usize, actual: usize },
    #[error("empty agent set")]
    EmptyAgentSet,
    #[error("all generation sources failed; first error: {0}")]
    AllSourcesFailed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(#[from] crate::instance::CoreError),
}

/// One survey participant: ordered free-form question/answer pairs, the
/// statements they rated on the 0-4 scale, and an optional condensed
/// summary used when prompts would exceed the size budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantRecord {
    pub id: String,
    pub freeform_responses: Vec<(String, String)>,
    pub rated_statements: Vec<RatedStatement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatedStatement {
    pub statement: String,
    /// Integer agreement level in 0..=4.
    pub rating: u8,
    pub explanation: String,
}

/// Probability distribution over the five agreement levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingDistribution {
    pub probabilities: [f64; 5],
}

impl RatingDistribution {
    /// Renormalize raw non-negative masses. Errors if all are zero.
    pub fn from_masses(masses: [f64; 5]) -> Result<Self, LlmError> {
        let total: f64 = masses.iter().sum();
        if total <= 0.0 {
            return Err(LlmError::UnparseableResponse(
                "no probability mass on any rating level".into(),
            ));
        }
        Ok(RatingDistribution {
            probabilities: masses.map(|m| m / total),
        })
    }

    pub fn point_mass(level: u8) -> Self {
        let mut probabilities = [0.0; 5];
        probabilities[level as usize] = 1.0;
        RatingDistribution { probabilities }
    }

    pub fn expectation(&self) -> f64 {
        self.probabilities
            .iter()
            .enumerate()
            .map(|(level, p)| level as f64 * p)
            .sum()
    }
}

/// Where a pool statement came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolSource {
    InitialCluster,
    AllTemp0,
    AllTemp1,
    Random5,
    NearestNeighbors { s: usize, subsampled: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub text: String,
    pub source: PoolSource,
}

/// Growing candidate-statement pool shared across the generative queries
/// of one process run, with cached predicted rating distributions per
/// (participant, statement).
#[derive(Debug, Clone, Default)]
pub struct StatementPool {
    entries: Vec<PoolEntry>,
    cache: HashMap<(String, String), RatingDistribution>,
}

impl StatementPool {
    pub fn new() -> Self {
        Self::default()
    }

    /// Seed the pool with pre-existing statements (e.g. the initial
    /// cluster statements of a deployment).
    pub fn with_initial(statements: &[&str]) -> Self {
        let mut pool = Self::new();
        for s in statements {
            pool.add(s, PoolSource::InitialCluster);
        }
        pool
    }

    pub fn entries(&self) -> &[PoolEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Add a statement unless an identical text is already pooled.
    fn add(&mut self, text: &str, source: PoolSource) {
        if !self.entries.iter().any(|e| e.text == text) {
            self.entries.push(PoolEntry {
                text: text.to_string(),
                source,
            });
        }
    }

    pub fn cached(&self, participant: &str, statement: &str) -> Option<&RatingDistribution> {
        self.cache
            .get(&(participant.to_string(), statement.to_string()))
    }
}

/// Adapter configuration: model name and sampling/size knobs.
#[derive(Debug, Clone)]
pub struct AdapterConfig {
    pub model: String,
    pub max_tokens: u32,
    /// How many top log-probabilities to request for rating queries.
    pub logprob_count: u32,
    /// Character budget before generation prompts switch to condensed
    /// participant summaries.
    pub prompt_char_budget: usize,
    /// Temperature for subset-based generation sources (the full-set
    /// source always runs at 0 and at 1).
    pub subset_temperature: f64,
}

impl Default for AdapterConfig {
    fn default() -> Self {
        AdapterConfig {
            model: "gpt-4-base".to_string(),
            max_tokens: 128,
            logprob_count: 16,
            prompt_char_budget: 60_000,
            subset_temperature: 0.0,
        }
    }
}

/// The query adapter. Owns the transport, templates, and configuration;
/// the statement pool is passed per call so one pool can span a whole
/// process run.
pub struct LlmAdapter<T: Transport> {
    pub transport: T,
    pub assets: PromptAssets,
    pub config: AdapterConfig,
}

impl<T: Transport> LlmAdapter<T> {
    pub fn new(transport: T) -> Self {
        LlmAdapter {
            transport,
            assets: PromptAssets::default(),
            config: AdapterConfig::default(),
        }
    }

    fn rating_request(&self, prompt: String) -> CompletionRequest {
        CompletionRequest {
            model: self.config.model.clone(),
            prompt,
            temperature: 0.0,
            max_tokens: 1,
            logprobs: Some(self.config.logprob_count),
        }
    }

    fn generation_request(&self, prompt: String, temperature: f64) -> CompletionRequest {
        CompletionRequest {
            model: self.config.model.clone(),
            prompt,
            temperature,
            max_tokens: self.config.max_tokens,
            logprobs: None,
        }
    }

    /// Predicted rating distribution for one participant/statement pair:
    /// request first-token log-probabilities, keep the digit tokens 0-4,
    /// renormalize over those present.
    pub fn rating_distribution(
        &self,
        participant: &ParticipantRecord,
        statement: &str,
    ) -> Result<RatingDistribution, LlmError> {
        let opinion = prompts::opinion_dict(participant);
        let prompt = prompts::approval_prompt(&self.assets, participant, statement, &opinion);
        let response = self.transport.complete(&self.rating_request(prompt))?;
        let logprobs = response.top_logprobs.ok_or_else(|| {
            LlmError::UnparseableResponse("response carries no log-probabilities".into())
        })?;
        let mut masses = [0.0f64; 5];
        for (token, lp) in &logprobs {
            if let Ok(level) = token.trim().parse::<u8>() {
                if level <= 4 {
                    masses[level as usize] += lp.exp();
                }
            }
        }
        RatingDistribution::from_masses(masses).map_err(|_| {
            LlmError::UnparseableResponse(
                "none of the rating tokens 0-4 appear in the top log-probabilities".into(),
            )
        })
    }

    /// Expected agreement level in `[0, 4]`, cached into `pool`.
    pub fn disc(
        &self,
        participant: &ParticipantRecord,
        statement: &str,
        pool: &mut StatementPool,
    ) -> Result<f64, LlmError> {
        let key = (participant.id.clone(), statement.to_string());
        if let Some(dist) = pool.cache.get(&key) {
            return Ok(dist.expectation());
        }
        let dist = self.rating_distribution(participant, statement)?;
        let expectation = dist.expectation();
        pool.cache.insert(key, dist);
        Ok(expectation)
    }

    /// Run one generation source: render the prompt over `group` and pool
    /// the completion.
    fn generate_into_pool(
        &self,
        group: &[&ParticipantRecord],
        temperature: f64,
        source: PoolSource,
        pool: &mut StatementPool,
    ) -> Result<(), LlmError> {
        let prompt =
            prompts::generation_prompt(&self.assets, group, self.config.prompt_char_budget);
        let response = self
            .transport
            .complete(&self.generation_request(prompt, temperature))?;
        let text = response.text.trim();
        if text.is_empty() {
            return Err(LlmError::UnparseableResponse(
                "empty generation response".into(),
            ));
        }
        pool.add(text, source);
        Ok(())
    }

    /// Order `candidates` by how much they agree with the seed agent's
    /// free-form opinions (scored through the approval prompt with the
    /// seed's opinion text in the statement slot) and keep the top `s`,
    /// ties toward lower ids.
    pub fn nearest_neighbors<'a>(
        &self,
        seed: &ParticipantRecord,
        candidates: &[&'a ParticipantRecord],
        s: usize,
    ) -> Result<Vec<&'a ParticipantRecord>, LlmError> {
        let opinion_text = seed
            .freeform_responses
            .iter()
            .map(|(_, a)| a.as_str())
            .collect::<Vec<_>>()
            .join(" ");
        let mut scored = Vec::with_capacity(candidates.len());
        for &c in candidates {
            let dist = self.rating_distribution(c, &opinion_text)?;
            scored.push((c, dist.expectation()));
        }
        scored.sort_by(|(c1, u1), (c2, u2)| u2.total_cmp(u1).then(c1.id.cmp(&c2.id)));
        Ok(scored.into_iter().take(s).map(|(c, _)| c).collect())
    }

    /// The ensemble generative query: extend the pool from six sources
    /// (full set at temperatures 0 and 1, a random 5-subset, and three
    /// nearest-neighbor clusters), rate every pooled statement for every
    /// member of `agents`, and return the statement maximizing the `r`-th
    /// highest predicted rating, ties by pool insertion order.
    pub fn gen_ensemble<'a, R: Rng>(
        &self,
        agents: &[&'a ParticipantRecord],
        r: usize,
        pool: &mut StatementPool,
        rng: &mut R,
    ) -> Result<String, LlmError> {
        if agents.is_empty() {
            return Err(LlmError::EmptyAgentSet);
        }
        if r == 0 || r > agents.len() {
            return Err(LlmError::Validation(format!(
                "rank {r} out of range for {} agents",
                agents.len()
            )));
        }

        let mut successes = 0usize;
        let mut first_error: Option<LlmError> = None;
        let mut run = |res: Result<(), LlmError>| match res {
            Ok(()) => successes += 1,
            Err(e) => {
                if first_error.is_none() {
                    first_error = Some(e);
                }
            }
        };

        // full set at both temperatures
        run(self.generate_into_pool(agents, 0.0, PoolSource::AllTemp0, pool));
        run(self.generate_into_pool(agents, 1.0, PoolSource::AllTemp1, pool));

        // uniform random 5-subset (all of the set when smaller)
        let five = self.random_subset(agents, 5, rng);
        run(self.generate_into_pool(
            &five,
            self.config.subset_temperature,
            PoolSource::Random5,
            pool,
        ));

        // nearest-neighbor clusters: s = 5, s = 10, and s = 5 over a
        // 20-agent subsample
        run(self.nn_source(agents, 5, false, pool, rng));
        run(self.nn_source(agents, 10, false, pool, rng));
        run(self.nn_subsampled_source(agents, 5, 20, pool, rng));

        if successes == 0 && pool.is_empty() {
            return Err(LlmError::AllSourcesFailed(
                first_error
                    .map(|e| e.to_string())
                    .unwrap_or_else(|| "no sources ran".into()),
            ));
        }

        // rate the whole pool for the whole set, then pick the rank-r argmax
        let texts: Vec<String> = pool.entries.iter().map(|e| e.text.clone()).collect();
        let mut best: Option<(usize, f64)> = None;
        for (idx, text) in texts.iter().enumerate() {
            let mut values = Vec::with_capacity(agents.len());
            for p in agents {
                values.push(self.disc(p, text, pool)?);
            }
            let score = crate::instance::rth_largest(&values, r)?.as_f64();
            if best.map_or(true, |(_, b)| score > b) {
                best = Some((idx, score));
            }
        }
        let (idx, _) = best.expect("pool is non-empty");
        Ok(pool.entries[idx].text.clone())
    }

    fn random_subset<'a, R: Rng>(
        &self,
        agents: &[&'a ParticipantRecord],
        size: usize,
        rng: &mut R,
    ) -> Vec<&'a ParticipantRecord> {
        if agents.len() <= size {
            return agents.to_vec();
        }
        let mut chosen: Vec<&ParticipantRecord> =
            agents.choose_multiple(rng, size).copied().collect();
        chosen.sort_by(|a, b| a.id.cmp(&b.id));
        chosen
    }

    fn nn_source<R: Rng>(
        &self,
        agents: &[&ParticipantRecord],
        s: usize,
        subsampled: bool,
        pool: &mut StatementPool,
        rng: &mut R,
    ) -> Result<(), LlmError> {
        let seed = agents[rng.gen_range(0..agents.len())];
        let candidates: Vec<&ParticipantRecord> =
            agents.iter().copied().filter(|p| p.id != seed.id).collect();
        let s = s.min(candidates.len());
        let neighbors = self.nearest_neighbors(seed, &candidates, s)?;
        let mut cluster = vec![seed];
        cluster.extend(neighbors);
        self.generate_into_pool(
            &cluster,
            self.config.subset_temperature,
            PoolSource::NearestNeighbors { s, subsampled },
            pool,
        )
    }

    fn nn_subsampled_source<R: Rng>(
        &self,
        agents: &[&ParticipantRecord],
        s: usize,
        sample_size: usize,
        pool: &mut StatementPool,
        rng: &mut R,
    ) -> Result<(), LlmError> {
        let sample = self.random_subset(agents, sample_size, rng);
        self.nn_source(&sample, s, true, pool, rng)
    }

    /// Condense a participant's free-form responses through the transport,
    /// filling their `summary` field.
    pub fn condense(&self, participant: &mut ParticipantRecord) -> Result<(), LlmError> {
        let responses = prompts::opinion_dict(participant);
        let prompt = prompts::render_template(&self.assets.condense, &[("responses", &responses)]);
        let response = self
            .transport
            .complete(&self.generation_request(prompt, 0.0))?;
        participant.summary = Some(response.text.trim().to_string());
        Ok(())
    }
}
