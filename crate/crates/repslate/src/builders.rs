//! Instance builders: the two worked micro-examples, the two adversarial
//! constructions, clustered box spaces, and random utility matrices.

use crate::instance::{CoreError, Instance, InstanceDoc, Statement};
use crate::oracle::{
    AdversarialConfig, AdversarialOracle, BoxOracle, BoxSpace, Construction, ExactOracle,
    QueryOracle,
};
use crate::seed::rng_for;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("invalid construction spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

/// What to build. Sizes and divisibility requirements are validated by
/// [`build`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ConstructionSpec {
    /// 3 agents, 4 statements, k=3: a two-thirds bloc approving two
    /// statements and a one-third bloc approving the other two.
    Example1,
    /// 2 agents, 4 statements, k=2: each agent has a specific statement at
    /// utility 3; two generic statements sit at utility 2 for both.
    Example2,
    /// One universally approved statement plus a lazy unpopular statement
    /// per agent set of size at most `t = (n/k)(1 - 1/k)`. Requires `n`
    /// divisible by `k^2`.
    SinglePopular { n: usize, k: usize },
    /// Colored agents, one popular statement per color, lazy unpopular
    /// statements with support size `n/(2k)`, query limit `t = n/8`.
    /// Requires `k` even and `n` divisible by 8 (and by `2k`).
    ColorOvershadow { n: usize, k: usize, seed: u64 },
    /// Agents sampled from a seeded mixture of axis-aligned clusters;
    /// statements are boxes (so utilities are 0/1 membership).
    Box {
        n: usize,
        k: usize,
        dims: usize,
        clusters: usize,
        seed: u64,
    },
    /// i.i.d. utilities drawn uniformly from `levels`.
    Random {
        n: usize,
        k: usize,
        universe: usize,
        levels: Vec<f64>,
        seed: u64,
    },
}

/// Oracle configuration recommended for a built instance; serialized into
/// the instance document so files round-trip through the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "oracle")]
pub enum OracleSpec {
    Exact,
    Adversarial(AdversarialConfig),
    Box(BoxSpace),
}

/// A built instance together with the oracle kind it is meant to be
/// queried through.
#[derive(Debug, Clone)]
pub struct Built {
    pub instance: Instance,
    pub oracle_spec: OracleSpec,
}

impl Built {
    /// Instantiate the recommended oracle (unlimited `t` for exact oracles,
    /// the construction's own `t` for adversarial ones).
    pub fn into_oracle(self) -> Result<Box<dyn QueryOracle>, BuildError> {
        make_oracle(self.instance, &self.oracle_spec, None)
    }
}

/// Build an oracle over `instance` per `spec`. `size_limit` overrides the
/// default limit for exact and box oracles; adversarial oracles always use
/// their construction's `t`.
pub fn make_oracle(
    instance: Instance,
    spec: &OracleSpec,
    size_limit: Option<usize>,
) -> Result<Box<dyn QueryOracle>, BuildError> {
    match spec {
        OracleSpec::Exact => Ok(match size_limit {
            Some(t) => Box::new(ExactOracle::with_size_limit(instance, t)),
            None => Box::new(ExactOracle::new(instance)),
        }),
        OracleSpec::Adversarial(cfg) => {
            if instance.num_statements() == 0 {
                return Err(BuildError::InvalidSpec(
                    "adversarial oracle needs the popular statements materialized".into(),
                ));
            }
            Ok(Box::new(AdversarialOracle::new(instance, cfg.clone())))
        }
        OracleSpec::Box(space) => {
            if space.n() != instance.n() {
                return Err(BuildError::InvalidSpec(format!(
                    "box space has {} points, instance has {} agents",
                    space.n(),
                    instance.n()
                )));
            }
            let k = instance.k();
            Ok(match size_limit {
                Some(t) => Box::new(BoxOracle::with_size_limit(space.clone(), k, t)),
                None => Box::new(BoxOracle::new(space.clone(), k)),
            })
        }
    }
}

impl Built {
    /// Serialize instance plus oracle section into the on-disk document.
    pub fn to_doc(&self) -> InstanceDoc {
        let mut doc = self.instance.to_doc();
        doc.oracle = Some(serde_json::to_value(&self.oracle_spec).expect("oracle spec serializes"));
        doc
    }

    /// Rebuild from a document; a missing oracle section means exact.
    pub fn from_doc(doc: &InstanceDoc) -> Result<Self, BuildError> {
        let instance = Instance::from_doc(doc)?;
        let oracle_spec = match &doc.oracle {
            Some(value) => serde_json::from_value(value.clone())
                .map_err(|e| BuildError::InvalidSpec(format!("malformed oracle section: {e}")))?,
            None => OracleSpec::Exact,
        };
        Ok(Built {
            instance,
            oracle_spec,
        })
    }
}

pub fn build(spec: &ConstructionSpec) -> Result<Built, BuildError> {
    match spec {
        ConstructionSpec::Example1 => {
            let statements = vec![
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
            Ok(Built {
                instance: Instance::new(3, statements, rows)?,
                oracle_spec: OracleSpec::Exact,
            })
        }
        ConstructionSpec::Example2 => {
            let statements = vec![
                Statement::text(0, "alpha_1"),
                Statement::text(1, "alpha_2"),
                Statement::text(2, "beta"),
                Statement::text(3, "beta_prime"),
            ];
            let rows = vec![vec![3.0, 0.0, 2.0, 2.0], vec![0.0, 3.0, 2.0, 2.0]];
            Ok(Built {
                instance: Instance::new(2, statements, rows)?,
                oracle_spec: OracleSpec::Exact,
            })
        }
        ConstructionSpec::SinglePopular { n, k } => {
            let (n, k) = (*n, *k);
            if k < 2 || n < k {
                return Err(BuildError::InvalidSpec(format!(
                    "single_popular requires 2 <= k <= n, got n={n}, k={k}"
                )));
            }
            if n % (k * k) != 0 {
                return Err(BuildError::InvalidSpec(format!(
                    "single_popular requires n divisible by k^2 = {}, got n={n}",
                    k * k
                )));
            }
            let t = (n / k) - n / (k * k); // (n/k)(1 - 1/k)
            let statements = vec![Statement::text(0, "popular")];
            let rows = vec![vec![1.0]; n];
            Ok(Built {
                instance: Instance::new(k, statements, rows)?,
                oracle_spec: OracleSpec::Adversarial(AdversarialConfig {
                    t,
                    construction: Construction::SinglePopular,
                }),
            })
        }
        ConstructionSpec::ColorOvershadow { n, k, seed } => {
            let (n, k) = (*n, *k);
            if k < 2 || k % 2 != 0 {
                return Err(BuildError::InvalidSpec(format!(
                    "color_overshadow requires an even k >= 2, got k={k}"
                )));
            }
            if n % 8 != 0 {
                return Err(BuildError::InvalidSpec(format!(
                    "color_overshadow requires n divisible by 8, got n={n}"
                )));
            }
            if n % (2 * k) != 0 {
                return Err(BuildError::InvalidSpec(format!(
                    "color_overshadow requires n divisible by 2k = {}, got n={n}",
                    2 * k
                )));
            }
            let t = n / 8;
            let support_size = n / (2 * k);
            let num_colors = (k / 2) as u32;
            let mut rng = rng_for(*seed, "overshadow-colors", 0);
            let colors: Vec<u32> = (0..n).map(|_| rng.gen_range(1..=num_colors)).collect();
            // one popular statement per color, approved exactly by that color
            let statements: Vec<Statement> = (0..num_colors)
                .map(|c| Statement::text(c as u64, format!("popular_color_{}", c + 1)))
                .collect();
            let rows: Vec<Vec<f64>> = colors
                .iter()
                .map(|&col| {
                    (1..=num_colors)
                        .map(|c| if col == c { 1.0 } else { 0.0 })
                        .collect()
                })
                .collect();
            Ok(Built {
                instance: Instance::new(k, statements, rows)?,
                oracle_spec: OracleSpec::Adversarial(AdversarialConfig {
                    t,
                    construction: Construction::ColorOvershadow {
                        colors,
                        support_size,
                    },
                }),
            })
        }
        ConstructionSpec::Box {
            n,
            k,
            dims,
            clusters,
            seed,
        } => {
            let (n, k, dims, clusters) = (*n, *k, *dims, *clusters);
            if dims == 0 || clusters == 0 || n == 0 || k == 0 || k > n {
                return Err(BuildError::InvalidSpec(
                    "box requires positive dims/clusters and 1 <= k <= n".into(),
                ));
            }
            let mut rng = rng_for(*seed, "box-clusters", 0);
            // cluster centers in [0, 100]^d with per-dimension half-widths
            let centers: Vec<Vec<f64>> = (0..clusters)
                .map(|_| (0..dims).map(|_| rng.gen_range(0.0..100.0)).collect())
                .collect();
            let widths: Vec<Vec<f64>> = (0..clusters)
                .map(|_| (0..dims).map(|_| rng.gen_range(1.0..8.0)).collect())
                .collect();
            let mut points = Vec::with_capacity(n);
            for i in 0..n {
                let c = i % clusters;
                let point = (0..dims)
                    .map(|d| centers[c][d] + rng.gen_range(-widths[c][d]..widths[c][d]))
                    .collect();
                points.push(point);
            }
            let space = BoxSpace::new(dims, points);
            // materialize only the fallback unit box; utilities are the
            // membership column for it
            let oracle = BoxOracle::new(space.clone(), k);
            Ok(Built {
                instance: oracle.instance().clone(),
                oracle_spec: OracleSpec::Box(space),
            })
        }
        ConstructionSpec::Random {
            n,
            k,
            universe,
            levels,
            seed,
        } => {
            let (n, k, universe) = (*n, *k, *universe);
            if n == 0 || k == 0 || k > n || universe == 0 || levels.is_empty() {
                return Err(BuildError::InvalidSpec(
                    "random requires positive sizes, 1 <= k <= n, and a value set".into(),
                ));
            }
            let mut rng = rng_for(*seed, "random-matrix", 0);
            let statements = (0..universe)
                .map(|j| Statement::text(j as u64, format!("statement_{j}")))
                .collect();
            let rows = (0..n)
                .map(|_| {
                    (0..universe)
                        .map(|_| levels[rng.gen_range(0..levels.len())])
                        .collect()
                })
                .collect();
            Ok(Built {
                instance: Instance::new(k, statements, rows)?,
                oracle_spec: OracleSpec::Exact,
            })
        }
    }
}

/// Rating levels 0..=4, the default value set for random instances.
pub fn default_levels() -> Vec<f64> {
    vec![0.0, 1.0, 2.0, 3.0, 4.0]
}

/// Upper bound on the VC dimension of a built instance's statement space:
/// `ceil(log2 |U|)` for finite universes, `2 * dims` for box spaces.
pub fn vc_dim_upper_bound(built: &Built) -> usize {
    match &built.oracle_spec {
        OracleSpec::Box(space) => space.vc_dim(),
        _ => {
            let m = built.instance.num_statements();
            (usize::BITS - (m - 1).leading_zeros()) as usize
        }
    }
}
