//! Cross-module properties: rank-selection laws, quota arithmetic, oracle
//! contracts, process guarantees on randomized instances, and the
//! threshold-discretization argument behind the axiom checkers.

use proptest::prelude::*;
use repslate::axiom::{
    check_bjr, check_jr, enumerate_balanced_matchings, find_bjr_violation, Verdict,
};
use repslate::builders::{build, default_levels, ConstructionSpec, OracleSpec};
use repslate::instance::{
    balance_quotas, is_balanced, rth_largest, BalancedMatching, Instance, Slate,
};
use repslate::oracle::{AdversarialOracle, BoxOracle, Construction, ExactOracle};
use repslate::process::{greedy_bjr, sampled_bjr, SamplingParams};
use repslate::QueryOracle;

proptest! {
    #[test]
    fn rth_largest_is_permutation_invariant_and_monotone(
        values in prop::collection::vec(-100.0f64..100.0, 1..12),
        shift in 0usize..12,
    ) {
        let mut rotated = values.clone();
        rotated.rotate_left(shift % values.len());
        for r in 0..=values.len() {
            prop_assert_eq!(
                rth_largest(&values, r).unwrap(),
                rth_largest(&rotated, r).unwrap()
            );
        }
        // monotone: r <= r' implies rank-r value >= rank-r' value
        for r in 1..values.len() {
            prop_assert!(
                rth_largest(&values, r).unwrap() >= rth_largest(&values, r + 1).unwrap()
            );
        }
        prop_assert!(rth_largest(&values, 0).unwrap().is_infinite());
    }

    #[test]
    fn quotas_sum_to_n_and_differ_by_at_most_one(n in 1usize..200, k in 1usize..20) {
        prop_assume!(k <= n);
        let quotas = balance_quotas(n, k).unwrap();
        prop_assert_eq!(quotas.iter().sum::<usize>(), n);
        let lo = quotas.iter().min().unwrap();
        let hi = quotas.iter().max().unwrap();
        prop_assert!(hi - lo <= 1);

        // the grouping induced by the quotas is balanced
        let mut slots = Vec::with_capacity(n);
        for (slot, &q) in quotas.iter().enumerate() {
            slots.extend(std::iter::repeat(slot).take(q));
        }
        prop_assert!(is_balanced(&BalancedMatching::new(slots), n, k).unwrap());
    }

    #[test]
    fn two_apart_group_sizes_are_unbalanced(n in 4usize..40, k in 2usize..6) {
        prop_assume!(k <= n);
        let mut quotas = balance_quotas(n, k).unwrap();
        // shift one agent between the largest and smallest group
        quotas.sort_unstable();
        quotas[k - 1] += 1;
        quotas[0] -= 1;
        if quotas[k - 1] - quotas[0] >= 2 {
            let mut slots = Vec::with_capacity(n);
            for (slot, &q) in quotas.iter().enumerate() {
                slots.extend(std::iter::repeat(slot).take(q));
            }
            prop_assert!(!is_balanced(&BalancedMatching::new(slots), n, k).unwrap());
        }
    }
}

fn random_built(n: usize, k: usize, universe: usize, seed: u64) -> Instance {
    build(&ConstructionSpec::Random {
        n,
        k,
        universe,
        levels: default_levels(),
        seed,
    })
    .unwrap()
    .instance
}

#[test]
fn exact_gen_dominates_every_statement() {
    for seed in 0..30u64 {
        let inst = random_built(8, 2, 6, seed);
        let mut oracle = ExactOracle::new(inst.clone());
        let agents: Vec<usize> = (0..8).step_by(1 + (seed as usize % 3)).collect();
        for r in 1..=agents.len().min(4) {
            let id = oracle.gen(&agents, r).unwrap();
            let idx = inst.index_of(id).unwrap();
            let rank_of = |j: usize| {
                let vals: Vec<f64> = agents.iter().map(|&a| inst.utility_at(a, j)).collect();
                rth_largest(&vals, r).unwrap()
            };
            let achieved = rank_of(idx);
            for j in 0..inst.num_statements() {
                assert!(achieved >= rank_of(j), "seed {seed}, r {r}");
            }
        }
    }
}

#[test]
fn greedy_satisfies_the_axiom_on_random_instances() {
    for seed in 0..150u64 {
        let n = 2 + (seed as usize % 9);
        let k = 1 + (seed as usize % n.min(4));
        let inst = random_built(n, k, 2 + (seed as usize % 6), seed);
        let mut oracle = ExactOracle::new(inst);
        let run = greedy_bjr(&mut oracle, k).unwrap();
        assert!(is_balanced(&run.matching, n, k).unwrap());
        let violation = find_bjr_violation(oracle.instance(), &run.slate, &run.matching).unwrap();
        assert!(violation.is_none(), "seed {seed}, n {n}, k {k}");
    }
}

#[test]
fn satisfied_bjr_implies_satisfied_jr() {
    let mut checked = 0;
    for seed in 200..300u64 {
        let n = 2 + (seed as usize % 5);
        let k = 1 + (seed as usize % 3.min(n));
        let inst = random_built(n, k, 4, seed);
        // try every slate of k distinct statements (with the search cap,
        // n is small)
        let ids: Vec<u64> = (0..4).collect();
        for combo in combinations(&ids, k) {
            let slate = Slate::new(combo.iter().map(|&i| repslate::StatementId(i)).collect());
            if let Verdict::Satisfied { .. } = check_bjr(&inst, &slate, None, None).unwrap() {
                assert!(
                    check_jr(&inst, &slate).unwrap().is_none(),
                    "seed {seed}: balanced axiom held but relaxed axiom failed"
                );
                checked += 1;
            }
        }
    }
    assert!(
        checked > 50,
        "too few satisfied slates exercised: {checked}"
    );
}

fn combinations(items: &[u64], k: usize) -> Vec<Vec<u64>> {
    if k == 0 {
        return vec![vec![]];
    }
    if items.len() < k {
        return vec![];
    }
    let mut out = combinations(&items[1..], k - 1)
        .into_iter()
        .map(|mut c| {
            c.insert(0, items[0]);
            c
        })
        .collect::<Vec<_>>();
    out.extend(combinations(&items[1..], k));
    out
}

/// Violation search over observed thresholds agrees with a fine grid scan.
#[test]
fn threshold_discretization_is_complete() {
    for seed in 0..80u64 {
        let n = 3 + (seed as usize % 4);
        let k = 1 + (seed as usize % 3);
        if k > n {
            continue;
        }
        let inst = random_built(n, k, 5, seed);
        let slate = Slate::new((0..k as u64).map(repslate::StatementId).collect());
        for matching in enumerate_balanced_matchings(n, k).into_iter().take(6) {
            let discrete = find_bjr_violation(&inst, &slate, &matching)
                .unwrap()
                .is_some();
            // fine grid over quarter-steps spanning the utility range
            let mut grid_found = false;
            'outer: for idx in 0..inst.num_statements() {
                for step in -2..=18 {
                    let theta = step as f64 * 0.25;
                    let coalition = (0..n)
                        .filter(|&i| {
                            let assigned = inst.utility_at(i, matching.slot_of(i));
                            inst.utility_at(i, idx) >= theta && assigned < theta
                        })
                        .count();
                    if k * coalition >= n {
                        grid_found = true;
                        break 'outer;
                    }
                }
            }
            assert_eq!(discrete, grid_found, "seed {seed}");
        }
    }
}

#[test]
fn box_gen_covers_at_least_r_sample_agents() {
    for seed in 0..20u64 {
        let built = build(&ConstructionSpec::Box {
            n: 30,
            k: 3,
            dims: 2,
            clusters: 3,
            seed,
        })
        .unwrap();
        let space = match built.oracle_spec {
            OracleSpec::Box(space) => space,
            _ => unreachable!(),
        };
        let mut oracle = BoxOracle::new(space, 3);
        let agents: Vec<usize> = (0..30).filter(|a| a % 2 == 0).collect();
        for r in [1, 4, 9, 15] {
            let id = oracle.gen(&agents, r).unwrap();
            let idx = oracle.instance().index_of(id).unwrap();
            let covered = agents
                .iter()
                .filter(|&&a| oracle.instance().utility_at(a, idx) == 1.0)
                .count();
            assert!(covered >= r, "seed {seed}, r {r}: covered {covered}");
        }
    }
}

/// The adversary only reveals a popular statement when it strictly beats
/// every unpopular option within the query set.
#[test]
fn adversarial_tie_break_prefers_unpopular() {
    use rand::seq::SliceRandom;
    let built = build(&ConstructionSpec::ColorOvershadow {
        n: 48,
        k: 6,
        seed: 5,
    })
    .unwrap();
    let cfg = match &built.oracle_spec {
        OracleSpec::Adversarial(cfg) => cfg.clone(),
        _ => unreachable!(),
    };
    let (colors, support_size) = match &cfg.construction {
        Construction::ColorOvershadow {
            colors,
            support_size,
        } => (colors.clone(), *support_size),
        _ => unreachable!(),
    };
    let t = cfg.t;
    let mut oracle = AdversarialOracle::new(built.instance, cfg);
    let mut rng = repslate::seed::rng_for(17, "adversarial-prop", 0);
    let all: Vec<usize> = (0..48).collect();
    for _ in 0..200 {
        let size = 1 + (rand::Rng::gen_range(&mut rng, 0..t));
        let mut set: Vec<usize> = all.choose_multiple(&mut rng, size).copied().collect();
        set.sort_unstable();
        let id = oracle.gen(&set, 1).unwrap();
        let best_pop = (1..=3u32)
            .map(|c| set.iter().filter(|&&a| colors[a] == c).count())
            .max()
            .unwrap();
        let best_unpop = set.len().min(support_size);
        if oracle.popular_statements().contains(&id) {
            assert!(best_pop > best_unpop, "popular returned on a tie");
        } else {
            assert!(
                best_pop <= best_unpop,
                "unpopular returned when popular strictly won"
            );
        }
    }
}

/// Empirical check of the concentration bound the overshadow construction
/// rests on: for a fixed query set of size n/8 and a fixed color, the
/// probability that at least n/(2k) of its members share that color stays
/// below exp(-n/(12k)).
#[test]
fn overshadow_color_concentration_respects_the_bound() {
    for (n, k) in [(96usize, 4usize), (48, 6)] {
        let t = n / 8;
        let threshold = n / (2 * k);
        let bound = (-(n as f64) / (12.0 * k as f64)).exp();
        let trials = 3000;
        let mut hits = 0usize;
        for trial in 0..trials {
            let built = build(&ConstructionSpec::ColorOvershadow {
                n,
                k,
                seed: repslate::seed::derive_seed(31, "concentration", trial),
            })
            .unwrap();
            let colors = match &built.oracle_spec {
                OracleSpec::Adversarial(cfg) => match &cfg.construction {
                    Construction::ColorOvershadow { colors, .. } => colors.clone(),
                    _ => unreachable!(),
                },
                _ => unreachable!(),
            };
            // colors are i.i.d., so the first t agents are a fixed set
            let count = colors[..t].iter().filter(|&&c| c == 1).count();
            if count >= threshold {
                hits += 1;
            }
        }
        let freq = hits as f64 / trials as f64;
        assert!(
            freq <= bound,
            "n={n}, k={k}: concentration frequency {freq} above bound {bound}"
        );
    }
}

/// Coverage arithmetic behind the small-query construction: fabricated
/// supports never exceed t, so k unpopular statements leave at least n/k
/// agents approving only the popular statement.
#[test]
fn single_popular_coverage_arithmetic() {
    use rand::seq::SliceRandom;
    let built = build(&ConstructionSpec::SinglePopular { n: 18, k: 3 }).unwrap();
    let cfg = match &built.oracle_spec {
        OracleSpec::Adversarial(cfg) => cfg.clone(),
        _ => unreachable!(),
    };
    let t = cfg.t;
    assert_eq!(t, 4); // (18/3)(1 - 1/3)
    let mut oracle = AdversarialOracle::new(built.instance, cfg);
    let mut rng = repslate::seed::rng_for(23, "coverage", 0);
    let all: Vec<usize> = (0..18).collect();
    let mut fabricated = Vec::new();
    for _ in 0..12 {
        let size = 1 + rand::Rng::gen_range(&mut rng, 0..t);
        let mut set: Vec<usize> = all.choose_multiple(&mut rng, size).copied().collect();
        set.sort_unstable();
        fabricated.push(oracle.gen(&set, 1).unwrap());
    }
    let inst = oracle.instance();
    for &id in &fabricated {
        let idx = inst.index_of(id).unwrap();
        let support = inst.column(idx).iter().filter(|&&v| v == 1.0).count();
        assert!(support <= t);
    }
    // any k fabricated statements leave at least n/k agents uncovered
    for window in fabricated.windows(3) {
        let idxs: Vec<usize> = window.iter().map(|&id| inst.index_of(id).unwrap()).collect();
        let uncovered = (0..18)
            .filter(|&a| idxs.iter().all(|&j| inst.utility_at(a, j) == 0.0))
            .count();
        assert!(uncovered >= 6, "k t = n - n/k leaves n/k uncovered");
    }
}

/// Transcript bookkeeping: entry counts match queries issued, generative
/// entries respect the size limit.
#[test]
fn transcript_counts_and_size_limits() {
    let inst = random_built(10, 2, 5, 3);
    let mut oracle = ExactOracle::with_size_limit(inst, 4);
    let mut expected = 0usize;
    for (set, r) in [(vec![0, 1, 2], 2usize), (vec![3, 4], 1), (vec![5], 1)] {
        oracle.gen(&set, r).unwrap();
        expected += 1;
    }
    // a rejected query leaves no trace
    assert!(oracle.gen(&[0, 1, 2, 3, 4], 1).is_err());
    for a in 0..5 {
        oracle.disc(a, repslate::StatementId(0)).unwrap();
        expected += 1;
    }
    assert_eq!(oracle.transcript().len(), expected);
    assert!(oracle.transcript().gen_entries().all(|e| e.set_size <= 4));
}

/// Regression fixture: at scale (n=2000, k=2, sample size 400, pinned
/// seed) the sampling process never needs its fallback statement, every
/// generative query draws at least the required sample fraction, and the
/// run's own matching is violation-free.
#[test]
fn sampling_fixture_at_scale_completes_without_fallback() {
    let built = build(&ConstructionSpec::Box {
        n: 2000,
        k: 2,
        dims: 2,
        clusters: 4,
        seed: 0,
    })
    .unwrap();
    let params = SamplingParams::with_override(4, 0.05, 400);
    let mut oracle =
        repslate::builders::make_oracle(built.instance, &built.oracle_spec, None).unwrap();
    let run = sampled_bjr(oracle.as_mut(), 2, &params, 42).unwrap();
    assert!(run.success);
    assert!(run.rounds.iter().all(|r| !r.fallback));
    let resolved = params.resolve(2000, 2).unwrap();
    for e in oracle.transcript().gen_entries() {
        assert!(e.set_size as f64 >= resolved.r_bar_x);
    }
    assert!(
        find_bjr_violation(oracle.instance(), &run.slate, &run.matching)
            .unwrap()
            .is_none()
    );
}

/// Runs with identical seeds and instances serialize identically; distinct
/// seeds genuinely differ somewhere.
#[test]
fn sampled_runs_are_byte_identical_per_seed() {
    let built = build(&ConstructionSpec::Box {
        n: 200,
        k: 2,
        dims: 2,
        clusters: 4,
        seed: 8,
    })
    .unwrap();
    let params = SamplingParams::with_override(4, 0.1, 60);
    let run_with = |seed: u64| {
        let mut oracle =
            repslate::builders::make_oracle(built.instance.clone(), &built.oracle_spec, None)
                .unwrap();
        let run = sampled_bjr(oracle.as_mut(), 2, &params, seed).unwrap();
        serde_json::to_vec(&run).unwrap()
    };
    assert_eq!(run_with(21), run_with(21));
    assert_ne!(run_with(21), run_with(22));
}
