//! Verifiers for the representation axioms: the balanced-matching axiom
//! (with given-matching and matching-search modes) and its relaxation where
//! every agent counts as represented by their best slate statement.

use crate::instance::{
    is_balanced, AgentId, BalancedMatching, CoreError, Instance, Slate, StatementId,
};
use itertools::Itertools;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AxiomError {
    #[error("matching is not balanced over the slate")]
    UnbalancedMatching,
    #[error("slate references unknown statement {0}")]
    UnknownStatement(StatementId),
    #[error("slate has {got} members, instance expects k={expected}")]
    WrongSlateSize { got: usize, expected: usize },
    #[error(transparent)]
    Core(#[from] CoreError),
}

/// A witnessed axiom violation: a coalition large enough to deserve a
/// slate slot, cohesive at threshold `theta` on `statement`, with every
/// member left strictly below `theta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub coalition: Vec<AgentId>,
    pub statement: StatementId,
    pub theta: f64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AxiomOptions {
    /// Restrict candidate statements to those outside the slate (the
    /// set-slate variant of the axiom). Default: candidates range over the
    /// whole universe, as in the multiset axiom.
    pub exclude_slate_statements: bool,
}

/// Outcome of a balanced-representation check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "verdict")]
pub enum Verdict {
    /// A balanced matching with no violation; carries the witness.
    Satisfied { witness: BalancedMatching },
    /// Every matching tried had a violation; carries the last one found.
    Violated { violation: Violation },
    /// Matching search was infeasible at this size.
    Undecided { reason: String },
}

fn slate_indices(instance: &Instance, slate: &Slate) -> Result<Vec<usize>, AxiomError> {
    if slate.len() != instance.k() {
        return Err(AxiomError::WrongSlateSize {
            got: slate.len(),
            expected: instance.k(),
        });
    }
    slate
        .members
        .iter()
        .map(|&id| {
            instance
                .index_of(id)
                .ok_or(AxiomError::UnknownStatement(id))
        })
        .collect()
}

/// Distinct utility values of a statement's column, descending. Candidate
/// thresholds are restricted to observed values: any violating threshold
/// can be raised to the next observed utility above it without shrinking
/// the coalition, so the restriction is lossless.
fn candidate_thetas(column: &[f64]) -> Vec<f64> {
    let mut values = column.to_vec();
    values.sort_by(|a, b| b.total_cmp(a));
    values.dedup();
    values
}

/// Search for a violation of the balanced-matching axiom given a concrete
/// matching. Scans statements in universe order and thresholds from high
/// to low; returns the first violation found.
pub fn find_bjr_violation(
    instance: &Instance,
    slate: &Slate,
    matching: &BalancedMatching,
) -> Result<Option<Violation>, AxiomError> {
    find_bjr_violation_opts(instance, slate, matching, AxiomOptions::default())
}

pub fn find_bjr_violation_opts(
    instance: &Instance,
    slate: &Slate,
    matching: &BalancedMatching,
    opts: AxiomOptions,
) -> Result<Option<Violation>, AxiomError> {
    let n = instance.n();
    let k = instance.k();
    let slots = slate_indices(instance, slate)?;
    if !is_balanced(matching, n, k)? {
        return Err(AxiomError::UnbalancedMatching);
    }
    // utility each agent receives from their assigned slate member
    let assigned: Vec<f64> = (0..n)
        .map(|i| instance.utility_at(i, slots[matching.slot_of(i)]))
        .collect();

    for idx in 0..instance.num_statements() {
        if opts.exclude_slate_statements && slots.contains(&idx) {
            continue;
        }
        let column = instance.column(idx);
        for theta in candidate_thetas(column) {
            let coalition: Vec<AgentId> = (0..n)
                .filter(|&i| column[i] >= theta && assigned[i] < theta)
                .collect();
            // coalition deserves a slot iff |S| >= n/k, compared exactly
            if k * coalition.len() >= n {
                return Ok(Some(Violation {
                    coalition,
                    statement: instance.statement(idx).id,
                    theta,
                }));
            }
        }
    }
    Ok(None)
}

/// All balanced matchings of `n` agents onto `k` slots: every assignment of
/// quota-sized groups (each slot receiving `floor(n/k)` or `ceil(n/k)`
/// agents) to slots. Exposed for ground-truth testing; the count grows
/// multinomially, so callers cap `n`.
pub fn enumerate_balanced_matchings(n: usize, k: usize) -> Vec<BalancedMatching> {
    let floor = n / k;
    let extra = n % k; // number of slots receiving floor + 1
    let mut out = Vec::new();
    // choose which slots take the extra agent, then assign agents
    for ceil_slots in (0..k).combinations(extra) {
        let sizes: Vec<usize> = (0..k)
            .map(|s| floor + usize::from(ceil_slots.contains(&s)))
            .collect();
        let mut slots = vec![usize::MAX; n];
        fill(&mut out, &mut slots, &sizes, &mut vec![0; k], 0);
    }
    return out;

    fn fill(
        out: &mut Vec<BalancedMatching>,
        slots: &mut Vec<usize>,
        sizes: &[usize],
        used: &mut Vec<usize>,
        agent: usize,
    ) {
        if agent == slots.len() {
            out.push(BalancedMatching::new(slots.clone()));
            return;
        }
        for s in 0..sizes.len() {
            if used[s] < sizes[s] {
                used[s] += 1;
                slots[agent] = s;
                fill(out, slots, sizes, used, agent + 1);
                used[s] -= 1;
            }
        }
    }
}

/// Decide the balanced-matching axiom for a slate. With a matching this
/// delegates to [`find_bjr_violation`]; without one it enumerates all
/// balanced matchings (infeasible beyond `search_cap` agents, default 10).
pub fn check_bjr(
    instance: &Instance,
    slate: &Slate,
    matching: Option<&BalancedMatching>,
    search_cap: Option<usize>,
) -> Result<Verdict, AxiomError> {
    check_bjr_opts(
        instance,
        slate,
        matching,
        search_cap,
        AxiomOptions::default(),
    )
}

pub fn check_bjr_opts(
    instance: &Instance,
    slate: &Slate,
    matching: Option<&BalancedMatching>,
    search_cap: Option<usize>,
    opts: AxiomOptions,
) -> Result<Verdict, AxiomError> {
    if let Some(m) = matching {
        return Ok(match find_bjr_violation_opts(instance, slate, m, opts)? {
            None => Verdict::Satisfied { witness: m.clone() },
            Some(violation) => Verdict::Violated { violation },
        });
    }
    let cap = search_cap.unwrap_or(10);
    if instance.n() > cap {
        return Ok(Verdict::Undecided {
            reason: format!(
                "matching search requires n <= {cap}, instance has n = {}",
                instance.n()
            ),
        });
    }
    let mut last = None;
    for candidate in enumerate_balanced_matchings(instance.n(), instance.k()) {
        match find_bjr_violation_opts(instance, slate, &candidate, opts)? {
            None => return Ok(Verdict::Satisfied { witness: candidate }),
            Some(v) => last = Some(v),
        }
    }
    Ok(Verdict::Violated {
        violation: last.expect("at least one balanced matching exists"),
    })
}

/// The relaxed axiom: each agent is represented by their best slate
/// statement. Returns a violating coalition, statement, and threshold, or
/// `None`.
pub fn check_jr(instance: &Instance, slate: &Slate) -> Result<Option<Violation>, AxiomError> {
    let n = instance.n();
    let k = instance.k();
    let slots = slate_indices(instance, slate)?;
    let best: Vec<f64> = (0..n)
        .map(|i| {
            slots
                .iter()
                .map(|&s| instance.utility_at(i, s))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    for idx in 0..instance.num_statements() {
        let column = instance.column(idx);
        for theta in candidate_thetas(column) {
            let coalition: Vec<AgentId> = (0..n)
                .filter(|&i| column[i] >= theta && best[i] < theta)
                .collect();
            if k * coalition.len() >= n {
                return Ok(Some(Violation {
                    coalition,
                    statement: instance.statement(idx).id,
                    theta,
                }));
            }
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builders::{build, ConstructionSpec};

    fn example1() -> Instance {
        build(&ConstructionSpec::Example1).unwrap().instance
    }

    fn example2() -> Instance {
        build(&ConstructionSpec::Example2).unwrap().instance
    }

    fn ids(v: &[u64]) -> Slate {
        Slate::new(v.iter().map(|&i| StatementId(i)).collect())
    }

    #[test]
    fn unproportional_slate_has_violation_under_any_matching() {
        let inst = example1();
        // slate {alpha, beta, beta'} with matching 1->alpha, 2->beta, 3->beta'
        let slate = ids(&[0, 2, 3]);
        let matching = BalancedMatching::new(vec![0, 1, 2]);
        let v = find_bjr_violation(&inst, &slate, &matching)
            .unwrap()
            .expect("violation");
        // agent 2 approves both bloc statements but is matched at utility 0
        assert_eq!(v.coalition, vec![1]);
        assert_eq!(v.theta, 1.0);
        // soundness: re-check the three defining conditions from raw utilities
        let idx = inst.index_of(v.statement).unwrap();
        for &i in &v.coalition {
            assert!(inst.utility_at(i, idx) >= v.theta);
            let slot = matching.slot_of(i);
            let assigned = inst.index_of(slate.members[slot]).unwrap();
            assert!(inst.utility_at(i, assigned) < v.theta);
        }
        assert!(inst.k() * v.coalition.len() >= inst.n());

        // under the set-slate variant the witness is the out-of-slate twin
        let v = find_bjr_violation_opts(
            &inst,
            &slate,
            &matching,
            AxiomOptions {
                exclude_slate_statements: true,
            },
        )
        .unwrap()
        .expect("violation");
        assert_eq!(v.statement, StatementId(1));
        assert_eq!(v.coalition, vec![1]);
        assert_eq!(v.theta, 1.0);
    }

    #[test]
    fn matching_search_modes() {
        let inst = example1();
        // {alpha, alpha', beta} admits a violation-free matching
        match check_bjr(&inst, &ids(&[0, 1, 2]), None, None).unwrap() {
            Verdict::Satisfied { witness } => {
                assert_eq!(witness.slots, vec![0, 1, 2]);
            }
            other => panic!("expected satisfied, got {other:?}"),
        }
        // {alpha, beta, beta'} fails under all 6 balanced matchings
        assert!(matches!(
            check_bjr(&inst, &ids(&[0, 2, 3]), None, None).unwrap(),
            Verdict::Violated { .. }
        ));
        // cap exceeded is explicit
        assert!(matches!(
            check_bjr(&inst, &ids(&[0, 1, 2]), None, Some(2)).unwrap(),
            Verdict::Undecided { .. }
        ));
    }

    #[test]
    fn specific_statements_are_the_unique_satisfying_pair() {
        let inst = example2();
        // slate {beta, beta'}: agent 1's specific statement at 3 beats the
        // assigned utility 2
        let slate = ids(&[2, 3]);
        let matching = BalancedMatching::new(vec![0, 1]);
        let v = find_bjr_violation(&inst, &slate, &matching)
            .unwrap()
            .expect("violation");
        assert_eq!(v.coalition, vec![0]);
        assert_eq!(v.statement, StatementId(0));
        assert_eq!(v.theta, 3.0);

        // {alpha_1, alpha_2} with the identity matching is violation-free
        let slate = ids(&[0, 1]);
        let matching = BalancedMatching::new(vec![0, 1]);
        assert!(find_bjr_violation(&inst, &slate, &matching)
            .unwrap()
            .is_none());

        // exactly one of the 10 size-2 multisets over 4 statements passes
        let mut satisfied = Vec::new();
        for a in 0..4u64 {
            for b in a..4u64 {
                let slate = ids(&[a, b]);
                if let Verdict::Satisfied { .. } = check_bjr(&inst, &slate, None, None).unwrap() {
                    satisfied.push((a, b));
                }
            }
        }
        assert_eq!(satisfied, vec![(0, 1)]);
    }

    #[test]
    fn relaxed_axiom_examples() {
        let inst = example1();
        // the unproportional slate satisfies the relaxed axiom
        assert!(check_jr(&inst, &ids(&[0, 2, 3])).unwrap().is_none());
        // a slate containing every agent's maximal statement passes
        assert!(check_jr(&inst, &ids(&[0, 1, 2])).unwrap().is_none());
    }

    #[test]
    fn unbalanced_matching_is_rejected() {
        let inst = example1();
        let slate = ids(&[0, 1, 2]);
        let matching = BalancedMatching::new(vec![0, 0, 1]);
        assert!(matches!(
            find_bjr_violation(&inst, &slate, &matching),
            Err(AxiomError::UnbalancedMatching)
        ));
    }

    #[test]
    fn balanced_matching_enumeration_counts() {
        assert_eq!(enumerate_balanced_matchings(3, 3).len(), 6);
        // n=3, k=2: one slot of 2 and one of 1, 2 choices of ceil slot,
        // 3 choices of the singleton agent
        assert_eq!(enumerate_balanced_matchings(3, 2).len(), 6);
        for m in enumerate_balanced_matchings(5, 2) {
            assert!(is_balanced(&m, 5, 2).unwrap());
        }
    }
}
