//! The cumulative offer mechanism and the stability verifier.
//!
//! At every step one agent who currently holds nothing proposes her favorite
//! contract among those she has not proposed yet. The contract joins the
//! accumulated pool of its branch for good; the branch then re-chooses from
//! the whole pool with its SSPwCT rule. The process stops when no agent is
//! both unheld and left with an acceptable contract to propose. The outcome
//! is the union of every branch's choice from its final pool.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::choice::{ChoiceVariant, Fills};
use crate::market::Market;
use crate::model::{AgentId, BranchId, ContractId, Outcome};

/// Which unheld agent proposes next. The outcome does not depend on the
/// choice; the random policy exists to test exactly that.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy", content = "seed")]
pub enum ProposalPolicy {
    /// Smallest agent id first.
    #[default]
    Lexicographic,
    /// Largest agent id first.
    ReverseLexicographic,
    /// Uniform among eligible agents, driven by ChaCha8 seeded with the value.
    SeededRandom(u64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Held,
    Rejected,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComStep {
    pub t: usize,
    pub agent: AgentId,
    pub contract: ContractId,
    pub verdict: Verdict,
    /// Accumulated offer pool of every branch after this step.
    pub pools: BTreeMap<BranchId, BTreeSet<ContractId>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComTrace {
    pub steps: Vec<ComStep>,
    pub outcome: Outcome,
}

/// Mutable state of a cumulative offer run. Pools and choices are indexed
/// by branch and branch-local contract, so a state can be carried over to a
/// market that differs only in branch parameters.
#[derive(Clone, Debug)]
pub(crate) struct OfferState {
    pub pools: Vec<Vec<bool>>,
    /// Next ranking position each agent would propose.
    pub next: Vec<usize>,
}

impl OfferState {
    pub fn empty(market: &Market) -> Self {
        Self {
            pools: market.rules().iter().map(|r| vec![false; r.len()]).collect(),
            next: vec![0; market.agents().len()],
        }
    }
}

pub(crate) struct Engine<'m> {
    market: &'m Market,
    pub state: OfferState,
    choices: Vec<Fills>,
    held: Vec<usize>,
    rng: Option<ChaCha8Rng>,
    policy: ProposalPolicy,
    t: usize,
}

impl<'m> Engine<'m> {
    pub fn new(market: &'m Market, policy: ProposalPolicy) -> Self {
        Self::resume(market, OfferState::empty(market), policy)
    }

    pub fn resume(market: &'m Market, state: OfferState, policy: ProposalPolicy) -> Self {
        let rng = match policy {
            ProposalPolicy::SeededRandom(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
            _ => None,
        };
        let choices = market
            .rules()
            .iter()
            .zip(&state.pools)
            .map(|(rule, pool)| rule.fill(pool, ChoiceVariant::SSPWCT))
            .collect();
        let mut engine = Self {
            market,
            state,
            choices,
            held: vec![0; market.agents().len()],
            rng,
            policy,
            t: 0,
        };
        engine.count_held();
        engine
    }

    fn count_held(&mut self) {
        self.held.iter_mut().for_each(|h| *h = 0);
        for (b, fills) in self.choices.iter().enumerate() {
            for local in fills.chosen() {
                self.held[self.market.agent_of(self.market.global_of(b, local))] += 1;
            }
        }
    }

    pub fn recompute(&mut self, b: usize) {
        self.choices[b] = self.market.rules()[b].fill(&self.state.pools[b], ChoiceVariant::SSPWCT);
        self.count_held();
    }

    pub fn choices(&self) -> &[Fills] {
        &self.choices
    }

    /// Global indices of all currently chosen contracts.
    pub fn chosen(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .choices
            .iter()
            .enumerate()
            .flat_map(|(b, f)| f.chosen().map(move |l| (b, l)))
            .map(|(b, l)| self.market.global_of(b, l))
            .collect();
        out.sort_unstable();
        out
    }

    fn eligible(&self) -> Vec<usize> {
        (0..self.market.agents().len())
            .filter(|&a| self.held[a] == 0 && self.state.next[a] < self.market.ranking(a).len())
            .collect()
    }

    /// One proposal; `None` once the process has stopped.
    pub fn step(&mut self) -> Option<(usize, usize, Verdict)> {
        let eligible = self.eligible();
        let agent = match self.policy {
            ProposalPolicy::Lexicographic => *eligible.first()?,
            ProposalPolicy::ReverseLexicographic => *eligible.last()?,
            ProposalPolicy::SeededRandom(_) => *eligible.choose(self.rng.as_mut().expect("seeded"))?,
        };
        let contract = self.market.ranking(agent)[self.state.next[agent]];
        self.state.next[agent] += 1;
        let b = self.market.branch_of(contract);
        let local = self.market.local_of(contract);
        self.state.pools[b][local] = true;
        self.recompute(b);
        self.t += 1;
        let verdict = if self.choices[b].chosen().any(|c| c == local) {
            Verdict::Held
        } else {
            Verdict::Rejected
        };
        Some((agent, contract, verdict))
    }

    pub fn outcome(&self) -> Outcome {
        Outcome::new(self.chosen().into_iter().map(|c| self.market.contract_id(c).clone()))
    }

    pub fn pools_by_id(&self) -> BTreeMap<BranchId, BTreeSet<ContractId>> {
        self.market
            .rules()
            .iter()
            .zip(&self.state.pools)
            .map(|(rule, pool)| {
                let ids = pool
                    .iter()
                    .enumerate()
                    .filter(|(_, &on)| on)
                    .map(|(l, _)| rule.members()[l].clone())
                    .collect();
                (rule.id().clone(), ids)
            })
            .collect()
    }
}

/// Runs the cumulative offer process and records every step.
pub fn cumulative_offer(market: &Market, policy: ProposalPolicy) -> ComTrace {
    let mut engine = Engine::new(market, policy);
    let mut steps = Vec::new();
    while let Some((agent, contract, verdict)) = engine.step() {
        steps.push(ComStep {
            t: engine.t,
            agent: market.agents()[agent].clone(),
            contract: market.contract_id(contract).clone(),
            verdict,
            pools: engine.pools_by_id(),
        });
    }
    ComTrace {
        steps,
        outcome: engine.outcome(),
    }
}

/// Outcome only, without building the step log.
pub fn cumulative_offer_outcome(market: &Market, policy: ProposalPolicy) -> Outcome {
    let mut engine = Engine::new(market, policy);
    while engine.step().is_some() {}
    engine.outcome()
}

/// Default bound on the number of contracts of one branch for the
/// exhaustive blocking search.
pub const DEFAULT_BLOCKING_BOUND: usize = 14;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StabilityError {
    #[error("branch `{branch}` owns {size} contracts, above the enumeration bound {bound}")]
    InstanceTooLarge { branch: BranchId, size: usize, bound: usize },
    #[error("outcome names unknown contract `{0}`")]
    UnknownContract(ContractId),
    #[error("outcome is not feasible")]
    Infeasible,
}

/// A branch together with a set of contracts it and the agents involved
/// would all rather sign.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockingSet {
    pub branch: BranchId,
    pub contracts: BTreeSet<ContractId>,
}

fn resolve(market: &Market, out: &Outcome) -> Result<Vec<usize>, StabilityError> {
    out.assignment
        .iter()
        .map(|id| market.contract_index(id).ok_or_else(|| StabilityError::UnknownContract(id.clone())))
        .collect()
}

/// Every contract acceptable to its agent, and every branch would keep all
/// of its contracts.
pub fn is_individually_rational(market: &Market, out: &Outcome) -> bool {
    if !out.is_feasible(market.instance()) {
        return false;
    }
    let Ok(contracts) = resolve(market, out) else {
        return false;
    };
    if contracts.iter().any(|&c| market.pref_rank(c).is_none()) {
        return false;
    }
    market.rules().iter().enumerate().all(|(b, rule)| {
        let mut offered = vec![false; rule.len()];
        for &c in contracts.iter().filter(|&&c| market.branch_of(c) == b) {
            offered[market.local_of(c)] = true;
        }
        let fills = rule.fill(&offered, ChoiceVariant::SSPWCT);
        let kept = fills.chosen().count();
        kept == offered.iter().filter(|&&o| o).count()
    })
}

/// Exhaustive search for a blocking set. Candidate sets are restricted to
/// feasible ones (at most one contract per agent and at most `n` contracts).
pub fn find_blocking_set(market: &Market, out: &Outcome, bound: usize) -> Result<Option<BlockingSet>, StabilityError> {
    let contracts = resolve(market, out)?;
    if !out.is_feasible(market.instance()) {
        return Err(StabilityError::Infeasible);
    }
    for rule in market.rules() {
        if rule.len() > bound || rule.len() > 63 {
            return Err(StabilityError::InstanceTooLarge {
                branch: rule.id().clone(),
                size: rule.len(),
                bound,
            });
        }
    }
    let held = market.assignment(out);

    for (b, rule) in market.rules().iter().enumerate() {
        let current: u64 = contracts
            .iter()
            .filter(|&&c| market.branch_of(c) == b)
            .fold(0, |m, &c| m | 1 << market.local_of(c));
        let current_choice = rule.choose_mask(current, ChoiceVariant::SSPWCT);
        // agents only sign contracts they like at least as much as what they hold
        let willing: u64 = (0..rule.len())
            .filter(|&l| {
                let c = market.global_of(b, l);
                let a = market.agent_of(c);
                market.pref_rank(c).is_some() && market.compare(a, Some(c), held[a]).is_ge()
            })
            .fold(0, |m, l| m | 1 << l);

        // enumerate subsets of the willing contracts
        let mut y = willing;
        loop {
            if y != current_choice
                && (y.count_ones() as usize) <= rule.capacity()
                && !rule.has_duplicate_agent(y)
                && rule.choose_mask(current | y, ChoiceVariant::SSPWCT) == y
            {
                return Ok(Some(BlockingSet {
                    branch: rule.id().clone(),
                    contracts: rule.ids_of(y),
                }));
            }
            if y == 0 {
                break;
            }
            y = (y - 1) & willing;
        }
    }
    Ok(None)
}

/// Individually rational and unblocked.
pub fn is_stable(market: &Market, out: &Outcome) -> Result<bool, StabilityError> {
    if !is_individually_rational(market, out) {
        return Ok(false);
    }
    Ok(find_blocking_set(market, out, DEFAULT_BLOCKING_BOUND)?.is_none())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AgentPreference, BranchConfig, Contract, Instance};

    fn ids(xs: &[&str]) -> Vec<ContractId> {
        xs.iter().map(|&x| ContractId::from(x)).collect()
    }

    fn pref(agent: &str, ranking: &[&str]) -> AgentPreference {
        AgentPreference { agent: agent.into(), ranking: ids(ranking) }
    }

    /// One seat whose original ranks only `x` and whose shadow ranks `y`
    /// then `x`; agents i (owns x) and j (owns y).
    fn contested(transfer: u8) -> Market {
        Market::new(Instance {
            contracts: vec![Contract::new("x", "i", "b", ""), Contract::new("y", "j", "b", "")],
            preferences: vec![pref("i", &["x"]), pref("j", &["y"])],
            branches: vec![BranchConfig {
                id: "b".into(),
                n: 1,
                location: vec![1],
                transfer: vec![transfer],
                original_priorities: vec![ids(&["x"])],
                shadow_priorities: vec![ids(&["y", "x"])],
            }],
        })
        .unwrap()
    }

    #[test]
    fn contested_seat_under_both_proposal_orders() {
        let market = contested(1);
        // i first: o1 takes x, e1 stays inactive; j's y is rejected.
        // j first: o1 vacant, e1 takes y; then i's x fills o1 and e1 shuts.
        for policy in [ProposalPolicy::Lexicographic, ProposalPolicy::ReverseLexicographic] {
            let trace = cumulative_offer(&market, policy);
            assert_eq!(trace.outcome, Outcome::new(ids(&["x"])), "{policy:?}");
        }
        let reversed = cumulative_offer(&market, ProposalPolicy::ReverseLexicographic);
        assert_eq!(reversed.steps.len(), 2);
        assert_eq!(reversed.steps[0].verdict, Verdict::Held);
        assert_eq!(reversed.steps[1].verdict, Verdict::Held);
    }

    #[test]
    fn no_contention_gives_everyone_her_top_choice() {
        let market = Market::new(Instance {
            contracts: vec![Contract::new("x", "i", "b1", ""), Contract::new("y", "j", "b2", "")],
            preferences: vec![pref("i", &["x"]), pref("j", &["y"])],
            branches: ["b1", "b2"]
                .iter()
                .zip([["x"], ["y"]])
                .map(|(&b, listed)| BranchConfig {
                    id: b.into(),
                    n: 1,
                    location: vec![1],
                    transfer: vec![0],
                    original_priorities: vec![ids(&listed)],
                    shadow_priorities: vec![vec![]],
                })
                .collect(),
        })
        .unwrap();
        assert_eq!(cumulative_offer(&market, ProposalPolicy::Lexicographic).outcome, Outcome::new(ids(&["x", "y"])));
    }

    #[test]
    fn agent_with_empty_ranking_never_proposes() {
        let mut inst = contested(1).instance().clone();
        inst.preferences[0].ranking.clear();
        let trace = cumulative_offer(&Market::new(inst).unwrap(), ProposalPolicy::Lexicographic);
        assert!(trace.steps.iter().all(|s| s.agent.as_str() != "i"));
        assert_eq!(trace.outcome, Outcome::new(ids(&["y"])));
    }

    #[test]
    fn individual_rationality() {
        let market = contested(1);
        assert!(is_individually_rational(&market, &Outcome::default()));
        let mut inst = market.instance().clone();
        inst.preferences[1].ranking.clear();
        let market = Market::new(inst).unwrap();
        assert!(!is_individually_rational(&market, &Outcome::new(ids(&["y"]))));
    }

    #[test]
    fn vacant_seat_with_willing_agent_blocks() {
        let market = Market::new(Instance {
            contracts: vec![Contract::new("x", "i", "b", "")],
            preferences: vec![pref("i", &["x"])],
            branches: vec![BranchConfig {
                id: "b".into(),
                n: 1,
                location: vec![1],
                transfer: vec![0],
                original_priorities: vec![ids(&["x"])],
                shadow_priorities: vec![vec![]],
            }],
        })
        .unwrap();
        let block = find_blocking_set(&market, &Outcome::default(), DEFAULT_BLOCKING_BOUND).unwrap();
        assert_eq!(
            block,
            Some(BlockingSet {
                branch: "b".into(),
                contracts: ids(&["x"]).into_iter().collect()
            })
        );
        assert!(!is_stable(&market, &Outcome::default()).unwrap());
        let com = cumulative_offer_outcome(&market, ProposalPolicy::Lexicographic);
        assert!(is_stable(&market, &com).unwrap());
    }

    #[test]
    fn empty_instance_is_stable() {
        let market = Market::new(Instance::default()).unwrap();
        assert_eq!(find_blocking_set(&market, &Outcome::default(), DEFAULT_BLOCKING_BOUND).unwrap(), None);
        assert!(is_stable(&market, &Outcome::default()).unwrap());
    }

    #[test]
    fn blocking_search_respects_bound() {
        let market = contested(1);
        let err = find_blocking_set(&market, &Outcome::default(), 1).unwrap_err();
        assert!(matches!(err, StabilityError::InstanceTooLarge { .. }));
    }

    #[test]
    fn contested_com_outcome_is_stable() {
        let market = contested(1);
        let out = cumulative_offer_outcome(&market, ProposalPolicy::Lexicographic);
        assert!(is_stable(&market, &out).unwrap());
        // giving the seat to j instead is blocked by i through o1
        assert!(!is_stable(&market, &Outcome::new(ids(&["y"]))).unwrap());
    }

    #[test]
    fn trace_pools_grow_and_nothing_is_proposed_twice() {
        let market = contested(1);
        let trace = cumulative_offer(&market, ProposalPolicy::ReverseLexicographic);
        let mut proposed = BTreeSet::new();
        let mut last = 0;
        for step in &trace.steps {
            assert!(proposed.insert(step.contract.clone()));
            let size: usize = step.pools.values().map(BTreeSet::len).sum();
            assert!(size > last);
            last = size;
        }
    }
}
