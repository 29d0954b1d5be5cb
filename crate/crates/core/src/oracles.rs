//! Executable property checks.
//!
//! Branch-level checks enumerate every offer set of one branch, so they are
//! exact but bounded by the number of contracts the branch owns. Market-level
//! checks rerun the cumulative offer mechanism under misreports, improved
//! priorities or other proposal orders.
//!
//! A failing verdict always carries a [`Witness`] that [`Witness::reproduces`]
//! can replay against the same market.

use std::collections::BTreeSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::choice::{bits, BranchRule, ChoiceVariant};
use crate::market::{Market, MarketError};
use crate::mechanism::{
    cumulative_offer_outcome, find_blocking_set, is_individually_rational, BlockingSet, ProposalPolicy,
    StabilityError, DEFAULT_BLOCKING_BOUND,
};
use crate::model::{AgentId, BranchId, ContractId, Instance, Outcome, SlotId};

/// Default offer-set bound for the completion, IRC and LAD checks.
pub const DEFAULT_CHOICE_BOUND: usize = 8;
/// Default bound for the substitutability check, which is cubic in size.
pub const DEFAULT_SUBSTITUTABILITY_BOUND: usize = 7;
/// Largest number of contracts per agent the misreport enumeration accepts.
pub const DEFAULT_MISREPORT_BOUND: usize = 4;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("branch `{branch}` owns {size} contracts, above the enumeration bound {bound}")]
    InstanceTooLarge { branch: BranchId, size: usize, bound: usize },
    #[error("agent `{agent}` owns {size} contracts, above the misreport bound {bound}")]
    TooManyContracts { agent: AgentId, size: usize, bound: usize },
    #[error("unknown agent `{0}`")]
    UnknownAgent(AgentId),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Stability(#[from] StabilityError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
}

/// A self-contained counterexample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    /// The candidate differs from the SSPwCT choice without picking two
    /// contracts of one agent.
    Completion {
        branch: BranchId,
        variant: ChoiceVariant,
        offers: BTreeSet<ContractId>,
        sspwct: BTreeSet<ContractId>,
        candidate: BTreeSet<ContractId>,
    },
    /// `z` is rejected from `base + z` but chosen from `base + z + z_prime`.
    Substitutability {
        branch: BranchId,
        variant: ChoiceVariant,
        base: BTreeSet<ContractId>,
        z: ContractId,
        z_prime: ContractId,
    },
    /// Removing the rejected `removed` changes the choice.
    Irc {
        branch: BranchId,
        variant: ChoiceVariant,
        offers: BTreeSet<ContractId>,
        removed: ContractId,
        with: BTreeSet<ContractId>,
        without: BTreeSet<ContractId>,
    },
    /// Adding `added` shrinks the chosen set.
    Lad {
        branch: BranchId,
        variant: ChoiceVariant,
        offers: BTreeSet<ContractId>,
        added: ContractId,
        smaller: BTreeSet<ContractId>,
        larger: BTreeSet<ContractId>,
    },
    Stability {
        outcome: Outcome,
        individually_rational: bool,
        blocking: Option<BlockingSet>,
    },
    /// Reporting `misreport` gets the agent something she truly prefers.
    StrategyProofness {
        agent: AgentId,
        misreport: Vec<ContractId>,
        truthful: Option<ContractId>,
        deviating: Option<ContractId>,
    },
    /// The agent is strictly worse off after the improvement.
    Improvement {
        agent: AgentId,
        improved: Box<Instance>,
        before: Option<ContractId>,
        after: Option<ContractId>,
    },
    OrderIndependence {
        policy: ProposalPolicy,
        lexicographic: Outcome,
        other: Outcome,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyVerdict {
    pub property: String,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    /// The market the witness refers to, set when verdicts of several
    /// instances are merged.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance: Option<Box<Instance>>,
    pub instances_checked: usize,
    /// Offer sets, triples, misreports or trials examined.
    pub cases_checked: usize,
}

impl PropertyVerdict {
    fn new(property: &str, witness: Option<Witness>, cases: usize) -> Self {
        Self {
            property: property.to_string(),
            status: if witness.is_some() { Status::Fail } else { Status::Pass },
            witness,
            instance: None,
            instances_checked: 1,
            cases_checked: cases,
        }
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }

    /// Folds `other` into `self`. The first failure wins.
    pub fn merge(&mut self, other: PropertyVerdict) {
        self.instances_checked += other.instances_checked;
        self.cases_checked += other.cases_checked;
        if self.passed() && !other.passed() {
            self.status = Status::Fail;
            self.witness = other.witness;
            self.instance = other.instance;
        }
    }
}

impl fmt::Display for PropertyVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed() { "pass" } else { "FAIL" };
        write!(
            f,
            "{}: {status} ({} instances, {} cases)",
            self.property, self.instances_checked, self.cases_checked
        )
    }
}

/// All chosen sets of a branch, indexed by offer mask.
struct Table<'r> {
    rule: &'r BranchRule,
    variant: ChoiceVariant,
    chosen: Vec<u64>,
}

impl<'r> Table<'r> {
    fn new(rule: &'r BranchRule, variant: ChoiceVariant, bound: usize) -> Result<Self, OracleError> {
        if rule.len() > bound || rule.len() > 20 {
            return Err(OracleError::InstanceTooLarge {
                branch: rule.id().clone(),
                size: rule.len(),
                bound,
            });
        }
        let chosen = (0..1u64 << rule.len()).map(|m| rule.choose_mask(m, variant)).collect();
        Ok(Self { rule, variant, chosen })
    }

    fn at(&self, mask: u64) -> u64 {
        self.chosen[mask as usize]
    }

    fn full(&self) -> u64 {
        (1u64 << self.rule.len()) - 1
    }

    fn ids(&self, mask: u64) -> BTreeSet<ContractId> {
        self.rule.ids_of(mask)
    }

    fn id(&self, c: usize) -> ContractId {
        self.rule.members()[c].clone()
    }
}

/// The completion is a completion of the SSPwCT rule.
pub fn check_completion(rule: &BranchRule, bound: usize) -> Result<PropertyVerdict, OracleError> {
    check_completion_with(rule, ChoiceVariant::COMPLETION, bound)
}

/// For every offer set, `candidate` either agrees with the SSPwCT rule or
/// picks two contracts of one agent.
pub fn check_completion_with(
    rule: &BranchRule,
    candidate: ChoiceVariant,
    bound: usize,
) -> Result<PropertyVerdict, OracleError> {
    let plain = Table::new(rule, ChoiceVariant::SSPWCT, bound)?;
    let cand = Table::new(rule, candidate, bound)?;
    let witness = (0..=cand.full())
        .find(|&x| cand.at(x) != plain.at(x) && !rule.has_duplicate_agent(cand.at(x)))
        .map(|x| Witness::Completion {
            branch: rule.id().clone(),
            variant: candidate,
            offers: cand.ids(x),
            sspwct: plain.ids(plain.at(x)),
            candidate: cand.ids(cand.at(x)),
        });
    Ok(PropertyVerdict::new("completion", witness, 1 << rule.len()))
}

pub fn check_substitutability(rule: &BranchRule, bound: usize) -> Result<PropertyVerdict, OracleError> {
    check_substitutability_with(rule, ChoiceVariant::COMPLETION, bound)
}

/// `z` rejected from `Y + z` stays rejected from `Y + z + z'`.
pub fn check_substitutability_with(
    rule: &BranchRule,
    variant: ChoiceVariant,
    bound: usize,
) -> Result<PropertyVerdict, OracleError> {
    let t = Table::new(rule, variant, bound)?;
    let m = rule.len();
    let mut cases = 0;
    for y in 0..=t.full() {
        for z in (0..m).filter(|&z| y >> z & 1 == 0) {
            let with_z = y | 1 << z;
            if t.at(with_z) >> z & 1 == 1 {
                continue;
            }
            for zp in (0..m).filter(|&zp| with_z >> zp & 1 == 0) {
                cases += 1;
                if t.at(with_z | 1 << zp) >> z & 1 == 1 {
                    let witness = Witness::Substitutability {
                        branch: rule.id().clone(),
                        variant: t.variant,
                        base: t.ids(y),
                        z: t.id(z),
                        z_prime: t.id(zp),
                    };
                    return Ok(PropertyVerdict::new("substitutability", Some(witness), cases));
                }
            }
        }
    }
    Ok(PropertyVerdict::new("substitutability", None, cases))
}

pub fn check_irc(rule: &BranchRule, bound: usize) -> Result<PropertyVerdict, OracleError> {
    check_irc_with(rule, ChoiceVariant::COMPLETION, bound)
}

/// Removing a rejected contract leaves the choice unchanged.
pub fn check_irc_with(rule: &BranchRule, variant: ChoiceVariant, bound: usize) -> Result<PropertyVerdict, OracleError> {
    let t = Table::new(rule, variant, bound)?;
    let mut cases = 0;
    for x in 0..=t.full() {
        for r in bits(x & !t.at(x)) {
            cases += 1;
            let without = x & !(1 << r);
            if t.at(without) != t.at(x) {
                let witness = Witness::Irc {
                    branch: rule.id().clone(),
                    variant,
                    offers: t.ids(x),
                    removed: t.id(r),
                    with: t.ids(t.at(x)),
                    without: t.ids(t.at(without)),
                };
                return Ok(PropertyVerdict::new("irc", Some(witness), cases));
            }
        }
    }
    Ok(PropertyVerdict::new("irc", None, cases))
}

pub fn check_lad(rule: &BranchRule, bound: usize) -> Result<PropertyVerdict, OracleError> {
    check_lad_with(rule, ChoiceVariant::COMPLETION, bound)
}

/// Adding one contract never shrinks the chosen set. Chains of single
/// additions cover every nested pair.
pub fn check_lad_with(rule: &BranchRule, variant: ChoiceVariant, bound: usize) -> Result<PropertyVerdict, OracleError> {
    let t = Table::new(rule, variant, bound)?;
    let mut cases = 0;
    for x in 0..=t.full() {
        for a in bits(t.full() & !x) {
            cases += 1;
            let y = x | 1 << a;
            if t.at(y).count_ones() < t.at(x).count_ones() {
                let witness = Witness::Lad {
                    branch: rule.id().clone(),
                    variant,
                    offers: t.ids(x),
                    added: t.id(a),
                    smaller: t.ids(t.at(x)),
                    larger: t.ids(t.at(y)),
                };
                return Ok(PropertyVerdict::new("lad", Some(witness), cases));
            }
        }
    }
    Ok(PropertyVerdict::new("lad", None, cases))
}

/// The cumulative offer outcome is stable.
pub fn check_stability(market: &Market, bound: usize) -> Result<PropertyVerdict, OracleError> {
    let outcome = cumulative_offer_outcome(market, ProposalPolicy::Lexicographic);
    let individually_rational = is_individually_rational(market, &outcome);
    let blocking = find_blocking_set(market, &outcome, bound)?;
    let witness = (!individually_rational || blocking.is_some()).then_some(Witness::Stability {
        outcome,
        individually_rational,
        blocking,
    });
    Ok(PropertyVerdict::new("stability", witness, 1))
}

/// Every ordered subset of `items`, the empty one included.
pub fn ordered_subsets<T: Clone>(items: &[T]) -> Vec<Vec<T>> {
    fn go<T: Clone>(items: &[T], used: &mut Vec<bool>, cur: &mut Vec<T>, out: &mut Vec<Vec<T>>) {
        out.push(cur.clone());
        for i in 0..items.len() {
            if !used[i] {
                used[i] = true;
                cur.push(items[i].clone());
                go(items, used, cur, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(items, &mut vec![false; items.len()], &mut Vec::new(), &mut out);
    out
}

/// No agent gains by reporting any other ranking of her own contracts.
pub fn check_strategy_proofness(market: &Market, max_contracts: usize) -> Result<PropertyVerdict, OracleError> {
    let truthful = market.assignment(&cumulative_offer_outcome(market, ProposalPolicy::Lexicographic));
    let mut cases = 0;
    for (a, agent) in market.agents().iter().enumerate() {
        let own: Vec<ContractId> = market.contracts_of(a).map(|c| market.contract_id(c).clone()).collect();
        if own.len() > max_contracts {
            return Err(OracleError::TooManyContracts {
                agent: agent.clone(),
                size: own.len(),
                bound: max_contracts,
            });
        }
        for misreport in ordered_subsets(&own) {
            cases += 1;
            let lying = market.with_ranking(agent, misreport.clone())?;
            let got = lying.assignment(&cumulative_offer_outcome(&lying, ProposalPolicy::Lexicographic))[a];
            // both markets index contracts identically
            if market.compare(a, got, truthful[a]).is_gt() {
                let witness = Witness::StrategyProofness {
                    agent: agent.clone(),
                    misreport,
                    truthful: truthful[a].map(|c| market.contract_id(c).clone()),
                    deviating: got.map(|c| market.contract_id(c).clone()),
                };
                return Ok(PropertyVerdict::new("strategy_proofness", Some(witness), cases));
            }
        }
    }
    Ok(PropertyVerdict::new("strategy_proofness", None, cases))
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ImprovementError {
    #[error("unknown branch `{0}`")]
    UnknownBranch(BranchId),
    #[error("branch `{branch}` has no slot {slot}")]
    UnknownSlot { branch: BranchId, slot: SlotId },
    #[error("contract `{0}` does not belong to the agent and branch")]
    ForeignContract(ContractId),
    #[error("contract `{contract}` cannot move from {from:?} to position {to}")]
    NotAPromotion {
        contract: ContractId,
        from: Option<usize>,
        to: usize,
    },
    #[error("instances differ outside slot priorities")]
    Structure,
    #[error("slot {slot} of `{branch}`: {message}")]
    Violated { branch: BranchId, slot: SlotId, message: String },
}

/// Moves `contract` to `position` in one slot ranking. The contract must end
/// up strictly higher than before; an unlisted contract may go anywhere.
pub fn promote(
    inst: &Instance,
    branch: &BranchId,
    slot: SlotId,
    contract: &ContractId,
    position: usize,
) -> Result<Instance, ImprovementError> {
    let mut out = inst.clone();
    if out.contract(contract).is_none_or(|c| &c.branch != branch) {
        return Err(ImprovementError::ForeignContract(contract.clone()));
    }
    let cfg = out.branch_mut(branch).ok_or_else(|| ImprovementError::UnknownBranch(branch.clone()))?;
    let list = cfg.priority_mut(slot).ok_or_else(|| ImprovementError::UnknownSlot {
        branch: branch.clone(),
        slot,
    })?;
    let from = list.iter().position(|c| c == contract);
    let ok = match from {
        Some(p) => position < p,
        None => position <= list.len(),
    };
    if !ok {
        return Err(ImprovementError::NotAPromotion {
            contract: contract.clone(),
            from,
            to: position,
        });
    }
    if let Some(p) = from {
        list.remove(p);
    }
    list.insert(position, contract.clone());
    Ok(out)
}

/// Random composition of one to three single-slot promotions of `agent`'s
/// contracts. Returns the instance unchanged when no promotion exists.
pub fn generate_improvement(inst: &Instance, agent: &AgentId, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rounds = rng.gen_range(1..=3);
    let mut cur = inst.clone();
    for _ in 0..rounds {
        let candidates = promotion_candidates(&cur, agent);
        let Some((branch, slot, contract, from)) = candidates.choose(&mut rng).cloned() else {
            break;
        };
        let len = cur.branch(&branch).and_then(|b| b.priority(slot)).map_or(0, <[_]>::len);
        let position = match from {
            Some(p) => rng.gen_range(0..p),
            None => rng.gen_range(0..=len),
        };
        cur = promote(&cur, &branch, slot, &contract, position).expect("candidate is a promotion");
    }
    cur
}

// (branch, slot, contract, current position): unlisted contracts, and listed
// ones with some other agent's contract above them
fn promotion_candidates(inst: &Instance, agent: &AgentId) -> Vec<(BranchId, SlotId, ContractId, Option<usize>)> {
    let owner = |id: &ContractId| inst.contract(id).map(|c| &c.agent);
    let mut out = Vec::new();
    for cfg in &inst.branches {
        let own: Vec<&ContractId> = inst
            .contracts
            .iter()
            .filter(|c| &c.agent == agent && c.branch == cfg.id)
            .map(|c| &c.id)
            .collect();
        for slot in cfg.slots() {
            let list = cfg.priority(slot).unwrap_or_default();
            for &c in &own {
                match list.iter().position(|x| x == c) {
                    None => out.push((cfg.id.clone(), slot, c.clone(), None)),
                    Some(p) if list[..p].iter().any(|y| owner(y) != Some(agent)) => {
                        out.push((cfg.id.clone(), slot, c.clone(), Some(p)))
                    }
                    Some(_) => {}
                }
            }
        }
    }
    out
}

/// Checks that `after` improves `before` for `agent`: in every slot each of
/// the agent's contracts stays above whatever it beat (other agents'
/// contracts and the outside option), and other agents' contracts keep their
/// relative order and their listing status.
pub fn verify_improvement(before: &Instance, after: &Instance, agent: &AgentId) -> Result<(), ImprovementError> {
    if before.contracts != after.contracts
        || before.preferences != after.preferences
        || before.branches.len() != after.branches.len()
    {
        return Err(ImprovementError::Structure);
    }
    let mine = |id: &ContractId| before.contract(id).is_some_and(|c| &c.agent == agent);
    for (b0, b1) in before.branches.iter().zip(&after.branches) {
        if b0.id != b1.id || b0.n != b1.n || b0.location != b1.location || b0.transfer != b1.transfer {
            return Err(ImprovementError::Structure);
        }
        for slot in b0.slots() {
            let fail = |message: String| ImprovementError::Violated {
                branch: b0.id.clone(),
                slot,
                message,
            };
            let l0 = b0.priority(slot).unwrap_or_default();
            let l1 = b1.priority(slot).unwrap_or_default();
            let pos1 = |id: &ContractId| l1.iter().position(|c| c == id);
            for (p, x) in l0.iter().enumerate().filter(|(_, x)| mine(x)) {
                let Some(q) = pos1(x) else {
                    return Err(fail(format!("`{x}` dropped from the ranking")));
                };
                // everything below x that belongs to someone else stays below
                if let Some(y) = l0[p + 1..].iter().filter(|y| !mine(y)).find(|y| pos1(y).is_some_and(|r| r < q)) {
                    return Err(fail(format!("`{y}` overtook `{x}`")));
                }
            }
            let others0: Vec<&ContractId> = l0.iter().filter(|c| !mine(c)).collect();
            let others1: Vec<&ContractId> = l1.iter().filter(|c| !mine(c)).collect();
            if others0 != others1 {
                return Err(fail("other agents' contracts changed order or listing".into()));
            }
        }
    }
    Ok(())
}

/// Improving `agent`'s priorities never hurts her.
pub fn check_respects_improvements(
    market: &Market,
    agent: &AgentId,
    trials: usize,
    seed: u64,
) -> Result<PropertyVerdict, OracleError> {
    let a = market.agent_index(agent).ok_or_else(|| OracleError::UnknownAgent(agent.clone()))?;
    let before = market.assignment(&cumulative_offer_outcome(market, ProposalPolicy::Lexicographic))[a];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for trial in 0..trials {
        let improved = generate_improvement(market.instance(), agent, rng.gen());
        debug_assert!(verify_improvement(market.instance(), &improved, agent).is_ok());
        let after_market = Market::new(improved)?;
        let after = after_market.assignment(&cumulative_offer_outcome(&after_market, ProposalPolicy::Lexicographic))[a];
        if market.compare(a, after, before).is_lt() {
            let witness = Witness::Improvement {
                agent: agent.clone(),
                improved: Box::new(after_market.instance().clone()),
                before: before.map(|c| market.contract_id(c).clone()),
                after: after.map(|c| market.contract_id(c).clone()),
            };
            return Ok(PropertyVerdict::new("respects_improvements", Some(witness), trial + 1));
        }
    }
    Ok(PropertyVerdict::new("respects_improvements", None, trials))
}

/// The outcome is the same under the lexicographic order, its reverse, and
/// one seeded random order per seed.
pub fn check_order_independence(market: &Market, seeds: &[u64]) -> PropertyVerdict {
    let lex = cumulative_offer_outcome(market, ProposalPolicy::Lexicographic);
    let policies = std::iter::once(ProposalPolicy::ReverseLexicographic).chain(seeds.iter().map(|&s| ProposalPolicy::SeededRandom(s)));
    let mut cases = 0;
    for policy in policies {
        cases += 1;
        let other = cumulative_offer_outcome(market, policy);
        if other != lex {
            let witness = Witness::OrderIndependence {
                policy,
                lexicographic: lex,
                other,
            };
            return PropertyVerdict::new("order_independence", Some(witness), cases);
        }
    }
    PropertyVerdict::new("order_independence", None, cases)
}

impl Witness {
    /// Replays the counterexample on `market`. True when it still fails.
    pub fn reproduces(&self, market: &Market) -> bool {
        let rule = |b: &BranchId| market.rule(b);
        let choose = |r: &BranchRule, ids: &BTreeSet<ContractId>, v: ChoiceVariant| {
            r.choose_with(ids, v).map(|res| res.chosen).ok()
        };
        match self {
            Witness::Completion {
                branch,
                variant,
                offers,
                ..
            } => rule(branch).is_some_and(|r| {
                let plain = choose(r, offers, ChoiceVariant::SSPWCT);
                let cand = choose(r, offers, *variant);
                match (plain, cand) {
                    (Some(p), Some(c)) => {
                        p != c && r.mask_of(&c).is_ok_and(|m| !r.has_duplicate_agent(m))
                    }
                    _ => false,
                }
            }),
            Witness::Substitutability {
                branch,
                variant,
                base,
                z,
                z_prime,
            } => rule(branch).is_some_and(|r| {
                let mut with_z = base.clone();
                with_z.insert(z.clone());
                let mut with_both = with_z.clone();
                with_both.insert(z_prime.clone());
                let small = choose(r, &with_z, *variant);
                let big = choose(r, &with_both, *variant);
                matches!((small, big), (Some(s), Some(b)) if !s.contains(z) && b.contains(z))
            }),
            Witness::Irc {
                branch,
                variant,
                offers,
                removed,
                ..
            } => rule(branch).is_some_and(|r| {
                let mut without = offers.clone();
                without.remove(removed);
                match (choose(r, offers, *variant), choose(r, &without, *variant)) {
                    (Some(w), Some(wo)) => offers.contains(removed) && !w.contains(removed) && w != wo,
                    _ => false,
                }
            }),
            Witness::Lad {
                branch,
                variant,
                offers,
                added,
                ..
            } => rule(branch).is_some_and(|r| {
                let mut bigger = offers.clone();
                bigger.insert(added.clone());
                match (choose(r, offers, *variant), choose(r, &bigger, *variant)) {
                    (Some(s), Some(b)) => b.len() < s.len(),
                    _ => false,
                }
            }),
            Witness::Stability { outcome, .. } => {
                !is_individually_rational(market, outcome)
                    || find_blocking_set(market, outcome, DEFAULT_BLOCKING_BOUND).is_ok_and(|b| b.is_some())
            }
            Witness::StrategyProofness { agent, misreport, .. } => {
                let Some(a) = market.agent_index(agent) else { return false };
                let Ok(lying) = market.with_ranking(agent, misreport.clone()) else {
                    return false;
                };
                let truthful = market.assignment(&cumulative_offer_outcome(market, ProposalPolicy::Lexicographic))[a];
                let got = lying.assignment(&cumulative_offer_outcome(&lying, ProposalPolicy::Lexicographic))[a];
                market.compare(a, got, truthful).is_gt()
            }
            Witness::Improvement { agent, improved, .. } => {
                let Some(a) = market.agent_index(agent) else { return false };
                if verify_improvement(market.instance(), improved, agent).is_err() {
                    return false;
                }
                let Ok(after_market) = Market::new((**improved).clone()) else {
                    return false;
                };
                let before = market.assignment(&cumulative_offer_outcome(market, ProposalPolicy::Lexicographic))[a];
                let after = after_market.assignment(&cumulative_offer_outcome(&after_market, ProposalPolicy::Lexicographic))[a];
                market.compare(a, after, before).is_lt()
            }
            Witness::OrderIndependence { policy, .. } => {
                cumulative_offer_outcome(market, ProposalPolicy::Lexicographic) != cumulative_offer_outcome(market, *policy)
            }
        }
    }
}

/// Named property families runnable from [`run_suite`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Completion,
    Substitutability,
    Irc,
    Lad,
    Stability,
    StrategyProofness,
    Improvements,
    OrderIndependence,
}

impl Suite {
    pub const ALL: [Suite; 8] = [
        Suite::Completion,
        Suite::Substitutability,
        Suite::Irc,
        Suite::Lad,
        Suite::Stability,
        Suite::StrategyProofness,
        Suite::Improvements,
        Suite::OrderIndependence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Completion => "completion",
            Suite::Substitutability => "substitutability",
            Suite::Irc => "irc",
            Suite::Lad => "lad",
            Suite::Stability => "stability",
            Suite::StrategyProofness => "strategy_proofness",
            Suite::Improvements => "respects_improvements",
            Suite::OrderIndependence => "order_independence",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteOptions {
    /// Improvements tried per agent.
    pub trials: usize,
    /// Random proposal orders tried.
    pub order_seeds: usize,
    pub seed: u64,
    pub choice_bound: usize,
    pub substitutability_bound: usize,
    pub blocking_bound: usize,
    pub misreport_bound: usize,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            trials: 5,
            order_seeds: 20,
            seed: 0,
            choice_bound: DEFAULT_CHOICE_BOUND,
            substitutability_bound: DEFAULT_SUBSTITUTABILITY_BOUND,
            blocking_bound: DEFAULT_BLOCKING_BOUND,
            misreport_bound: DEFAULT_MISREPORT_BOUND,
        }
    }
}

/// Runs `suites` on one market; one verdict per suite, in the given order.
/// Branch-level suites fold the verdicts of every branch.
pub fn run_suite(market: &Market, suites: &[Suite], opts: &SuiteOptions) -> Result<Vec<PropertyVerdict>, OracleError> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut out = Vec::with_capacity(suites.len());
    for &suite in suites {
        let per_branch = |f: &dyn Fn(&BranchRule) -> Result<PropertyVerdict, OracleError>| {
            let mut acc = PropertyVerdict::new(suite.name(), None, 0);
            acc.instances_checked = 0;
            for rule in market.rules() {
                acc.merge(f(rule)?);
            }
            acc.instances_checked = 1;
            Ok::<_, OracleError>(acc)
        };
        let verdict = match suite {
            Suite::Completion => per_branch(&|r| check_completion(r, opts.choice_bound))?,
            Suite::Substitutability => per_branch(&|r| check_substitutability(r, opts.substitutability_bound))?,
            Suite::Irc => per_branch(&|r| check_irc(r, opts.choice_bound))?,
            Suite::Lad => per_branch(&|r| check_lad(r, opts.choice_bound))?,
            Suite::Stability => check_stability(market, opts.blocking_bound)?,
            Suite::StrategyProofness => check_strategy_proofness(market, opts.misreport_bound)?,
            Suite::Improvements => {
                let mut acc = PropertyVerdict::new(suite.name(), None, 0);
                for agent in market.agents() {
                    acc.merge(check_respects_improvements(market, agent, opts.trials, rng.gen())?);
                }
                acc.instances_checked = 1;
                acc
            }
            Suite::OrderIndependence => {
                let seeds: Vec<u64> = (0..opts.order_seeds).map(|_| rng.gen()).collect();
                check_order_independence(market, &seeds)
            }
        };
        out.push(verdict);
    }
    Ok(out)
}

/// Verdicts of several markets folded per suite. A failing verdict keeps the
/// market its witness refers to.
pub fn run_batch(
    instances: &[Instance],
    suites: &[Suite],
    opts: &SuiteOptions,
    jobs: usize,
) -> Result<Vec<PropertyVerdict>, OracleError> {
    use rayon::prelude::*;

    let one = |(i, inst): (usize, &Instance)| -> Result<Vec<PropertyVerdict>, OracleError> {
        let market = Market::new(inst.clone())?;
        let opts = SuiteOptions {
            seed: opts.seed.wrapping_add(i as u64),
            ..opts.clone()
        };
        let mut verdicts = run_suite(&market, suites, &opts)?;
        for v in verdicts.iter_mut().filter(|v| !v.passed()) {
            v.instance = Some(Box::new(inst.clone()));
        }
        Ok(verdicts)
    };
    let results: Vec<Result<Vec<PropertyVerdict>, OracleError>> = if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .expect("thread pool");
        pool.install(|| instances.par_iter().enumerate().map(one).collect())
    } else {
        instances.iter().enumerate().map(one).collect()
    };

    let mut folded: Vec<PropertyVerdict> = suites
        .iter()
        .map(|s| {
            let mut v = PropertyVerdict::new(s.name(), None, 0);
            v.instances_checked = 0;
            v
        })
        .collect();
    for verdicts in results {
        for (acc, v) in folded.iter_mut().zip(verdicts?) {
            acc.merge(v);
        }
    }
    Ok(folded)
}
