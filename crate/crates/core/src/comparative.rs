//! Comparative statics: what happens to every agent when a branch becomes
//! more flexible, gains a seat, or the market gains contracts.
//!
//! Each experiment runs the cumulative offer mechanism on a baseline and a
//! modified market and compares every agent's assignment under her
//! preferences in the modified market, which agree with the baseline ones on
//! old contracts.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::choice::{ChoiceVariant, Fill};
use crate::market::{Market, MarketError};
use crate::mechanism::{cumulative_offer_outcome, Engine, ProposalPolicy};
use crate::model::{AgentId, BranchId, Contract, ContractId, Instance, Outcome, SlotId};

#[derive(Debug, Error)]
pub enum ComparativeError {
    #[error("unknown branch `{0}`")]
    UnknownBranch(BranchId),
    #[error("branch `{branch}` has no seat pair {k} (n = {n})")]
    SlotOutOfRange { branch: BranchId, k: usize, n: usize },
    #[error("transfer bit {k} of branch `{branch}` is already set")]
    AlreadyFlexible { branch: BranchId, k: usize },
    #[error("precondition unmet: {0}")]
    PreconditionUnmet(String),
    #[error("the given outcome is not the baseline cumulative offer outcome")]
    NotBaseline,
    #[error("condition violated: {0}")]
    ConditionViolation(String),
    #[error(transparent)]
    Market(#[from] MarketError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Change {
    Better,
    Equal,
    Worse,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentComparison {
    pub agent: AgentId,
    pub baseline: Option<ContractId>,
    pub modified: Option<ContractId>,
    pub change: Change,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", content = "agents", rename_all = "snake_case")]
pub enum ComparisonVerdict {
    /// Nobody is worse off.
    ParetoDominates,
    /// Nobody in the set is worse off; others may be.
    WeaklyImprovesFor(BTreeSet<AgentId>),
    /// These protected agents are worse off.
    Violates(BTreeSet<AgentId>),
}

/// Whose welfare an experiment is expected to protect.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Protected {
    /// Every agent; a clean result reads as Pareto dominance.
    Everyone,
    /// Every agent, reported agent by agent.
    AllAgents,
    Only(BTreeSet<AgentId>),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub baseline: Outcome,
    pub modified: Outcome,
    pub agents: Vec<AgentComparison>,
    pub verdict: ComparisonVerdict,
    /// Some agent is strictly better off.
    pub strict: bool,
}

impl ComparisonReport {
    pub fn holds(&self) -> bool {
        !matches!(self.verdict, ComparisonVerdict::Violates(_))
    }

    pub fn worse(&self) -> impl Iterator<Item = &AgentId> {
        self.agents.iter().filter(|a| a.change == Change::Worse).map(|a| &a.agent)
    }
}

/// Compares two outcomes agent by agent under `modified`'s preferences.
/// Agents unknown to `modified` are ignored.
pub fn compare_outcomes(modified: &Market, baseline: &Outcome, changed: &Outcome, protect: &Protected) -> ComparisonReport {
    let before = modified.assignment(baseline);
    let after = modified.assignment(changed);
    let agents: Vec<AgentComparison> = modified
        .agents()
        .iter()
        .enumerate()
        .map(|(a, agent)| AgentComparison {
            agent: agent.clone(),
            baseline: before[a].map(|c| modified.contract_id(c).clone()),
            modified: after[a].map(|c| modified.contract_id(c).clone()),
            change: match modified.compare(a, after[a], before[a]) {
                std::cmp::Ordering::Greater => Change::Better,
                std::cmp::Ordering::Equal => Change::Equal,
                std::cmp::Ordering::Less => Change::Worse,
            },
        })
        .collect();
    let is_protected = |id: &AgentId| match protect {
        Protected::Everyone | Protected::AllAgents => true,
        Protected::Only(set) => set.contains(id),
    };
    let worse: BTreeSet<AgentId> = agents
        .iter()
        .filter(|a| a.change == Change::Worse && is_protected(&a.agent))
        .map(|a| a.agent.clone())
        .collect();
    let verdict = if !worse.is_empty() {
        ComparisonVerdict::Violates(worse)
    } else {
        match protect {
            Protected::Everyone => ComparisonVerdict::ParetoDominates,
            Protected::AllAgents => ComparisonVerdict::WeaklyImprovesFor(modified.agents().iter().cloned().collect()),
            Protected::Only(set) => ComparisonVerdict::WeaklyImprovesFor(set.clone()),
        }
    };
    ComparisonReport {
        baseline: baseline.clone(),
        modified: changed.clone(),
        strict: agents.iter().any(|a| a.change == Change::Better),
        agents,
        verdict,
    }
}

fn com(market: &Market) -> Outcome {
    cumulative_offer_outcome(market, ProposalPolicy::Lexicographic)
}

/// `inst` with transfer bit `k` (1-based) of `branch` set.
pub fn with_transfer(inst: &Instance, branch: &BranchId, k: usize) -> Result<Instance, ComparativeError> {
    let mut out = inst.clone();
    let cfg = out.branch_mut(branch).ok_or_else(|| ComparativeError::UnknownBranch(branch.clone()))?;
    if k == 0 || k > cfg.n {
        return Err(ComparativeError::SlotOutOfRange {
            branch: branch.clone(),
            k,
            n: cfg.n,
        });
    }
    if cfg.transfer[k - 1] == 1 {
        return Err(ComparativeError::AlreadyFlexible { branch: branch.clone(), k });
    }
    cfg.transfer[k - 1] = 1;
    Ok(out)
}

/// Sets transfer bit `k` of `branch` and compares the two outcomes; nobody
/// should be worse off.
pub fn flexibility_compare(inst: &Instance, branch: &BranchId, k: usize) -> Result<ComparisonReport, ComparativeError> {
    let modified = with_transfer(inst, branch, k)?;
    let before = Market::new(inst.clone())?;
    let after = Market::new(modified)?;
    Ok(compare_outcomes(&after, &com(&before), &com(&after), &Protected::Everyone))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainLink {
    /// Contract newly assigned at this step.
    pub x: ContractId,
    /// What its agent held before, now vacated.
    pub z: Option<ContractId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImprovementChain {
    pub links: Vec<ChainLink>,
    pub outcome: Outcome,
    /// Every re-choice changed exactly the vacated seat.
    pub pure: bool,
    /// `outcome` equals the cumulative offer outcome of the modified market.
    pub agrees_with_com: bool,
}

/// Rebuilds the modified outcome from the baseline one by a chain of
/// replacements.
///
/// `x_1` is the contract the modified mechanism seats at the newly opened
/// shadow. Each step hands `x_t` to its agent, who withdraws every offer she
/// likes less (her old contract `z_t` among them). The branch of `z_t` then
/// re-chooses from its remaining offers and the contract it newly takes is
/// `x_{t+1}`. The chain stops when an agent had nothing before or nothing new
/// is taken. The result is compared with a direct run rather than assumed
/// equal.
pub fn improvement_chain(
    inst: &Instance,
    baseline: &Outcome,
    branch: &BranchId,
    k: usize,
) -> Result<ImprovementChain, ComparativeError> {
    let modified_inst = with_transfer(inst, branch, k)?;
    let before = Market::new(inst.clone())?;
    let after = Market::new(modified_inst)?;

    let mut engine = Engine::new(&before, ProposalPolicy::Lexicographic);
    while engine.step().is_some() {}
    if &engine.outcome() != baseline {
        return Err(ComparativeError::NotBaseline);
    }
    let b = after.branch_index(branch).expect("branch exists");
    let shadow_pos = after.rules()[b]
        .sequence()
        .order
        .iter()
        .position(|&s| s == SlotId::shadow(k))
        .expect("shadow in sequence");
    let mut direct = Engine::new(&after, ProposalPolicy::Lexicographic);
    while direct.step().is_some() {}
    let Fill::Assigned(first) = direct.choices()[b].per_slot[shadow_pos] else {
        return Err(ComparativeError::PreconditionUnmet(format!(
            "shadow seat e{k} of `{branch}` stays vacant after the flip"
        )));
    };

    let mut pools = engine.state.pools.clone();
    let mut held = after.assignment(baseline);
    let mut links = Vec::new();
    let mut pure = true;
    let mut next = Some(after.global_of(b, first));
    while let Some(x) = next.take() {
        if links.len() > after.contract_count() {
            break;
        }
        let a = after.agent_of(x);
        let z = held[a];
        links.push(ChainLink {
            x: after.contract_id(x).clone(),
            z: z.map(|z| after.contract_id(z).clone()),
        });
        held[a] = Some(x);
        for c in after.contracts_of(a) {
            if after.compare(a, Some(c), Some(x)).is_lt() {
                pools[after.branch_of(c)][after.local_of(c)] = false;
            }
        }
        let Some(z) = z else { break };
        let bz = after.branch_of(z);
        let chosen: Vec<usize> = after.rules()[bz]
            .fill(&pools[bz], ChoiceVariant::SSPWCT)
            .chosen()
            .map(|l| after.global_of(bz, l))
            .collect();
        let is_held = |c: usize| held[after.agent_of(c)] == Some(c);
        let fresh: Vec<usize> = chosen.iter().copied().filter(|&c| !is_held(c)).collect();
        let kept = chosen.len() - fresh.len();
        let had = held.iter().flatten().filter(|&&c| after.branch_of(c) == bz).count();
        if fresh.len() > 1 || kept != had {
            pure = false;
        }
        next = fresh.first().copied();
    }
    let outcome = Outcome::new(held.iter().flatten().map(|&c| after.contract_id(c).clone()));
    Ok(ImprovementChain {
        links,
        agrees_with_com: outcome == direct.outcome(),
        outcome,
        pure,
    })
}

/// `inst` with a new original seat ranked by `ranking` inserted at 1-based
/// precedence `position` (default: last). Its paired shadow gets the same
/// index, transfer bit 0 and an empty ranking, so it never opens. Shadows
/// that used to follow the displaced originals move back by one original.
pub fn extend_with_original_slot(
    inst: &Instance,
    branch: &BranchId,
    ranking: Vec<ContractId>,
    position: Option<usize>,
) -> Result<Instance, ComparativeError> {
    let mut out = inst.clone();
    let cfg = out.branch_mut(branch).ok_or_else(|| ComparativeError::UnknownBranch(branch.clone()))?;
    let n = cfg.n;
    let p = position.unwrap_or(n + 1);
    if p == 0 || p > n + 1 {
        return Err(ComparativeError::SlotOutOfRange {
            branch: branch.clone(),
            k: p,
            n: n + 1,
        });
    }
    let mut location: Vec<usize> = cfg.location.iter().map(|&l| if l >= p { l + 1 } else { l }).collect();
    let before = if p >= 2 { location[p - 2] } else { 1 };
    location.insert(p - 1, p.max(before));
    cfg.location = location;
    cfg.transfer.insert(p - 1, 0);
    cfg.original_priorities.insert(p - 1, ranking);
    cfg.shadow_priorities.insert(p - 1, Vec::new());
    cfg.n = n + 1;
    Ok(out)
}

/// Adds an original seat and compares; nobody should be worse off.
pub fn add_original_slot(
    inst: &Instance,
    branch: &BranchId,
    ranking: Vec<ContractId>,
    position: Option<usize>,
) -> Result<ComparisonReport, ComparativeError> {
    let extended = extend_with_original_slot(inst, branch, ranking, position)?;
    let before = Market::new(inst.clone())?;
    let after = Market::new(extended)?;
    Ok(compare_outcomes(&after, &com(&before), &com(&after), &Protected::AllAgents))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum AdditionMode {
    /// New contracts sit below every old contract of their branch in every
    /// seat that ranks them. Nobody should be worse off.
    Bottom,
    /// New contracts all belong to one agent and may sit anywhere. That
    /// agent should not be worse off.
    SingleAgent,
}

fn restrict<'a>(list: &'a [ContractId], keep: &'a BTreeSet<&ContractId>) -> Vec<&'a ContractId> {
    list.iter().filter(|c| keep.contains(c)).collect()
}

/// Checks that `extended` adds contracts to `base` as `mode` requires and
/// returns the new contracts.
pub fn check_addition(base: &Instance, extended: &Instance, mode: AdditionMode) -> Result<Vec<Contract>, ComparativeError> {
    let bad = |m: String| Err(ComparativeError::ConditionViolation(m));
    let new_contracts: Vec<Contract> = extended
        .contracts
        .iter()
        .filter(|c| base.contract(&c.id).is_none())
        .cloned()
        .collect();
    for c in &base.contracts {
        if extended.contract(&c.id) != Some(c) {
            return bad(format!("old contract `{}` missing or changed", c.id));
        }
    }
    let old: BTreeSet<&ContractId> = base.contracts.iter().map(|c| &c.id).collect();

    for p in &base.preferences {
        let Some(q) = extended.preference(&p.agent) else {
            return bad(format!("agent `{}` lost her preference record", p.agent));
        };
        if restrict(&q.ranking, &old) != p.ranking.iter().collect::<Vec<_>>() {
            return bad(format!("agent `{}` reorders or drops old contracts", p.agent));
        }
    }
    if base.branches.len() != extended.branches.len() {
        return bad("branch set changed".into());
    }
    for (b0, b1) in base.branches.iter().zip(&extended.branches) {
        if b0.id != b1.id || b0.n != b1.n || b0.location != b1.location || b0.transfer != b1.transfer {
            return bad(format!("branch `{}` changed shape", b0.id));
        }
        let old_here: Vec<&ContractId> = base.contracts_of_branch(&b0.id).map(|c| &c.id).collect();
        for slot in b0.slots() {
            let l0 = b0.priority(slot).unwrap_or_default();
            let l1 = b1.priority(slot).unwrap_or_default();
            if restrict(l1, &old) != l0.iter().collect::<Vec<_>>() {
                return bad(format!("slot {slot} of `{}` reorders or drops old contracts", b0.id));
            }
            if mode == AdditionMode::Bottom {
                let lists_new = l1.iter().any(|c| !old.contains(c));
                if lists_new && l0.len() != old_here.len() {
                    return bad(format!(
                        "slot {slot} of `{}` ranks a new contract but leaves an old contract of the branch unranked",
                        b0.id
                    ));
                }
                if let Some(first_new) = l1.iter().position(|c| !old.contains(c)) {
                    if l1[first_new..].iter().any(|c| old.contains(c)) {
                        return bad(format!("slot {slot} of `{}` ranks a new contract above an old one", b0.id));
                    }
                }
            }
        }
    }
    if mode == AdditionMode::SingleAgent {
        let owners: BTreeSet<&AgentId> = new_contracts.iter().map(|c| &c.agent).collect();
        if owners.len() > 1 {
            return bad("new contracts belong to more than one agent".into());
        }
    }
    Ok(new_contracts)
}

/// Compares the market before and after adding contracts.
pub fn add_contracts(base: &Instance, extended: &Instance, mode: AdditionMode) -> Result<ComparisonReport, ComparativeError> {
    let new_contracts = check_addition(base, extended, mode)?;
    let before = Market::new(base.clone())?;
    let after = Market::new(extended.clone())?;
    let protect = match mode {
        AdditionMode::Bottom => Protected::AllAgents,
        AdditionMode::SingleAgent => Protected::Only(new_contracts.iter().map(|c| c.agent.clone()).collect()),
    };
    Ok(compare_outcomes(&after, &com(&before), &com(&after), &protect))
}

fn fresh_id(inst: &Instance, taken: &BTreeSet<ContractId>, n: usize) -> ContractId {
    (n..)
        .map(|i| ContractId::new(format!("new{i}")))
        .find(|id| inst.contract(id).is_none() && !taken.contains(id))
        .expect("unbounded")
}

/// A random seat addition: branch, ranking over its contracts and position.
pub fn random_slot_addition(inst: &Instance, seed: u64) -> Option<(BranchId, Vec<ContractId>, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = inst.branches.choose(&mut rng)?;
    let mut ranking: Vec<ContractId> = inst
        .contracts_of_branch(&cfg.id)
        .filter(|_| rng.gen_bool(0.7))
        .map(|c| c.id.clone())
        .collect();
    ranking.shuffle(&mut rng);
    let position = rng.gen_range(1..=cfg.n + 1);
    Some((cfg.id.clone(), ranking, position))
}

fn insert_random<T>(rng: &mut impl Rng, list: &mut Vec<T>, item: T) {
    let at = rng.gen_range(0..=list.len());
    list.insert(at, item);
}

/// Adds one or two contracts for random agent-branch pairs, ranked below
/// every old contract wherever a seat ranks all old contracts of its branch,
/// and at a random place in the owner's ranking.
pub fn random_bottom_addition(inst: &Instance, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = inst.clone();
    let agents = inst.agents();
    if agents.is_empty() || inst.branches.is_empty() {
        return out;
    }
    let mut taken = BTreeSet::new();
    for i in 0..rng.gen_range(1..=2) {
        let agent = agents.choose(&mut rng).expect("non-empty").clone();
        let b = rng.gen_range(0..inst.branches.len());
        let id = fresh_id(inst, &taken, i + 1);
        taken.insert(id.clone());
        let branch = inst.branches[b].id.clone();
        out.contracts.push(Contract::new(id.clone(), agent.clone(), branch.clone(), format!("added{}", i + 1)));
        if rng.gen_bool(0.85) {
            let pref = out.preference_mut(&agent).expect("agent has a record");
            insert_random(&mut rng, &mut pref.ranking, id.clone());
        }
        let old_count = inst.contracts_of_branch(&branch).count();
        let cfg = &mut out.branches[b];
        for list in cfg.original_priorities.iter_mut().chain(cfg.shadow_priorities.iter_mut()) {
            let old_len = list.iter().filter(|c| !taken.contains(*c)).count();
            if old_len == old_count && rng.gen_bool(0.8) {
                // below the old contracts, anywhere among the new ones
                let at = rng.gen_range(old_len..=list.len());
                list.insert(at, id.clone());
            }
        }
    }
    out
}

/// Adds one or two contracts of a single random agent, placed anywhere in
/// seat rankings and in her own ranking.
pub fn random_single_agent_addition(inst: &Instance, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = inst.clone();
    let agents = inst.agents();
    let Some(agent) = agents.choose(&mut rng).cloned() else {
        return out;
    };
    if inst.branches.is_empty() {
        return out;
    }
    let mut taken = BTreeSet::new();
    for i in 0..rng.gen_range(1..=2) {
        let b = rng.gen_range(0..inst.branches.len());
        let id = fresh_id(inst, &taken, i + 1);
        taken.insert(id.clone());
        let branch = inst.branches[b].id.clone();
        out.contracts.push(Contract::new(id.clone(), agent.clone(), branch, format!("added{}", i + 1)));
        if rng.gen_bool(0.85) {
            let pref = out.preference_mut(&agent).expect("agent has a record");
            insert_random(&mut rng, &mut pref.ranking, id.clone());
        }
        let cfg = &mut out.branches[b];
        for list in cfg.original_priorities.iter_mut().chain(cfg.shadow_priorities.iter_mut()) {
            if rng.gen_bool(0.6) {
                insert_random(&mut rng, list, id.clone());
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_instance, AgentPreference, BranchConfig};

    fn ids(xs: &[&str]) -> Vec<ContractId> {
        xs.iter().map(|&x| ContractId::from(x)).collect()
    }

    fn pref(agent: &str, ranking: &[&str]) -> AgentPreference {
        AgentPreference {
            agent: agent.into(),
            ranking: ids(ranking),
        }
    }

    fn seat(id: &str, transfer: u8, original: &[&str], shadow: &[&str]) -> BranchConfig {
        BranchConfig {
            id: id.into(),
            n: 1,
            location: vec![1],
            transfer: vec![transfer],
            original_priorities: vec![ids(original)],
            shadow_priorities: vec![ids(shadow)],
        }
    }

    /// j only fits the shadow seat of `b`.
    fn vacancy(transfer: u8) -> Instance {
        Instance {
            contracts: vec![Contract::new("y", "j", "b", "")],
            preferences: vec![pref("j", &["y"])],
            branches: vec![seat("b", transfer, &[], &["y"])],
        }
    }

    #[test]
    fn flexibility_with_filled_original_changes_nothing() {
        let inst = Instance {
            contracts: vec![Contract::new("x", "i", "b", ""), Contract::new("y", "j", "b", "")],
            preferences: vec![pref("i", &["x"]), pref("j", &["y"])],
            branches: vec![seat("b", 0, &["x"], &["y", "x"])],
        };
        let report = flexibility_compare(&inst, &"b".into(), 1).unwrap();
        assert_eq!(report.baseline, report.modified);
        assert_eq!(report.verdict, ComparisonVerdict::ParetoDominates);
        assert!(!report.strict);
    }

    #[test]
    fn flexibility_with_shadow_still_vacant_changes_nothing() {
        let mut inst = vacancy(0);
        inst.branches[0].shadow_priorities[0].clear();
        let report = flexibility_compare(&inst, &"b".into(), 1).unwrap();
        assert_eq!(report.modified, Outcome::default());
        assert!(!report.strict);
        assert!(matches!(
            improvement_chain(&inst, &report.baseline, &"b".into(), 1),
            Err(ComparativeError::PreconditionUnmet(_))
        ));
    }

    #[test]
    fn flexibility_filling_the_shadow_is_a_strict_improvement() {
        let report = flexibility_compare(&vacancy(0), &"b".into(), 1).unwrap();
        assert_eq!(report.modified, Outcome::new(ids(&["y"])));
        assert!(report.strict);
        assert_eq!(report.verdict, ComparisonVerdict::ParetoDominates);
        assert!(matches!(
            flexibility_compare(&vacancy(1), &"b".into(), 1),
            Err(ComparativeError::AlreadyFlexible { .. })
        ));
    }

    #[test]
    fn chain_of_length_one() {
        let inst = vacancy(0);
        let chain = improvement_chain(&inst, &Outcome::default(), &"b".into(), 1).unwrap();
        assert_eq!(chain.links, vec![ChainLink { x: "y".into(), z: None }]);
        assert_eq!(chain.outcome, Outcome::new(ids(&["y"])));
        assert!(chain.pure && chain.agrees_with_com);
    }

    #[test]
    fn chain_of_length_two() {
        // j sits at c holding y2 but prefers y1 at b, which only b's shadow
        // ranks; once j moves, c's seat goes to i
        let inst = Instance {
            contracts: vec![
                Contract::new("x", "i", "c", ""),
                Contract::new("y1", "j", "b", ""),
                Contract::new("y2", "j", "c", ""),
            ],
            preferences: vec![pref("i", &["x"]), pref("j", &["y1", "y2"])],
            branches: vec![seat("b", 0, &[], &["y1"]), seat("c", 0, &["y2", "x"], &[])],
        };
        let z = com(&Market::new(inst.clone()).unwrap());
        assert_eq!(z, Outcome::new(ids(&["y2"])));
        let chain = improvement_chain(&inst, &z, &"b".into(), 1).unwrap();
        assert_eq!(
            chain.links,
            vec![
                ChainLink { x: "y1".into(), z: Some("y2".into()) },
                ChainLink { x: "x".into(), z: None },
            ]
        );
        assert_eq!(chain.outcome, Outcome::new(ids(&["x", "y1"])));
        assert!(chain.agrees_with_com);
        assert!(matches!(
            improvement_chain(&inst, &Outcome::default(), &"b".into(), 1),
            Err(ComparativeError::NotBaseline)
        ));
    }

    #[test]
    fn inert_added_slot_changes_nothing() {
        let inst = vacancy(1);
        let report = add_original_slot(&inst, &"b".into(), vec![], None).unwrap();
        assert_eq!(report.baseline, report.modified);
        assert!(report.holds());
    }

    #[test]
    fn added_slot_absorbs_a_rejected_agent() {
        let inst = Instance {
            contracts: vec![Contract::new("x", "i", "b", ""), Contract::new("y", "j", "b", "")],
            preferences: vec![pref("i", &["x"]), pref("j", &["y"])],
            branches: vec![seat("b", 0, &["x", "y"], &[])],
        };
        let report = add_original_slot(&inst, &"b".into(), ids(&["y"]), None).unwrap();
        assert_eq!(report.modified, Outcome::new(ids(&["x", "y"])));
        let j = report.agents.iter().find(|a| a.agent.as_str() == "j").unwrap();
        assert_eq!(j.change, Change::Better);
        assert!(report.holds());
    }

    #[test]
    fn slot_insertion_keeps_locations_valid() {
        let mut inst = vacancy(1);
        inst.branches[0] = BranchConfig {
            id: "b".into(),
            n: 3,
            location: vec![1, 3, 3],
            transfer: vec![1, 1, 1],
            original_priorities: vec![vec![]; 3],
            shadow_priorities: vec![vec![], vec![], ids(&["y"])],
        };
        for p in 1..=4 {
            let ext = extend_with_original_slot(&inst, &"b".into(), vec![], Some(p)).unwrap();
            assert!(validate_instance(&ext).is_valid(), "position {p}");
            assert_eq!(ext.branches[0].transfer[p - 1], 0);
        }
        let ext = extend_with_original_slot(&inst, &"b".into(), vec![], Some(2)).unwrap();
        assert_eq!(ext.branches[0].location, vec![1, 2, 4, 4]);
        assert!(extend_with_original_slot(&inst, &"b".into(), vec![], Some(5)).is_err());
    }

    #[test]
    fn unacceptable_new_contract_changes_nothing() {
        let base = vacancy(1);
        let mut ext = base.clone();
        ext.contracts.push(Contract::new("w", "j", "b", "other"));
        ext.branches[0].shadow_priorities[0].push("w".into());
        let report = add_contracts(&base, &ext, AdditionMode::Bottom).unwrap();
        assert_eq!(report.baseline, report.modified);
    }

    #[test]
    fn bottom_contract_filling_a_vacant_seat() {
        let base = Instance {
            contracts: vec![Contract::new("y", "j", "b", "")],
            preferences: vec![pref("j", &["y"]), pref("i", &[])],
            branches: vec![BranchConfig {
                id: "b".into(),
                n: 2,
                location: vec![1, 2],
                transfer: vec![0, 0],
                original_priorities: vec![ids(&["y"]), ids(&["y"])],
                shadow_priorities: vec![vec![], vec![]],
            }],
        };
        let mut ext = base.clone();
        ext.contracts.push(Contract::new("x", "i", "b", ""));
        ext.preferences[1].ranking.push("x".into());
        ext.branches[0].original_priorities[1].push("x".into());
        let report = add_contracts(&base, &ext, AdditionMode::Bottom).unwrap();
        assert_eq!(report.modified, Outcome::new(ids(&["x", "y"])));
        assert!(report.strict && report.holds());
    }

    #[test]
    fn bottom_mode_requires_the_seat_to_rank_every_old_contract() {
        // o1 ranks nothing old, so ranking the new contract there would
        // push j's shadow seat shut; the condition rejects it
        let base = vacancy(1);
        let mut ext = base.clone();
        ext.contracts.push(Contract::new("x", "i", "b", ""));
        ext.preferences.push(pref("i", &["x"]));
        ext.branches[0].original_priorities[0].push("x".into());
        assert!(matches!(
            add_contracts(&base, &ext, AdditionMode::Bottom),
            Err(ComparativeError::ConditionViolation(_))
        ));
        let report = add_contracts(&base, &ext, AdditionMode::SingleAgent).unwrap();
        let j = report.agents.iter().find(|a| a.agent.as_str() == "j").unwrap();
        assert_eq!(j.change, Change::Worse);
        assert!(report.holds(), "only i is protected");
    }

    #[test]
    fn single_agent_addition_may_displace_others() {
        let base = Instance {
            contracts: vec![Contract::new("y", "j", "b", ""), Contract::new("x0", "i", "c", "")],
            preferences: vec![pref("j", &["y"]), pref("i", &["x0"])],
            branches: vec![seat("b", 0, &["y"], &[]), seat("c", 0, &["x0"], &[])],
        };
        let mut ext = base.clone();
        ext.contracts.push(Contract::new("x", "i", "b", ""));
        ext.preferences[1].ranking.insert(0, "x".into());
        ext.branches[0].original_priorities[0].insert(0, "x".into());
        let report = add_contracts(&base, &ext, AdditionMode::SingleAgent).unwrap();
        assert_eq!(report.modified, Outcome::new(ids(&["x"])));
        assert_eq!(report.worse().map(AgentId::as_str).collect::<Vec<_>>(), ["j"]);
        assert_eq!(report.verdict, ComparisonVerdict::WeaklyImprovesFor(["i".into()].into_iter().collect()));
    }

    #[test]
    fn order_change_is_a_condition_violation() {
        let base = Instance {
            contracts: vec![Contract::new("x", "i", "b", ""), Contract::new("y", "j", "b", "")],
            preferences: vec![pref("i", &["x"]), pref("j", &["y"])],
            branches: vec![seat("b", 0, &["x", "y"], &[])],
        };
        let mut ext = base.clone();
        ext.branches[0].original_priorities[0].reverse();
        assert!(matches!(
            add_contracts(&base, &ext, AdditionMode::SingleAgent),
            Err(ComparativeError::ConditionViolation(_))
        ));
    }

    #[test]
    fn random_additions_satisfy_their_conditions() {
        use crate::generator::{generate, GeneratorConfig};
        for seed in 0..50 {
            let base = generate(&GeneratorConfig {
                seed,
                original_listing: 1.0,
                ..Default::default()
            });
            let bottom = random_bottom_addition(&base, seed);
            assert!(validate_instance(&bottom).is_valid());
            check_addition(&base, &bottom, AdditionMode::Bottom).unwrap();
            let single = random_single_agent_addition(&base, seed);
            assert!(validate_instance(&single).is_valid());
            check_addition(&base, &single, AdditionMode::SingleAgent).unwrap();
        }
    }
}
