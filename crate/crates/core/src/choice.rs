//! The branch choice rule and its completion.
//!
//! A branch processes its `2n` seats in one fixed sequence. Every seat that
//! has capacity takes its highest-priority contract among those still
//! available. The two rules differ only in what "still available" means:
//!
//! * the SSPwCT rule drops **every** contract of an agent once any seat takes
//!   one of that agent's contracts, so it never picks two contracts of one
//!   agent;
//! * the completion drops only the contract that was taken, and may end up
//!   holding two contracts of the same agent.
//!
//! A shadow seat `e_k` has capacity only when its paired original `o_k` was
//! left vacant and transfer bit `k` is set.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{BranchConfig, BranchId, Contract, ContractId, SlotId, SlotKind};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChoiceError {
    #[error("contract `{contract}` is not offered to branch `{branch}`")]
    ForeignContract { branch: BranchId, contract: ContractId },
    #[error("slot ranking of branch `{branch}` lists unknown contract `{contract}`")]
    UnknownContract { branch: BranchId, contract: ContractId },
    #[error("branch `{branch}` owns {size} contracts; this operation supports at most {limit}")]
    TooManyContracts { branch: BranchId, size: usize, limit: usize },
}

/// The exact order in which a branch fills its seats.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotSequence {
    pub branch: BranchId,
    pub order: Vec<SlotId>,
}

impl SlotSequence {
    pub fn labels(&self) -> Vec<String> {
        self.order.iter().map(ToString::to_string).collect()
    }
}

/// Interleaves originals and shadows: after the `j`-th original come all
/// shadows `e_k` with `l_k = j`, in shadow precedence order.
pub fn build_slot_sequence(cfg: &BranchConfig) -> SlotSequence {
    let n = cfg.n;
    let mut order = Vec::with_capacity(2 * n);
    let mut next_shadow = 0;
    for j in 1..=n {
        order.push(SlotId::original(j));
        while next_shadow < n && cfg.location.get(next_shadow).is_some_and(|&l| l <= j) {
            next_shadow += 1;
            order.push(SlotId::shadow(next_shadow));
        }
    }
    while next_shadow < n {
        next_shadow += 1;
        order.push(SlotId::shadow(next_shadow));
    }
    SlotSequence {
        branch: cfg.id.clone(),
        order,
    }
}

/// What happens to the remaining offers once a seat takes a contract.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Removal {
    /// Drop all contracts of the chosen agent (the SSPwCT rule).
    Agent,
    /// Drop only the chosen contract (the completion).
    Contract,
    /// Drop nothing. Only meaningful as a corrupted variant.
    Nothing,
}

/// When a shadow seat whose transfer bit is set becomes active.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Guard {
    /// Active iff the paired original is vacant.
    Vacancy,
    /// Always active. Corrupted variant.
    Ignore,
    /// Active iff the paired original is filled. Corrupted variant.
    Invert,
    /// Active iff no contract ranked by the paired original was offered at
    /// all, ignoring what earlier seats took. Corrupted variant.
    Offered,
}

/// A member of the choice-rule family: the two real rules plus corrupted
/// variants that exist so the property oracles can be shown to bite.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChoiceVariant {
    pub removal: Removal,
    pub guard: Guard,
}

impl ChoiceVariant {
    pub const SSPWCT: ChoiceVariant = ChoiceVariant {
        removal: Removal::Agent,
        guard: Guard::Vacancy,
    };
    pub const COMPLETION: ChoiceVariant = ChoiceVariant {
        removal: Removal::Contract,
        guard: Guard::Vacancy,
    };

    pub fn is_corrupted(&self) -> bool {
        *self != Self::SSPWCT && *self != Self::COMPLETION
    }
}

/// Which of the two real rules to apply.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    Sspwct,
    Completion,
}

impl From<Rule> for ChoiceVariant {
    fn from(rule: Rule) -> Self {
        match rule {
            Rule::Sspwct => ChoiceVariant::SSPWCT,
            Rule::Completion => ChoiceVariant::COMPLETION,
        }
    }
}

/// Seat outcome in terms of branch-local contract indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fill {
    Assigned(usize),
    /// Seat had capacity but nothing acceptable remained.
    Empty,
    /// Shadow seat without capacity.
    Inactive,
}

/// Result of one pass of a rule over an offer set, in local indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fills {
    /// Parallel to the slot sequence.
    pub per_slot: Vec<Fill>,
    /// Indicator per original seat, index `k - 1`.
    pub filled: Vec<bool>,
}

impl Fills {
    pub fn chosen(&self) -> impl Iterator<Item = usize> + '_ {
        self.per_slot.iter().filter_map(|f| match f {
            Fill::Assigned(c) => Some(*c),
            _ => None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "state", content = "contract")]
pub enum SlotState {
    Assigned(ContractId),
    Empty,
    Inactive,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: SlotId,
    #[serde(flatten)]
    pub state: SlotState,
}

/// Chosen set plus the per-seat record of how it was reached.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChoiceResult {
    pub chosen: BTreeSet<ContractId>,
    /// In processing order.
    pub per_slot: Vec<SlotRecord>,
    /// Fill indicator of every original seat.
    pub filled: BTreeMap<SlotId, u8>,
}

impl ChoiceResult {
    pub fn at(&self, slot: SlotId) -> Option<&SlotState> {
        self.per_slot.iter().find(|r| r.slot == slot).map(|r| &r.state)
    }
}

/// A branch configuration compiled against the contracts it owns.
///
/// Contracts are addressed by a branch-local index (their position in
/// [`BranchRule::members`], which is sorted by id). Agents get a branch-local
/// index too, so the rule is self-contained.
#[derive(Clone, Debug)]
pub struct BranchRule {
    config: BranchConfig,
    sequence: SlotSequence,
    transfer: Vec<bool>,
    members: Vec<ContractId>,
    local: HashMap<ContractId, usize>,
    agent_of: Vec<usize>,
    by_agent: Vec<Vec<usize>>,
    // rankings[position in sequence] = local indices, best first
    rankings: Vec<Vec<usize>>,
    // original_pos[k - 1] = position of o_k in the sequence
    original_pos: Vec<usize>,
}

impl BranchRule {
    /// Compiles `cfg`. `contracts` may contain contracts of other branches;
    /// only those owned by `cfg.id` become members.
    pub fn new<'a>(cfg: &BranchConfig, contracts: impl IntoIterator<Item = &'a Contract>) -> Result<Self, ChoiceError> {
        let mut owned: Vec<&Contract> = contracts.into_iter().filter(|c| c.branch == cfg.id).collect();
        owned.sort_by(|a, b| a.id.cmp(&b.id));
        let members: Vec<ContractId> = owned.iter().map(|c| c.id.clone()).collect();
        let local: HashMap<ContractId, usize> = members.iter().cloned().enumerate().map(|(i, c)| (c, i)).collect();

        let mut agent_index = HashMap::new();
        let mut by_agent: Vec<Vec<usize>> = Vec::new();
        let mut agent_of = Vec::with_capacity(owned.len());
        for (i, c) in owned.iter().enumerate() {
            let next = agent_index.len();
            let a = *agent_index.entry(&c.agent).or_insert(next);
            if a == by_agent.len() {
                by_agent.push(Vec::new());
            }
            by_agent[a].push(i);
            agent_of.push(a);
        }

        let sequence = build_slot_sequence(cfg);
        let mut rankings = Vec::with_capacity(sequence.order.len());
        let mut original_pos = vec![0; cfg.n];
        for (pos, &slot) in sequence.order.iter().enumerate() {
            if slot.kind == SlotKind::Original {
                original_pos[slot.index - 1] = pos;
            }
            let listed = cfg.priority(slot).unwrap_or_default();
            let ranking = listed
                .iter()
                .map(|id| {
                    local.get(id).copied().ok_or_else(|| ChoiceError::UnknownContract {
                        branch: cfg.id.clone(),
                        contract: id.clone(),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            rankings.push(ranking);
        }
        let transfer = (1..=cfg.n).map(|k| cfg.transfers(k)).collect();
        Ok(Self {
            config: cfg.clone(),
            sequence,
            transfer,
            members,
            local,
            agent_of,
            by_agent,
            rankings,
            original_pos,
        })
    }

    pub fn id(&self) -> &BranchId {
        &self.config.id
    }

    pub fn config(&self) -> &BranchConfig {
        &self.config
    }

    pub fn capacity(&self) -> usize {
        self.config.n
    }

    pub fn sequence(&self) -> &SlotSequence {
        &self.sequence
    }

    /// Contracts owned by the branch, sorted by id; position = local index.
    pub fn members(&self) -> &[ContractId] {
        &self.members
    }

    pub fn local_index(&self, id: &ContractId) -> Option<usize> {
        self.local.get(id).copied()
    }

    /// Branch-local agent index of local contract `c`.
    pub fn agent_of(&self, c: usize) -> usize {
        self.agent_of[c]
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Runs `variant` over `offered` (indexed by local contract).
    pub fn fill(&self, offered: &[bool], variant: ChoiceVariant) -> Fills {
        debug_assert_eq!(offered.len(), self.members.len());
        let mut available = offered.to_vec();
        let mut filled = vec![false; self.config.n];
        let mut per_slot = Vec::with_capacity(self.sequence.order.len());
        for (pos, &slot) in self.sequence.order.iter().enumerate() {
            if slot.kind == SlotKind::Shadow {
                let k = slot.index - 1;
                let open = match variant.guard {
                    Guard::Vacancy => !filled[k],
                    Guard::Ignore => true,
                    Guard::Invert => filled[k],
                    Guard::Offered => !self.rankings[self.original_pos[k]].iter().any(|&c| offered[c]),
                };
                if !(self.transfer[k] && open) {
                    per_slot.push(Fill::Inactive);
                    continue;
                }
            }
            match self.rankings[pos].iter().copied().find(|&c| available[c]) {
                Some(c) => {
                    if slot.kind == SlotKind::Original {
                        filled[slot.index - 1] = true;
                    }
                    match variant.removal {
                        Removal::Agent => {
                            for &d in &self.by_agent[self.agent_of[c]] {
                                available[d] = false;
                            }
                        }
                        Removal::Contract => available[c] = false,
                        Removal::Nothing => {}
                    }
                    per_slot.push(Fill::Assigned(c));
                }
                None => per_slot.push(Fill::Empty),
            }
        }
        Fills { per_slot, filled }
    }

    /// Chosen set as a bit mask over local indices. Requires at most 64
    /// members.
    pub fn choose_mask(&self, offered: u64, variant: ChoiceVariant) -> u64 {
        let offered: Vec<bool> = (0..self.members.len()).map(|i| offered >> i & 1 == 1).collect();
        self.fill(&offered, variant).chosen().fold(0, |acc, c| acc | 1 << c)
    }

    /// True when two contracts in `mask` share an agent.
    pub fn has_duplicate_agent(&self, mask: u64) -> bool {
        let mut seen = 0u64;
        for c in bits(mask) {
            let a = 1u64 << self.agent_of[c];
            if seen & a != 0 {
                return true;
            }
            seen |= a;
        }
        false
    }

    pub fn mask_of<'a>(&self, ids: impl IntoIterator<Item = &'a ContractId>) -> Result<u64, ChoiceError> {
        self.check_mask_width()?;
        let mut mask = 0;
        for id in ids {
            mask |= 1 << self.offer_index(id)?;
        }
        Ok(mask)
    }

    pub fn ids_of(&self, mask: u64) -> BTreeSet<ContractId> {
        bits(mask).map(|c| self.members[c].clone()).collect()
    }

    pub(crate) fn check_mask_width(&self) -> Result<(), ChoiceError> {
        if self.members.len() > 64 {
            return Err(ChoiceError::TooManyContracts {
                branch: self.config.id.clone(),
                size: self.members.len(),
                limit: 64,
            });
        }
        Ok(())
    }

    fn offer_index(&self, id: &ContractId) -> Result<usize, ChoiceError> {
        self.local.get(id).copied().ok_or_else(|| ChoiceError::ForeignContract {
            branch: self.config.id.clone(),
            contract: id.clone(),
        })
    }

    /// Applies `variant` to an offer set given by contract ids.
    pub fn choose_with<'a>(
        &self,
        offers: impl IntoIterator<Item = &'a ContractId>,
        variant: ChoiceVariant,
    ) -> Result<ChoiceResult, ChoiceError> {
        let mut offered = vec![false; self.members.len()];
        for id in offers {
            offered[self.offer_index(id)?] = true;
        }
        Ok(self.describe(&self.fill(&offered, variant)))
    }

    /// The SSPwCT choice `C^b(offers)`.
    pub fn sspwct_choose<'a>(&self, offers: impl IntoIterator<Item = &'a ContractId>) -> Result<ChoiceResult, ChoiceError> {
        self.choose_with(offers, ChoiceVariant::SSPWCT)
    }

    /// The completion `C̄^b(offers)`.
    pub fn completion_choose<'a>(
        &self,
        offers: impl IntoIterator<Item = &'a ContractId>,
    ) -> Result<ChoiceResult, ChoiceError> {
        self.choose_with(offers, ChoiceVariant::COMPLETION)
    }

    /// Offers minus the chosen set of `rule`.
    pub fn rejected<'a>(
        &self,
        offers: impl IntoIterator<Item = &'a ContractId> + Clone,
        rule: Rule,
    ) -> Result<BTreeSet<ContractId>, ChoiceError> {
        let chosen = self.choose_with(offers.clone(), rule.into())?.chosen;
        Ok(offers.into_iter().filter(|id| !chosen.contains(*id)).cloned().collect())
    }

    pub fn describe(&self, fills: &Fills) -> ChoiceResult {
        let per_slot = self
            .sequence
            .order
            .iter()
            .zip(&fills.per_slot)
            .map(|(&slot, fill)| SlotRecord {
                slot,
                state: match fill {
                    Fill::Assigned(c) => SlotState::Assigned(self.members[*c].clone()),
                    Fill::Empty => SlotState::Empty,
                    Fill::Inactive => SlotState::Inactive,
                },
            })
            .collect();
        let filled = fills
            .filled
            .iter()
            .enumerate()
            .map(|(k, &f)| (SlotId::original(k + 1), u8::from(f)))
            .collect();
        ChoiceResult {
            chosen: fills.chosen().map(|c| self.members[c].clone()).collect(),
            per_slot,
            filled,
        }
    }
}

pub(crate) fn bits(mask: u64) -> impl Iterator<Item = usize> {
    (0..64).filter(move |i| mask >> i & 1 == 1)
}
