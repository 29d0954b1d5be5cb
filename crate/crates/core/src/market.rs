//! Validated, index-based view of an [`Instance`].

use std::cmp::Ordering;
use std::collections::HashMap;

use thiserror::Error;

use crate::choice::{BranchRule, ChoiceError};
use crate::model::{validate_instance, AgentId, BranchId, ContractId, Instance, Outcome, ValidationReport};

#[derive(Debug, Error)]
pub enum MarketError {
    #[error("invalid instance:\n{0}")]
    Invalid(ValidationReport),
    #[error(transparent)]
    Choice(#[from] ChoiceError),
    #[error("unknown agent `{0}`")]
    UnknownAgent(AgentId),
    #[error("unknown branch `{0}`")]
    UnknownBranch(BranchId),
}

/// An instance that passed validation, with every id resolved to a dense
/// index. Agents are indexed in id order, which is also the order the
/// lexicographic proposal policy uses.
#[derive(Clone, Debug)]
pub struct Market {
    instance: Instance,
    contract_ids: Vec<ContractId>,
    contract_index: HashMap<ContractId, usize>,
    agent_of: Vec<usize>,
    branch_of: Vec<usize>,
    // branch-local index of each contract
    local_of: Vec<usize>,
    agents: Vec<AgentId>,
    agent_index: HashMap<AgentId, usize>,
    rankings: Vec<Vec<usize>>,
    pref_rank: Vec<Option<usize>>,
    rules: Vec<BranchRule>,
    // global index of every branch-local contract
    members: Vec<Vec<usize>>,
    branch_index: HashMap<BranchId, usize>,
}

impl Market {
    pub fn new(instance: Instance) -> Result<Self, MarketError> {
        let report = validate_instance(&instance);
        if !report.is_valid() {
            return Err(MarketError::Invalid(report));
        }

        let agents = instance.agents();
        let agent_index: HashMap<AgentId, usize> = agents.iter().cloned().enumerate().map(|(i, a)| (a, i)).collect();
        let branch_index: HashMap<BranchId, usize> =
            instance.branches.iter().enumerate().map(|(i, b)| (b.id.clone(), i)).collect();
        let rules = instance
            .branches
            .iter()
            .map(|cfg| BranchRule::new(cfg, &instance.contracts))
            .collect::<Result<Vec<_>, _>>()?;

        let contract_ids: Vec<ContractId> = instance.contracts.iter().map(|c| c.id.clone()).collect();
        let contract_index: HashMap<ContractId, usize> =
            contract_ids.iter().cloned().enumerate().map(|(i, c)| (c, i)).collect();
        let agent_of = instance.contracts.iter().map(|c| agent_index[&c.agent]).collect();
        let branch_of: Vec<usize> = instance.contracts.iter().map(|c| branch_index[&c.branch]).collect();
        let local_of = instance
            .contracts
            .iter()
            .zip(&branch_of)
            .map(|(c, &b)| rules[b].local_index(&c.id).expect("member of its branch"))
            .collect();

        let members = rules
            .iter()
            .map(|r| r.members().iter().map(|id| contract_index[id]).collect())
            .collect();

        let mut rankings = vec![Vec::new(); agents.len()];
        let mut pref_rank = vec![None; contract_ids.len()];
        for p in &instance.preferences {
            let a = agent_index[&p.agent];
            rankings[a] = p.ranking.iter().map(|id| contract_index[id]).collect();
            for (pos, &c) in rankings[a].iter().enumerate() {
                pref_rank[c] = Some(pos);
            }
        }

        Ok(Self {
            instance,
            contract_ids,
            contract_index,
            agent_of,
            branch_of,
            local_of,
            agents,
            agent_index,
            rankings,
            pref_rank,
            rules,
            members,
            branch_index,
        })
    }

    pub fn instance(&self) -> &Instance {
        &self.instance
    }

    pub fn contract_count(&self) -> usize {
        self.contract_ids.len()
    }

    pub fn contract_id(&self, c: usize) -> &ContractId {
        &self.contract_ids[c]
    }

    pub fn contract_index(&self, id: &ContractId) -> Option<usize> {
        self.contract_index.get(id).copied()
    }

    pub fn agent_of(&self, c: usize) -> usize {
        self.agent_of[c]
    }

    pub fn branch_of(&self, c: usize) -> usize {
        self.branch_of[c]
    }

    pub fn local_of(&self, c: usize) -> usize {
        self.local_of[c]
    }

    pub fn agents(&self) -> &[AgentId] {
        &self.agents
    }

    pub fn agent_index(&self, id: &AgentId) -> Option<usize> {
        self.agent_index.get(id).copied()
    }

    pub fn branch_index(&self, id: &BranchId) -> Option<usize> {
        self.branch_index.get(id).copied()
    }

    pub fn rules(&self) -> &[BranchRule] {
        &self.rules
    }

    pub fn rule(&self, id: &BranchId) -> Option<&BranchRule> {
        self.branch_index(id).map(|b| &self.rules[b])
    }

    /// Global index of the branch-local contract `local` of branch `b`.
    pub fn global_of(&self, b: usize, local: usize) -> usize {
        self.members[b][local]
    }

    /// Agent `a`'s acceptable contracts, best first.
    pub fn ranking(&self, a: usize) -> &[usize] {
        &self.rankings[a]
    }

    /// Position of `c` in its owner's ranking; `None` when unacceptable.
    pub fn pref_rank(&self, c: usize) -> Option<usize> {
        self.pref_rank[c]
    }

    pub fn contracts_of(&self, a: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.contract_ids.len()).filter(move |&c| self.agent_of[c] == a)
    }

    /// Compares two assignments of agent `a` under her reported ranking.
    /// `Greater` means `x` is strictly better. An assigned but unacceptable
    /// contract is worse than no contract.
    pub fn compare(&self, a: usize, x: Option<usize>, y: Option<usize>) -> Ordering {
        self.utility(a, x).cmp(&self.utility(a, y))
    }

    fn utility(&self, a: usize, x: Option<usize>) -> (u8, std::cmp::Reverse<usize>) {
        match x {
            None => (1, std::cmp::Reverse(0)),
            Some(c) => {
                debug_assert_eq!(self.agent_of[c], a);
                match self.pref_rank[c] {
                    Some(r) => (2, std::cmp::Reverse(r)),
                    None => (0, std::cmp::Reverse(0)),
                }
            }
        }
    }

    /// The same market with agent `agent` reporting `ranking` instead.
    pub fn with_ranking(&self, agent: &AgentId, ranking: Vec<ContractId>) -> Result<Market, MarketError> {
        let mut instance = self.instance.clone();
        let pref = instance
            .preference_mut(agent)
            .ok_or_else(|| MarketError::UnknownAgent(agent.clone()))?;
        pref.ranking = ranking;
        Market::new(instance)
    }

    /// Per-agent contract index under `outcome`; ids not in the market are
    /// ignored.
    pub fn assignment(&self, outcome: &Outcome) -> Vec<Option<usize>> {
        let mut held = vec![None; self.agents.len()];
        for id in &outcome.assignment {
            if let Some(c) = self.contract_index(id) {
                held[self.agent_of[c]] = Some(c);
            }
        }
        held
    }
}
