//! Market description: contracts, agent preferences, branch configurations.
//!
//! An [`Instance`] is plain data that mirrors the JSON file format one to one.
//! Nothing here enforces the invariants at construction time; call
//! [`validate_instance`] (or build a [`crate::Market`], which does so) before
//! handing an instance to the choice rules or the mechanism.
//!
//! Unacceptability is encoded by omission. A contract that does not appear in
//! an agent's ranking is worse than the outside option for that agent, and a
//! contract that does not appear in a slot's ranking can never be assigned to
//! that slot.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

string_id!(
    /// Identifier of a contract.
    ContractId
);
string_id!(
    /// Identifier of an agent.
    AgentId
);
string_id!(
    /// Identifier of a branch.
    BranchId
);

/// Original seats carry capacity one; shadow seats only receive the capacity
/// of their paired original when it stays vacant and the transfer bit allows it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SlotKind {
    Original,
    Shadow,
}

/// A seat of a branch. `index` is the 1-based position in the precedence
/// order of its kind; original `k` and shadow `k` are paired.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SlotId {
    pub kind: SlotKind,
    pub index: usize,
}

impl SlotId {
    pub const fn original(index: usize) -> Self {
        Self { kind: SlotKind::Original, index }
    }

    pub const fn shadow(index: usize) -> Self {
        Self { kind: SlotKind::Shadow, index }
    }

    pub fn is_shadow(&self) -> bool {
        self.kind == SlotKind::Shadow
    }
}

impl fmt::Display for SlotId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            SlotKind::Original => write!(f, "o{}", self.index),
            SlotKind::Shadow => write!(f, "e{}", self.index),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid slot label `{0}` (expected o<k> or e<k>)")]
pub struct SlotParseError(String);

impl FromStr for SlotId {
    type Err = SlotParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || SlotParseError(s.to_owned());
        let (kind, rest) = match s.as_bytes().first() {
            Some(b'o') => (SlotKind::Original, &s[1..]),
            Some(b'e') => (SlotKind::Shadow, &s[1..]),
            _ => return Err(err()),
        };
        let index: usize = rest.parse().map_err(|_| err())?;
        if index == 0 {
            return Err(err());
        }
        Ok(SlotId { kind, index })
    }
}

impl Serialize for SlotId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SlotId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contract {
    pub id: ContractId,
    pub agent: AgentId,
    pub branch: BranchId,
    #[serde(default)]
    pub terms: String,
}

impl Contract {
    pub fn new(
        id: impl Into<ContractId>,
        agent: impl Into<AgentId>,
        branch: impl Into<BranchId>,
        terms: impl Into<String>,
    ) -> Self {
        Self {
            id: id.into(),
            agent: agent.into(),
            branch: branch.into(),
            terms: terms.into(),
        }
    }
}

/// Strict ranking of an agent's acceptable contracts, most preferred first.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentPreference {
    pub agent: AgentId,
    pub ranking: Vec<ContractId>,
}

/// One branch: physical capacity `n`, location vector, transfer scheme, and
/// the priority ranking of every seat. Precedence among originals (and among
/// shadows) is the array order of `original_priorities` (`shadow_priorities`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchConfig {
    pub id: BranchId,
    pub n: usize,
    pub location: Vec<usize>,
    pub transfer: Vec<u8>,
    pub original_priorities: Vec<Vec<ContractId>>,
    pub shadow_priorities: Vec<Vec<ContractId>>,
}

impl BranchConfig {
    /// Ranking of `slot`, or `None` when the slot index is out of range.
    pub fn priority(&self, slot: SlotId) -> Option<&[ContractId]> {
        let list = match slot.kind {
            SlotKind::Original => &self.original_priorities,
            SlotKind::Shadow => &self.shadow_priorities,
        };
        slot.index.checked_sub(1).and_then(|k| list.get(k)).map(Vec::as_slice)
    }

    pub fn priority_mut(&mut self, slot: SlotId) -> Option<&mut Vec<ContractId>> {
        let list = match slot.kind {
            SlotKind::Original => &mut self.original_priorities,
            SlotKind::Shadow => &mut self.shadow_priorities,
        };
        slot.index.checked_sub(1).and_then(move |k| list.get_mut(k))
    }

    /// All `2n` slots, originals first.
    pub fn slots(&self) -> impl Iterator<Item = SlotId> + '_ {
        (1..=self.original_priorities.len())
            .map(SlotId::original)
            .chain((1..=self.shadow_priorities.len()).map(SlotId::shadow))
    }

    pub fn transfers(&self, k: usize) -> bool {
        k.checked_sub(1)
            .and_then(|i| self.transfer.get(i))
            .is_some_and(|&bit| bit == 1)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub contracts: Vec<Contract>,
    pub preferences: Vec<AgentPreference>,
    pub branches: Vec<BranchConfig>,
}

impl Instance {
    pub fn contract(&self, id: &ContractId) -> Option<&Contract> {
        self.contracts.iter().find(|c| &c.id == id)
    }

    pub fn branch(&self, id: &BranchId) -> Option<&BranchConfig> {
        self.branches.iter().find(|b| &b.id == id)
    }

    pub fn branch_mut(&mut self, id: &BranchId) -> Option<&mut BranchConfig> {
        self.branches.iter_mut().find(|b| &b.id == id)
    }

    pub fn preference(&self, agent: &AgentId) -> Option<&AgentPreference> {
        self.preferences.iter().find(|p| &p.agent == agent)
    }

    pub fn preference_mut(&mut self, agent: &AgentId) -> Option<&mut AgentPreference> {
        self.preferences.iter_mut().find(|p| &p.agent == agent)
    }

    /// Agents with a preference record, in identifier order.
    pub fn agents(&self) -> Vec<AgentId> {
        let set: BTreeSet<_> = self.preferences.iter().map(|p| p.agent.clone()).collect();
        set.into_iter().collect()
    }

    pub fn contracts_of_agent<'a>(&'a self, agent: &'a AgentId) -> impl Iterator<Item = &'a Contract> + 'a {
        self.contracts.iter().filter(move |c| &c.agent == agent)
    }

    pub fn contracts_of_branch<'a>(&'a self, branch: &'a BranchId) -> impl Iterator<Item = &'a Contract> + 'a {
        self.contracts.iter().filter(move |c| &c.branch == branch)
    }
}

/// A set of signed contracts.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Outcome {
    pub assignment: BTreeSet<ContractId>,
}

impl Outcome {
    pub fn new(assignment: impl IntoIterator<Item = ContractId>) -> Self {
        Self {
            assignment: assignment.into_iter().collect(),
        }
    }

    pub fn contains(&self, id: &ContractId) -> bool {
        self.assignment.contains(id)
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    /// The contract `agent` holds, if any. Takes the first one found when
    /// the outcome is infeasible.
    pub fn contract_of<'a>(&'a self, instance: &Instance, agent: &AgentId) -> Option<&'a ContractId> {
        self.assignment
            .iter()
            .find(|id| instance.contract(id).is_some_and(|c| &c.agent == agent))
    }

    /// At most one contract per agent and at most `n` per branch. Unknown
    /// contract ids make the outcome infeasible.
    pub fn is_feasible(&self, instance: &Instance) -> bool {
        let mut agents = HashSet::new();
        let mut per_branch: HashMap<&BranchId, usize> = HashMap::new();
        for id in &self.assignment {
            let Some(contract) = instance.contract(id) else {
                return false;
            };
            if !agents.insert(&contract.agent) {
                return false;
            }
            *per_branch.entry(&contract.branch).or_default() += 1;
        }
        per_branch
            .into_iter()
            .all(|(b, count)| instance.branch(b).is_some_and(|cfg| count <= cfg.n))
    }
}

/// One invariant violation found by [`validate_instance`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// Where in the instance the problem sits, e.g. `branches[b1].location[2]`.
    pub at: String,
    pub kind: ViolationKind,
    pub message: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    DuplicateId,
    DuplicateContractTerms,
    UnknownContract,
    UnknownBranch,
    ForeignContract,
    StrictOrder,
    MissingPreference,
    ZeroCapacity,
    LengthMismatch,
    LocationLowerBound,
    LocationUpperBound,
    LocationMonotone,
    TransferNotBinary,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }

    fn push(&mut self, at: impl Into<String>, kind: ViolationKind, message: impl Into<String>) {
        self.violations.push(Violation {
            at: at.into(),
            kind,
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("instance is valid");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{}: {}", v.at, v.message)?;
        }
        Ok(())
    }
}

/// Collects every violation of the instance invariants. An empty report
/// means the instance is well formed.
pub fn validate_instance(inst: &Instance) -> ValidationReport {
    let mut report = ValidationReport::default();

    let mut by_id: HashMap<&ContractId, &Contract> = HashMap::new();
    let mut triples = HashSet::new();
    let branch_ids: HashSet<&BranchId> = inst.branches.iter().map(|b| &b.id).collect();
    for (i, c) in inst.contracts.iter().enumerate() {
        let at = format!("contracts[{i}]");
        if by_id.insert(&c.id, c).is_some() {
            report.push(&at, ViolationKind::DuplicateId, format!("duplicate contract id `{}`", c.id));
        }
        if !triples.insert((&c.agent, &c.branch, &c.terms)) {
            report.push(
                &at,
                ViolationKind::DuplicateContractTerms,
                format!("(agent, branch, terms) of `{}` repeats another contract", c.id),
            );
        }
        if !branch_ids.contains(&c.branch) {
            report.push(&at, ViolationKind::UnknownBranch, format!("contract `{}` names unknown branch `{}`", c.id, c.branch));
        }
    }

    let mut with_pref = HashSet::new();
    for p in &inst.preferences {
        let at = format!("preferences[{}]", p.agent);
        if !with_pref.insert(&p.agent) {
            report.push(&at, ViolationKind::DuplicateId, format!("agent `{}` has more than one preference record", p.agent));
        }
        check_ranking(&mut report, &at, &p.ranking, &by_id, |c| {
            (c.agent == p.agent).then_some(()).ok_or_else(|| format!("contract `{}` belongs to agent `{}`", c.id, c.agent))
        });
    }
    let owners: BTreeSet<&AgentId> = inst.contracts.iter().map(|c| &c.agent).collect();
    for agent in owners {
        if !with_pref.contains(agent) {
            report.push(
                format!("preferences[{agent}]"),
                ViolationKind::MissingPreference,
                format!("agent `{agent}` owns contracts but has no preference record"),
            );
        }
    }

    let mut seen_branches = HashSet::new();
    for b in &inst.branches {
        let at = format!("branches[{}]", b.id);
        if !seen_branches.insert(&b.id) {
            report.push(&at, ViolationKind::DuplicateId, format!("duplicate branch id `{}`", b.id));
        }
        if b.n == 0 {
            report.push(&at, ViolationKind::ZeroCapacity, "physical capacity n must be positive");
        }
        for (field, len) in [
            ("location", b.location.len()),
            ("transfer", b.transfer.len()),
            ("original_priorities", b.original_priorities.len()),
            ("shadow_priorities", b.shadow_priorities.len()),
        ] {
            if len != b.n {
                report.push(
                    format!("{at}.{field}"),
                    ViolationKind::LengthMismatch,
                    format!("{field} has {len} entries, expected n = {}", b.n),
                );
            }
        }
        for (i, &l) in b.location.iter().enumerate() {
            let k = i + 1;
            let at = format!("{at}.location[{k}]");
            if l < k {
                report.push(&at, ViolationKind::LocationLowerBound, format!("location lower bound k <= l_k violated: l_{k} = {l}"));
            }
            if l > b.n {
                report.push(&at, ViolationKind::LocationUpperBound, format!("location upper bound l_k <= n violated: l_{k} = {l}, n = {}", b.n));
            }
            if i > 0 && l < b.location[i - 1] {
                report.push(
                    &at,
                    ViolationKind::LocationMonotone,
                    format!("location vector must be non-decreasing: l_{k} = {l} < l_{} = {}", k - 1, b.location[i - 1]),
                );
            }
        }
        for (i, &bit) in b.transfer.iter().enumerate() {
            if bit > 1 {
                report.push(
                    format!("{at}.transfer[{}]", i + 1),
                    ViolationKind::TransferNotBinary,
                    format!("transfer entries must be 0 or 1, found {bit}"),
                );
            }
        }
        for slot in b.slots() {
            let ranking = b.priority(slot).unwrap_or_default();
            check_ranking(&mut report, &format!("{at}.{slot}"), ranking, &by_id, |c| {
                (c.branch == b.id).then_some(()).ok_or_else(|| format!("contract `{}` belongs to branch `{}`", c.id, c.branch))
            });
        }
    }
    report
}

fn check_ranking(
    report: &mut ValidationReport,
    at: &str,
    ranking: &[ContractId],
    by_id: &HashMap<&ContractId, &Contract>,
    owner_ok: impl Fn(&Contract) -> Result<(), String>,
) {
    let mut seen = HashSet::new();
    for id in ranking {
        if !seen.insert(id) {
            report.push(at, ViolationKind::StrictOrder, format!("strict order violated: `{id}` listed twice"));
        }
        match by_id.get(id) {
            None => report.push(at, ViolationKind::UnknownContract, format!("unknown contract `{id}`")),
            Some(c) => {
                if let Err(msg) = owner_ok(c) {
                    report.push(at, ViolationKind::ForeignContract, msg);
                }
            }
        }
    }
}

/// Malformed instance text. Line and column are 1-based; zero means the
/// position is unknown.
#[derive(Debug, Error, PartialEq, Eq)]
#[error("{message} (line {line}, column {column})")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl From<serde_json::Error> for ParseError {
    fn from(e: serde_json::Error) -> Self {
        let full = e.to_string();
        // serde_json appends " at line L column C"; keep only the description
        let message = match full.rfind(" at line ") {
            Some(pos) => full[..pos].to_owned(),
            None => full,
        };
        ParseError {
            line: e.line(),
            column: e.column(),
            message,
        }
    }
}

/// Parses an instance from UTF-8 JSON. Structural problems (missing fields,
/// wrong types) are errors; invariant violations are left to
/// [`validate_instance`].
pub fn parse_instance(text: &[u8]) -> Result<Instance, ParseError> {
    Ok(serde_json::from_slice(text)?)
}

/// Canonical JSON: keys sorted, two-space indentation, trailing newline.
pub fn serialize_instance(inst: &Instance) -> Vec<u8> {
    to_canonical_json(inst)
}

/// Canonical JSON rendering shared by every artifact the crate writes.
pub fn to_canonical_json<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    // serde_json's Map is a BTreeMap, so going through Value sorts keys
    let value = serde_json::to_value(value).expect("model types always serialize");
    let mut out = serde_json::to_vec_pretty(&value).expect("values always serialize");
    out.push(b'\n');
    out
}

/// Count of contracts each branch owns, keyed by branch.
pub fn branch_sizes(inst: &Instance) -> BTreeMap<BranchId, usize> {
    let mut sizes: BTreeMap<BranchId, usize> = inst.branches.iter().map(|b| (b.id.clone(), 0)).collect();
    for c in &inst.contracts {
        *sizes.entry(c.branch.clone()).or_default() += 1;
    }
    sizes
}
