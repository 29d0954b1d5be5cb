//! Independent reference implementations used as oracles by the tests.
//! None of them goes through `BranchRule`'s slot sequence or the library's
//! blocking search.

#![allow(dead_code)]

use std::collections::BTreeSet;

use sspwct::model::{BranchConfig, ContractId, Instance, Outcome};
use sspwct::Market;

/// Slot-specific priorities without transfers: originals in precedence
/// order, each takes its best remaining offer, and the chosen agent's other
/// offers leave the pool. Shadows never open.
pub fn slot_specific_choice(inst: &Instance, cfg: &BranchConfig, offers: &BTreeSet<ContractId>) -> BTreeSet<ContractId> {
    let agent = |id: &ContractId| inst.contract(id).expect("known contract").agent.clone();
    let mut pool: Vec<ContractId> = offers.iter().cloned().collect();
    let mut chosen = BTreeSet::new();
    for ranking in &cfg.original_priorities {
        if let Some(best) = ranking.iter().find(|c| pool.contains(c)).cloned() {
            let a = agent(&best);
            pool.retain(|c| agent(c) != a);
            chosen.insert(best);
        }
    }
    chosen
}

/// Every subset of `items`.
pub fn subsets<T: Clone>(items: &[T]) -> Vec<Vec<T>> {
    (0..1u32 << items.len())
        .map(|m| (0..items.len()).filter(|i| m >> i & 1 == 1).map(|i| items[i].clone()).collect())
        .collect()
}

/// Literal blocking test: some branch `b` and set `Y` of its contracts with
/// `Y != C^b(X)`, `C^b(X ∪ Y) = Y`, and every agent in `Y` choosing her
/// `Y` contract from what she holds plus `Y`. Subsets are not pre-filtered.
pub fn has_block(market: &Market, out: &Outcome) -> bool {
    let inst = market.instance();
    for rule in market.rules() {
        let xb: BTreeSet<ContractId> = out
            .assignment
            .iter()
            .filter(|c| inst.contract(c).is_some_and(|k| &k.branch == rule.id()))
            .cloned()
            .collect();
        let current = rule.sspwct_choose(&xb).unwrap().chosen;
        for y in subsets(rule.members()) {
            let y: BTreeSet<ContractId> = y.into_iter().collect();
            if y == current {
                continue;
            }
            let union: BTreeSet<ContractId> = xb.union(&y).cloned().collect();
            if rule.sspwct_choose(&union).unwrap().chosen != y {
                continue;
            }
            let agents_agree = y.iter().all(|c| {
                let owner = &inst.contract(c).unwrap().agent;
                let ranking = &inst.preference(owner).unwrap().ranking;
                let mine: Vec<&ContractId> = out
                    .assignment
                    .iter()
                    .chain(&y)
                    .filter(|d| &inst.contract(d).unwrap().agent == owner)
                    .collect();
                ranking.iter().find(|r| mine.contains(r)) == Some(c)
            });
            if agents_agree {
                return true;
            }
        }
    }
    false
}

/// Literal individual rationality.
pub fn individually_rational(market: &Market, out: &Outcome) -> bool {
    let inst = market.instance();
    out.is_feasible(inst)
        && out.assignment.iter().all(|c| {
            let owner = &inst.contract(c).unwrap().agent;
            inst.preference(owner).unwrap().ranking.contains(c)
        })
        && market.rules().iter().all(|rule| {
            let xb: BTreeSet<ContractId> =
                out.assignment.iter().filter(|c| rule.local_index(c).is_some()).cloned().collect();
            rule.sspwct_choose(&xb).unwrap().chosen == xb
        })
}
