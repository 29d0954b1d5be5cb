//! Seeded random instances.
//!
//! Every random decision is drawn from one ChaCha8 stream seeded by
//! [`GeneratorConfig::seed`], so a configuration always yields the same
//! instance on every machine.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{AgentId, AgentPreference, BranchConfig, BranchId, Contract, ContractId, Instance};

/// How location vectors are drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum LocationPolicy {
    /// `l_k = k`: each shadow right after its original.
    Adjacent,
    /// `l_k = n`: all originals first.
    Terminal,
    /// Uniform over each step of the valid region.
    #[default]
    RandomValid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub agents: usize,
    pub branches: usize,
    /// Inclusive range of physical capacities.
    pub capacity: (usize, usize),
    /// Inclusive range of contracts per (agent, branch) pair.
    pub contracts_per_pair: (usize, usize),
    /// Probability that an agent finds one of her contracts acceptable.
    pub acceptability: f64,
    /// Probability that an original seat ranks a given contract.
    pub original_listing: f64,
    /// Probability that a shadow seat ranks a given contract.
    pub shadow_listing: f64,
    /// Probability of each transfer bit being 1.
    pub transfer_density: f64,
    pub location: LocationPolicy,
    /// Give every agent at least one contract and one acceptable contract.
    pub ensure_acceptable: bool,
    pub max_contracts: Option<usize>,
    pub max_per_agent: Option<usize>,
    pub max_per_branch: Option<usize>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            agents: 4,
            branches: 2,
            capacity: (1, 3),
            contracts_per_pair: (0, 2),
            acceptability: 0.8,
            original_listing: 0.7,
            shadow_listing: 0.7,
            transfer_density: 0.5,
            location: LocationPolicy::RandomValid,
            ensure_acceptable: true,
            max_contracts: None,
            max_per_agent: None,
            max_per_branch: None,
        }
    }
}

impl GeneratorConfig {
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

fn width(count: usize) -> usize {
    count.max(1).to_string().len()
}

/// Random location vector of length `n` under `policy`.
pub fn random_location(rng: &mut impl Rng, n: usize, policy: LocationPolicy) -> Vec<usize> {
    match policy {
        LocationPolicy::Adjacent => (1..=n).collect(),
        LocationPolicy::Terminal => vec![n; n],
        LocationPolicy::RandomValid => {
            let mut out = Vec::with_capacity(n);
            let mut prev = 1;
            for k in 1..=n {
                let lo = prev.max(k);
                let l = rng.gen_range(lo..=n);
                out.push(l);
                prev = l;
            }
            out
        }
    }
}

/// Builds an instance from `cfg`. The result always passes validation.
pub fn generate(cfg: &GeneratorConfig) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    generate_with(cfg, &mut rng)
}

pub fn generate_with(cfg: &GeneratorConfig, rng: &mut impl Rng) -> Instance {
    let aw = width(cfg.agents);
    let bw = width(cfg.branches);
    let agents: Vec<AgentId> = (1..=cfg.agents).map(|i| AgentId::new(format!("i{i:0aw$}"))).collect();
    let branches: Vec<BranchId> = (1..=cfg.branches).map(|b| BranchId::new(format!("b{b:0bw$}"))).collect();

    // (agent, branch) owner pairs of every contract, in creation order
    let mut owners: Vec<(usize, usize)> = Vec::new();
    let mut per_agent = vec![0usize; agents.len()];
    let mut per_branch = vec![0usize; branches.len()];
    let room = |owners: &Vec<(usize, usize)>, pa: &[usize], pb: &[usize], a: usize, b: usize| {
        cfg.max_contracts.is_none_or(|m| owners.len() < m)
            && cfg.max_per_agent.is_none_or(|m| pa[a] < m)
            && cfg.max_per_branch.is_none_or(|m| pb[b] < m)
    };

    if !branches.is_empty() {
        if cfg.ensure_acceptable {
            for a in 0..agents.len() {
                let b = rng.gen_range(0..branches.len());
                if room(&owners, &per_agent, &per_branch, a, b) {
                    owners.push((a, b));
                    per_agent[a] += 1;
                    per_branch[b] += 1;
                }
            }
        }
        let mut pairs: Vec<(usize, usize)> =
            (0..agents.len()).flat_map(|a| (0..branches.len()).map(move |b| (a, b))).collect();
        pairs.shuffle(rng);
        let (lo, hi) = (cfg.contracts_per_pair.0, cfg.contracts_per_pair.1.max(cfg.contracts_per_pair.0));
        for (a, b) in pairs {
            let already = owners.iter().filter(|&&p| p == (a, b)).count();
            let want = rng.gen_range(lo..=hi);
            for _ in already..want {
                if !room(&owners, &per_agent, &per_branch, a, b) {
                    break;
                }
                owners.push((a, b));
                per_agent[a] += 1;
                per_branch[b] += 1;
            }
        }
    }

    let cw = width(owners.len());
    let mut terms_counter = vec![0usize; agents.len() * branches.len().max(1)];
    let contracts: Vec<Contract> = owners
        .iter()
        .enumerate()
        .map(|(i, &(a, b))| {
            let slot = a * branches.len() + b;
            terms_counter[slot] += 1;
            Contract {
                id: ContractId::new(format!("c{:0cw$}", i + 1)),
                agent: agents[a].clone(),
                branch: branches[b].clone(),
                terms: format!("t{}", terms_counter[slot]),
            }
        })
        .collect();

    let preferences = agents
        .iter()
        .enumerate()
        .map(|(a, agent)| {
            let own: Vec<&Contract> = contracts.iter().filter(|c| &c.agent == agent).collect();
            let mut ranking: Vec<ContractId> =
                own.iter().filter(|_| rng.gen_bool(cfg.acceptability)).map(|c| c.id.clone()).collect();
            if cfg.ensure_acceptable && ranking.is_empty() && !own.is_empty() {
                ranking.push(own[rng.gen_range(0..own.len())].id.clone());
            }
            ranking.shuffle(rng);
            let _ = a;
            AgentPreference {
                agent: agent.clone(),
                ranking,
            }
        })
        .collect();

    let branch_configs = branches
        .iter()
        .map(|id| {
            let n = rng.gen_range(cfg.capacity.0.max(1)..=cfg.capacity.1.max(cfg.capacity.0).max(1));
            let own: Vec<ContractId> = contracts.iter().filter(|c| &c.branch == id).map(|c| c.id.clone()).collect();
            let mut listing = |density: f64| -> Vec<ContractId> {
                let mut list: Vec<ContractId> = own.iter().filter(|_| rng.gen_bool(density)).cloned().collect();
                list.shuffle(rng);
                list
            };
            let original_priorities = (0..n).map(|_| listing(cfg.original_listing)).collect();
            let shadow_priorities = (0..n).map(|_| listing(cfg.shadow_listing)).collect();
            let location = random_location(rng, n, cfg.location);
            let transfer = (0..n).map(|_| u8::from(rng.gen_bool(cfg.transfer_density))).collect();
            BranchConfig {
                id: id.clone(),
                n,
                location,
                transfer,
                original_priorities,
                shadow_priorities,
            }
        })
        .collect();

    Instance {
        contracts,
        preferences,
        branches: branch_configs,
    }
}
