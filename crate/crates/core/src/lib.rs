//! Slot-specific priorities with capacity transfers.
//!
//! A branch fills `n` original seats and `n` shadow seats in a fixed
//! sequence. A shadow seat only opens when its paired original was left
//! vacant and the branch's transfer bit for that pair is set. This crate
//! computes those choices, runs the cumulative offer mechanism on top of
//! them, and ships exhaustive oracles for the properties the construction is
//! meant to have.
//!
//! ```
//! use sspwct::{cumulative_offer, Market, ProposalPolicy};
//! use sspwct::model::{AgentPreference, BranchConfig, Contract, Instance};
//!
//! let inst = Instance {
//!     contracts: vec![Contract::new("x", "ana", "b", ""), Contract::new("y", "bo", "b", "")],
//!     preferences: vec![
//!         AgentPreference { agent: "ana".into(), ranking: vec!["x".into()] },
//!         AgentPreference { agent: "bo".into(), ranking: vec!["y".into()] },
//!     ],
//!     branches: vec![BranchConfig {
//!         id: "b".into(),
//!         n: 1,
//!         location: vec![1],
//!         transfer: vec![1],
//!         original_priorities: vec![vec!["x".into()]],
//!         shadow_priorities: vec![vec!["y".into(), "x".into()]],
//!     }],
//! };
//! let market = Market::new(inst).unwrap();
//! let trace = cumulative_offer(&market, ProposalPolicy::Lexicographic);
//! assert_eq!(trace.outcome.assignment.len(), 1);
//! ```

pub mod choice;
pub mod cli;
pub mod comparative;
pub mod generator;
pub mod market;
pub mod mechanism;
pub mod model;
pub mod oracles;

pub use choice::{build_slot_sequence, BranchRule, ChoiceResult, ChoiceVariant, Rule, SlotSequence};
pub use generator::{generate, GeneratorConfig, LocationPolicy};
pub use market::{Market, MarketError};
pub use mechanism::{
    cumulative_offer, cumulative_offer_outcome, find_blocking_set, is_individually_rational, is_stable, ComTrace,
    ProposalPolicy,
};
pub use model::{parse_instance, serialize_instance, validate_instance, Instance, Outcome};
