//! Compiles the code listings of the guide in `book/` as doctests, one
//! module per chapter so a failure points at its chapter.

#[doc = include_str!("../../../book/src/intro.md")]
pub mod intro {}
#[doc = include_str!("../../../book/src/instances.md")]
pub mod instances {}
#[doc = include_str!("../../../book/src/choice.md")]
pub mod choice {}
#[doc = include_str!("../../../book/src/mechanism.md")]
pub mod mechanism {}
#[doc = include_str!("../../../book/src/oracles.md")]
pub mod oracles {}
#[doc = include_str!("../../../book/src/comparative.md")]
pub mod comparative {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
