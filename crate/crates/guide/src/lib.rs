//! The chapters of `book/` as modules, so every snippet runs under
//! `cargo test --doc`.

#[doc = include_str!("../../../book/src/intro.md")]
pub mod intro {}

#[doc = include_str!("../../../book/src/scenario.md")]
pub mod scenario {}

#[doc = include_str!("../../../book/src/physics.md")]
pub mod physics {}

#[doc = include_str!("../../../book/src/conic.md")]
pub mod conic {}

#[doc = include_str!("../../../book/src/sca.md")]
pub mod sca {}

#[doc = include_str!("../../../book/src/penalty.md")]
pub mod penalty {}

#[doc = include_str!("../../../book/src/robust.md")]
pub mod robust {}

#[doc = include_str!("../../../book/src/baselines.md")]
pub mod baselines {}

#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
