//! Contextual bandit with probing.
//!
//! Each round a decision maker observes a context (a client location),
//! probes up to `K` of `N` arms (access points) to see their realized
//! rewards, then plays one arm and collects its reward. This crate provides:
//!
//! - [`metric`]: the normalized similarity space contexts live in.
//! - [`zooming`]: per-arm adaptive ball partitions with confidence indices.
//! - [`oracle`]: offline solvers for the optimal probe-then-play value.
//! - [`policy`]: the online probing policy and the baselines it is compared
//!   against.
//! - [`env`]: reward grids, rate tables, mobility traces, and seed streams.
//! - [`harness`]: experiment configs, runs, sweeps, audits, and CSV output.

pub mod env;
pub mod harness;
pub mod metric;
pub mod oracle;
pub mod policy;
pub mod zooming;

/// Runs every code block in the user guide as a doc-test, so the book
/// cannot drift from the library.
#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/similarity-space.md")]
    pub mod similarity_space {}
    #[doc = include_str!("../../../book/src/offline-oracle.md")]
    pub mod offline_oracle {}
    #[doc = include_str!("../../../book/src/adaptive-partitions.md")]
    pub mod adaptive_partitions {}
    #[doc = include_str!("../../../book/src/policies.md")]
    pub mod policies {}
    #[doc = include_str!("../../../book/src/environments.md")]
    pub mod environments {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    pub mod experiments {}
}
