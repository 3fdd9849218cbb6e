//! Privacy-preserving task assignment for crowdsourcing.
//!
//! Workers hold private skill profiles. The platform learns a
//! differentially-private KD-tree of the skill space through distributed
//! private sums under threshold homomorphic encryption, then groups tasks into
//! equal-size buckets (one per leaf) that workers fetch with computational
//! private information retrieval.

pub mod crypto;
pub mod noise;
pub mod protocol;
pub mod stats;
pub mod tree;
pub mod workload;
pub mod packing;
pub mod pir;
pub mod ingest;
pub mod metrics;

/// Chapters of the book in `book/`, compiled and run as doctests.
#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    pub mod intro {}
    #[doc = include_str!("../../../book/src/crypto.md")]
    pub mod crypto {}
    #[doc = include_str!("../../../book/src/private-sums.md")]
    pub mod private_sums {}
    #[doc = include_str!("../../../book/src/tree.md")]
    pub mod tree {}
    #[doc = include_str!("../../../book/src/packing-pir.md")]
    pub mod packing_pir {}
    #[doc = include_str!("../../../book/src/workloads.md")]
    pub mod workloads {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    pub mod experiments {}
}
