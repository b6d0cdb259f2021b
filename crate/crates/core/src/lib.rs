//! Simultaneous true discovery proportion bounds for cluster-extent inference.
//!
//! Start with [`inference::analyze`] for whole-map analyses, or
//! [`inference::tdp_lower`] for a single region. The guide in `book/` walks
//! through each module; its code blocks run as doc-tests here.

pub mod bounds;
pub mod extremal;
pub mod heuristic;
pub mod inference;
pub mod io;
pub mod lattice;
pub mod report;
pub mod simulation;
pub mod thresholds;
pub mod tiling;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/lattice.md")]
    mod lattice {}
    #[doc = include_str!("../../../book/src/separators.md")]
    mod separators {}
    #[doc = include_str!("../../../book/src/heuristic.md")]
    mod heuristic {}
    #[doc = include_str!("../../../book/src/thresholds.md")]
    mod thresholds {}
    #[doc = include_str!("../../../book/src/inference.md")]
    mod inference {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
