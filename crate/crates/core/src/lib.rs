pub mod error;
pub mod eval;
pub mod filters;
pub mod geom;
pub mod occupancy;
pub mod referencing;
pub mod registration;
pub mod synth;
pub mod workflow;

pub use error::{Error, Result};

// The guide's snippets run as doctests, one module per chapter.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/geometry.md")]
    mod geometry {}
    #[doc = include_str!("../../../book/src/filtering.md")]
    mod filtering {}
    #[doc = include_str!("../../../book/src/fusion.md")]
    mod fusion {}
    #[doc = include_str!("../../../book/src/referencing.md")]
    mod referencing {}
    #[doc = include_str!("../../../book/src/occupancy.md")]
    mod occupancy {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
