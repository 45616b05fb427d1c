//! The book under `book/`, compiled.
//!
//! Each module below embeds one chapter as its documentation, which turns
//! every ```rust fence in the book into a doc-test of this crate. If a
//! chapter's example drifts out of sync with the real `rsad` API or starts
//! asserting something false, `cargo test -p rsad-guide` breaks.
//!
//! This crate exports no code; read the rendered book instead
//! (`mdbook build book/`), or browse these modules in rustdoc, where the
//! chapters appear as module docs.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/random-projections.md")]
pub mod random_projections {}

#[doc = include_str!("../../../book/src/prototypes.md")]
pub mod prototypes {}

#[doc = include_str!("../../../book/src/detection.md")]
pub mod detection {}

#[doc = include_str!("../../../book/src/baselines.md")]
pub mod baselines {}

#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}

#[doc = include_str!("../../../book/src/synthetic-data.md")]
pub mod synthetic_data {}

#[doc = include_str!("../../../book/src/file-formats.md")]
pub mod file_formats {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
