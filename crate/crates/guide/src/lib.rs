//! The book's chapters as doc-tested modules.
//!
//! Each module below embeds one chapter from `book/src`, so `cargo test
//! -p guide --doc` compiles and runs every fenced Rust block in the
//! guide. A chapter that drifts from the library API fails the build
//! here, not a reader's terminal.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/expressions.md")]
pub mod expressions {}

#[doc = include_str!("../../../book/src/canonical-form.md")]
pub mod canonical_form {}

#[doc = include_str!("../../../book/src/mtree.md")]
pub mod mtree {}

#[doc = include_str!("../../../book/src/metrics.md")]
pub mod metrics {}

#[doc = include_str!("../../../book/src/corpora.md")]
pub mod corpora {}

#[doc = include_str!("../../../book/src/decoder.md")]
pub mod decoder {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
