//! The guide in `book/`, one module per chapter, so `cargo test` runs every
//! snippet against the current library.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/model.md")]
pub mod model {}
#[doc = include_str!("../../../book/src/tangency.md")]
pub mod tangency {}
#[doc = include_str!("../../../book/src/primitives.md")]
pub mod primitives {}
#[doc = include_str!("../../../book/src/junctions.md")]
pub mod junctions {}
#[doc = include_str!("../../../book/src/sequencing.md")]
pub mod sequencing {}
#[doc = include_str!("../../../book/src/oracle.md")]
pub mod oracle {}
#[doc = include_str!("../../../book/src/lqr.md")]
pub mod lqr {}
#[doc = include_str!("../../../book/src/submersible.md")]
pub mod submersible {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
