//! Compiles the code listings of the guide in `book/` as doctests, so
//! `cargo test -p tanner-guide` fails when the book and the crates drift
//! apart.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/codes.md")]
pub mod codes {}
#[doc = include_str!("../../../book/src/sampling.md")]
pub mod sampling {}
#[doc = include_str!("../../../book/src/baseline.md")]
pub mod baseline {}
#[doc = include_str!("../../../book/src/neural.md")]
pub mod neural {}
#[doc = include_str!("../../../book/src/bench.md")]
pub mod bench {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
