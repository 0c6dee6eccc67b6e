//! mdbook cannot run a book's code blocks against crate dependencies, so
//! this shim includes every chapter as module documentation: `cargo test
//! --doc -p adaptrom-book` compiles and runs each fenced Rust block. One
//! module per chapter keeps test failures attributable to their chapter.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/full-order-models.md")]
pub mod full_order_models {}

#[doc = include_str!("../../../book/src/test-problems.md")]
pub mod test_problems {}

#[doc = include_str!("../../../book/src/pod.md")]
pub mod pod {}

#[doc = include_str!("../../../book/src/galerkin-rom.md")]
pub mod galerkin_rom {}

#[doc = include_str!("../../../book/src/online-adaptation.md")]
pub mod online_adaptation {}

#[doc = include_str!("../../../book/src/harness.md")]
pub mod harness {}
