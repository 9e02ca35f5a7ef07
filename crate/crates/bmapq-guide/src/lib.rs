//! Keeps the book honest: each chapter is included as a module's
//! documentation, so `cargo test --doc` compiles and runs every `rust`
//! code block in `book/src/`. mdbook itself cannot run snippets against
//! crate dependencies; this shim can.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/arrival-process.md")]
pub mod arrival_process {}

#[doc = include_str!("../../../book/src/channel-and-service.md")]
pub mod channel_and_service {}

#[doc = include_str!("../../../book/src/queue-chain.md")]
pub mod queue_chain {}

#[doc = include_str!("../../../book/src/metrics.md")]
pub mod metrics {}

#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
