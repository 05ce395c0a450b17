//! Image transformation sequence retrieval.
//!
//! Given a source image and a target image, retrieve a sequence of known
//! transformations that maps the source onto the target exactly. This crate
//! provides:
//!
//! - two deterministic environments (a glyph-grid toy board and a classic
//!   image-processing pipeline),
//! - an actor-critic network with hand-derived backprop,
//! - PUCT tree search and a curriculum self-play training loop,
//! - a supervised next-action baseline,
//! - policy-guided retrieval (greedy and budgeted best-first) with
//!   single-shot and top-K metrics,
//! - a brute-force oracle for verifying solutions and counting sequence
//!   spaces.
//!
//! The `itsr` binary wires these together behind subcommands; see the crate
//! README for usage.

pub mod cli;
pub mod config;
pub mod env;
pub mod image;
pub mod image_env;
pub mod mcts;
pub mod nn;
pub mod oracle;
pub mod pgm;
pub mod retrieval;
pub mod seeds;
pub mod toy_env;
pub mod training;
