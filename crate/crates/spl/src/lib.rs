//! Security patch localization (SPL).
//!
//! Given the CVEs filed against a repository and that repository's commit
//! history, rank the commits by how likely each one is to be the security
//! patch for a given CVE. The ranker runs in three stages:
//!
//! 1. a base ranker over handcrafted CVE/commit pair features (`F0`),
//! 2. LLM relevance feedback on the top-k commits of the initial ranking
//!    (`F1`), folded back in as an extra feature,
//! 3. an LLM-endorsed inter-commit graph (`F2`) consumed by a joint model
//!    that fuses a Wide&Deep numerical encoder with a graph attention
//!    encoder.
//!
//! The `examples/` directory has one runnable program per capability; the
//! `spl` binary wires everything into subcommands (`spl run --config
//! pipeline.toml` for the whole pipeline).

pub mod corpus;
pub mod error;
pub mod eval;
pub mod features;
pub mod feedback;
pub mod graph;
pub mod model;
pub mod pipeline;
pub mod synthetic;
pub mod util;

pub mod cli;

pub use error::{Error, Result};
