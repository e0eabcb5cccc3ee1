//! Synthetic fact world and its renderings.

pub mod catalog;
mod render;
mod template;
mod vocab;
mod world;

pub use render::{
    build_vocab, corrupt_for_icd, render_mc_set, render_probes, render_training_set, shuffled,
    AttributeTemplates, McItem, ProbeItem, Templates, TrainingExample,
};
pub use template::{Piece, Rendered, Template};
pub use vocab::{Vocab, BOS, EOS, PAD, SEP, SPECIALS};
pub use world::{Fact, World, WorldParams};
