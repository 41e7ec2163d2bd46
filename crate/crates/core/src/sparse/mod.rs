//! Binary masks over layered parameter vectors and the primitives that
//! create and evolve them.
//!
//! A [`LayerLayout`] describes how the flat weight vector of a model is cut
//! into layers. A [`Mask`] assigns one bit to every flat weight index and
//! keeps a per-layer popcount that every operation maintains. Bias vectors
//! are not part of the layout; they are always dense.
//!
//! All operations are pure: they take masks by reference and return new
//! masks.

mod codec;
mod erk;
mod layout;
mod mask;
mod prune;
mod schedule;

pub use codec::{MaskBlob, MaskJson};
pub use erk::{allocate_active_counts, erk_densities, uniform_densities};
pub use layout::{LayerKind, LayerLayout, LayerSpec};
pub use mask::Mask;
pub use prune::{apply_mask, gradient_regrow, init_mask, magnitude_prune, random_regrow};
pub use schedule::PruneSchedule;
