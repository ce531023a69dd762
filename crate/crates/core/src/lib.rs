//! Representational alignment toolkit.
//!
//! Builds cosine-distance representational dissimilarity matrices (RDMs) from
//! network activations, brain responses, saliency maps and caption
//! embeddings, and compares them with Spearman rank correlation. Also
//! generates distractor datasets whose overlays are classified by how much
//! they disturb an image's saliency map and how far their captions sit from
//! the target's.

pub mod classes;
pub mod analysis;
pub mod forge;
pub mod metrics;
pub mod pipeline;
pub mod repsim;
pub mod saliency;
pub mod tensorio;

pub use classes::DistractorClass;
