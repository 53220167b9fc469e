//! Self-supervised objectives behind one training interface.
//!
//! Contrastive methods (GBT, CCA-SSG, BGRL, GCA) encode two augmented views
//! of each batch; generative methods reconstruct masked node features
//! (GraphMAE) or masked edges (S2GAE). Mini-batch views drop entries of the
//! batch's blocks with the same per-edge decisions used on the whole graph,
//! and contrastive negatives come from within the batch.

mod augment;
mod config;
pub mod losses;
mod method;

pub use augment::{
    augment, column_kept, drop_edges, drop_features, filter_block, mask_edges, mask_nodes, AugmentationSpec,
    EdgeDrop, FeatureDrop, NodeMask,
};
pub use config::{BgrlParams, CcaSsgParams, GbtParams, GcaParams, GraphmaeParams, MethodConfig, MethodKind, S2gaeParams};
pub use method::{ema_update, Inputs, SslMethod, StepStats};

#[cfg(test)]
mod tests;
