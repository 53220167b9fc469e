//! Minimal reverse-mode automatic differentiation over dense 2-D tensors,
//! plus parameter storage, initialization, the Adam optimizer and the
//! binary checkpoint format.

mod adam;
pub mod checkpoint;
mod params;
pub mod gradcheck;
mod tape;

pub use adam::{Adam, AdamConfig};
pub use params::{xavier_uniform, Bound, ParamId, ParamStore};
pub(crate) use tape::attention_weights;
pub use tape::{Gradients, Tape, Var};

/// Storage width used when converting retained element counts to bytes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn bytes(self) -> usize {
        match self {
            Precision::F32 => 4,
            Precision::F64 => 8,
        }
    }

    /// `GRAPHFM_F64=1` selects 64-bit accounting.
    pub fn from_env() -> Self {
        match std::env::var("GRAPHFM_F64").as_deref() {
            Ok("1") | Ok("true") => Precision::F64,
            _ => Precision::F32,
        }
    }
}
