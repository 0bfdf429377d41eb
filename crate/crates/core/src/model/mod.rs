//! The learned field `(y, z) ↦ (v_y, v_z)`: network, loss, optimizer and
//! file format.

mod adamw;
pub(crate) mod io;
mod loss;
mod mlp;

pub use adamw::{AdamW, AdamWConfig};
pub use io::{load, save, MODEL_MAGIC, MODEL_VERSION};
pub use loss::{loss_and_grad, mode_transform, sample_loss, LossOutput, LossSample, ModeConfig, Transformed, MODEL_VZ_FLOOR};
pub use mlp::{softplus, MlpParams};
