//! Splat parameters, covariance assembly and residual deformation.

mod cloud;
mod mlp;
mod residual;

pub use cloud::{
    assemble_covariance, eval_gaussian, Activated, GaussianCloud, InitConfig, Splat, LOG_SCALE_MAX, LOG_SCALE_MIN,
};
pub use mlp::{mlp_predict_residuals, positional_encoding, DeformationMLP, MlpCache, MlpConfig};
pub use residual::{apply_residual, apply_residual_backward, Backend, ParamLayout, ResidualField};
