//! Hand-written layers, losses and optimizer for the fog-of-war networks.

mod activation;
mod adam;
pub mod conv;
pub mod gradcheck;
mod init;
mod loss;
mod pool;

pub use activation::{relu, relu_backward};
pub use adam::{adam_step, Adam, AdamConfig, AdamState};
pub use conv::{
    conv2d_backward, conv2d_backward_params, conv2d_forward, conv_out_extent, tconv2d_backward, tconv2d_forward,
    tconv_out_extent, ConvGrads, ConvParams,
};
pub use gradcheck::{grad_check, GradCheck};
pub use init::{derive_seed, xavier_bound, xavier_init};
pub use loss::{mse_loss, softmax, softmax_ce_loss};
pub use pool::{maxpool2, maxpool2_backward, MaxPoolOutput};
