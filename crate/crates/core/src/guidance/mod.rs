//! Attention model: grid encoding, a small UNet with hand-written backward
//! pass, Adam training and weight files.

mod encode;
pub mod layers;
mod train;
mod unet;

pub use encode::{channel_count, encode, encode_with_layout, occupancy_mask, padded, GridTensor};
pub use train::{read_loss_csv, sample_loss, sample_loss_and_grad, train, write_loss_csv, TrainConfig, TrainSample};
pub use unet::{Arch, Cache, Net, UNetModel};
