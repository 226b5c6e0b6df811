//! Camera + lidar steering prediction at desk scale: synthetic road data
//! generation, behavior-cloning training of four CNN variants (camera-only,
//! lidar-only, middle-fusion dual, channel-gated dual), lidar range-image
//! processing, viewpoint augmentation, closed-loop evaluation with an
//! autonomy metric, and saliency visualization.

pub mod arch;
pub mod augment;
pub mod color;
pub mod error;
pub mod lidar;
pub mod nn;
pub mod oracles;
pub mod rng;
pub mod sim;
pub mod scalar;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::Tensor;
