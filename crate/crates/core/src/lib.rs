//! Machine-vision-aware rate-distortion toolkit.

pub mod codec;
pub mod corpus;
pub mod error;
pub mod features;
pub mod frame;
pub mod metrics;
pub mod msfd;
pub mod rate_control;
pub mod report;
pub mod roim;
pub mod satd;
pub mod tensor_file;

pub use error::{Error, ErrorClass, Result};
pub use frame::{BlockRegion, CtuGrid, Frame};
