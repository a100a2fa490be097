//! Block-transform intra codec.

pub mod bits;
pub mod bitstream;
pub mod decoder;
pub mod encoder;
pub mod entropy;
pub mod predict;
pub mod rdo;
pub mod transform;

pub use decoder::{decode, decode_frame, Decoded};
pub use encoder::{
    encode_frame, CtuRecord, EncodeOutput, EncodeStats, EncoderConfig, LeafRecord, RateMode,
    DEFAULT_KAPPA, HEADER_BITS,
};
pub use predict::{predict_intra, IntraMode};
pub use rdo::{rdo_lambda, rdo_select, CodedCtu, CuLeaf, CuTree, RdoParams};
