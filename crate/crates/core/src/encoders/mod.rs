//! Toy image and sentence encoders.
//!
//! The image encoder is a stack of stride-2, kernel-3 relu convolutions that
//! turns a `32 x 32` image into a `4 x 4 x D` grid of local features. A
//! global pathway adds one more strided block, a spatial mean and a dense
//! layer. The text encoder maps each sentence of a report to one vector.

pub mod conv;
pub mod image;
pub mod text;

pub use image::{
    FeatureGrid, GlobalCache, GlobalFeature, ImageEncoder, ImageEncoderParams, ImageEncoderSpec,
    ImageSample, LocalCache,
};
pub use text::{ReportSample, SentencePack, TextCache, TextEncoder, TextEncoderParams, TextEncoderSpec};
