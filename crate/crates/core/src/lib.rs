//! Knowledge- and sentiment-aware stance detection built from scratch:
//! graph handling, a relational graph autoencoder, small transformer text
//! encoders, the fused stance classifier and its evaluation tools.
//!
//! Everything numeric is generic over [`scalar::Scalar`] (`f32` or `f64`);
//! the aliases below fix the common choices.

pub mod evalkit;
pub mod kgae;
pub mod kgraph;
pub mod layers;
pub mod numerics;
pub mod pipeline;
pub mod scalar;
pub mod stance;
pub mod text;
pub mod textenc;

pub type Tensor64 = numerics::Tensor<f64>;
pub type Tensor32 = numerics::Tensor<f32>;
pub type ParamStore64 = numerics::ParamStore<f64>;
pub type ParamStore32 = numerics::ParamStore<f32>;
pub type ConceptFeatures64 = kgae::ConceptFeatures<f64>;
pub type ConceptFeatures32 = kgae::ConceptFeatures<f32>;
pub type SentimentEncoder64 = textenc::SentimentEncoder<f64>;
pub type SentimentEncoder32 = textenc::SentimentEncoder<f32>;
pub type StanceModel64 = stance::StanceModel<f64>;
pub type StanceModel32 = stance::StanceModel<f32>;
