//! Language side of the pipeline: vocabulary and tokenization, the
//! bidirectional recurrent encoder, and attention pooling.

pub mod encoder;
pub mod vocab;
