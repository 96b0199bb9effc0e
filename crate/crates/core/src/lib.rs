//! Multimodal Theory-of-Mind networks.
//!
//! Two person-specific MindNets share contextual feature extractors (scene
//! frames, object boxes, object-context relations) and encode each person's
//! own cues (gaze, pose, egocentric frames) before a bidirectional LSTM.
//! Three mechanisms let the MindNets inform each other: decision-time
//! re-ranking, fusing the partner's LSTM cell state, and fusing a learned
//! common-ground vector built from both cell states.
//!
//! Everything runs on a small reverse-mode autodiff engine in [`tensor`].

pub mod analyze;
pub mod binfmt;
pub mod data;
pub mod error;
pub mod layers;
pub mod model;
pub mod params;
pub mod tensor;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
