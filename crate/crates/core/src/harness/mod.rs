//! Weak-supervision experiment on synthetic scenes: each training image holds
//! a few glyphs and is labelled only with the set of classes present. A small
//! convolutional model is trained on that label set and tested on isolated
//! glyphs it never saw alone.

pub mod eval;
pub mod model;
pub mod scene;
pub mod train;

pub use eval::{evaluate, Metrics, TestSets};
pub use model::{model_backward, model_forward, Architecture, ConvLayer, ModelParams, ParamGrads};
pub use scene::{generate_scene, generate_scenes, GlyphSet, GlyphTemplate, Image, Placement, SceneSample};
pub use train::{
    batch_objective, mil_objective, nll_objective, train, train_with, EpochRecord, Objective, TrainConfig, Trained,
};
