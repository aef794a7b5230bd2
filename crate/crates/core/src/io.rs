//! JSON file formats: tensors, label sets, emission maps, checkpoints and
//! per-epoch metrics lines.

use serde::{Deserialize, Serialize};

use crate::decode::EmissionMap;
use crate::error::{Error, Result};
use crate::harness::{Architecture, ConvLayer, EpochRecord, ModelParams, TrainConfig};
use crate::tensor::{softmax_locations, LabelSet, LogitTensor, ProbTensor, Shape};

fn parse<'a, T: Deserialize<'a>>(text: &'a str, what: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Format(format!("{what}: {e}")))
}

fn render<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("serializable value")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TensorKind {
    Prob,
    Logit,
}

/// `{"kind": "prob" | "logit", "shape": [C + 1, M, N], "data": [...]}`,
/// channel-major and row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorFile {
    pub kind: TensorKind,
    pub shape: [usize; 3],
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorInput {
    Prob(ProbTensor),
    Logit(LogitTensor),
}

impl TensorInput {
    pub fn shape(&self) -> Shape {
        match self {
            TensorInput::Prob(p) => p.shape(),
            TensorInput::Logit(z) => z.shape(),
        }
    }

    /// The probability tensor, through the per-location softmax for logits.
    pub fn to_prob(&self) -> Result<ProbTensor> {
        match self {
            TensorInput::Prob(p) => Ok(p.clone()),
            TensorInput::Logit(z) => softmax_locations(z),
        }
    }
}

impl TensorFile {
    pub fn from_prob(p: &ProbTensor) -> Self {
        let s = p.shape();
        Self { kind: TensorKind::Prob, shape: [s.channels(), s.height, s.width], data: p.data().to_vec() }
    }

    pub fn from_logits(z: &LogitTensor) -> Self {
        let s = z.shape();
        Self { kind: TensorKind::Logit, shape: [s.channels(), s.height, s.width], data: z.data().to_vec() }
    }

    /// Validated tensor. Probability tensors must pass the simplex checks.
    pub fn into_tensor(self) -> Result<TensorInput> {
        let [channels, height, width] = self.shape;
        if channels < 2 {
            return Err(Error::ShapeMismatch(format!("need at least 2 channels, got {channels}")));
        }
        let shape = Shape::new(channels - 1, height, width)?;
        match self.kind {
            TensorKind::Prob => Ok(TensorInput::Prob(ProbTensor::new(shape, self.data)?)),
            TensorKind::Logit => Ok(TensorInput::Logit(LogitTensor::new(shape, self.data)?)),
        }
    }
}

pub fn read_tensor(text: &str) -> Result<TensorInput> {
    parse::<TensorFile>(text, "tensor file")?.into_tensor()
}

/// `{"labels": [1-based class labels]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelFile {
    pub labels: Vec<usize>,
}

pub fn read_labels(text: &str) -> Result<LabelSet> {
    LabelSet::new(parse::<LabelFile>(text, "label file")?.labels)
}

pub fn write_labels(labels: &LabelSet) -> String {
    render(&LabelFile { labels: labels.labels().to_vec() })
}

/// `{"shape": [M, N], "cells": [...]}` with 1-based labels and background
/// `C + 1`. `num_classes` may be given in the file or by the caller.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmissionMapFile {
    pub shape: [usize; 2],
    pub cells: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_classes: Option<usize>,
}

impl EmissionMapFile {
    pub fn from_map(map: &EmissionMap) -> Self {
        Self { shape: [map.height(), map.width()], cells: map.cells().to_vec(), num_classes: Some(map.num_classes()) }
    }

    /// `num_classes` overrides the file's value when both are present and
    /// disagree.
    pub fn into_map(self, num_classes: Option<usize>) -> Result<EmissionMap> {
        let c = num_classes.or(self.num_classes).ok_or_else(|| {
            Error::Format("emission map needs num_classes, in the file or from the caller".into())
        })?;
        if c == 0 {
            return Err(Error::Format("num_classes must be positive".into()));
        }
        EmissionMap::new(c, self.shape[0], self.shape[1], self.cells)
    }
}

pub fn read_emission_map(text: &str, num_classes: Option<usize>) -> Result<EmissionMap> {
    parse::<EmissionMapFile>(text, "emission map")?.into_map(num_classes)
}

/// Trained parameters with the seed and configuration that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub architecture: Architecture,
    pub layers: Vec<ConvLayer>,
    pub seed: u64,
    pub config: TrainConfig,
}

impl Checkpoint {
    pub fn new(params: &ModelParams, config: &TrainConfig) -> Self {
        Self {
            architecture: params.architecture.clone(),
            layers: params.layers.clone(),
            seed: config.seed,
            config: config.clone(),
        }
    }

    pub fn params(&self) -> Result<ModelParams> {
        let p = ModelParams { architecture: self.architecture.clone(), layers: self.layers.clone() };
        p.validate()?;
        Ok(p)
    }

    pub fn to_json(&self) -> String {
        render(self)
    }
}

pub fn read_checkpoint(text: &str) -> Result<Checkpoint> {
    let c: Checkpoint = parse(text, "checkpoint")?;
    c.params()?;
    Ok(c)
}

/// One JSON object per line, newline terminated.
pub fn metrics_lines(log: &[EpochRecord]) -> String {
    log.iter().map(|r| render(r) + "\n").collect()
}

pub fn read_metrics_lines(text: &str) -> Result<Vec<EpochRecord>> {
    text.lines().filter(|l| !l.trim().is_empty()).map(|l| parse(l, "metrics line")).collect()
}
