//! Test-time metrics: single-glyph classification under three read-out rules,
//! presence diagnostics and held-out bag likelihood.

use serde::{Deserialize, Serialize};

use crate::decode::{classify_alpha, classify_meanpool};
use crate::error::Result;
use crate::harness::model::{model_forward, ModelParams};
use crate::harness::scene::{generate_scenes, GlyphSet, SceneSample};
use crate::likelihood::likelihood_exact;
use crate::rng::Stream;
use crate::tensor::{softmax_locations, LogitTensor};

#[derive(Debug, Clone, PartialEq)]
pub struct TestSets {
    /// One glyph per scene.
    pub singles: Vec<SceneSample>,
    /// Multi-glyph scenes for presence and likelihood diagnostics.
    pub scenes: Vec<SceneSample>,
}

impl TestSets {
    pub fn generate(
        seed: u64,
        glyphs: &GlyphSet,
        num_singles: usize,
        num_scenes: usize,
        glyphs_per_scene: usize,
        height: usize,
        width: usize,
    ) -> Result<Self> {
        Ok(Self {
            singles: generate_scenes(seed, Stream::TestSingles, glyphs, num_singles, 1, height, width)?,
            scenes: generate_scenes(seed, Stream::TestScenes, glyphs, num_scenes, glyphs_per_scene, height, width)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub single_samples: usize,
    /// Error of `argmax_l log a({l, bg})` on the per-location softmax.
    pub single_error_alpha: f64,
    /// Error of the per-location softmax mean-pool rule.
    pub single_error_meanpool: f64,
    /// Fraction of singles where the two rules above agree.
    pub rule_agreement: f64,
    /// Error of `argmax_l max_{m,n}` of the class logits, the read-out
    /// matching the max-pooling MIL cost.
    pub single_error_maxpool: f64,
    pub scene_samples: usize,
    /// Per class, the mean-pooled probability averaged over scenes that
    /// contain the class; `None` when no scene does.
    pub presence_when_present: Vec<Option<f64>>,
    /// Same average over scenes without the class.
    pub presence_when_absent: Vec<Option<f64>>,
    /// Mean `-log Prb(L | P)` over the scenes; `None` if some scene has
    /// probability zero or there are no scenes.
    pub heldout_nll: Option<f64>,
}

/// First label whose largest logit is maximal.
fn classify_maxpool(z: &LogitTensor) -> usize {
    let s = z.shape();
    let mut best = 1;
    let mut best_v = f64::NEG_INFINITY;
    for c in 0..s.num_classes {
        let v = z.channel(c).iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if v > best_v {
            best = c + 1;
            best_v = v;
        }
    }
    best
}

fn mean_option(total: f64, count: usize) -> Option<f64> {
    (count > 0).then(|| total / count as f64)
}

pub fn evaluate(params: &ModelParams, sets: &TestSets) -> Result<Metrics> {
    let (mut wrong_alpha, mut wrong_mean, mut wrong_max, mut agree) = (0usize, 0usize, 0usize, 0usize);
    for s in &sets.singles {
        let truth = s.placements[0].label;
        let z = model_forward(params, &s.image)?;
        let p = softmax_locations(&z)?;
        let a = classify_alpha(&p);
        let m = classify_meanpool(&p);
        wrong_alpha += usize::from(a != truth);
        wrong_mean += usize::from(m != truth);
        wrong_max += usize::from(classify_maxpool(&z) != truth);
        agree += usize::from(a == m);
    }
    let n = sets.singles.len().max(1) as f64;

    let c = params.num_classes();
    let mut present = vec![(0.0, 0usize); c];
    let mut absent = vec![(0.0, 0usize); c];
    let mut nll = 0.0;
    for s in &sets.scenes {
        let p = softmax_locations(&model_forward(params, &s.image)?)?;
        let locs = p.shape().locations() as f64;
        for (k, (pres, abs)) in present.iter_mut().zip(absent.iter_mut()).enumerate() {
            let score = p.channel(k).iter().sum::<f64>() / locs;
            let slot = if s.labels.contains(k + 1) { pres } else { abs };
            slot.0 += score;
            slot.1 += 1;
        }
        nll -= likelihood_exact(&s.labels, &p)?.log_prob;
    }
    let heldout_nll = mean_option(nll, sets.scenes.len()).filter(|v| v.is_finite());

    Ok(Metrics {
        single_samples: sets.singles.len(),
        single_error_alpha: wrong_alpha as f64 / n,
        single_error_meanpool: wrong_mean as f64 / n,
        rule_agreement: agree as f64 / n,
        single_error_maxpool: wrong_max as f64 / n,
        scene_samples: sets.scenes.len(),
        presence_when_present: present.iter().map(|&(t, k)| mean_option(t, k)).collect(),
        presence_when_absent: absent.iter().map(|&(t, k)| mean_option(t, k)).collect(),
        heldout_nll,
    })
}
