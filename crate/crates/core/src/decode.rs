//! Test-time read-out: per-location label maps, single-label classification
//! rules and run-length transcription of horizontal sequences.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::ProbTensor;

/// Per-location decoded labels, 1-based with `C + 1` for background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmissionMap {
    num_classes: usize,
    height: usize,
    width: usize,
    cells: Vec<usize>,
}

impl EmissionMap {
    pub fn new(num_classes: usize, height: usize, width: usize, cells: Vec<usize>) -> Result<Self> {
        if cells.len() != height * width {
            return Err(Error::ShapeMismatch(format!(
                "map {height}x{width} needs {} cells, got {}",
                height * width,
                cells.len()
            )));
        }
        if let Some(&bad) = cells.iter().find(|&&c| c == 0 || c > num_classes + 1) {
            return Err(Error::LabelOutOfRange { label: bad, num_classes: num_classes + 1 });
        }
        Ok(Self { num_classes, height, width, cells })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn background(&self) -> usize {
        self.num_classes + 1
    }

    /// Row-major cells.
    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn get(&self, row: usize, col: usize) -> usize {
        self.cells[row * self.width + col]
    }
}

/// Label sequence without background. Equal neighbours only arise from runs
/// that were separated by background.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Transcription(pub Vec<usize>);

impl Transcription {
    pub fn labels(&self) -> &[usize] {
        &self.0
    }

    pub fn render(&self, sep: &str) -> String {
        self.0.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(sep)
    }
}

/// First index of the maximum; later equal values lose.
fn argmax<I: IntoIterator<Item = f64>>(values: I) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_v || i == 0 {
            best = i;
            best_v = v;
        }
    }
    best
}

/// Most probable label at every location, ties to the smallest label.
pub fn emission_map(p: &ProbTensor) -> EmissionMap {
    let s = p.shape();
    let cells = (0..s.height)
        .flat_map(|m| (0..s.width).map(move |n| (m, n)))
        .map(|(m, n)| argmax((0..s.channels()).map(|c| p.get(c, m, n))) + 1)
        .collect();
    EmissionMap { num_classes: s.num_classes, height: s.height, width: s.width, cells }
}

/// `argmax_l sum_{m,n} log(p[l] + p[bg])`, ties to the smallest label.
pub fn classify_alpha(p: &ProbTensor) -> usize {
    let s = p.shape();
    let bg = p.channel(s.background());
    let scores = (0..s.num_classes).map(|c| {
        p.channel(c).iter().zip(bg).map(|(a, b)| (a + b).ln()).sum::<f64>()
    });
    argmax(scores) + 1
}

/// `argmax_l` of the mean of `p[l]` over locations, ties to the smallest label.
pub fn classify_meanpool(p: &ProbTensor) -> usize {
    let s = p.shape();
    let locs = s.locations() as f64;
    argmax((0..s.num_classes).map(|c| p.channel(c).iter().sum::<f64>() / locs)) + 1
}

/// Column-wise majority over non-background cells, ties to the smallest
/// label; background for columns without detections.
pub fn column_sequence(map: &EmissionMap) -> Vec<usize> {
    let bg = map.background();
    (0..map.width)
        .map(|n| {
            let mut counts = vec![0usize; map.num_classes];
            for m in 0..map.height {
                let c = map.get(m, n);
                if c != bg {
                    counts[c - 1] += 1;
                }
            }
            // max_by_key keeps the last maximum, so scan in reverse.
            match counts.iter().enumerate().rev().max_by_key(|(_, &k)| k) {
                Some((i, &k)) if k > 0 => i + 1,
                _ => bg,
            }
        })
        .collect()
}

/// Emits each maximal run of a repeated label once; `background` ends runs.
pub fn collapse_transcribe(seq: &[usize], background: usize) -> Transcription {
    let mut out = Vec::new();
    let mut prev = None;
    for &l in seq {
        if l == background {
            prev = None;
            continue;
        }
        if prev != Some(l) {
            out.push(l);
        }
        prev = Some(l);
    }
    Transcription(out)
}

/// `emission_map -> column_sequence -> collapse_transcribe`.
pub fn transcribe(map: &EmissionMap) -> Transcription {
    collapse_transcribe(&column_sequence(map), map.background())
}
