//! Procedural glyph stencils and the scenes built from them.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::tensor::LabelSet;

pub const DEFAULT_GLYPH_SIZE: usize = 8;
pub const DEFAULT_CANVAS: usize = 24;
/// Half-width of the additive uniform pixel noise.
pub const NOISE_AMPLITUDE: f64 = 0.1;

/// Smallest fraction of stencil cells that must be set.
const MIN_FILL: f64 = 0.25;

/// Square binary stencil for one class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlyphTemplate {
    pub label: usize,
    pub size: usize,
    /// Row-major, `size * size` cells.
    pub cells: Vec<bool>,
}

impl GlyphTemplate {
    pub fn filled(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }
}

/// One stencil per class, pairwise distinct.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlyphSet {
    templates: Vec<GlyphTemplate>,
}

impl GlyphSet {
    /// Draws each cell as a fair coin, redrawing stencils that are too sparse
    /// or repeat an earlier class.
    pub fn generate<R: Rng>(rng: &mut R, num_classes: usize, size: usize) -> Result<Self> {
        if num_classes == 0 || size == 0 {
            return Err(Error::InvalidConfig("glyph set needs at least one class and a positive size".into()));
        }
        let min_filled = (MIN_FILL * (size * size) as f64).ceil() as usize;
        let mut templates: Vec<GlyphTemplate> = Vec::with_capacity(num_classes);
        while templates.len() < num_classes {
            let cells: Vec<bool> = (0..size * size).map(|_| rng.random_bool(0.5)).collect();
            let t = GlyphTemplate { label: templates.len() + 1, size, cells };
            if t.filled() >= min_filled && templates.iter().all(|o| o.cells != t.cells) {
                templates.push(t);
            }
        }
        Ok(Self { templates })
    }

    /// The glyph set a seed selects, drawn from the `Glyphs` stream.
    pub fn from_seed(seed: u64, num_classes: usize, size: usize) -> Result<Self> {
        Self::generate(&mut stream_rng(seed, Stream::Glyphs), num_classes, size)
    }

    pub fn num_classes(&self) -> usize {
        self.templates.len()
    }

    pub fn size(&self) -> usize {
        self.templates[0].size
    }

    /// Stencil of a 1-based class label.
    pub fn get(&self, label: usize) -> &GlyphTemplate {
        &self.templates[label - 1]
    }

    pub fn templates(&self) -> &[GlyphTemplate] {
        &self.templates
    }
}

/// Single-channel image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != height * width {
            return Err(Error::ShapeMismatch(format!(
                "{height}x{width} image needs {} pixels, got {}",
                height * width,
                pixels.len()
            )));
        }
        Ok(Self { height, width, pixels })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self { height, width, pixels: vec![0.0; height * width] }
    }
}

/// Top-left corner of a placed glyph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub label: usize,
    pub row: usize,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSample {
    pub image: Image,
    pub labels: LabelSet,
    pub placements: Vec<Placement>,
}

/// Places `num_glyphs` uniformly chosen glyphs at uniformly chosen positions
/// fully inside the canvas, overlapping by pixelwise max, then adds uniform
/// noise and clips to `[0, 1]`.
pub fn generate_scene<R: Rng>(
    rng: &mut R,
    glyphs: &GlyphSet,
    num_glyphs: usize,
    height: usize,
    width: usize,
) -> Result<SceneSample> {
    let g = glyphs.size();
    if g > height || g > width {
        return Err(Error::GlyphTooLargeForCanvas { glyph: g, height, width });
    }
    let mut image = Image::zeros(height, width);
    let mut placements = Vec::with_capacity(num_glyphs);
    for _ in 0..num_glyphs {
        let label = rng.random_range(1..=glyphs.num_classes());
        let row = rng.random_range(0..=height - g);
        let col = rng.random_range(0..=width - g);
        let t = glyphs.get(label);
        for r in 0..g {
            for c in 0..g {
                if t.cells[r * g + c] {
                    image.pixels[(row + r) * width + col + c] = 1.0;
                }
            }
        }
        placements.push(Placement { label, row, col });
    }
    for v in image.pixels.iter_mut() {
        *v = (*v + rng.random_range(-NOISE_AMPLITUDE..NOISE_AMPLITUDE)).clamp(0.0, 1.0);
    }
    let labels = LabelSet::new(placements.iter().map(|p| p.label)).expect("labels are positive");
    Ok(SceneSample { image, labels, placements })
}

/// `count` scenes drawn in order from one stream.
pub fn generate_scenes(
    seed: u64,
    stream: Stream,
    glyphs: &GlyphSet,
    count: usize,
    num_glyphs: usize,
    height: usize,
    width: usize,
) -> Result<Vec<SceneSample>> {
    let mut rng = stream_rng(seed, stream);
    (0..count).map(|_| generate_scene(&mut rng, glyphs, num_glyphs, height, width)).collect()
}
