//! All-convolutional scoring model: valid cross-correlations with optional
//! rectifiers, ending in a `C + 1` channel logit map. Pixels are mapped from
//! `[0, 1]` to `[-1, 1]` before the first layer.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradient::GradTensor;
use crate::harness::scene::Image;
use crate::tensor::{LogitTensor, Shape};

/// Layer chain: `feature_channels.len()` rectified `kernel x kernel` layers
/// of the given stride, then a linear stride-1 head of size `head_kernel` to
/// `num_classes + 1` channels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_channels: usize,
    pub num_classes: usize,
    pub feature_channels: Vec<usize>,
    pub kernel: usize,
    pub stride: usize,
    #[serde(default = "default_head_kernel")]
    pub head_kernel: usize,
}

fn default_head_kernel() -> usize {
    1
}

impl Architecture {
    pub fn new(num_classes: usize, feature_channels: Vec<usize>) -> Self {
        Self { input_channels: 1, num_classes, feature_channels, kernel: 5, stride: 2, head_kernel: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [self.input_channels, self.num_classes, self.kernel, self.stride, self.head_kernel];
        if sizes.contains(&0) {
            return Err(Error::InvalidConfig("architecture sizes must be positive".into()));
        }
        if self.feature_channels.contains(&0) {
            return Err(Error::InvalidConfig("feature layers need at least one channel".into()));
        }
        Ok(())
    }

    /// `(in, out, kernel, stride, relu)` per layer.
    fn layer_specs(&self) -> Vec<(usize, usize, usize, usize, bool)> {
        let mut specs = Vec::new();
        let mut prev = self.input_channels;
        for &c in &self.feature_channels {
            specs.push((prev, c, self.kernel, self.stride, true));
            prev = c;
        }
        specs.push((prev, self.num_classes + 1, self.head_kernel, 1, false));
        specs
    }

    /// Output grid of an `height x width` input, or `None` when some layer
    /// would see less than one kernel.
    pub fn output_size(&self, height: usize, width: usize) -> Option<(usize, usize)> {
        self.layer_specs().iter().try_fold((height, width), |(h, w), &(_, _, k, s, _)| {
            Some((conv_out(h, k, s)?, conv_out(w, k, s)?))
        })
    }
}

/// Valid-mode output length `floor((n - k) / s) + 1`.
pub fn conv_out(n: usize, kernel: usize, stride: usize) -> Option<usize> {
    (n >= kernel).then(|| (n - kernel) / stride + 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub stride: usize,
    pub relu: bool,
    /// `[out][in][ky][kx]`, row-major.
    pub kernel: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    fn zeros(in_channels: usize, out_channels: usize, kernel_size: usize, stride: usize, relu: bool) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel_size,
            stride,
            relu,
            kernel: vec![0.0; out_channels * in_channels * kernel_size * kernel_size],
            bias: vec![0.0; out_channels],
        }
    }

    fn fan_in(&self) -> usize {
        self.in_channels * self.kernel_size * self.kernel_size
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub architecture: Architecture,
    pub layers: Vec<ConvLayer>,
}

impl ModelParams {
    pub fn zeros(architecture: Architecture) -> Result<Self> {
        architecture.validate()?;
        let layers = architecture
            .layer_specs()
            .into_iter()
            .map(|(i, o, k, s, r)| ConvLayer::zeros(i, o, k, s, r))
            .collect();
        Ok(Self { architecture, layers })
    }

    /// He-normal kernels (`std = sqrt(2 / fan_in)`, `sqrt(1 / fan_in)` for the
    /// linear head) and zero biases.
    pub fn init<R: Rng>(architecture: Architecture, rng: &mut R) -> Result<Self> {
        let mut params = Self::zeros(architecture)?;
        for layer in &mut params.layers {
            let gain = if layer.relu { 2.0 } else { 1.0 };
            let normal = Normal::new(0.0, (gain / layer.fan_in() as f64).sqrt()).expect("positive std");
            layer.kernel.iter_mut().for_each(|w| *w = normal.sample(rng));
        }
        Ok(params)
    }

    pub fn num_classes(&self) -> usize {
        self.architecture.num_classes
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.kernel.len() + l.bias.len()).sum()
    }

    /// Checks that the layer list chains from the input to `C + 1` channels.
    pub fn validate(&self) -> Result<()> {
        self.architecture.validate()?;
        let specs = self.architecture.layer_specs();
        if specs.len() != self.layers.len() {
            return Err(Error::ShapeMismatch(format!(
                "architecture has {} layers, parameters have {}",
                specs.len(),
                self.layers.len()
            )));
        }
        for (idx, (layer, &(i, o, k, s, r))) in self.layers.iter().zip(&specs).enumerate() {
            let ok = layer.in_channels == i
                && layer.out_channels == o
                && layer.kernel_size == k
                && layer.stride == s
                && layer.relu == r
                && layer.kernel.len() == o * i * k * k
                && layer.bias.len() == o;
            if !ok {
                return Err(Error::ShapeMismatch(format!("layer {idx} does not match the architecture")));
            }
            if layer.kernel.iter().chain(&layer.bias).any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteInput);
            }
        }
        Ok(())
    }

    /// `self -= rate * grads`.
    pub fn sgd_step(&mut self, grads: &ParamGrads, rate: f64) {
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            layer.kernel.iter_mut().zip(&g.kernel).for_each(|(w, d)| *w -= rate * d);
            layer.bias.iter_mut().zip(&g.bias).for_each(|(b, d)| *b -= rate * d);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub kernel: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Gradients laid out like [`ModelParams::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub layers: Vec<LayerGrads>,
}

impl ParamGrads {
    pub fn zeros_like(params: &ModelParams) -> Self {
        let layers = params
            .layers
            .iter()
            .map(|l| LayerGrads { kernel: vec![0.0; l.kernel.len()], bias: vec![0.0; l.bias.len()] })
            .collect();
        Self { layers }
    }

    /// `self = decay * self + other`.
    pub fn decay_add(&mut self, decay: f64, other: &ParamGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.kernel.iter_mut().zip(&b.kernel).for_each(|(x, y)| *x = decay * *x + y);
            a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x = decay * *x + y);
        }
    }

    pub fn add_assign(&mut self, other: &ParamGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.kernel.iter_mut().zip(&b.kernel).for_each(|(x, y)| *x += y);
            a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += y);
        }
    }

    /// Flat view in layer order, kernel before bias.
    pub fn flatten(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.kernel.iter().chain(&l.bias).copied()).collect()
    }
}

/// Channel-major feature volume.
#[derive(Debug, Clone)]
struct Volume {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

/// Activations kept for the backward pass: the input to every layer and the
/// final pre-activation output.
pub(crate) struct Trace {
    inputs: Vec<Volume>,
    output: Volume,
}

impl Trace {
    pub fn logits(&self) -> Result<LogitTensor> {
        let v = &self.output;
        LogitTensor::new(Shape::new(v.channels - 1, v.height, v.width)?, v.data.clone())
    }
}

fn conv_forward(layer: &ConvLayer, input: &Volume) -> Volume {
    let (k, s) = (layer.kernel_size, layer.stride);
    let oh = (input.height - k) / s + 1;
    let ow = (input.width - k) / s + 1;
    let (ih, iw) = (input.height, input.width);
    let mut out = vec![0.0; layer.out_channels * oh * ow];
    for o in 0..layer.out_channels {
        let plane = &mut out[o * oh * ow..(o + 1) * oh * ow];
        plane.iter_mut().for_each(|v| *v = layer.bias[o]);
        for i in 0..layer.in_channels {
            let src = &input.data[i * ih * iw..(i + 1) * ih * iw];
            let w = &layer.kernel[(o * layer.in_channels + i) * k * k..][..k * k];
            for y in 0..oh {
                for x in 0..ow {
                    let mut acc = 0.0;
                    for ky in 0..k {
                        let row = &src[(y * s + ky) * iw + x * s..][..k];
                        let wr = &w[ky * k..(ky + 1) * k];
                        for kx in 0..k {
                            acc += wr[kx] * row[kx];
                        }
                    }
                    plane[y * ow + x] += acc;
                }
            }
        }
    }
    Volume { channels: layer.out_channels, height: oh, width: ow, data: out }
}

/// Accumulates kernel and bias gradients and returns the input gradient when
/// `need_input` is set.
fn conv_backward(
    layer: &ConvLayer,
    input: &Volume,
    grad_out: &[f64],
    grads: &mut LayerGrads,
    need_input: bool,
) -> Option<Vec<f64>> {
    let (k, s) = (layer.kernel_size, layer.stride);
    let (ih, iw) = (input.height, input.width);
    let oh = (ih - k) / s + 1;
    let ow = (iw - k) / s + 1;
    let mut grad_in = need_input.then(|| vec![0.0; input.data.len()]);
    for o in 0..layer.out_channels {
        let g = &grad_out[o * oh * ow..(o + 1) * oh * ow];
        grads.bias[o] += g.iter().sum::<f64>();
        for i in 0..layer.in_channels {
            let src = &input.data[i * ih * iw..(i + 1) * ih * iw];
            let widx = (o * layer.in_channels + i) * k * k;
            for y in 0..oh {
                for x in 0..ow {
                    let gv = g[y * ow + x];
                    if gv == 0.0 {
                        continue;
                    }
                    for ky in 0..k {
                        let base = (y * s + ky) * iw + x * s;
                        let dw = &mut grads.kernel[widx + ky * k..][..k];
                        for kx in 0..k {
                            dw[kx] += gv * src[base + kx];
                        }
                        if let Some(gi) = grad_in.as_mut() {
                            let w = &layer.kernel[widx + ky * k..][..k];
                            let di = &mut gi[i * ih * iw + base..][..k];
                            for kx in 0..k {
                                di[kx] += gv * w[kx];
                            }
                        }
                    }
                }
            }
        }
    }
    grad_in
}

pub(crate) fn forward_trace(params: &ModelParams, image: &Image) -> Result<Trace> {
    if params.architecture.input_channels != 1 {
        return Err(Error::ShapeMismatch("images have a single channel".into()));
    }
    if params.architecture.output_size(image.height, image.width).is_none() {
        return Err(Error::InputTooSmall { height: image.height, width: image.width });
    }
    let mut inputs = Vec::with_capacity(params.layers.len());
    let data = image.pixels.iter().map(|v| 2.0 * v - 1.0).collect();
    let mut current = Volume { channels: 1, height: image.height, width: image.width, data };
    for layer in &params.layers {
        let mut next = conv_forward(layer, &current);
        if layer.relu {
            next.data.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        inputs.push(std::mem::replace(&mut current, next));
    }
    Ok(Trace { inputs, output: current })
}

pub(crate) fn backward_trace(params: &ModelParams, trace: &Trace, dlogits: &[f64]) -> Result<ParamGrads> {
    if dlogits.len() != trace.output.data.len() {
        return Err(Error::ShapeMismatch(format!(
            "logit gradient has {} entries, model output has {}",
            dlogits.len(),
            trace.output.data.len()
        )));
    }
    let mut grads = ParamGrads::zeros_like(params);
    let mut g = dlogits.to_vec();
    for idx in (0..params.layers.len()).rev() {
        let layer = &params.layers[idx];
        // The rectifier output of layer idx is the input of layer idx + 1.
        if layer.relu {
            let out = if idx + 1 < params.layers.len() { &trace.inputs[idx + 1] } else { &trace.output };
            g.iter_mut().zip(&out.data).for_each(|(gv, &a)| {
                if a <= 0.0 {
                    *gv = 0.0;
                }
            });
        }
        match conv_backward(layer, &trace.inputs[idx], &g, &mut grads.layers[idx], idx > 0) {
            Some(next) => g = next,
            None => break,
        }
    }
    Ok(grads)
}

/// Logits of one image.
pub fn model_forward(params: &ModelParams, image: &Image) -> Result<LogitTensor> {
    forward_trace(params, image)?.logits()
}

/// Parameter gradient of `<dlogits, model_forward(params, image)>`.
pub fn model_backward(params: &ModelParams, image: &Image, dlogits: &GradTensor) -> Result<ParamGrads> {
    let trace = forward_trace(params, image)?;
    let o = &trace.output;
    let want = (o.channels, o.height, o.width);
    let got = (dlogits.shape.channels(), dlogits.shape.height, dlogits.shape.width);
    if want != got {
        return Err(Error::ShapeMismatch(format!("logit gradient shape {got:?}, model output {want:?}")));
    }
    backward_trace(params, &trace, &dlogits.data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Image {
        Image::new(h, w, (0..h * w).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
    }

    fn random_grad(rng: &mut ChaCha8Rng, logits: &LogitTensor) -> GradTensor {
        GradTensor { shape: logits.shape(), data: (0..logits.data().len()).map(|_| rng.random_range(-1.0..1.0)).collect() }
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    /// Central differences of `<dlogits, logits>` over every parameter.
    fn fd_param_grads(params: &ModelParams, image: &Image, dlogits: &GradTensor, h: f64) -> Vec<f64> {
        let mut out = Vec::new();
        let mut probe = params.clone();
        for l in 0..params.layers.len() {
            for which in 0..2 {
                let n = if which == 0 { params.layers[l].kernel.len() } else { params.layers[l].bias.len() };
                for j in 0..n {
                    let mut eval = |d: f64| {
                        let slot = if which == 0 { &mut probe.layers[l].kernel[j] } else { &mut probe.layers[l].bias[j] };
                        let orig = *slot;
                        *slot = orig + d;
                        let v = dot(model_forward(&probe, image).unwrap().data(), &dlogits.data);
                        let slot = if which == 0 { &mut probe.layers[l].kernel[j] } else { &mut probe.layers[l].bias[j] };
                        *slot = orig;
                        v
                    };
                    out.push((eval(h) - eval(-h)) / (2.0 * h));
                }
            }
        }
        out
    }

    #[test]
    fn zero_model_gives_zero_logits() {
        let p = ModelParams::zeros(Architecture::new(5, vec![4, 6])).unwrap();
        let z = model_forward(&p, &Image::zeros(24, 24)).unwrap();
        assert_eq!(z.shape(), Shape::new(5, 3, 3).unwrap());
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_law_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        for (channels, kernel, stride) in [(vec![3], 3, 1), (vec![3, 4], 5, 2), (vec![2, 2, 2], 3, 2), (vec![], 1, 1)] {
            let mut arch = Architecture::new(2, channels);
            arch.kernel = kernel;
            arch.stride = stride;
            let p = ModelParams::init(arch.clone(), &mut rng).unwrap();
            for (h, w) in [(24, 24), (48, 24), (31, 17)] {
                let mut dims = (h, w);
                for _ in 0..arch.feature_channels.len() {
                    dims = ((dims.0 - kernel) / stride + 1, (dims.1 - kernel) / stride + 1);
                }
                let z = model_forward(&p, &random_image(&mut rng, h, w)).unwrap();
                assert_eq!((z.shape().height, z.shape().width), dims);
                assert_eq!(z.shape().channels(), 3);
            }
        }
    }

    #[test]
    fn doubling_height_grows_rows_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let p = ModelParams::init(Architecture::new(5, vec![4, 6]), &mut rng).unwrap();
        let a = model_forward(&p, &random_image(&mut rng, 24, 24)).unwrap().shape();
        let b = model_forward(&p, &random_image(&mut rng, 48, 24)).unwrap().shape();
        assert_eq!(a.channels(), b.channels());
        assert!(b.height > a.height);
        assert_eq!(a.width, b.width);
    }

    #[test]
    fn too_small_input_is_rejected() {
        let p = ModelParams::zeros(Architecture::new(5, vec![4, 6])).unwrap();
        assert_eq!(model_forward(&p, &Image::zeros(12, 24)), Err(Error::InputTooSmall { height: 12, width: 24 }));
        assert!(model_forward(&p, &Image::zeros(13, 13)).is_ok());
    }

    #[test]
    fn forward_is_bit_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let p = ModelParams::init(Architecture::new(5, vec![4, 6]), &mut rng).unwrap();
        let img = random_image(&mut rng, 24, 24);
        let a = model_forward(&p, &img).unwrap();
        let b = model_forward(&p.clone(), &img.clone()).unwrap();
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn tiny_model_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut arch = Architecture::new(2, vec![]);
        arch.head_kernel = 3;
        let mut p = ModelParams::init(arch, &mut rng).unwrap();
        assert_eq!(p.layers.len(), 1);
        p.layers[0].bias.iter_mut().for_each(|b| *b = rng.random_range(-1.0..1.0));
        let img = random_image(&mut rng, 5, 6);
        let z = model_forward(&p, &img).unwrap();
        let g = random_grad(&mut rng, &z);
        let analytic = model_backward(&p, &img, &g).unwrap().flatten();
        let numeric = fd_param_grads(&p, &img, &g, 1e-5);
        for (a, n) in analytic.iter().zip(&numeric) {
            assert!((a - n).abs() <= 1e-5 * (a.abs() + 1e-8), "{a} vs {n}");
        }
    }

    #[test]
    fn stacked_model_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let mut arch = Architecture::new(2, vec![2, 3]);
        arch.kernel = 3;
        let mut p = ModelParams::init(arch, &mut rng).unwrap();
        // Shift biases away from the rectifier kink.
        p.layers.iter_mut().for_each(|l| l.bias.iter_mut().for_each(|b| *b = 0.3));
        let img = random_image(&mut rng, 11, 9);
        let z = model_forward(&p, &img).unwrap();
        let g = random_grad(&mut rng, &z);
        let analytic = model_backward(&p, &img, &g).unwrap().flatten();
        let numeric = fd_param_grads(&p, &img, &g, 1e-6);
        let worst = analytic
            .iter()
            .zip(&numeric)
            .map(|(a, n)| (a - n).abs() / (a.abs() + 1e-6))
            .fold(0.0, f64::max);
        assert!(worst <= 1e-5, "worst relative error {worst}");
    }

    #[test]
    fn backward_is_linear_and_zero_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let p = ModelParams::init(Architecture::new(3, vec![3, 4]), &mut rng).unwrap();
        let img = random_image(&mut rng, 24, 24);
        let z = model_forward(&p, &img).unwrap();
        let zero = GradTensor::zeros(z.shape());
        assert!(model_backward(&p, &img, &zero).unwrap().flatten().iter().all(|&v| v == 0.0));

        let a = random_grad(&mut rng, &z);
        let b = random_grad(&mut rng, &z);
        let sum = GradTensor { shape: z.shape(), data: a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect() };
        let mut ga = model_backward(&p, &img, &a).unwrap();
        ga.add_assign(&model_backward(&p, &img, &b).unwrap());
        let gs = model_backward(&p, &img, &sum).unwrap();
        for (x, y) in ga.flatten().iter().zip(gs.flatten()) {
            assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn backward_checks_gradient_shape() {
        let p = ModelParams::zeros(Architecture::new(5, vec![4, 6])).unwrap();
        let g = GradTensor::zeros(Shape::new(5, 2, 3).unwrap());
        assert!(matches!(model_backward(&p, &Image::zeros(24, 24), &g), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn validate_catches_broken_layers() {
        let mut p = ModelParams::zeros(Architecture::new(5, vec![4, 6])).unwrap();
        assert!(p.validate().is_ok());
        p.layers[1].bias.pop();
        assert!(matches!(p.validate(), Err(Error::ShapeMismatch(_))));
    }
}
