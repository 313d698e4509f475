//! Perceptual-loss kernels on dense feature tensors: Gram matrices, content
//! and style losses, their weighted sum and its closed-form gradient.
//!
//! All reductions use Neumaier-compensated summation in a fixed order, so
//! results are reproducible bit-for-bit and Gram matrices stay PSD to within
//! rounding regardless of tensor size.

mod container;

pub use container::{
    read_tensor, tensor_metadata_json, write_tensor, ContainerError, TENSOR_MAGIC,
};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LossError {
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch([usize; 3], [usize; 3]),
    #[error("channel mismatch: {0} vs {1}")]
    ChannelMismatch(usize, usize),
    #[error("invalid tensor: {0}")]
    InvalidTensor(&'static str),
    #[error("layer count mismatch: {outputs} outputs, {targets} style targets")]
    LayerCount { outputs: usize, targets: usize },
    #[error("loss weights must be finite and non-negative")]
    InvalidWeights,
}

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Dense `channels × height × width` tensor, channel-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTensor {
    c: usize,
    h: usize,
    w: usize,
    data: Vec<f64>,
}

impl FeatureTensor {
    pub fn new(c: usize, h: usize, w: usize, data: Vec<f64>) -> Result<Self, LossError> {
        if c == 0 || h == 0 || w == 0 {
            return Err(LossError::InvalidTensor(
                "every dimension must be at least 1",
            ));
        }
        if data.len() != c * h * w {
            return Err(LossError::InvalidTensor(
                "sample count does not match shape",
            ));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(LossError::InvalidTensor("non-finite sample"));
        }
        Ok(Self { c, h, w, data })
    }

    pub fn zeros(c: usize, h: usize, w: usize) -> Result<Self, LossError> {
        Self::new(c, h, w, vec![0.0; c * h * w])
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.c, self.h, self.w]
    }

    pub fn channels(&self) -> usize {
        self.c
    }

    /// `c · h · w`.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.h + y) * self.w + x]
    }

    /// Samples of one channel (the row of the reshaped `c × hw` matrix).
    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.h * self.w;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            data: self.data.iter().map(|v| v * s).collect(),
            ..self.clone()
        }
    }
}

/// Symmetric `c × c` channel-correlation matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix(pub DMatrix<f64>);

impl GramMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }
}

/// `G[c, c'] = Σ_{y,x} t[c,y,x] · t[c',y,x] / (c·h·w)`, evaluated as a
/// compensated double sum.
pub fn gram(t: &FeatureTensor) -> GramMatrix {
    let norm = t.len() as f64;
    let mut g = DMatrix::zeros(t.c, t.c);
    for a in 0..t.c {
        for b in a..t.c {
            let s: CompensatedSum = t
                .channel(a)
                .iter()
                .zip(t.channel(b))
                .map(|(x, y)| x * y)
                .collect();
            let v = s.value() / norm;
            g[(a, b)] = v;
            g[(b, a)] = v;
        }
    }
    GramMatrix(g)
}

/// `ψ ψᵀ / (c·h·w)` with `ψ` the `c × hw` reshape, via a plain matrix product.
pub fn gram_by_matmul(t: &FeatureTensor) -> GramMatrix {
    let psi = DMatrix::from_row_slice(t.c, t.h * t.w, &t.data);
    GramMatrix(&psi * psi.transpose() / t.len() as f64)
}

/// `‖out − target‖² / (c·h·w)`.
pub fn content_loss(out: &FeatureTensor, target: &FeatureTensor) -> Result<f64, LossError> {
    if out.shape() != target.shape() {
        return Err(LossError::ShapeMismatch(out.shape(), target.shape()));
    }
    let s: CompensatedSum = out
        .data
        .iter()
        .zip(&target.data)
        .map(|(a, b)| (a - b) * (a - b))
        .collect();
    Ok(s.value() / out.len() as f64)
}

fn frobenius_sq_diff(a: &GramMatrix, b: &GramMatrix) -> f64 {
    let s: CompensatedSum =
        a.0.iter()
            .zip(b.0.iter())
            .map(|(x, y)| (x - y) * (x - y))
            .collect();
    s.value()
}

/// `‖G(input) − G(style_target)‖_F²`. Spatial sizes may differ.
pub fn style_loss(input: &FeatureTensor, style_target: &FeatureTensor) -> Result<f64, LossError> {
    if input.c != style_target.c {
        return Err(LossError::ChannelMismatch(input.c, style_target.c));
    }
    Ok(frobenius_sq_diff(&gram(input), &gram(style_target)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub content: f64,
    pub style: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            content: 1.0,
            style: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub content: f64,
    /// Summed over layers.
    pub style: f64,
    pub total: f64,
}

fn check_layers(
    outputs: &[FeatureTensor],
    content_target: &FeatureTensor,
    style_targets: &[FeatureTensor],
    weights: &LossWeights,
) -> Result<(), LossError> {
    if !(weights.content >= 0.0
        && weights.style >= 0.0
        && weights.content.is_finite()
        && weights.style.is_finite())
    {
        return Err(LossError::InvalidWeights);
    }
    if outputs.is_empty() || outputs.len() != style_targets.len() {
        return Err(LossError::LayerCount {
            outputs: outputs.len(),
            targets: style_targets.len(),
        });
    }
    let last = outputs.last().expect("checked non-empty");
    if last.shape() != content_target.shape() {
        return Err(LossError::ShapeMismatch(
            last.shape(),
            content_target.shape(),
        ));
    }
    for (o, s) in outputs.iter().zip(style_targets) {
        if o.c != s.c {
            return Err(LossError::ChannelMismatch(o.c, s.c));
        }
    }
    Ok(())
}

/// `γ₁ · content(last layer) + γ₂ · Σ_layers style`. `outputs[m]` pairs with
/// `style_targets[m]`; the content target pairs with the last output.
pub fn total_loss(
    outputs: &[FeatureTensor],
    content_target: &FeatureTensor,
    style_targets: &[FeatureTensor],
    weights: LossWeights,
) -> Result<LossBreakdown, LossError> {
    check_layers(outputs, content_target, style_targets, &weights)?;
    let content = content_loss(outputs.last().expect("checked non-empty"), content_target)?;
    let style: CompensatedSum = outputs
        .iter()
        .zip(style_targets)
        .map(|(o, s)| style_loss(o, s))
        .collect::<Result<Vec<f64>, _>>()?
        .into_iter()
        .collect();
    let style = style.value();
    Ok(LossBreakdown {
        content,
        style,
        total: weights.content * content + weights.style * style,
    })
}

/// Closed-form `∂L_total / ∂outputs[m]` for every layer:
/// content `2 (out − target) / (chw)` on the last layer, style
/// `4 (G_out − G_target) ψ / (chw)` on each layer.
pub fn loss_gradients(
    outputs: &[FeatureTensor],
    content_target: &FeatureTensor,
    style_targets: &[FeatureTensor],
    weights: LossWeights,
) -> Result<Vec<FeatureTensor>, LossError> {
    check_layers(outputs, content_target, style_targets, &weights)?;
    let mut grads = Vec::with_capacity(outputs.len());
    for (m, (out, style)) in outputs.iter().zip(style_targets).enumerate() {
        let n = out.len() as f64;
        let hw = out.h * out.w;
        let mut grad = vec![0.0; out.len()];
        if weights.style != 0.0 {
            let diff = &gram(out).0 - &gram(style).0;
            let psi = DMatrix::from_row_slice(out.c, hw, &out.data);
            let g = diff * psi * (4.0 * weights.style / n);
            for c in 0..out.c {
                for k in 0..hw {
                    grad[c * hw + k] = g[(c, k)];
                }
            }
        }
        if m + 1 == outputs.len() && weights.content != 0.0 {
            let s = 2.0 * weights.content / n;
            for ((g, o), t) in grad.iter_mut().zip(&out.data).zip(&content_target.data) {
                *g += s * (o - t);
            }
        }
        grads.push(FeatureTensor {
            c: out.c,
            h: out.h,
            w: out.w,
            data: grad,
        });
    }
    Ok(grads)
}

/// Result of comparing analytic gradients with central differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradientCheck {
    /// `max |analytic − numeric| / max(max |analytic|, max |numeric|)` over all layers.
    pub max_relative_error: f64,
    pub step: f64,
    pub evaluations: usize,
}

/// Central finite differences of [`total_loss`] at every sample.
pub fn gradient_check(
    outputs: &[FeatureTensor],
    content_target: &FeatureTensor,
    style_targets: &[FeatureTensor],
    weights: LossWeights,
    step: f64,
) -> Result<GradientCheck, LossError> {
    let analytic = loss_gradients(outputs, content_target, style_targets, weights)?;
    let mut probe = outputs.to_vec();
    let (mut max_diff, mut scale) = (0.0f64, 0.0f64);
    let mut evaluations = 0;
    for m in 0..probe.len() {
        for i in 0..probe[m].len() {
            let orig = probe[m].data[i];
            probe[m].data[i] = orig + step;
            let plus = total_loss(&probe, content_target, style_targets, weights)?.total;
            probe[m].data[i] = orig - step;
            let minus = total_loss(&probe, content_target, style_targets, weights)?.total;
            probe[m].data[i] = orig;
            evaluations += 2;
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic[m].data[i];
            max_diff = max_diff.max((a - numeric).abs());
            scale = scale.max(a.abs()).max(numeric.abs());
        }
    }
    let max_relative_error = if scale > 0.0 { max_diff / scale } else { 0.0 };
    Ok(GradientCheck {
        max_relative_error,
        step,
        evaluations,
    })
}
