use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::layers::{
    conv_relu_backward, conv_relu_forward, l2_normalize, l2_normalize_backward, linear_backward,
    linear_forward, relu, relu_mask, sigmoid, softplus, ConvGeom,
};
use super::Real;
use crate::color_math::{PixelRect, RawImage};
use crate::error::{Error, Result};
use crate::scene_synth::stream_rng;

/// Layer widths. The defaults are the desk-scale network; the projection
/// head width can be raised to 512 to match larger setups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub input_size: usize,
    pub conv_channels: Vec<usize>,
    pub proj_hidden: usize,
    pub proj_dim: usize,
}

impl Default for ModelShape {
    fn default() -> Self {
        Self {
            input_size: 64,
            conv_channels: vec![16, 32, 64, 64],
            proj_hidden: 64,
            proj_dim: 64,
        }
    }
}

impl ModelShape {
    pub fn feature_dim(&self) -> usize {
        *self.conv_channels.last().unwrap_or(&3)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0
            || self.conv_channels.is_empty()
            || self.conv_channels.contains(&0)
            || self.proj_hidden == 0
            || self.proj_dim == 0
        {
            return Err(Error::domain("model widths must be positive"));
        }
        Ok(())
    }

    fn geoms(&self) -> Vec<ConvGeom> {
        let mut out = Vec::with_capacity(self.conv_channels.len());
        let (mut cin, mut h) = (3, self.input_size);
        for &cout in &self.conv_channels {
            let g = ConvGeom { cin, cout, h, w: h };
            h = g.ho();
            cin = cout;
            out.push(g);
        }
        out
    }

    fn tensor_specs(&self) -> Vec<TensorSpec> {
        let mut specs = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, dims: Vec<usize>, decay: bool| {
            let len = dims.iter().product::<usize>();
            specs.push(TensorSpec { name, dims, offset, decay });
            offset += len;
        };
        let mut cin = 3;
        for (i, &cout) in self.conv_channels.iter().enumerate() {
            push(format!("conv{i}.weight"), vec![cout, cin, 3, 3], true);
            push(format!("conv{i}.bias"), vec![cout], false);
            cin = cout;
        }
        let f = self.feature_dim();
        push("illum.weight".into(), vec![3, f], true);
        push("illum.bias".into(), vec![3], false);
        let dims = [f, self.proj_hidden, self.proj_hidden, self.proj_dim];
        for j in 0..3 {
            push(format!("proj{j}.weight"), vec![dims[j + 1], dims[j]], true);
            push(format!("proj{j}.bias"), vec![dims[j + 1]], false);
        }
        specs
    }
}

/// Placement of one named tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub dims: Vec<usize>,
    pub offset: usize,
    /// Whether L2 weight decay applies (weights yes, biases no).
    pub decay: bool,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// All trainable tensors stored in one flat vector.
///
/// `version` changes on every update so caches from an older forward pass
/// are rejected by [`backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    shape: ModelShape,
    specs: Vec<TensorSpec>,
    data: Vec<T>,
    version: u64,
}

impl<T: Real> ModelParams<T> {
    /// He-normal weights, zero biases.
    pub fn init(shape: ModelShape, seed: u64) -> Result<Self> {
        shape.validate()?;
        let specs = shape.tensor_specs();
        let total = specs.last().map_or(0, |s| s.offset + s.len());
        let mut data = vec![T::zero(); total];
        let mut rng = stream_rng(seed, 0x5eed);
        for spec in specs.iter().filter(|s| s.decay) {
            let fan_in: usize = spec.dims[1..].iter().product();
            let relu_follows = !(spec.name.starts_with("illum") || spec.name == "proj2.weight");
            let gain = if relu_follows { 2.0 } else { 1.0 };
            let std = (gain / fan_in as f64).sqrt();
            for v in &mut data[spec.range()] {
                let e: f64 = rng.sample(StandardNormal);
                *v = T::of(std * e);
            }
        }
        Ok(Self { shape, specs, data, version: 0 })
    }

    pub fn from_flat(shape: ModelShape, data: Vec<T>) -> Result<Self> {
        shape.validate()?;
        let specs = shape.tensor_specs();
        let total = specs.last().map_or(0, |s| s.offset + s.len());
        if data.len() != total {
            return Err(Error::domain(format!(
                "parameter vector has {} values, shape needs {total}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("parameters must be finite"));
        }
        Ok(Self { shape, specs, data, version: 0 })
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            shape: self.shape.clone(),
            specs: self.specs.clone(),
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
            version: self.version,
        }
    }

    pub fn shape(&self) -> &ModelShape {
        &self.shape
    }

    pub fn specs(&self) -> &[TensorSpec] {
        &self.specs
    }

    pub fn flat(&self) -> &[T] {
        &self.data
    }

    /// Mutable access bumps the version.
    pub fn flat_mut(&mut self) -> &mut [T] {
        self.version += 1;
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn tensor(&self, i: usize) -> &[T] {
        &self.data[self.specs[i].range()]
    }

    fn conv_index(&self, layer: usize) -> usize {
        2 * layer
    }

    fn illum_index(&self) -> usize {
        2 * self.shape.conv_channels.len()
    }

    fn proj_index(&self, j: usize) -> usize {
        self.illum_index() + 2 + 2 * j
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `½·Σ w²` over decayed tensors.
    pub fn decay_penalty(&self) -> f64 {
        self.specs
            .iter()
            .filter(|s| s.decay)
            .flat_map(|s| self.data[s.range()].iter())
            .map(|v| 0.5 * v.as_f64() * v.as_f64())
            .sum()
    }

    /// Adds `wd·w` to the gradient of every decayed tensor.
    pub fn add_weight_decay(&self, grads: &mut [T], weight_decay: f64) {
        let wd = T::of(weight_decay);
        for spec in self.specs.iter().filter(|s| s.decay) {
            for i in spec.range() {
                grads[i] = grads[i] + wd * self.data[i];
            }
        }
    }
}

/// Channel-major (`3 × h × w`) network input.
#[derive(Debug, Clone, PartialEq)]
pub struct InputTensor<T> {
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Real> InputTensor<T> {
    /// Square crop with top-left corner `(x, y)`.
    pub fn crop(&self, x: usize, y: usize, size: usize) -> Result<Self> {
        if x + size > self.width || y + size > self.height {
            return Err(Error::domain("crop exceeds the input"));
        }
        let mut data = Vec::with_capacity(3 * size * size);
        for c in 0..3 {
            for row in y..y + size {
                let start = c * self.height * self.width + row * self.width + x;
                data.extend_from_slice(&self.data[start..start + size]);
            }
        }
        Ok(Self { height: size, width: size, data })
    }

    pub fn center_crop(&self, size: usize) -> Result<Self> {
        if self.height == size && self.width == size {
            return Ok(self.clone());
        }
        self.crop(
            self.width.saturating_sub(size) / 2,
            self.height.saturating_sub(size) / 2,
            size,
        )
    }
}

/// Converts an image to channel-major layout, zeroing the `mask` region.
pub fn prepare_input<T: Real>(img: &RawImage, mask: Option<&PixelRect>) -> InputTensor<T> {
    let (w, h) = (img.width(), img.height());
    let mut data = vec![T::zero(); 3 * w * h];
    for y in 0..h {
        for x in 0..w {
            if mask.is_some_and(|m| m.contains(x, y)) {
                continue;
            }
            let p = img.pixel(x, y);
            for c in 0..3 {
                data[c * w * h + y * w + x] = T::of(p[c]);
            }
        }
    }
    InputTensor { height: h, width: w, data }
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    version: u64,
    geoms: Vec<ConvGeom>,
    conv: Vec<(Vec<T>, Vec<T>)>,
    features: Vec<T>,
    dropped: Vec<T>,
    dropout_mask: Option<Vec<T>>,
    logits: [T; 3],
    positive: [T; 3],
    positive_norm: T,
    estimate: [T; 3],
    proj_hidden: [Vec<T>; 2],
    proj_norm: T,
    projection: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput<T> {
    pub features: Vec<T>,
    /// Unit-norm, strictly positive illuminant direction.
    pub estimate: [T; 3],
    /// Unit-norm projection for the contrastive loss.
    pub projection: Vec<T>,
    pub cache: ForwardCache<T>,
}

/// Upstream gradients for the two heads; `None` means zero.
#[derive(Debug, Clone, Default)]
pub struct HeadGrads<T> {
    pub d_estimate: Option<[T; 3]>,
    pub d_projection: Option<Vec<T>>,
}

/// Runs the backbone and both heads. `dropout_mask` (already scaled by the
/// inverse keep probability) multiplies the features entering the
/// illuminant head; `None` disables dropout.
pub fn forward<T: Real>(
    params: &ModelParams<T>,
    input: &InputTensor<T>,
    dropout_mask: Option<&[T]>,
) -> Result<ForwardOutput<T>> {
    let shape = &params.shape;
    if input.height != shape.input_size || input.width != shape.input_size {
        return Err(Error::domain(format!(
            "input is {}x{}, model expects {}x{}",
            input.width, input.height, shape.input_size, shape.input_size
        )));
    }
    let f = shape.feature_dim();
    if dropout_mask.is_some_and(|m| m.len() != f) {
        return Err(Error::domain("dropout mask has the wrong length"));
    }

    let geoms = shape.geoms();
    let mut conv = Vec::with_capacity(geoms.len());
    for (l, g) in geoms.iter().enumerate() {
        let prev: &[T] = if l == 0 { &input.data } else { &conv.last().map(|c: &(Vec<T>, Vec<T>)| &c.1).unwrap()[..] };
        let (w, b) = (params.tensor(params.conv_index(l)), params.tensor(params.conv_index(l) + 1));
        conv.push(conv_relu_forward(prev, g, w, b));
    }

    let last = &conv.last().expect("at least one conv layer").1;
    let positions = geoms.last().unwrap().positions();
    let inv_p = T::of(1.0 / positions as f64);
    let features: Vec<T> = last
        .chunks_exact(positions)
        .map(|ch| ch.iter().copied().sum::<T>() * inv_p)
        .collect();

    let dropped: Vec<T> = match dropout_mask {
        Some(m) => features.iter().zip(m).map(|(a, b)| *a * *b).collect(),
        None => features.clone(),
    };
    let ii = params.illum_index();
    let a = linear_forward(&dropped, params.tensor(ii), params.tensor(ii + 1), 3);
    let logits = [a[0], a[1], a[2]];
    let positive = logits.map(softplus);
    let (est, positive_norm) = l2_normalize(&positive);
    let estimate = [est[0], est[1], est[2]];

    let mut h1 = linear_forward(&features, params.tensor(params.proj_index(0)), params.tensor(params.proj_index(0) + 1), shape.proj_hidden);
    relu(&mut h1);
    let mut h2 = linear_forward(&h1, params.tensor(params.proj_index(1)), params.tensor(params.proj_index(1) + 1), shape.proj_hidden);
    relu(&mut h2);
    let p3 = linear_forward(&h2, params.tensor(params.proj_index(2)), params.tensor(params.proj_index(2) + 1), shape.proj_dim);
    let (projection, proj_norm) = l2_normalize(&p3);

    Ok(ForwardOutput {
        features: features.clone(),
        estimate,
        projection: projection.clone(),
        cache: ForwardCache {
            version: params.version,
            geoms,
            conv,
            features,
            dropped,
            dropout_mask: dropout_mask.map(<[T]>::to_vec),
            logits,
            positive,
            positive_norm,
            estimate,
            proj_hidden: [h1, h2],
            proj_norm,
            projection,
        },
    })
}

/// Forward pass that samples a dropout mask from `rng` when `train_mode` is on.
pub fn forward_with_rng<T: Real>(
    params: &ModelParams<T>,
    input: &InputTensor<T>,
    train_mode: bool,
    dropout: f64,
    rng: &mut impl Rng,
) -> Result<ForwardOutput<T>> {
    if train_mode && dropout > 0.0 {
        let keep = 1.0 - dropout;
        let mask: Vec<T> = (0..params.shape.feature_dim())
            .map(|_| if rng.random_bool(keep) { T::of(1.0 / keep) } else { T::zero() })
            .collect();
        forward(params, input, Some(&mask))
    } else {
        forward(params, input, None)
    }
}

/// Accumulates parameter gradients for one forward pass into `grads`
/// (no weight decay).
pub fn backward_into<T: Real>(
    params: &ModelParams<T>,
    cache: &ForwardCache<T>,
    head: &HeadGrads<T>,
    grads: &mut [T],
) -> Result<()> {
    if cache.version != params.version {
        return Err(Error::domain(format!(
            "stale forward cache (version {} vs parameters {})",
            cache.version, params.version
        )));
    }
    if grads.len() != params.data.len() {
        return Err(Error::domain("gradient buffer has the wrong length"));
    }
    let shape = &params.shape;
    let f = shape.feature_dim();
    let mut d_features = vec![T::zero(); f];

    if let Some(d_est) = head.d_estimate {
        let d_pos = l2_normalize_backward(&cache.estimate, cache.positive_norm, &d_est);
        let d_logits: Vec<T> = d_pos.iter().zip(&cache.logits).map(|(g, a)| *g * sigmoid(*a)).collect();
        let _ = &cache.positive;
        let ii = params.illum_index();
        let (w_range, b_range) = (params.specs[ii].range(), params.specs[ii + 1].range());
        let (dw, db) = split_two(grads, w_range, b_range);
        let d_dropped = linear_backward(&cache.dropped, params.tensor(ii), &d_logits, dw, db);
        match &cache.dropout_mask {
            Some(m) => {
                for i in 0..f {
                    d_features[i] = d_features[i] + d_dropped[i] * m[i];
                }
            }
            None => {
                for i in 0..f {
                    d_features[i] = d_features[i] + d_dropped[i];
                }
            }
        }
    }

    if let Some(d_z) = &head.d_projection {
        if d_z.len() != shape.proj_dim {
            return Err(Error::domain("projection gradient has the wrong length"));
        }
        let mut d = l2_normalize_backward(&cache.projection, cache.proj_norm, d_z);
        let inputs: [&[T]; 3] = [&cache.features, &cache.proj_hidden[0], &cache.proj_hidden[1]];
        for j in (0..3).rev() {
            let pj = params.proj_index(j);
            let (w_range, b_range) = (params.specs[pj].range(), params.specs[pj + 1].range());
            let (dw, db) = split_two(grads, w_range, b_range);
            let mut d_in = linear_backward(inputs[j], params.tensor(pj), &d, dw, db);
            if j > 0 {
                relu_mask(&mut d_in, &cache.proj_hidden[j - 1]);
            }
            d = d_in;
        }
        for i in 0..f {
            d_features[i] = d_features[i] + d[i];
        }
    }

    if d_features.iter().all(|g| *g == T::zero()) {
        return Ok(());
    }

    let n_layers = cache.geoms.len();
    let positions = cache.geoms[n_layers - 1].positions();
    let inv_p = T::of(1.0 / positions as f64);
    let mut d_out: Vec<T> = d_features
        .iter()
        .flat_map(|g| std::iter::repeat_n(*g * inv_p, positions))
        .collect();

    for l in (0..n_layers).rev() {
        let g = &cache.geoms[l];
        let (cols, out) = &cache.conv[l];
        let ci = params.conv_index(l);
        let (w_range, b_range) = (params.specs[ci].range(), params.specs[ci + 1].range());
        let weight = params.tensor(ci);
        let (dw, db) = split_two(grads, w_range, b_range);
        if l > 0 {
            let mut d_in = vec![T::zero(); g.cin * g.h * g.w];
            conv_relu_backward(g, cols, out, weight, &mut d_out, dw, db, Some(&mut d_in));
            d_out = d_in;
        } else {
            conv_relu_backward(g, cols, out, weight, &mut d_out, dw, db, None);
        }
    }
    Ok(())
}

/// Parameter gradients for one forward pass, including `wd·w` decay terms.
pub fn backward<T: Real>(
    params: &ModelParams<T>,
    cache: &ForwardCache<T>,
    head: &HeadGrads<T>,
    weight_decay: f64,
) -> Result<Vec<T>> {
    let mut grads = vec![T::zero(); params.data.len()];
    backward_into(params, cache, head, &mut grads)?;
    params.add_weight_decay(&mut grads, weight_decay);
    Ok(grads)
}

/// Disjoint mutable views of a weight range followed by its bias range.
fn split_two<T>(
    buf: &mut [T],
    first: std::ops::Range<usize>,
    second: std::ops::Range<usize>,
) -> (&mut [T], &mut [T]) {
    debug_assert_eq!(first.end, second.start);
    let (head, tail) = buf[first.start..second.end].split_at_mut(first.len());
    (head, tail)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::loss::illuminant_loss;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_shape() -> ModelShape {
        ModelShape {
            input_size: 12,
            conv_channels: vec![4, 5, 6],
            proj_hidden: 7,
            proj_dim: 5,
        }
    }

    fn random_input(rng: &mut ChaCha8Rng, size: usize) -> InputTensor<f64> {
        InputTensor {
            height: size,
            width: size,
            data: (0..3 * size * size).map(|_| rng.random_range(0.0..1.0)).collect(),
        }
    }

    #[test]
    fn outputs_are_unit_norm_and_positive() {
        let params = ModelParams::<f32>::init(ModelShape::default(), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let input = InputTensor {
                height: 64,
                width: 64,
                data: (0..3 * 64 * 64).map(|_| rng.random_range(0.0f32..1.0)).collect(),
            };
            let out = forward(&params, &input, None).unwrap();
            let n: f64 = out.estimate.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-6);
            assert!(out.estimate.iter().all(|v| *v > 0.0));
            let n: f64 = out.projection.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn forward_without_dropout_is_deterministic() {
        let params = ModelParams::<f32>::init(ModelShape::default(), 9).unwrap();
        let input = prepare_input::<f32>(&RawImage::from_fn(64, 64, |x, y| [x as f64 / 64.0, y as f64 / 64.0, 0.5]).unwrap(), None);
        let a = forward(&params, &input, None).unwrap();
        let b = forward(&params, &input, None).unwrap();
        assert_eq!(a.estimate, b.estimate);
        assert_eq!(a.projection, b.projection);
    }

    #[test]
    fn forward_rejects_wrong_size() {
        let params = ModelParams::<f32>::init(ModelShape::default(), 9).unwrap();
        let input = prepare_input::<f32>(&RawImage::uniform(32, 32, [0.5; 3]).unwrap(), None);
        assert!(matches!(forward(&params, &input, None), Err(Error::Domain(_))));
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut params = ModelParams::<f64>::init(tiny_shape(), 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let out = forward(&params, &random_input(&mut rng, 12), None).unwrap();
        params.flat_mut()[0] += 0.1;
        let head = HeadGrads { d_estimate: Some([1.0, 0.0, 0.0]), d_projection: None };
        assert!(backward(&params, &out.cache, &head, 0.0).is_err());
    }

    #[test]
    fn zero_upstream_leaves_only_weight_decay() {
        let params = ModelParams::<f64>::init(tiny_shape(), 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = forward(&params, &random_input(&mut rng, 12), None).unwrap();
        let head = HeadGrads { d_estimate: Some([0.0; 3]), d_projection: Some(vec![0.0; 5]) };
        let wd = 0.000057;
        let grads = backward(&params, &out.cache, &head, wd).unwrap();
        for spec in params.specs() {
            for i in spec.range() {
                let expect = if spec.decay { wd * params.flat()[i] } else { 0.0 };
                assert_eq!(grads[i], expect);
            }
        }
    }

    #[test]
    fn gradients_deterministic_with_fixed_mask() {
        let params = ModelParams::<f32>::init(ModelShape::default(), 5).unwrap();
        let input = prepare_input::<f32>(&RawImage::from_fn(64, 64, |x, y| [(x * y % 7) as f64 / 7.0, 0.3, 0.6]).unwrap(), None);
        let mask: Vec<f32> = (0..64).map(|i| if i % 3 == 0 { 0.0 } else { 2.0 }).collect();
        let head = HeadGrads { d_estimate: Some([0.3, -0.2, 0.1]), d_projection: Some(vec![0.01; 64]) };
        let g1 = backward(&params, &forward(&params, &input, Some(&mask)).unwrap().cache, &head, 1e-4).unwrap();
        let g2 = backward(&params, &forward(&params, &input, Some(&mask)).unwrap().cache, &head, 1e-4).unwrap();
        assert_eq!(g1, g2);
    }

    /// Total loss on a micro-batch: angular loss on two images plus a
    /// linear probe on the projection of a third, plus the decay penalty.
    fn micro_batch_loss(params: &ModelParams<f64>, inputs: &[InputTensor<f64>], mask: &[f64], probe: &[f64], gt: [[f64; 3]; 2], wd: f64) -> f64 {
        let mut total = wd * params.decay_penalty();
        for (k, input) in inputs[..2].iter().enumerate() {
            let out = forward(params, input, Some(mask)).unwrap();
            total += illuminant_loss(&out.estimate, &gt[k]).unwrap().0;
        }
        let out = forward(params, &inputs[2], None).unwrap();
        total += out.projection.iter().zip(probe).map(|(a, b)| a * b).sum::<f64>();
        total
    }

    #[test]
    fn every_parameter_matches_finite_differences() {
        let shape = tiny_shape();
        let mut params = ModelParams::<f64>::init(shape.clone(), 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let inputs: Vec<_> = (0..3).map(|_| random_input(&mut rng, 12)).collect();
        let mask: Vec<f64> = (0..6).map(|i| if i == 2 { 0.0 } else { 2.0 }).collect();
        let probe: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let gt = [[0.6, 0.7, 0.3], [0.2, 0.5, 0.9]];
        let wd = 0.01;

        let mut grads = vec![0.0; params.len()];
        for (k, input) in inputs[..2].iter().enumerate() {
            let out = forward(&params, input, Some(&mask)).unwrap();
            let (_, d_est) = illuminant_loss(&out.estimate, &gt[k]).unwrap();
            backward_into(&params, &out.cache, &HeadGrads { d_estimate: Some(d_est), d_projection: None }, &mut grads).unwrap();
        }
        let out = forward(&params, &inputs[2], None).unwrap();
        backward_into(&params, &out.cache, &HeadGrads { d_estimate: None, d_projection: Some(probe.clone()) }, &mut grads).unwrap();
        params.add_weight_decay(&mut grads, wd);

        let h = 1e-6;
        let mut worst = 0.0f64;
        for i in 0..params.len() {
            let orig = params.flat()[i];
            params.flat_mut()[i] = orig + h;
            let up = micro_batch_loss(&params, &inputs, &mask, &probe, gt, wd);
            params.flat_mut()[i] = orig - h;
            let dn = micro_batch_loss(&params, &inputs, &mask, &probe, gt, wd);
            params.flat_mut()[i] = orig;
            let fd = (up - dn) / (2.0 * h);
            let rel = (fd - grads[i]).abs() / fd.abs().max(grads[i].abs()).max(1e-6);
            worst = worst.max(rel);
        }
        assert!(worst < 1e-3, "worst relative error {worst}");
    }
}
