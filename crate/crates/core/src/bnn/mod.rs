//! Binary-activation CNN: real-valued convolution and dense weights, sign
//! activations trained through a clipped straight-through estimator, and
//! max pooling. Dithered bits enter the network as `2b - 1`.
//!
//! Output unit 0 stands for the one-vs-all target class; a prediction is
//! `true` when unit 0 has the larger logit (ties go to unit 0).

mod kernels;
mod train;

use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binarize::BitPlane;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};

pub use kernels::{ste_backward as sign_backward, ConvGeom};
pub use train::{TrainParams, TrainReport};

pub(crate) use kernels::{Activation, LayerParams};

/// `(channels, height, width)`.
pub type Shape = (usize, usize, usize);

const FORMAT: &str = "dcdl-bnn";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv {
        filters: usize,
        fh: usize,
        fw: usize,
        stride: usize,
    },
    Sign,
    MaxPool {
        ph: usize,
        pw: usize,
    },
    Dense {
        units: usize,
        dropout: f32,
        /// Row-major `units x inputs`; such a layer has zero bias and is
        /// never trained.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fixed_weights: Option<Vec<f32>>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BnnArchitecture {
    pub input: Shape,
    pub layers: Vec<LayerSpec>,
}

impl BnnArchitecture {
    /// Checks geometry and that every layer reading a plane (conv, dense)
    /// reads a binary one, so each layer has boolean inputs and outputs.
    pub fn new(input: Shape, layers: Vec<LayerSpec>) -> Result<Self> {
        let bad = |i: usize, msg: String| Err(Error::Config(format!("layer {i}: {msg}")));
        if input.0 == 0 || input.1 == 0 || input.2 == 0 {
            return Err(Error::Config(format!("empty input shape {input:?}")));
        }
        let mut shape = input;
        let mut binary = true;
        for (i, layer) in layers.iter().enumerate() {
            let (c, h, w) = shape;
            match layer {
                LayerSpec::Conv { filters, fh, fw, stride } => {
                    if *filters == 0 || *fh == 0 || *fw == 0 || *stride == 0 {
                        return bad(i, "conv sizes must be positive".into());
                    }
                    if *fh > h || *fw > w {
                        return bad(i, format!("{fh}x{fw} filter exceeds {h}x{w} input"));
                    }
                    if !binary {
                        return bad(i, "conv input must pass through a sign layer first".into());
                    }
                    shape = (*filters, (h - fh) / stride + 1, (w - fw) / stride + 1);
                    binary = false;
                }
                LayerSpec::Sign => binary = true,
                LayerSpec::MaxPool { ph, pw } => {
                    if *ph == 0 || *pw == 0 || h % ph != 0 || w % pw != 0 {
                        return bad(i, format!("{ph}x{pw} pooling does not tile {h}x{w}"));
                    }
                    shape = (c, h / ph, w / pw);
                }
                LayerSpec::Dense { units, dropout, fixed_weights } => {
                    if i + 1 != layers.len() {
                        return bad(i, "the dense layer must be last".into());
                    }
                    if *units != 2 {
                        return bad(i, format!("one-vs-all output needs 2 units, got {units}"));
                    }
                    if !binary {
                        return bad(i, "dense input must pass through a sign layer first".into());
                    }
                    if !(0.0..1.0).contains(dropout) {
                        return bad(i, format!("dropout {dropout} outside [0, 1)"));
                    }
                    if let Some(fw) = fixed_weights {
                        if fw.len() != units * c * h * w {
                            return bad(i, format!("{} fixed weights for {units}x{} inputs", fw.len(), c * h * w));
                        }
                    }
                    shape = (*units, 1, 1);
                }
            }
        }
        if !matches!(layers.last(), Some(LayerSpec::Dense { .. })) {
            return Err(Error::Config("architecture must end in a dense layer".into()));
        }
        Ok(BnnArchitecture { input, layers })
    }

    /// Conv(8, 3x3) -> Sign -> Conv(8, 3x3) -> MaxPool(2x2) -> Sign -> Dense(2, dropout 0.5).
    pub fn standard(input: Shape) -> Result<Self> {
        Self::new(
            input,
            vec![
                LayerSpec::Conv { filters: 8, fh: 3, fw: 3, stride: 1 },
                LayerSpec::Sign,
                LayerSpec::Conv { filters: 8, fh: 3, fw: 3, stride: 1 },
                LayerSpec::MaxPool { ph: 2, pw: 2 },
                LayerSpec::Sign,
                LayerSpec::Dense { units: 2, dropout: 0.5, fixed_weights: None },
            ],
        )
    }

    /// One image-sized filter whose sign is the prediction: the dense layer
    /// is fixed to weights `[1, 0]`.
    pub fn visualization(input: Shape) -> Result<Self> {
        Self::new(
            input,
            vec![
                LayerSpec::Conv { filters: 1, fh: input.1, fw: input.2, stride: 1 },
                LayerSpec::Sign,
                LayerSpec::Dense { units: 2, dropout: 0.0, fixed_weights: Some(vec![1.0, 0.0]) },
            ],
        )
    }

    /// Input shape of every layer.
    pub fn input_shapes(&self) -> Vec<Shape> {
        let mut shapes = Vec::with_capacity(self.layers.len());
        let mut shape = self.input;
        for layer in &self.layers {
            shapes.push(shape);
            shape = output_shape(layer, shape);
        }
        shapes
    }

    /// Output shape of every layer.
    pub fn output_shapes(&self) -> Vec<Shape> {
        self.input_shapes()
            .into_iter()
            .zip(&self.layers)
            .map(|(s, l)| output_shape(l, s))
            .collect()
    }
}

fn output_shape(layer: &LayerSpec, (c, h, w): Shape) -> Shape {
    match *layer {
        LayerSpec::Conv { filters, fh, fw, stride } => (filters, (h - fh) / stride + 1, (w - fw) / stride + 1),
        LayerSpec::Sign => (c, h, w),
        LayerSpec::MaxPool { ph, pw } => (c, h / ph, w / pw),
        LayerSpec::Dense { units, .. } => (units, 1, 1),
    }
}

/// Glorot-uniform weights, zero biases.
pub(crate) fn init_params<R: Rng + ?Sized>(arch: &BnnArchitecture, rng: &mut R) -> Vec<LayerParams<f32>> {
    let shapes = arch.input_shapes();
    arch.layers
        .iter()
        .zip(&shapes)
        .map(|(layer, &(c, h, w))| {
            let mut glorot = |fan_in: usize, fan_out: usize, count: usize| -> Vec<f32> {
                let limit = (6.0 / (fan_in + fan_out) as f32).sqrt();
                (0..count).map(|_| rng.random_range(-limit..limit)).collect()
            };
            match layer {
                LayerSpec::Conv { filters, fh, fw, .. } => LayerParams {
                    w: glorot(c * fh * fw, filters * fh * fw, filters * c * fh * fw),
                    b: vec![0.0; *filters],
                },
                LayerSpec::Dense { units, fixed_weights: Some(fixed), .. } => LayerParams {
                    w: fixed.clone(),
                    b: vec![0.0; *units],
                },
                LayerSpec::Dense { units, .. } => LayerParams {
                    w: glorot(c * h * w, *units, units * c * h * w),
                    b: vec![0.0; *units],
                },
                _ => LayerParams::empty(),
            }
        })
        .collect()
}

pub fn sign_forward(x: f32) -> f32 {
    Activation::Sign.apply(x)
}

/// VALID cross-correlation of a `shape` plane with `filters` filters of
/// `fh x fw` (weights `[filter][channel][row][col]`), plus one bias per
/// filter. Output is `filters x oh x ow`.
pub fn conv_forward(
    input: &[f32],
    shape: Shape,
    weights: &[f32],
    bias: &[f32],
    (filters, fh, fw, stride): (usize, usize, usize, usize),
) -> Result<Vec<f32>> {
    let (c, h, w) = shape;
    if fh == 0 || fw == 0 || stride == 0 || fh > h || fw > w {
        return Err(Error::contract(format!("{fh}x{fw} filter, stride {stride}, on a {h}x{w} plane")));
    }
    crate::error::check_dim(c * h * w, input.len())?;
    crate::error::check_dim(filters * c * fh * fw, weights.len())?;
    crate::error::check_dim(filters, bias.len())?;
    let g = ConvGeom::new(shape, filters, fh, fw, stride);
    Ok(kernels::conv_forward(input, &g, weights, bias).0)
}

/// Non-overlapping max pooling; dimensions must be divisible by the window.
pub fn maxpool_forward(input: &[f32], shape: Shape, ph: usize, pw: usize) -> Result<Vec<f32>> {
    let (c, h, w) = shape;
    if ph == 0 || pw == 0 || h % ph != 0 || w % pw != 0 {
        return Err(Error::contract(format!("{ph}x{pw} pooling does not tile {h}x{w}")));
    }
    crate::error::check_dim(c * h * w, input.len())?;
    Ok(kernels::maxpool_forward(input, shape, ph, pw).0)
}

pub(crate) fn signed_input(plane: &BitPlane) -> Vec<f32> {
    (0..plane.len())
        .map(|i| if plane.as_instance().get(i) { 1.0 } else { -1.0 })
        .collect()
}

/// `v >= 0` becomes `true`.
pub(crate) fn binarize_values(values: &[f32], (c, h, w): Shape) -> BitPlane {
    let mut plane = BitPlane::new(w, h, c);
    for (i, &v) in values.iter().enumerate() {
        if v >= 0.0 {
            let (ch, rest) = (i / (h * w), i % (h * w));
            plane.set(ch, rest / w, rest % w, true);
        }
    }
    plane
}

/// Binary intermediate results of the network on a list of images.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationTrace {
    /// Indexed by layer. Conv layers record the sign of their output at
    /// every position, sign layers their output; other layers record
    /// nothing. Each entry holds one plane per image.
    pub layers: Vec<Option<Vec<BitPlane>>>,
    pub predictions: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BnnModel {
    pub arch: BnnArchitecture,
    pub(crate) params: Vec<LayerParams<f32>>,
    pub train_params: TrainParams,
    pub seed: u64,
    pub trained: bool,
}

impl BnnModel {
    pub fn new(arch: BnnArchitecture, train_params: TrainParams, seed: u64) -> Self {
        let params = init_params(&arch, &mut rng_from_seed(derive_seed(seed, &[0])));
        BnnModel {
            arch,
            params,
            train_params,
            seed,
            trained: false,
        }
    }

    /// Replaces the weights and bias of layer `layer` (a conv or dense layer).
    pub fn set_layer_params(&mut self, layer: usize, weights: Vec<f32>, bias: Vec<f32>) -> Result<()> {
        let p = self
            .params
            .get_mut(layer)
            .ok_or_else(|| Error::contract(format!("no layer {layer}")))?;
        crate::error::check_dim(p.w.len(), weights.len())?;
        crate::error::check_dim(p.b.len(), bias.len())?;
        *p = LayerParams { w: weights, b: bias };
        Ok(())
    }

    pub fn layer_weights(&self, layer: usize) -> (&[f32], &[f32]) {
        (&self.params[layer].w, &self.params[layer].b)
    }

    fn check_input(&self, plane: &BitPlane) -> Result<()> {
        if plane.shape() != self.arch.input {
            return Err(Error::contract(format!(
                "image shape {:?} does not match network input {:?}",
                plane.shape(),
                self.arch.input
            )));
        }
        Ok(())
    }

    fn run(&self, plane: &BitPlane) -> kernels::Tape<f32> {
        kernels::forward(
            &self.arch.layers,
            &self.arch.input_shapes(),
            &self.params,
            signed_input(plane),
            Activation::Sign,
            None,
        )
    }

    pub fn logits(&self, plane: &BitPlane) -> Result<Vec<f32>> {
        self.check_input(plane)?;
        Ok(self.run(plane).output)
    }

    pub fn predict(&self, plane: &BitPlane) -> Result<bool> {
        Ok(prediction(&self.logits(plane)?))
    }

    pub fn predict_batch(&self, planes: &[BitPlane]) -> Result<Vec<bool>> {
        planes.iter().try_for_each(|p| self.check_input(p))?;
        Ok(planes.par_iter().map(|p| prediction(&self.run(p).output)).collect())
    }

    pub fn record_traces(&self, planes: &[BitPlane]) -> Result<ActivationTrace> {
        planes.iter().try_for_each(|p| self.check_input(p))?;
        let outs = self.arch.output_shapes();
        let per_image: Vec<(Vec<Option<BitPlane>>, bool)> = planes
            .par_iter()
            .map(|p| {
                let tape = self.run(p);
                let planes = (0..self.arch.layers.len())
                    .map(|i| {
                        let out = tape.inputs.get(i + 1).unwrap_or(&tape.output);
                        matches!(self.arch.layers[i], LayerSpec::Conv { .. } | LayerSpec::Sign)
                            .then(|| binarize_values(out, outs[i]))
                    })
                    .collect();
                (planes, prediction(&tape.output))
            })
            .collect();
        let mut layers: Vec<Option<Vec<BitPlane>>> = self
            .arch
            .layers
            .iter()
            .map(|l| matches!(l, LayerSpec::Conv { .. } | LayerSpec::Sign).then(Vec::new))
            .collect();
        let mut predictions = Vec::with_capacity(planes.len());
        for (image_planes, pred) in per_image {
            for (slot, plane) in layers.iter_mut().zip(image_planes) {
                if let (Some(v), Some(p)) = (slot.as_mut(), plane) {
                    v.push(p);
                }
            }
            predictions.push(pred);
        }
        Ok(ActivationTrace { layers, predictions })
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = ModelDoc {
            format: FORMAT.to_string(),
            version: VERSION,
            input: [self.arch.input.0, self.arch.input.1, self.arch.input.2],
            layers: self.arch.layers.clone(),
            params: self
                .params
                .iter()
                .map(|p| {
                    (!p.w.is_empty()).then(|| ParamBlob {
                        weights: encode_f32(&p.w),
                        bias: encode_f32(&p.b),
                    })
                })
                .collect(),
            train: self.train_params.clone(),
            seed: self.seed,
            trained: self.trained,
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDoc = serde_json::from_str(text)?;
        if doc.format != FORMAT || doc.version != VERSION {
            return Err(Error::parse(0, format!("unsupported model format {} v{}", doc.format, doc.version)));
        }
        let arch = BnnArchitecture::new((doc.input[0], doc.input[1], doc.input[2]), doc.layers)?;
        let mut model = BnnModel::new(arch, doc.train, doc.seed);
        if doc.params.len() != model.params.len() {
            return Err(Error::parse(0, "parameter list does not match the layers"));
        }
        for (i, blob) in doc.params.into_iter().enumerate() {
            match blob {
                Some(b) => model.set_layer_params(i, decode_f32(&b.weights)?, decode_f32(&b.bias)?)?,
                None if model.params[i].w.is_empty() => {}
                None => return Err(Error::parse(0, format!("layer {i} has no parameters"))),
            }
        }
        model.trained = doc.trained;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

pub(crate) fn prediction(logits: &[f32]) -> bool {
    logits[0] >= logits[1]
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    format: String,
    version: u32,
    input: [usize; 3],
    layers: Vec<LayerSpec>,
    params: Vec<Option<ParamBlob>>,
    train: TrainParams,
    seed: u64,
    trained: bool,
}

#[derive(Serialize, Deserialize)]
struct ParamBlob {
    weights: String,
    bias: String,
}

fn encode_f32(v: &[f32]) -> String {
    let bytes: Vec<u8> = v.iter().flat_map(|x| x.to_le_bytes()).collect();
    B64.encode(bytes)
}

fn decode_f32(s: &str) -> Result<Vec<f32>> {
    let bytes = B64.decode(s).map_err(|e| Error::parse(0, format!("bad weight blob: {e}")))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::parse(0, "weight blob length is not a multiple of 4"));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_planes(count: usize, shape: Shape, seed: u64) -> Vec<BitPlane> {
        let mut rng = rng_from_seed(seed);
        (0..count)
            .map(|_| {
                let bits: Vec<bool> = (0..shape.0 * shape.1 * shape.2).map(|_| rng.random_bool(0.5)).collect();
                BitPlane::from_bools(shape.2, shape.1, shape.0, &bits).unwrap()
            })
            .collect()
    }

    #[test]
    fn architecture_validation() {
        assert!(BnnArchitecture::standard((1, 28, 28)).is_ok());
        assert!(BnnArchitecture::visualization((1, 28, 28)).is_ok());
        let conv = LayerSpec::Conv { filters: 2, fh: 3, fw: 3, stride: 1 };
        let dense = LayerSpec::Dense { units: 2, dropout: 0.0, fixed_weights: None };
        // conv feeding conv without a sign in between
        assert!(BnnArchitecture::new((1, 8, 8), vec![conv.clone(), conv.clone(), LayerSpec::Sign, dense.clone()]).is_err());
        assert!(BnnArchitecture::new((1, 8, 8), vec![conv.clone(), dense.clone()]).is_err());
        assert!(BnnArchitecture::new((1, 8, 8), vec![conv.clone(), LayerSpec::Sign]).is_err());
        assert!(BnnArchitecture::new((1, 7, 7), vec![LayerSpec::MaxPool { ph: 2, pw: 2 }, dense.clone()]).is_err());
        assert!(BnnArchitecture::new((1, 2, 2), vec![conv, LayerSpec::Sign, dense]).is_err());
    }

    #[test]
    fn standard_shapes() {
        let arch = BnnArchitecture::standard((1, 28, 28)).unwrap();
        assert_eq!(
            arch.output_shapes(),
            vec![(8, 26, 26), (8, 26, 26), (8, 24, 24), (8, 12, 12), (8, 12, 12), (2, 1, 1)]
        );
    }

    #[test]
    fn unit_filter_trace_is_the_input() {
        let arch = BnnArchitecture::new(
            (1, 4, 5),
            vec![
                LayerSpec::Conv { filters: 1, fh: 1, fw: 1, stride: 1 },
                LayerSpec::Sign,
                LayerSpec::Dense { units: 2, dropout: 0.0, fixed_weights: None },
            ],
        )
        .unwrap();
        let mut model = BnnModel::new(arch, TrainParams::default(), 0);
        model.set_layer_params(0, vec![1.0], vec![0.0]).unwrap();
        let planes = random_planes(3, (1, 4, 5), 2);
        let trace = model.record_traces(&planes).unwrap();
        assert_eq!(trace.layers[1].as_ref().unwrap(), &planes);
        assert_eq!(trace.layers[0].as_ref().unwrap(), &planes);
        assert!(trace.layers[2].is_none());
        assert_eq!(model.record_traces(&planes).unwrap(), trace);
    }

    #[test]
    fn trace_shapes_follow_architecture() {
        let arch = BnnArchitecture::standard((1, 10, 10)).unwrap();
        let model = BnnModel::new(arch.clone(), TrainParams::default(), 4);
        let trace = model.record_traces(&random_planes(2, (1, 10, 10), 1)).unwrap();
        for ((layer, entry), shape) in arch.layers.iter().zip(&trace.layers).zip(arch.output_shapes()) {
            match entry {
                Some(planes) => planes.iter().for_each(|p| assert_eq!(p.shape(), shape)),
                None => assert!(!matches!(layer, LayerSpec::Conv { .. } | LayerSpec::Sign)),
            }
        }
        assert_eq!(trace.predictions.len(), 2);
    }

    #[test]
    fn visualization_network_predicts_filter_sign() {
        let arch = BnnArchitecture::visualization((1, 3, 3)).unwrap();
        let model = BnnModel::new(arch, TrainParams::default(), 9);
        for plane in random_planes(20, (1, 3, 3), 3) {
            let trace = model.record_traces(std::slice::from_ref(&plane)).unwrap();
            let fired = trace.layers[1].as_ref().unwrap()[0].get(0, 0, 0);
            assert_eq!(model.predict(&plane).unwrap(), fired);
        }
    }

    #[test]
    fn public_kernels_check_geometry() {
        assert_eq!(conv_forward(&[1.0; 9], (1, 3, 3), &[1.0; 9], &[0.0], (1, 3, 3, 1)).unwrap(), vec![9.0]);
        assert!(conv_forward(&[1.0; 4], (1, 2, 2), &[1.0; 9], &[0.0], (1, 3, 3, 1)).is_err());
        assert!(maxpool_forward(&[1.0; 9], (1, 3, 3), 2, 2).is_err());
        assert_eq!(sign_forward(0.0), 1.0);
        assert_eq!(sign_backward(0.7f32, -1.0), 0.7);
    }

    #[test]
    fn json_round_trip() {
        let arch = BnnArchitecture::standard((1, 10, 10)).unwrap();
        let model = BnnModel::new(arch, TrainParams::default(), 12);
        let back = BnnModel::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(back, model);
        let vis = BnnModel::new(BnnArchitecture::visualization((1, 4, 4)).unwrap(), TrainParams::default(), 1);
        assert_eq!(BnnModel::from_json(&vis.to_json().unwrap()).unwrap(), vis);
        assert!(BnnModel::from_json("{}").is_err());
    }
}
