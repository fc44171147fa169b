//! Decompositional extraction (one rule per convolutional filter, OR for
//! max pooling, one formula for the dense output) and the black-box
//! baseline that maps whole images to labels directly.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index;
use rayon::prelude::*;

use crate::binarize::BitPlane;
use crate::bnn::{BnnModel, LayerSpec, Shape};
use crate::boolcore::{words_for, BitDataset, DnfFormula};
use crate::convrules::{eval_conv_layer, window_into, ConvRule};
use crate::error::{check_dim, Error, Result};
use crate::rng::{derive_seed, rng_from_seed};
use crate::sls::{sls_search, SlsParams, SlsResult};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LayerApprox {
    /// One rule per filter; output channel `i` is rule `i`.
    Conv(Vec<ConvRule>),
    Pool { ph: usize, pw: usize },
    /// Formula over the flattened input plane.
    Dense(DnfFormula),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DcdlModel {
    pub input: Shape,
    pub layers: Vec<LayerApprox>,
}

fn layer_output(layer: &LayerApprox, (c, h, w): Shape) -> Result<Shape> {
    match layer {
        LayerApprox::Conv(rules) => {
            let first = rules.first().ok_or_else(|| Error::contract("conv layer without rules"))?;
            if rules.iter().any(|r| (r.fh, r.fw, r.fc, r.stride) != (first.fh, first.fw, first.fc, first.stride)) {
                return Err(Error::contract("rules of one layer must share their geometry"));
            }
            let (oh, ow) = first.output_size((c, h, w))?;
            Ok((rules.len(), oh, ow))
        }
        LayerApprox::Pool { ph, pw } => {
            if *ph == 0 || *pw == 0 || h % ph != 0 || w % pw != 0 {
                return Err(Error::contract(format!("{ph}x{pw} pooling does not tile {h}x{w}")));
            }
            Ok((c, h / ph, w / pw))
        }
        LayerApprox::Dense(f) => {
            check_dim(c * h * w, f.n())?;
            Ok((1, 1, 1))
        }
    }
}

impl DcdlModel {
    /// Checks that each layer's output shape is the next layer's input and
    /// that the model ends in exactly one dense formula.
    pub fn new(input: Shape, layers: Vec<LayerApprox>) -> Result<Self> {
        let mut shape = input;
        for (i, layer) in layers.iter().enumerate() {
            if matches!(layer, LayerApprox::Dense(_)) != (i + 1 == layers.len()) {
                return Err(Error::contract("exactly the last layer must be dense"));
            }
            shape = layer_output(layer, shape)?;
        }
        if layers.is_empty() {
            return Err(Error::contract("empty rule model"));
        }
        Ok(DcdlModel { input, layers })
    }

    /// Output of every layer on one image; the last is the 1x1x1 label.
    pub fn forward(&self, plane: &BitPlane) -> Result<Vec<BitPlane>> {
        if plane.shape() != self.input {
            return Err(Error::contract(format!(
                "image shape {:?} does not match rule model input {:?}",
                plane.shape(),
                self.input
            )));
        }
        let mut outs: Vec<BitPlane> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let cur = outs.last().unwrap_or(plane);
            let next = match layer {
                LayerApprox::Conv(rules) => eval_conv_layer(rules, cur)?,
                LayerApprox::Pool { ph, pw } => or_pool(cur, *ph, *pw)?,
                LayerApprox::Dense(f) => {
                    let mut out = BitPlane::new(1, 1, 1);
                    out.set(0, 0, 0, f.eval(cur.as_instance())?);
                    out
                }
            };
            outs.push(next);
        }
        Ok(outs)
    }

    pub fn predict(&self, plane: &BitPlane) -> Result<bool> {
        let outs = self.forward(plane)?;
        Ok(outs.last().expect("non-empty model").get(0, 0, 0))
    }

    pub fn predict_batch(&self, planes: &[BitPlane]) -> Result<Vec<bool>> {
        planes.par_iter().map(|p| self.predict(p)).collect()
    }

    pub fn conv_rules(&self) -> impl Iterator<Item = (usize, &[ConvRule])> {
        self.layers.iter().enumerate().filter_map(|(i, l)| match l {
            LayerApprox::Conv(r) => Some((i, r.as_slice())),
            _ => None,
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let (c, h, w) = self.input;
        let _ = writeln!(s, "dcdl 1");
        let _ = writeln!(s, "input {c} {h} {w}");
        for layer in &self.layers {
            match layer {
                LayerApprox::Conv(rules) => {
                    let _ = writeln!(s, "layer conv {}", rules.len());
                    for r in rules {
                        s.push_str(&r.to_string());
                    }
                }
                LayerApprox::Pool { ph, pw } => {
                    let _ = writeln!(s, "layer pool {ph} {pw}");
                }
                LayerApprox::Dense(f) => {
                    let _ = writeln!(s, "layer dense {}", f.n());
                    let _ = writeln!(s, "{f}");
                }
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
        let mut next = |what: &str| lines.next().ok_or_else(|| Error::parse(0, format!("unexpected end, expected {what}")));
        let nums = |line: usize, parts: &[&str]| -> Result<Vec<usize>> {
            parts
                .iter()
                .map(|p| p.parse().map_err(|_| Error::parse(line, format!("bad number `{p}`"))))
                .collect()
        };
        let (ln, head) = next("header")?;
        if head != "dcdl 1" {
            return Err(Error::parse(ln, format!("expected `dcdl 1`, got `{head}`")));
        }
        let (ln, inp) = next("input line")?;
        let parts: Vec<&str> = inp.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "input" {
            return Err(Error::parse(ln, "expected `input c h w`"));
        }
        let dims = nums(ln, &parts[1..])?;
        let mut layers = Vec::new();
        while let Ok((ln, line)) = next("layer") {
            let parts: Vec<&str> = line.split_whitespace().collect();
            match parts.as_slice() {
                ["layer", "conv", count] => {
                    let count = nums(ln, &[count])?[0];
                    let mut rules = Vec::with_capacity(count);
                    for _ in 0..count {
                        let (hl, header) = next("rule header")?;
                        let (fl, formula) = next("rule formula")?;
                        let rule = ConvRule::parse(&format!("{header}\n{formula}\n")).map_err(|e| match e {
                            Error::Parse { line, message } => Error::parse(if line <= 1 { hl } else { fl }, message),
                            other => other,
                        })?;
                        rules.push(rule);
                    }
                    layers.push(LayerApprox::Conv(rules));
                }
                ["layer", "pool", ph, pw] => {
                    let v = nums(ln, &[ph, pw])?;
                    layers.push(LayerApprox::Pool { ph: v[0], pw: v[1] });
                }
                ["layer", "dense", n] => {
                    let n = nums(ln, &[n])?[0];
                    let (fl, formula) = next("dense formula")?;
                    let f = DnfFormula::parse(formula, n).map_err(|e| match e {
                        Error::Parse { message, .. } => Error::parse(fl, message),
                        other => other,
                    })?;
                    layers.push(LayerApprox::Dense(f));
                }
                _ => return Err(Error::parse(ln, format!("unknown layer line `{line}`"))),
            }
        }
        DcdlModel::new((dims[0], dims[1], dims[2]), layers)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

/// OR over non-overlapping `ph x pw` windows, per channel.
pub fn or_pool(plane: &BitPlane, ph: usize, pw: usize) -> Result<BitPlane> {
    let (c, h, w) = plane.shape();
    if ph == 0 || pw == 0 || h % ph != 0 || w % pw != 0 {
        return Err(Error::contract(format!("{ph}x{pw} pooling does not tile {h}x{w}")));
    }
    let (oh, ow) = (h / ph, w / pw);
    let mut out = BitPlane::new(ow, oh, c);
    for ch in 0..c {
        for r in 0..h {
            for q in 0..w {
                if plane.get(ch, r, q) {
                    out.set(ch, r / ph, q / pw, true);
                }
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExtractionParams {
    pub sls: SlsParams,
    /// Cap on training windows per convolutional layer; larger pools are
    /// subsampled uniformly.
    pub max_windows: usize,
    /// Cap on validation windows per convolutional layer.
    pub max_validation_windows: usize,
}

impl Default for ExtractionParams {
    fn default() -> Self {
        ExtractionParams {
            sls: SlsParams::default(),
            max_windows: 200_000,
            max_validation_windows: 50_000,
        }
    }
}

/// Fit of one extracted formula.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterFit {
    pub layer: usize,
    /// Filter index; 0 for the dense layer.
    pub filter: usize,
    pub train_windows: usize,
    pub train_score: usize,
    pub validation_score: usize,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DcdlExtraction {
    pub model: DcdlModel,
    pub fits: Vec<FilterFit>,
}

/// `(image, position)` pairs of a window sample, sorted.
fn sample_positions(images: usize, positions: usize, cap: usize, seed: u64) -> Vec<(usize, usize)> {
    let total = images * positions;
    let flat: Vec<usize> = if total <= cap {
        (0..total).collect()
    } else {
        let mut v = index::sample(&mut rng_from_seed(seed), total, cap).into_vec();
        v.sort_unstable();
        v
    };
    flat.into_iter().map(|t| (t / positions, t % positions)).collect()
}

fn window_dataset(planes: &[BitPlane], picks: &[(usize, usize)], fh: usize, fw: usize, stride: usize, ow: usize) -> BitDataset {
    let n = planes.first().map_or(1, |p| p.shape().0 * fh * fw);
    let mut data = BitDataset::with_capacity(n, picks.len());
    let mut buf = vec![0u64; words_for(n)];
    for &(img, pos) in picks {
        window_into(&planes[img], pos / ow, pos % ow, fh, fw, stride, &mut buf);
        data.push_words(&buf, false);
    }
    data
}

fn fit(layer: usize, filter: usize, train: &BitDataset, res: &SlsResult) -> Result<FilterFit> {
    Ok(FilterFit {
        layer,
        filter,
        train_windows: train.len(),
        train_score: crate::boolcore::score(&res.formula, train)?,
        validation_score: res.best_validation_score,
        iterations: res.iterations_used,
    })
}

/// Extracts one rule per filter, layer by layer. Each conv rule learns the
/// sign of its filter's output from windows of the previous
/// approximation's output (the dithered images for the first layer);
/// holdout windows serve as the validation set. Pooling becomes OR and
/// the dense layer a formula predicting the network's label.
///
/// Every search gets its own seed derived from `(layer, filter)`, so the
/// result does not depend on the order in which filters are processed.
pub fn dcdl_train(
    model: &BnnModel,
    train: &[BitPlane],
    holdout: &[BitPlane],
    params: &ExtractionParams,
) -> Result<DcdlExtraction> {
    if !model.trained {
        return Err(Error::contract("rule extraction needs a trained network"));
    }
    if train.is_empty() {
        return Err(Error::contract("no training images"));
    }
    params.sls.validate()?;
    let train_trace = model.record_traces(train)?;
    let hold_trace = model.record_traces(holdout)?;
    let shapes = model.arch.output_shapes();
    let mut cur_train = train.to_vec();
    let mut cur_hold = holdout.to_vec();
    let mut layers = Vec::new();
    let mut fits = Vec::new();
    let seed = params.sls.seed;

    for (li, layer) in model.arch.layers.iter().enumerate() {
        match *layer {
            LayerSpec::Conv { filters, fh, fw, stride } => {
                let (_, oh, ow) = shapes[li];
                let p = oh * ow;
                let picks = sample_positions(cur_train.len(), p, params.max_windows, derive_seed(seed, &[li as u64, u64::MAX]));
                let hold_picks = sample_positions(
                    cur_hold.len(),
                    p,
                    params.max_validation_windows,
                    derive_seed(seed, &[li as u64, u64::MAX - 1]),
                );
                let windows = window_dataset(&cur_train, &picks, fh, fw, stride, ow);
                let hold_windows = window_dataset(&cur_hold, &hold_picks, fh, fw, stride, ow);
                let nn_train = train_trace.layers[li].as_ref().expect("conv layers are traced");
                let nn_hold = hold_trace.layers[li].as_ref().expect("conv layers are traced");
                let fc = cur_train[0].shape().0;
                let results: Vec<Result<(ConvRule, FilterFit)>> = (0..filters)
                    .into_par_iter()
                    .map(|f| {
                        let label = |planes: &[BitPlane], &(img, pos): &(usize, usize)| planes[img].get(f, pos / ow, pos % ow);
                        let mut tr = windows.clone();
                        tr.set_labels(&picks.iter().map(|pk| label(nn_train, pk)).collect::<Vec<_>>())?;
                        let mut va = hold_windows.clone();
                        va.set_labels(&hold_picks.iter().map(|pk| label(nn_hold, pk)).collect::<Vec<_>>())?;
                        let res = sls_search(&tr, &va, &params.sls.with_seed(derive_seed(seed, &[li as u64, f as u64])))?;
                        let fit = fit(li, f, &tr, &res)?;
                        Ok((ConvRule::new(res.formula, fh, fw, fc, stride)?, fit))
                    })
                    .collect();
                let mut rules = Vec::with_capacity(filters);
                for r in results {
                    let (rule, fit) = r?;
                    log::debug!("layer {li} filter {}: train score {} of {}", fit.filter, fit.train_score, fit.train_windows);
                    rules.push(rule);
                    fits.push(fit);
                }
                cur_train = cur_train.par_iter().map(|p| eval_conv_layer(&rules, p)).collect::<Result<_>>()?;
                cur_hold = cur_hold.par_iter().map(|p| eval_conv_layer(&rules, p)).collect::<Result<_>>()?;
                layers.push(LayerApprox::Conv(rules));
            }
            LayerSpec::Sign => {}
            LayerSpec::MaxPool { ph, pw } => {
                cur_train = cur_train.par_iter().map(|p| or_pool(p, ph, pw)).collect::<Result<_>>()?;
                cur_hold = cur_hold.par_iter().map(|p| or_pool(p, ph, pw)).collect::<Result<_>>()?;
                layers.push(LayerApprox::Pool { ph, pw });
            }
            LayerSpec::Dense { .. } => {
                let tr = flat_dataset(&cur_train, &train_trace.predictions)?;
                let va = if cur_hold.is_empty() {
                    BitDataset::new(tr.n())
                } else {
                    flat_dataset(&cur_hold, &hold_trace.predictions)?
                };
                let res = sls_search(&tr, &va, &params.sls.with_seed(derive_seed(seed, &[li as u64, 0])))?;
                fits.push(fit(li, 0, &tr, &res)?);
                layers.push(LayerApprox::Dense(res.formula));
            }
        }
    }
    Ok(DcdlExtraction {
        model: DcdlModel::new(model.arch.input, layers)?,
        fits,
    })
}

fn flat_dataset(planes: &[BitPlane], labels: &[bool]) -> Result<BitDataset> {
    check_dim(planes.len(), labels.len())?;
    let first = planes.first().ok_or_else(|| Error::contract("no images"))?;
    let mut data = BitDataset::with_capacity(first.len(), planes.len());
    for (p, &l) in planes.iter().zip(labels) {
        data.push(p.as_instance(), l)?;
    }
    Ok(data)
}

/// Which labels the black-box formula learns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BlackBoxMode {
    /// The network's predicted labels.
    NnPrediction,
    /// The ground truth.
    TrueLabel,
}

impl BlackBoxMode {
    pub fn name(self) -> &'static str {
        match self {
            BlackBoxMode::NnPrediction => "bb_prediction",
            BlackBoxMode::TrueLabel => "bb_label",
        }
    }

    pub fn labels(self, model: &BnnModel, images: &[BitPlane], truth: &[bool]) -> Result<Vec<bool>> {
        match self {
            BlackBoxMode::NnPrediction => model.predict_batch(images),
            BlackBoxMode::TrueLabel => {
                check_dim(images.len(), truth.len())?;
                Ok(truth.to_vec())
            }
        }
    }
}

/// One search over whole flattened images.
pub fn blackbox_train(
    images: &[BitPlane],
    labels: &[bool],
    validation: &[BitPlane],
    validation_labels: &[bool],
    params: &SlsParams,
) -> Result<SlsResult> {
    let tr = flat_dataset(images, labels)?;
    let va = if validation.is_empty() {
        BitDataset::new(tr.n())
    } else {
        flat_dataset(validation, validation_labels)?
    };
    sls_search(&tr, &va, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bnn::{BnnArchitecture, TrainParams};
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn random_planes(count: usize, (c, h, w): Shape, seed: u64) -> Vec<BitPlane> {
        let mut rng = rng_from_seed(seed);
        (0..count)
            .map(|_| {
                let bits: Vec<bool> = (0..c * h * w).map(|_| rng.random_bool(0.5)).collect();
                BitPlane::from_bools(w, h, c, &bits).unwrap()
            })
            .collect()
    }

    fn all_planes(h: usize, w: usize) -> Vec<BitPlane> {
        (0u32..1 << (h * w))
            .map(|m| {
                let bits: Vec<bool> = (0..h * w).map(|i| m >> i & 1 == 1).collect();
                BitPlane::from_bools(w, h, 1, &bits).unwrap()
            })
            .collect()
    }

    #[test]
    fn or_pool_matches_maxpool() {
        for plane in all_planes(2, 2) {
            let signed: Vec<f32> = plane.to_bools().iter().map(|&b| if b { 1.0 } else { -1.0 }).collect();
            let max = crate::bnn::maxpool_forward(&signed, (1, 2, 2), 2, 2).unwrap();
            assert_eq!(or_pool(&plane, 2, 2).unwrap().get(0, 0, 0), max[0] > 0.0);
        }
        for plane in random_planes(20, (3, 4, 6), 1) {
            let signed: Vec<f32> = plane.to_bools().iter().map(|&b| if b { 1.0 } else { -1.0 }).collect();
            let max = crate::bnn::maxpool_forward(&signed, (3, 4, 6), 2, 3).unwrap();
            let pooled: Vec<bool> = max.iter().map(|&v| v > 0.0).collect();
            assert_eq!(or_pool(&plane, 2, 3).unwrap().to_bools(), pooled);
        }
        assert!(or_pool(&BitPlane::new(3, 3, 1), 2, 2).is_err());
    }

    fn hand_model() -> DcdlModel {
        let rule = ConvRule::new(DnfFormula::parse("(x0 & !x3)", 4).unwrap(), 2, 2, 1, 1).unwrap();
        DcdlModel::new(
            (1, 3, 3),
            vec![
                LayerApprox::Conv(vec![rule]),
                LayerApprox::Pool { ph: 2, pw: 2 },
                LayerApprox::Dense(DnfFormula::parse("(x0)", 1).unwrap()),
            ],
        )
        .unwrap()
    }

    #[test]
    fn hand_built_model_predicts_manually() {
        let model = hand_model();
        for plane in all_planes(3, 3) {
            let b = |r, c| plane.get(0, r, c);
            let expect = (0..2).any(|r| (0..2).any(|c| b(r, c) && !b(r + 1, c + 1)));
            assert_eq!(model.predict(&plane).unwrap(), expect);
        }
        assert!(model.predict(&BitPlane::new(4, 3, 1)).is_err());
    }

    #[test]
    fn vacuous_rules_feed_all_true_planes() {
        let rule = ConvRule::new(DnfFormula::parse("()", 4).unwrap(), 2, 2, 1, 1).unwrap();
        let model = DcdlModel::new(
            (1, 3, 3),
            vec![
                LayerApprox::Conv(vec![rule.clone(), rule]),
                LayerApprox::Dense(DnfFormula::parse("(x0 & x7)", 8).unwrap()),
            ],
        )
        .unwrap();
        for plane in random_planes(5, (1, 3, 3), 2) {
            assert!(model.forward(&plane).unwrap()[0].count_ones() == 8);
            assert!(model.predict(&plane).unwrap());
        }
    }

    #[test]
    fn chaining_is_validated() {
        let rule = ConvRule::new(DnfFormula::parse("(x0)", 4).unwrap(), 2, 2, 1, 1).unwrap();
        let dense = |n| LayerApprox::Dense(DnfFormula::parse("(x0)", n).unwrap());
        assert!(DcdlModel::new((1, 3, 3), vec![LayerApprox::Conv(vec![rule.clone()]), dense(4)]).is_ok());
        assert!(DcdlModel::new((1, 3, 3), vec![LayerApprox::Conv(vec![rule.clone()]), dense(5)]).is_err());
        assert!(DcdlModel::new((2, 3, 3), vec![LayerApprox::Conv(vec![rule.clone()]), dense(4)]).is_err());
        assert!(DcdlModel::new((1, 3, 3), vec![LayerApprox::Conv(vec![rule.clone()]), LayerApprox::Pool { ph: 2, pw: 2 }, dense(1)]).is_ok());
        assert!(DcdlModel::new((1, 4, 4), vec![LayerApprox::Conv(vec![rule]), LayerApprox::Pool { ph: 2, pw: 2 }, dense(1)]).is_err());
        assert!(DcdlModel::new((1, 3, 3), vec![dense(9), dense(1)]).is_err());
    }

    #[test]
    fn text_round_trip() {
        let model = hand_model();
        let text = model.to_text();
        assert_eq!(
            text,
            "dcdl 1\ninput 1 3 3\nlayer conv 1\nconv 2 2 1 1\n(x0 & !x3)\nlayer pool 2 2\nlayer dense 1\n(x0)\n"
        );
        assert_eq!(DcdlModel::parse(&text).unwrap(), model);
        assert!(matches!(DcdlModel::parse("dcdl 1\ninput 1 3 3\nlayer conv 1\nconv 2 2 1 1\n(x9)\n"), Err(Error::Parse { line: 5, .. })));
        assert!(DcdlModel::parse("dcdl 2\n").is_err());
    }

    /// Network on 3x3 planes whose single 2x2 filter fires iff
    /// pixel (0,0) is set and pixel (1,1) is not.
    fn exact_network() -> BnnModel {
        let arch = BnnArchitecture::new(
            (1, 3, 3),
            vec![
                LayerSpec::Conv { filters: 1, fh: 2, fw: 2, stride: 1 },
                LayerSpec::Sign,
                LayerSpec::MaxPool { ph: 2, pw: 2 },
                LayerSpec::Dense { units: 2, dropout: 0.0, fixed_weights: Some(vec![1.0, 0.0]) },
            ],
        )
        .unwrap();
        let mut model = BnnModel::new(arch, TrainParams::default(), 0);
        // x00 - x11 - 1.5 >= 0  iff  x00 = +1 and x11 = -1
        model.set_layer_params(0, vec![1.0, 0.0, 0.0, -1.0], vec![-1.5]).unwrap();
        model.trained = true;
        model
    }

    #[test]
    fn recovers_exact_boolean_filter() {
        let model = exact_network();
        let planes = all_planes(3, 3);
        let params = ExtractionParams {
            sls: SlsParams { k: 2, max_iteration: 2000, ..SlsParams::default() },
            ..ExtractionParams::default()
        };
        let ex = dcdl_train(&model, &planes, &planes, &params).unwrap();
        assert!(ex.fits.iter().all(|f| f.train_score == 0), "{:?}", ex.fits);
        let LayerApprox::Conv(rules) = &ex.model.layers[0] else { panic!("conv expected") };
        for window in all_planes(2, 2) {
            let truth = window.get(0, 0, 0) && !window.get(0, 1, 1);
            assert_eq!(rules[0].formula.eval(window.as_instance()).unwrap(), truth);
        }
        assert_eq!(ex.model.predict_batch(&planes).unwrap(), model.predict_batch(&planes).unwrap());
    }

    #[test]
    fn dense_only_network_matches_blackbox() {
        let arch = BnnArchitecture::new((1, 3, 3), vec![LayerSpec::Dense { units: 2, dropout: 0.0, fixed_weights: None }]).unwrap();
        let mut model = BnnModel::new(arch, TrainParams::default(), 1);
        model.trained = true;
        let planes = random_planes(100, (1, 3, 3), 3);
        let params = ExtractionParams {
            sls: SlsParams { k: 3, max_iteration: 300, seed: 5, ..SlsParams::default() },
            ..ExtractionParams::default()
        };
        let ex = dcdl_train(&model, &planes, &planes[..30], &params).unwrap();
        assert_eq!(ex.model.layers.len(), 1);
        let labels = BlackBoxMode::NnPrediction.labels(&model, &planes, &[]).unwrap();
        let val_labels = model.predict_batch(&planes[..30]).unwrap();
        let bb = blackbox_train(&planes, &labels, &planes[..30], &val_labels, &params.sls.with_seed(derive_seed(5, &[0, 0]))).unwrap();
        assert_eq!(ex.model.layers[0], LayerApprox::Dense(bb.formula));
    }

    #[test]
    fn standard_architecture_structure() {
        let arch = BnnArchitecture::standard((1, 10, 10)).unwrap();
        let mut model = BnnModel::new(arch, TrainParams::default(), 2);
        model.trained = true;
        let planes = random_planes(30, (1, 10, 10), 4);
        let params = ExtractionParams {
            sls: SlsParams { k: 4, max_iteration: 50, ..SlsParams::default() },
            max_windows: 500,
            max_validation_windows: 100,
        };
        let ex = dcdl_train(&model, &planes, &planes[..10], &params).unwrap();
        let kinds: Vec<usize> = ex
            .model
            .layers
            .iter()
            .map(|l| match l {
                LayerApprox::Conv(r) => r.len(),
                LayerApprox::Pool { .. } => 100,
                LayerApprox::Dense(_) => 1000,
            })
            .collect();
        assert_eq!(kinds, vec![8, 8, 100, 1000]);
        assert_eq!(ex.fits.len(), 17);
        assert!(ex.fits.iter().filter(|f| f.layer < 3).all(|f| f.train_windows == 500));
        let again = dcdl_train(&model, &planes, &planes[..10], &params).unwrap();
        assert_eq!(again, ex);
        assert!(DcdlModel::parse(&ex.model.to_text()).unwrap() == ex.model);
        let untrained = BnnModel::new(BnnArchitecture::standard((1, 10, 10)).unwrap(), TrainParams::default(), 2);
        assert!(dcdl_train(&untrained, &planes, &planes, &params).is_err());
    }

    #[test]
    fn blackbox_learns_planted_pixel() {
        let planes = random_planes(300, (1, 5, 5), 6);
        let labels: Vec<bool> = planes.iter().map(|p| p.get(0, 2, 3)).collect();
        let params = SlsParams { k: 1, max_iteration: 500, seed: 1, ..SlsParams::default() };
        let res = blackbox_train(&planes, &labels, &[], &[], &params).unwrap();
        assert_eq!(res.best_validation_score, 0);
        assert_eq!(res.formula.to_string(), "(x13)");
        let truth = BlackBoxMode::TrueLabel.labels(&exact_network(), &planes[..3], &labels[..3]).unwrap();
        assert_eq!(truth, labels[..3]);
    }
}
