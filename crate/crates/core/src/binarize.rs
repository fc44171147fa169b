//! Binarization of network inputs: Floyd-Steinberg dithering of images,
//! one-hot expansion of categorical features, and balanced one-vs-all
//! sampling.

use rand::seq::{index, SliceRandom};
use rand::Rng;

use crate::boolcore::{get_bit, BitInstance};
use crate::error::{check_dim, Error, Result};

/// Image with intensities in `[0, 1]`, stored channel-planar:
/// `data[(ch * height + row) * width + col]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        check_dim(width * height * channels, data.len())?;
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::contract("image dimensions must be positive"));
        }
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::contract(format!("intensity {bad} outside [0, 1]")));
        }
        Ok(GrayImage {
            width,
            height,
            channels,
            data,
        })
    }

    /// 8-bit samples scaled by 1/255.
    pub fn from_bytes(width: usize, height: usize, channels: usize, bytes: &[u8]) -> Result<Self> {
        GrayImage::new(
            width,
            height,
            channels,
            bytes.iter().map(|&b| f32::from(b) / 255.0).collect(),
        )
    }

    pub fn constant(width: usize, height: usize, channels: usize, value: f32) -> Result<Self> {
        GrayImage::new(width, height, channels, vec![value; width * height * channels])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, ch: usize, row: usize, col: usize) -> f32 {
        self.data[(ch * self.height + row) * self.width + col]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| f64::from(v)).sum::<f64>() / self.data.len() as f64
    }

    /// Samples rounded back to bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.data.iter().map(|&v| (v * 255.0).round() as u8).collect()
    }
}

/// A binary image; bit `(ch * height + row) * width + col`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitPlane {
    width: usize,
    height: usize,
    channels: usize,
    bits: BitInstance,
}

impl BitPlane {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        BitPlane {
            width,
            height,
            channels,
            bits: BitInstance::zeros(width * height * channels),
        }
    }

    pub fn from_instance(width: usize, height: usize, channels: usize, bits: BitInstance) -> Result<Self> {
        check_dim(width * height * channels, bits.n())?;
        Ok(BitPlane {
            width,
            height,
            channels,
            bits,
        })
    }

    pub fn from_bools(width: usize, height: usize, channels: usize, values: &[bool]) -> Result<Self> {
        check_dim(width * height * channels, values.len())?;
        Ok(BitPlane {
            width,
            height,
            channels,
            bits: BitInstance::from_bools(values),
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `(channels, height, width)`
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.width * self.height * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, ch: usize, row: usize, col: usize) -> usize {
        (ch * self.height + row) * self.width + col
    }

    #[inline]
    pub fn get(&self, ch: usize, row: usize, col: usize) -> bool {
        get_bit(self.bits.words(), self.index(ch, row, col))
    }

    pub fn set(&mut self, ch: usize, row: usize, col: usize, value: bool) {
        let i = self.index(ch, row, col);
        self.bits.set(i, value);
    }

    /// The plane flattened to one instance in the shared index order.
    pub fn as_instance(&self) -> &BitInstance {
        &self.bits
    }

    pub fn into_instance(self) -> BitInstance {
        self.bits
    }

    pub fn words(&self) -> &[u64] {
        self.bits.words()
    }

    pub(crate) fn words_mut(&mut self) -> &mut [u64] {
        self.bits.words_mut()
    }

    pub fn count_ones(&self) -> usize {
        self.bits.count_ones()
    }

    pub fn to_bools(&self) -> Vec<bool> {
        self.bits.to_bools()
    }

    /// Intensities 0.0 / 1.0.
    pub fn to_image(&self) -> GrayImage {
        let data = self.to_bools().into_iter().map(|b| if b { 1.0 } else { 0.0 }).collect();
        GrayImage {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data,
        }
    }
}

impl std::fmt::Debug for BitPlane {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "BitPlane {}x{}x{}", self.channels, self.height, self.width)?;
        for ch in 0..self.channels {
            for row in 0..self.height {
                for col in 0..self.width {
                    f.write_str(if self.get(ch, row, col) { "#" } else { "." })?;
                }
                writeln!(f)?;
            }
        }
        Ok(())
    }
}

/// Floyd-Steinberg error diffusion with a 0.5 threshold, each channel
/// independently, left to right on every row. Error pushed past an image
/// edge is dropped.
pub fn dither_floyd_steinberg(img: &GrayImage) -> BitPlane {
    let (w, h) = (img.width, img.height);
    let mut out = BitPlane::new(w, h, img.channels);
    let mut buf = vec![0f32; w * h];
    for ch in 0..img.channels {
        buf.copy_from_slice(&img.data[ch * w * h..(ch + 1) * w * h]);
        for row in 0..h {
            for col in 0..w {
                let old = buf[row * w + col];
                let on = old >= 0.5;
                if on {
                    out.set(ch, row, col, true);
                }
                let err = old - if on { 1.0 } else { 0.0 };
                if col + 1 < w {
                    buf[row * w + col + 1] += err * (7.0 / 16.0);
                }
                if row + 1 < h {
                    if col > 0 {
                        buf[(row + 1) * w + col - 1] += err * (3.0 / 16.0);
                    }
                    buf[(row + 1) * w + col] += err * (5.0 / 16.0);
                    if col + 1 < w {
                        buf[(row + 1) * w + col + 1] += err * (1.0 / 16.0);
                    }
                }
            }
        }
    }
    out
}

/// One-hot encoding of a categorical value.
pub fn expand_categorical(value: usize, n_values: usize) -> Result<BitInstance> {
    if value >= n_values {
        return Err(Error::contract(format!(
            "category {value} out of range for {n_values} values"
        )));
    }
    let mut inst = BitInstance::zeros(n_values);
    inst.set(value, true);
    Ok(inst)
}

/// Draws a balanced one-vs-all sample.
///
/// Returns `(index into labels, is target)` pairs in shuffled order:
/// `size / 2` items of `target` and the rest split evenly over the other
/// classes, with any remainder going to the lowest class indices.
pub fn balance_one_vs_all<R: Rng + ?Sized>(
    labels: &[usize],
    class_count: usize,
    target: usize,
    size: usize,
    rng: &mut R,
) -> Result<Vec<(usize, bool)>> {
    if target >= class_count {
        return Err(Error::contract(format!(
            "target class {target} out of range for {class_count} classes"
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); class_count];
    for (i, &c) in labels.iter().enumerate() {
        if c >= class_count {
            return Err(Error::contract(format!("label {c} out of range")));
        }
        by_class[c].push(i);
    }
    let positives = size / 2;
    let negatives = size - positives;
    let others: Vec<usize> = (0..class_count).filter(|&c| c != target).collect();
    if others.is_empty() && negatives > 0 {
        return Err(Error::contract("one-vs-all balancing needs at least two classes"));
    }
    let mut quota = vec![0usize; class_count];
    quota[target] = positives;
    if !others.is_empty() {
        let (share, extra) = (negatives / others.len(), negatives % others.len());
        for (j, &c) in others.iter().enumerate() {
            quota[c] = share + usize::from(j < extra);
        }
    }
    for (c, &q) in quota.iter().enumerate() {
        if by_class[c].len() < q {
            return Err(Error::InsufficientClass {
                class: c,
                needed: q,
                available: by_class[c].len(),
            });
        }
    }
    let mut picked = Vec::with_capacity(size);
    for (c, &q) in quota.iter().enumerate() {
        for j in index::sample(rng, by_class[c].len(), q).into_iter() {
            picked.push((by_class[c][j], c == target));
        }
    }
    picked.shuffle(rng);
    Ok(picked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn constant_images_dither_to_constant_planes() {
        let black = dither_floyd_steinberg(&GrayImage::constant(9, 7, 1, 0.0).unwrap());
        assert_eq!(black.count_ones(), 0);
        let white = dither_floyd_steinberg(&GrayImage::constant(9, 7, 3, 1.0).unwrap());
        assert_eq!(white.count_ones(), 9 * 7 * 3);
    }

    #[test]
    fn half_gray_dithers_to_half_density() {
        let plane = dither_floyd_steinberg(&GrayImage::constant(16, 16, 1, 0.5).unwrap());
        let density = plane.count_ones() as f64 / 256.0;
        assert!((density - 0.5).abs() <= 0.05, "density {density}");
    }

    #[test]
    fn dithering_preserves_mean_of_smooth_images() {
        let mut rng = rng_from_seed(11);
        for _ in 0..50 {
            let w = rng.random_range(8..33usize);
            let h = rng.random_range(8..33usize);
            let (fx, fy, phase, amp) = (
                rng.random_range(0.05..0.6f32),
                rng.random_range(0.05..0.6f32),
                rng.random_range(0.0..6.3f32),
                rng.random_range(0.0..0.5f32),
            );
            let base = rng.random_range(0.2..0.8f32);
            let data = (0..h)
                .flat_map(|r| (0..w).map(move |c| (r, c)))
                .map(|(r, c)| (base + amp * (fx * c as f32 + fy * r as f32 + phase).sin()).clamp(0.0, 1.0))
                .collect();
            let img = GrayImage::new(w, h, 1, data).unwrap();
            let plane = dither_floyd_steinberg(&img);
            let delta = (plane.to_image().mean() - img.mean()).abs();
            assert!(delta <= 2.0 / w.min(h) as f64, "{w}x{h}: mean shift {delta}");
        }
    }

    #[test]
    fn dithering_matches_hand_computed_2x2() {
        // 0.4 0.6 / 0.2 0.9, worked by hand:
        // (0,0) 0.4 -> 0, err 0.4: right 0.775, below 0.325, below-right 0.925
        // (0,1) 0.775 -> 1, err -0.225: below-left 0.2828125, below 0.8546875
        // (1,0) 0.2828125 -> 0: right 0.8546875 + 0.1237305 = 0.978418
        // (1,1) 0.978418 -> 1
        let img = GrayImage::new(2, 2, 1, vec![0.4, 0.6, 0.2, 0.9]).unwrap();
        let plane = dither_floyd_steinberg(&img);
        assert_eq!(plane.to_bools(), vec![false, true, false, true]);
    }

    #[test]
    fn binary_input_is_a_fixed_point() {
        let mut rng = rng_from_seed(1);
        let data: Vec<f32> = (0..12 * 10).map(|_| if rng.random_bool(0.3) { 1.0 } else { 0.0 }).collect();
        let img = GrayImage::new(12, 10, 1, data).unwrap();
        let plane = dither_floyd_steinberg(&img);
        assert_eq!(plane.to_image(), img);
    }

    #[test]
    fn rejects_out_of_range_intensity() {
        assert!(GrayImage::new(1, 1, 1, vec![1.5]).is_err());
        assert!(GrayImage::new(2, 1, 1, vec![0.5]).is_err());
    }

    #[test]
    fn categorical_expansion() {
        assert_eq!(expand_categorical(2, 4).unwrap().to_bools(), vec![false, false, true, false]);
        assert_eq!(expand_categorical(0, 1).unwrap().to_bools(), vec![true]);
        assert_eq!(expand_categorical(3, 4).unwrap().to_bools(), vec![false, false, false, true]);
        assert!(expand_categorical(4, 4).is_err());
    }

    #[test]
    fn balancing_counts_per_class() {
        let labels: Vec<usize> = (0..10).flat_map(|c| std::iter::repeat_n(c, 600)).collect();
        let picked = balance_one_vs_all(&labels, 10, 3, 1000, &mut rng_from_seed(2)).unwrap();
        assert_eq!(picked.len(), 1000);
        let mut counts = [0usize; 10];
        for &(i, is_target) in &picked {
            assert_eq!(is_target, labels[i] == 3);
            counts[labels[i]] += 1;
        }
        // 500 negatives over 9 classes: 55 each, remainder 5 to classes 0,1,2,4,5
        assert_eq!(counts, [56, 56, 56, 500, 56, 56, 55, 55, 55, 55]);
        let mut idx: Vec<usize> = picked.iter().map(|p| p.0).collect();
        idx.sort_unstable();
        idx.dedup();
        assert_eq!(idx.len(), 1000);
    }

    #[test]
    fn balancing_two_classes_and_determinism() {
        let labels = vec![0, 1, 1, 0, 1];
        let picked = balance_one_vs_all(&labels, 2, 1, 2, &mut rng_from_seed(3)).unwrap();
        assert_eq!(picked.iter().filter(|p| p.1).count(), 1);
        assert_eq!(picked.iter().filter(|p| !p.1).count(), 1);
        let a = balance_one_vs_all(&labels, 2, 0, 4, &mut rng_from_seed(9)).unwrap();
        let b = balance_one_vs_all(&labels, 2, 0, 4, &mut rng_from_seed(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn balancing_names_deficient_class() {
        let labels = vec![0, 0, 0, 1, 2, 2];
        let err = balance_one_vs_all(&labels, 3, 0, 6, &mut rng_from_seed(0)).unwrap_err();
        assert!(matches!(err, Error::InsufficientClass { class: 1, needed: 2, available: 1 }));
    }
}
