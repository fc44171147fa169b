//! Image dataset ingestion: IDX (MNIST, Fashion-MNIST), CIFAR-10 binary
//! batches, a synthetic generator, holdout splitting, and the packed
//! container for dithered datasets.
//!
//! Nothing is downloaded. Files are passed by path or found below the
//! directory named by `DCDL_DATA_DIR`:
//!
//! ```text
//! $DCDL_DATA_DIR/mnist/{train,t10k}-{images-idx3,labels-idx1}-ubyte
//! $DCDL_DATA_DIR/fashion/{train,t10k}-{images-idx3,labels-idx1}-ubyte
//! $DCDL_DATA_DIR/cifar10/data_batch_{1..5}.bin, test_batch.bin
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::Rng;

use crate::binarize::{dither_floyd_steinberg, BitPlane, GrayImage};
use crate::boolcore::{tail_mask, words_for};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

pub const DATA_DIR_ENV: &str = "DCDL_DATA_DIR";

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

const CIFAR_RECORD: usize = 1 + 3 * 32 * 32;
const CONTAINER_MAGIC: &[u8; 8] = b"DCDLBITS";
const CONTAINER_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitTag {
    Train,
    Holdout,
    Test,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledImageSet {
    pub images: Vec<GrayImage>,
    pub labels: Vec<usize>,
    pub class_count: usize,
    pub split: SplitTag,
}

impl LabeledImageSet {
    pub fn new(images: Vec<GrayImage>, labels: Vec<usize>, class_count: usize, split: SplitTag) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::contract(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::contract(format!("label {bad} >= class count {class_count}")));
        }
        Ok(LabeledImageSet {
            images,
            labels,
            class_count,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn subset(&self, indices: &[usize], split: SplitTag) -> LabeledImageSet {
        LabeledImageSet {
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
            split,
        }
    }

    pub fn dither(&self) -> DitheredSet {
        DitheredSet {
            planes: self.images.iter().map(dither_floyd_steinberg).collect(),
            labels: self.labels.clone(),
            class_count: self.class_count,
        }
    }
}

/// Dithered images with their class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct DitheredSet {
    pub planes: Vec<BitPlane>,
    pub labels: Vec<usize>,
    pub class_count: usize,
}

impl DitheredSet {
    pub fn len(&self) -> usize {
        self.planes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.planes.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> DitheredSet {
        DitheredSet {
            planes: indices.iter().map(|&i| self.planes[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
        }
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Truncated {
            path: path.to_path_buf(),
            offset,
            needed: offset + 4,
            available: bytes.len(),
        })
}

fn expect_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let found = be_u32(bytes, 0, path)?;
    if found != expected {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    Ok(())
}

fn expect_len(bytes: &[u8], needed: usize, header: usize, path: &Path) -> Result<()> {
    if bytes.len() < needed {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            offset: header,
            needed,
            available: bytes.len(),
        });
    }
    if bytes.len() > needed {
        return Err(Error::CountMismatch {
            path: path.to_path_buf(),
            what: format!("{} trailing bytes after the declared items", bytes.len() - needed),
        });
    }
    Ok(())
}

/// Parses an IDX3 image file: `(rows, cols, images)`.
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<(usize, usize, Vec<GrayImage>)> {
    expect_magic(bytes, IDX_IMAGES_MAGIC, path)?;
    let count = be_u32(bytes, 4, path)? as usize;
    let rows = be_u32(bytes, 8, path)? as usize;
    let cols = be_u32(bytes, 12, path)? as usize;
    let size = rows * cols;
    expect_len(bytes, 16 + count * size, 16, path)?;
    let images = bytes[16..]
        .chunks_exact(size.max(1))
        .take(count)
        .map(|px| GrayImage::from_bytes(cols, rows, 1, px))
        .collect::<Result<Vec<_>>>()?;
    Ok((rows, cols, images))
}

pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    expect_magic(bytes, IDX_LABELS_MAGIC, path)?;
    let count = be_u32(bytes, 4, path)? as usize;
    expect_len(bytes, 8 + count, 8, path)?;
    Ok(bytes[8..].to_vec())
}

/// Loads an IDX image/label file pair (MNIST and Fashion-MNIST layout).
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledImageSet> {
    let (_, _, images) = parse_idx_images(&read_file(images_path)?, images_path)?;
    let labels = parse_idx_labels(&read_file(labels_path)?, labels_path)?;
    if images.len() != labels.len() {
        return Err(Error::CountMismatch {
            path: labels_path.to_path_buf(),
            what: format!("{} labels for {} images", labels.len(), images.len()),
        });
    }
    let labels: Vec<usize> = labels.into_iter().map(usize::from).collect();
    let class_count = labels.iter().max().map_or(0, |&m| m + 1).max(10);
    LabeledImageSet::new(images, labels, class_count, SplitTag::Train)
}

pub fn encode_idx_images(images: &[GrayImage]) -> Result<Vec<u8>> {
    let (rows, cols) = images.first().map_or((0, 0), |im| (im.height(), im.width()));
    let mut out = Vec::with_capacity(16 + images.len() * rows * cols);
    for v in [IDX_IMAGES_MAGIC, images.len() as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for im in images {
        if im.height() != rows || im.width() != cols || im.channels() != 1 {
            return Err(Error::contract("IDX images must share one grayscale geometry"));
        }
        out.extend(im.to_bytes());
    }
    Ok(out)
}

pub fn encode_idx_labels(labels: &[usize]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    for &l in labels {
        out.push(u8::try_from(l).map_err(|_| Error::contract(format!("label {l} does not fit a byte")))?);
    }
    Ok(out)
}

/// Reads CIFAR-10 binary batches (1 label byte + 3072 channel-planar pixels
/// per record) and concatenates them.
pub fn load_cifar10<P: AsRef<Path>>(batch_paths: &[P]) -> Result<LabeledImageSet> {
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for path in batch_paths {
        let path = path.as_ref();
        let bytes = read_file(path)?;
        if bytes.len() % CIFAR_RECORD != 0 {
            return Err(Error::TruncatedRecord {
                path: path.to_path_buf(),
                record: bytes.len() / CIFAR_RECORD,
                len: bytes.len(),
                record_len: CIFAR_RECORD,
            });
        }
        for rec in bytes.chunks_exact(CIFAR_RECORD) {
            labels.push(usize::from(rec[0]));
            images.push(GrayImage::from_bytes(32, 32, 3, &rec[1..])?);
        }
    }
    LabeledImageSet::new(images, labels, 10, SplitTag::Train)
}

/// Uniform disjoint split into `(train, holdout)`.
pub fn split_holdout<R: Rng + ?Sized>(
    set: &LabeledImageSet,
    holdout_size: usize,
    rng: &mut R,
) -> Result<(LabeledImageSet, LabeledImageSet)> {
    let (train_idx, holdout_idx) = split_indices(set.len(), holdout_size, rng)?;
    Ok((
        set.subset(&train_idx, SplitTag::Train),
        set.subset(&holdout_idx, SplitTag::Holdout),
    ))
}

/// Index form of [`split_holdout`]: both halves sorted ascending.
pub fn split_indices<R: Rng + ?Sized>(len: usize, holdout_size: usize, rng: &mut R) -> Result<(Vec<usize>, Vec<usize>)> {
    if holdout_size >= len && holdout_size > 0 {
        return Err(Error::contract(format!(
            "holdout of {holdout_size} from a set of {len}"
        )));
    }
    let mut in_holdout = vec![false; len];
    for i in index::sample(rng, len, holdout_size).into_iter() {
        in_holdout[i] = true;
    }
    let (holdout, train): (Vec<usize>, Vec<usize>) = (0..len).partition(|&i| in_holdout[i]);
    Ok((train, holdout))
}

/// Known dataset families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Mnist,
    Fashion,
    Cifar10,
    Synthetic,
}

pub fn data_dir() -> Option<PathBuf> {
    std::env::var_os(DATA_DIR_ENV).map(PathBuf::from)
}

/// Loads the predefined `(train, test)` split of a file-backed dataset.
pub fn load_standard(kind: DatasetKind, dir: &Path) -> Result<(LabeledImageSet, LabeledImageSet)> {
    let idx = |sub: &str| -> Result<(LabeledImageSet, LabeledImageSet)> {
        let d = dir.join(sub);
        let train = load_idx(
            &d.join("train-images-idx3-ubyte"),
            &d.join("train-labels-idx1-ubyte"),
        )?;
        let mut test = load_idx(&d.join("t10k-images-idx3-ubyte"), &d.join("t10k-labels-idx1-ubyte"))?;
        test.split = SplitTag::Test;
        Ok((train, test))
    };
    match kind {
        DatasetKind::Mnist => idx("mnist"),
        DatasetKind::Fashion => idx("fashion"),
        DatasetKind::Cifar10 => {
            let d = dir.join("cifar10");
            let batches: Vec<PathBuf> = (1..=5).map(|i| d.join(format!("data_batch_{i}.bin"))).collect();
            let train = load_cifar10(&batches)?;
            let mut test = load_cifar10(&[d.join("test_batch.bin")])?;
            test.split = SplitTag::Test;
            Ok((train, test))
        }
        DatasetKind::Synthetic => Err(Error::contract("the synthetic dataset is generated, not loaded")),
    }
}

/// Parameters of the synthetic image generator.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub class_count: usize,
    pub width: usize,
    pub height: usize,
    /// Probability of flipping a prototype pixel.
    pub flip: f64,
    /// Seed of the class prototypes; train and test sets must share it.
    pub prototype_seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            class_count: 10,
            width: 12,
            height: 12,
            flip: 0.08,
            prototype_seed: 0x5eed,
        }
    }
}

/// Generates `count` images, `count / class_count` per class (remainder to
/// the lowest classes). Each class has a random binary prototype; a sample
/// flips each prototype pixel with probability `flip` and jitters the
/// intensity away from 0 or 1 by up to 0.3.
pub fn synthetic_set(spec: &SyntheticSpec, count: usize, sample_seed: u64, split: SplitTag) -> Result<LabeledImageSet> {
    if spec.class_count < 2 {
        return Err(Error::contract("synthetic data needs at least two classes"));
    }
    let pixels = spec.width * spec.height;
    let mut proto_rng = rng_from_seed(spec.prototype_seed);
    let prototypes: Vec<Vec<bool>> = (0..spec.class_count)
        .map(|_| (0..pixels).map(|_| proto_rng.random_bool(0.5)).collect())
        .collect();
    let mut rng = rng_from_seed(sample_seed);
    let mut images = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let class = i % spec.class_count;
        let data = prototypes[class]
            .iter()
            .map(|&on| {
                let on = on ^ rng.random_bool(spec.flip);
                let jitter: f32 = rng.random_range(0.0..0.3);
                if on {
                    1.0 - jitter
                } else {
                    jitter
                }
            })
            .collect();
        images.push(GrayImage::new(spec.width, spec.height, 1, data)?);
        labels.push(class);
    }
    LabeledImageSet::new(images, labels, spec.class_count, split)
}

/// Serializes dithered planes into the packed container:
///
/// ```text
/// "DCDLBITS" | version u32 | count u32 | channels u32 | height u32 | width u32 | class_count u32
/// count x ( label u8 | ceil(c*h*w / 8) bytes, bit i at byte i/8, position i%8 )
/// ```
///
/// All integers little-endian.
pub fn encode_container(set: &DitheredSet) -> Result<Vec<u8>> {
    let (c, h, w) = set.planes.first().map_or((0, 0, 0), BitPlane::shape);
    let plane_bytes = (c * h * w).div_ceil(8);
    let mut out = Vec::with_capacity(32 + set.len() * (1 + plane_bytes));
    out.extend_from_slice(CONTAINER_MAGIC);
    for v in [CONTAINER_VERSION, set.len() as u32, c as u32, h as u32, w as u32, set.class_count as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for (plane, &label) in set.planes.iter().zip(&set.labels) {
        if plane.shape() != (c, h, w) {
            return Err(Error::contract("container planes must share one geometry"));
        }
        out.push(u8::try_from(label).map_err(|_| Error::contract("label does not fit a byte"))?);
        let bytes: Vec<u8> = plane.words().iter().flat_map(|w| w.to_le_bytes()).collect();
        out.extend_from_slice(&bytes[..plane_bytes]);
    }
    Ok(out)
}

pub fn decode_container(bytes: &[u8], path: &Path) -> Result<DitheredSet> {
    if bytes.len() < 32 || &bytes[..8] != CONTAINER_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: u32::from_be_bytes(*b"DCDL"),
            found: bytes.get(..4).map_or(0, |b| u32::from_be_bytes([b[0], b[1], b[2], b[3]])),
        });
    }
    let le = |i: usize| u32::from_le_bytes([bytes[8 + 4 * i], bytes[9 + 4 * i], bytes[10 + 4 * i], bytes[11 + 4 * i]]) as usize;
    let (version, count, c, h, w, class_count) = (le(0), le(1), le(2), le(3), le(4), le(5));
    if version != CONTAINER_VERSION as usize {
        return Err(Error::parse(0, format!("unsupported container version {version}")));
    }
    let plane_bytes = (c * h * w).div_ceil(8);
    expect_len(bytes, 32 + count * (1 + plane_bytes), 32, path)?;
    let mut planes = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for rec in bytes[32..].chunks_exact(1 + plane_bytes) {
        labels.push(usize::from(rec[0]));
        let mut plane = BitPlane::new(w, h, c);
        let mut padded = rec[1..].to_vec();
        padded.resize(words_for(c * h * w) * 8, 0);
        for (dst, chunk) in plane.words_mut().iter_mut().zip(padded.chunks_exact(8)) {
            *dst = u64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
        }
        if let Some(last) = plane.words_mut().last_mut() {
            *last &= tail_mask(c * h * w);
        }
        planes.push(plane);
    }
    Ok(DitheredSet {
        planes,
        labels,
        class_count,
    })
}

pub fn write_container(path: &Path, set: &DitheredSet) -> Result<()> {
    fs::write(path, encode_container(set)?).map_err(|e| Error::io(path, e))
}

pub fn read_container(path: &Path) -> Result<DitheredSet> {
    decode_container(&read_file(path)?, path)
}
