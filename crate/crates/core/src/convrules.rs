//! Convolutional rules: a DNF formula over one filter window, slid over a
//! bit plane like the filter it replaces, and its rendering as images.

use std::fmt;
use std::io::Write as _;
use std::path::Path;

use crate::binarize::BitPlane;
use crate::boolcore::{iter_ones, words_for, BitColumns, BitDataset, DnfFormula, Literal, Term, WORD_BITS};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConvRule {
    pub formula: DnfFormula,
    pub fh: usize,
    pub fw: usize,
    pub fc: usize,
    pub stride: usize,
}

impl ConvRule {
    pub fn new(formula: DnfFormula, fh: usize, fw: usize, fc: usize, stride: usize) -> Result<Self> {
        if stride == 0 || fh == 0 || fw == 0 || fc == 0 {
            return Err(Error::contract("rule geometry must be positive"));
        }
        if formula.n() != fh * fw * fc {
            return Err(Error::DimensionMismatch {
                expected: fh * fw * fc,
                found: formula.n(),
            });
        }
        Ok(ConvRule {
            formula,
            fh,
            fw,
            fc,
            stride,
        })
    }

    /// Output `(height, width)` on a plane of the given shape.
    pub fn output_size(&self, (c, h, w): (usize, usize, usize)) -> Result<(usize, usize)> {
        check_geometry((c, h, w), self.fh, self.fw, self.stride)?;
        if c != self.fc {
            return Err(Error::contract(format!("rule over {} channels applied to {c}", self.fc)));
        }
        Ok(((h - self.fh) / self.stride + 1, (w - self.fw) / self.stride + 1))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (hline, header) = lines.next().ok_or_else(|| Error::parse(1, "empty rule"))?;
        let nums: Vec<&str> = header.split_whitespace().collect();
        if nums.len() != 5 || nums[0] != "conv" {
            return Err(Error::parse(hline + 1, format!("expected `conv fh fw fc stride`, got `{header}`")));
        }
        let mut g = [0usize; 4];
        for (slot, s) in g.iter_mut().zip(&nums[1..]) {
            *slot = s
                .parse()
                .map_err(|_| Error::parse(hline + 1, format!("bad number `{s}`")))?;
        }
        let (fline, ftext) = lines.next().ok_or_else(|| Error::parse(hline + 2, "missing formula line"))?;
        if let Some((extra, _)) = lines.next() {
            return Err(Error::parse(extra + 1, "trailing content after the formula"));
        }
        let formula = DnfFormula::parse(ftext, g[0] * g[1] * g[2]).map_err(|e| match e {
            Error::Parse { message, .. } => Error::parse(fline + 1, message),
            other => other,
        })?;
        ConvRule::new(formula, g[0], g[1], g[2], g[3])
    }
}

/// `conv fh fw fc stride` on the first line, the formula on the second.
impl fmt::Display for ConvRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "conv {} {} {} {}", self.fh, self.fw, self.fc, self.stride)?;
        writeln!(f, "{}", self.formula)
    }
}

fn check_geometry((c, h, w): (usize, usize, usize), fh: usize, fw: usize, stride: usize) -> Result<()> {
    if stride == 0 || fh == 0 || fw == 0 || c == 0 {
        return Err(Error::contract("window geometry must be positive"));
    }
    if fh > h || fw > w {
        return Err(Error::contract(format!("{fh}x{fw} window exceeds {h}x{w} plane")));
    }
    Ok(())
}

/// Writes the window at output position `(oy, ox)` into `out` (bit
/// `(ch * fh + r) * fw + c`).
pub(crate) fn window_into(plane: &BitPlane, oy: usize, ox: usize, fh: usize, fw: usize, stride: usize, out: &mut [u64]) {
    out.fill(0);
    let (c, _, _) = plane.shape();
    let mut bit = 0;
    for ch in 0..c {
        for r in 0..fh {
            for q in 0..fw {
                if plane.get(ch, oy * stride + r, ox * stride + q) {
                    out[bit / WORD_BITS] |= 1 << (bit % WORD_BITS);
                }
                bit += 1;
            }
        }
    }
}

/// All VALID windows in row-major position order, one instance each
/// (labels false).
pub fn extract_windows(plane: &BitPlane, fh: usize, fw: usize, stride: usize) -> Result<BitDataset> {
    let (c, h, w) = plane.shape();
    check_geometry((c, h, w), fh, fw, stride)?;
    let (oh, ow) = ((h - fh) / stride + 1, (w - fw) / stride + 1);
    let n = c * fh * fw;
    let mut data = BitDataset::with_capacity(n, oh * ow);
    let mut buf = vec![0u64; words_for(n)];
    for oy in 0..oh {
        for ox in 0..ow {
            window_into(plane, oy, ox, fh, fw, stride, &mut buf);
            data.push_words(&buf, false);
        }
    }
    Ok(data)
}

/// Column view of all windows of a plane: column `v` is the bitset of
/// positions whose window has bit `v` set.
pub fn window_columns(plane: &BitPlane, fh: usize, fw: usize, stride: usize) -> Result<BitColumns> {
    let (c, h, w) = plane.shape();
    check_geometry((c, h, w), fh, fw, stride)?;
    let (oh, ow) = ((h - fh) / stride + 1, (w - fw) / stride + 1);
    let words = words_for((oh * ow).max(1));
    let mut cols = vec![0u64; c * fh * fw * words];
    for ch in 0..c {
        for r in 0..fh {
            for q in 0..fw {
                let col = &mut cols[((ch * fh + r) * fw + q) * words..][..words];
                for oy in 0..oh {
                    for ox in 0..ow {
                        if plane.get(ch, oy * stride + r, ox * stride + q) {
                            let p = oy * ow + ox;
                            col[p / WORD_BITS] |= 1 << (p % WORD_BITS);
                        }
                    }
                }
            }
        }
    }
    Ok(BitColumns::from_raw(c * fh * fw, oh * ow, cols))
}

fn positions_to_plane(bits: Vec<u64>, oh: usize, ow: usize) -> Result<BitPlane> {
    let inst = crate::boolcore::BitInstance::from_words(oh * ow, bits)?;
    BitPlane::from_instance(ow, oh, 1, inst)
}

/// Evaluates the rule at every position: a single-channel plane of the
/// output size.
pub fn eval_conv_rule(rule: &ConvRule, plane: &BitPlane) -> Result<BitPlane> {
    let (oh, ow) = rule.output_size(plane.shape())?;
    let cols = window_columns(plane, rule.fh, rule.fw, rule.stride)?;
    positions_to_plane(cols.formula_output(&rule.formula), oh, ow)
}

/// Evaluates several rules sharing one geometry; output channel `i` is rule `i`.
pub fn eval_conv_layer(rules: &[ConvRule], plane: &BitPlane) -> Result<BitPlane> {
    let first = rules.first().ok_or_else(|| Error::contract("no rules"))?;
    let (oh, ow) = first.output_size(plane.shape())?;
    if rules.iter().any(|r| (r.fh, r.fw, r.fc, r.stride) != (first.fh, first.fw, first.fc, first.stride)) {
        return Err(Error::contract("rules of one layer must share their geometry"));
    }
    let cols = window_columns(plane, first.fh, first.fw, first.stride)?;
    let mut out = BitPlane::new(ow, oh, rules.len());
    for (ch, rule) in rules.iter().enumerate() {
        for p in iter_ones(&cols.formula_output(&rule.formula)) {
            out.set(ch, p / ow, p % ow, true);
        }
    }
    Ok(out)
}

/// Grayscale image of a rule, values in `[0, 1]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct RuleImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f32>,
}

pub const WHITE: f32 = 1.0;
pub const BLACK: f32 = 0.0;
pub const GRAY: f32 = 0.5;

impl RuleImage {
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.pixels[row * self.width + col]
    }

    /// 8-bit values; gray maps to 128.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.to_bytes());
        out
    }

    pub fn to_png(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width as u32, self.height as u32);
            enc.set_color(png::ColorType::Grayscale);
            enc.set_depth(png::BitDepth::Eight);
            let png_err = |e: png::EncodingError| Error::contract(format!("png encoding: {e}"));
            let mut writer = enc.write_header().map_err(png_err)?;
            writer.write_image_data(&self.to_bytes()).map_err(png_err)?;
        }
        Ok(out)
    }

    /// Writes PGM or PNG depending on the extension (`.pgm` or `.png`).
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = match path.extension().and_then(|e| e.to_str()) {
            Some("pgm") => self.to_pgm(),
            Some("png") => self.to_png()?,
            _ => return Err(Error::contract(format!("unknown image extension: {}", path.display()))),
        };
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))
    }
}

/// One ternary image per channel: positive literals white, negative
/// literals black, unmentioned pixels gray.
pub fn term_to_image(term: &Term, fh: usize, fw: usize, fc: usize) -> Result<Vec<RuleImage>> {
    crate::error::check_dim(fh * fw * fc, term.n())?;
    let mut images = vec![
        RuleImage {
            width: fw,
            height: fh,
            pixels: vec![GRAY; fh * fw],
        };
        fc
    ];
    for lit in term.literals() {
        let (ch, i) = (lit.var / (fh * fw), lit.var % (fh * fw));
        images[ch].pixels[i] = if lit.positive { WHITE } else { BLACK };
    }
    Ok(images)
}

/// Inverse of [`term_to_image`].
pub fn image_to_term(images: &[RuleImage]) -> Result<Term> {
    let size = images.first().map_or(0, |im| im.pixels.len());
    let mut lits = Vec::new();
    for (ch, im) in images.iter().enumerate() {
        crate::error::check_dim(size, im.pixels.len())?;
        for (i, &v) in im.pixels.iter().enumerate() {
            let var = ch * size + i;
            if v == WHITE {
                lits.push(Literal::pos(var));
            } else if v == BLACK {
                lits.push(Literal::neg(var));
            }
        }
    }
    Term::from_literals(size * images.len(), &lits)
}

/// Sums the term images (+1 positive literal, -1 negative, 0 absent) per
/// channel and maps the sum `s` to `0.5 + s / (2 max|s|)`, so an absent
/// pixel stays gray and a single term keeps its ternary colors. An
/// all-zero sum renders all gray.
pub fn reduce_visualization(rule: &ConvRule) -> Vec<RuleImage> {
    let plane = rule.fh * rule.fw;
    let mut sums = vec![0i64; plane * rule.fc];
    for term in rule.formula.terms() {
        for lit in term.literals() {
            sums[lit.var] += if lit.positive { 1 } else { -1 };
        }
    }
    sums.chunks(plane)
        .map(|s| {
            let max = s.iter().map(|v| v.abs()).max().unwrap_or(0);
            let pixels = s
                .iter()
                .map(|&v| if max == 0 { GRAY } else { 0.5 + v as f32 / (2 * max) as f32 })
                .collect();
            RuleImage {
                width: rule.fw,
                height: rule.fh,
                pixels,
            }
        })
        .collect()
}
