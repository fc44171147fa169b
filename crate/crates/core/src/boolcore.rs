//! Bit-packed boolean instances, datasets and k-term DNF formulas.
//!
//! Every vector of `n` booleans is stored as `ceil(n / 64)` machine words,
//! bit `i` living in word `i / 64` at position `i % 64`. Padding bits beyond
//! `n` are always zero so that whole-word mask arithmetic never needs a
//! special case for the tail.
//!
//! The formula text format is
//!
//! ```text
//! formula := term (" | " term)*
//! term    := "(" [lit (" & " lit)*] ")"
//! lit     := ["!"] "x" <0-based index>
//! ```
//!
//! The empty term `()` is the vacuous conjunction and covers every instance.

use std::fmt;

use rand::Rng;

use crate::error::{check_dim, Error, Result};

pub const WORD_BITS: usize = 64;

#[inline]
pub fn words_for(n: usize) -> usize {
    n.div_ceil(WORD_BITS)
}

/// Mask of the valid bits in the last word of an `n`-bit vector.
#[inline]
pub fn tail_mask(n: usize) -> u64 {
    match n % WORD_BITS {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    }
}

#[inline]
pub fn get_bit(words: &[u64], i: usize) -> bool {
    (words[i / WORD_BITS] >> (i % WORD_BITS)) & 1 == 1
}

#[inline]
pub fn set_bit(words: &mut [u64], i: usize, value: bool) {
    let mask = 1u64 << (i % WORD_BITS);
    if value {
        words[i / WORD_BITS] |= mask;
    } else {
        words[i / WORD_BITS] &= !mask;
    }
}

#[inline]
pub fn count_ones(words: &[u64]) -> usize {
    words.iter().map(|w| w.count_ones() as usize).sum()
}

/// Iterates the indices of set bits in ascending order.
pub fn iter_ones(words: &[u64]) -> impl Iterator<Item = usize> + '_ {
    words.iter().enumerate().flat_map(|(wi, &w)| {
        let mut rest = w;
        std::iter::from_fn(move || {
            if rest == 0 {
                None
            } else {
                let tz = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(wi * WORD_BITS + tz)
            }
        })
    })
}

/// Index of the `rank`-th set bit (0-based), if there are that many.
pub fn select_one(words: &[u64], mut rank: usize) -> Option<usize> {
    for (wi, &w) in words.iter().enumerate() {
        let ones = w.count_ones() as usize;
        if rank < ones {
            let mut rest = w;
            for _ in 0..rank {
                rest &= rest - 1;
            }
            return Some(wi * WORD_BITS + rest.trailing_zeros() as usize);
        }
        rank -= ones;
    }
    None
}

/// An assignment to `n` boolean variables.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitInstance {
    n: usize,
    bits: Vec<u64>,
}

impl BitInstance {
    pub fn zeros(n: usize) -> Self {
        assert!(n > 0, "a bit instance needs at least one variable");
        BitInstance {
            n,
            bits: vec![0; words_for(n)],
        }
    }

    pub fn from_bools(values: &[bool]) -> Self {
        let mut inst = BitInstance::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            if v {
                set_bit(&mut inst.bits, i, true);
            }
        }
        inst
    }

    /// Builds an instance from packed words, clearing any padding bits.
    pub fn from_words(n: usize, mut bits: Vec<u64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::contract("bit instance with zero variables"));
        }
        check_dim(words_for(n), bits.len())?;
        if let Some(last) = bits.last_mut() {
            *last &= tail_mask(n);
        }
        Ok(BitInstance { n, bits })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn words(&self) -> &[u64] {
        &self.bits
    }

    /// Callers must leave the padding bits zero.
    pub(crate) fn words_mut(&mut self) -> &mut [u64] {
        &mut self.bits
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.n);
        get_bit(&self.bits, i)
    }

    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.n);
        set_bit(&mut self.bits, i, value);
    }

    pub fn count_ones(&self) -> usize {
        count_ones(&self.bits)
    }

    pub fn to_bools(&self) -> Vec<bool> {
        (0..self.n).map(|i| get_bit(&self.bits, i)).collect()
    }
}

impl fmt::Debug for BitInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitInstance(")?;
        for i in 0..self.n {
            f.write_str(if get_bit(&self.bits, i) { "1" } else { "0" })?;
        }
        write!(f, ")")
    }
}

/// Instances of uniform width with one boolean label each.
///
/// Rows are stored contiguously; `row(i)` hands out the packed words of
/// instance `i` without allocating.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitDataset {
    n: usize,
    len: usize,
    stride: usize,
    rows: Vec<u64>,
    labels: Vec<u64>,
}

impl BitDataset {
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "a bit dataset needs at least one variable");
        BitDataset {
            n,
            len: 0,
            stride: words_for(n),
            rows: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn with_capacity(n: usize, capacity: usize) -> Self {
        let mut ds = BitDataset::new(n);
        ds.rows.reserve(capacity * ds.stride);
        ds.labels.reserve(words_for(capacity.max(1)));
        ds
    }

    pub fn from_instances(instances: &[BitInstance], labels: &[bool]) -> Result<Self> {
        check_dim(instances.len(), labels.len())?;
        let first = instances
            .first()
            .ok_or_else(|| Error::contract("cannot infer width of an empty dataset"))?;
        let mut ds = BitDataset::with_capacity(first.n(), instances.len());
        for (inst, &label) in instances.iter().zip(labels) {
            ds.push(inst, label)?;
        }
        Ok(ds)
    }

    pub fn push(&mut self, inst: &BitInstance, label: bool) -> Result<()> {
        check_dim(self.n, inst.n())?;
        self.push_words(inst.words(), label);
        Ok(())
    }

    /// Appends a row given as packed words; padding must already be zero.
    pub(crate) fn push_words(&mut self, words: &[u64], label: bool) {
        debug_assert_eq!(words.len(), self.stride);
        debug_assert_eq!(words[self.stride - 1] & !tail_mask(self.n), 0);
        self.rows.extend_from_slice(words);
        if self.len % WORD_BITS == 0 {
            self.labels.push(0);
        }
        set_bit(&mut self.labels, self.len, label);
        self.len += 1;
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words_per_row(&self) -> usize {
        self.stride
    }

    pub fn row(&self, i: usize) -> &[u64] {
        &self.rows[i * self.stride..(i + 1) * self.stride]
    }

    pub fn instance(&self, i: usize) -> BitInstance {
        BitInstance {
            n: self.n,
            bits: self.row(i).to_vec(),
        }
    }

    pub fn label(&self, i: usize) -> bool {
        assert!(i < self.len);
        get_bit(&self.labels, i)
    }

    /// Packed labels, one bit per instance, padding zero.
    pub fn label_words(&self) -> &[u64] {
        &self.labels
    }

    pub fn labels(&self) -> Vec<bool> {
        (0..self.len).map(|i| self.label(i)).collect()
    }

    /// Replaces every label, keeping the rows.
    pub fn set_labels(&mut self, labels: &[bool]) -> Result<()> {
        check_dim(self.len, labels.len())?;
        self.labels.fill(0);
        for (i, &l) in labels.iter().enumerate() {
            set_bit(&mut self.labels, i, l);
        }
        Ok(())
    }

    pub fn positives(&self) -> usize {
        count_ones(&self.labels)
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[u64], bool)> + '_ {
        (0..self.len).map(move |i| (self.row(i), self.label(i)))
    }

    /// Copies the rows at `indices` (in that order) into a new dataset.
    pub fn select(&self, indices: &[usize]) -> BitDataset {
        let mut out = BitDataset::with_capacity(self.n, indices.len());
        for &i in indices {
            out.push_words(self.row(i), self.label(i));
        }
        out
    }

    /// Transposed view: one bitset over instances per variable.
    pub fn columns(&self) -> BitColumns {
        BitColumns::from_dataset(self)
    }
}

/// Column-major (variable-major) transposition of a [`BitDataset`].
///
/// Column `v` is a bitset over instances with bit `i` set iff instance `i`
/// assigns true to variable `v`. Term coverage over the whole dataset is
/// then an AND of at most `n` columns, independent of `n` for short terms.
#[derive(Clone, Debug)]
pub struct BitColumns {
    n: usize,
    rows: usize,
    words: usize,
    cols: Vec<u64>,
}

impl BitColumns {
    pub fn from_dataset(data: &BitDataset) -> Self {
        let words = words_for(data.len().max(1));
        let mut cols = vec![0u64; data.n() * words];
        for i in 0..data.len() {
            let (wi, bit) = (i / WORD_BITS, 1u64 << (i % WORD_BITS));
            for v in iter_ones(data.row(i)) {
                cols[v * words + wi] |= bit;
            }
        }
        BitColumns {
            n: data.n(),
            rows: data.len(),
            words,
            cols,
        }
    }

    pub(crate) fn from_raw(n: usize, rows: usize, cols: Vec<u64>) -> Self {
        let words = words_for(rows.max(1));
        debug_assert_eq!(cols.len(), n * words);
        BitColumns {
            n,
            rows,
            words,
            cols,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn words(&self) -> usize {
        self.words
    }

    pub fn column(&self, v: usize) -> &[u64] {
        &self.cols[v * self.words..(v + 1) * self.words]
    }

    pub fn value(&self, row: usize, v: usize) -> bool {
        get_bit(self.column(v), row)
    }

    /// Writes the coverage bitset of `term` over all rows into `out`.
    pub fn term_coverage_into(&self, term: &Term, out: &mut [u64]) {
        debug_assert_eq!(term.n(), self.n);
        debug_assert_eq!(out.len(), self.words);
        out.fill(u64::MAX);
        for v in iter_ones(&term.pos) {
            for (o, c) in out.iter_mut().zip(self.column(v)) {
                *o &= c;
            }
        }
        for v in iter_ones(&term.neg) {
            for (o, c) in out.iter_mut().zip(self.column(v)) {
                *o &= !c;
            }
        }
        self.clear_padding(out);
    }

    pub fn term_coverage(&self, term: &Term) -> Vec<u64> {
        let mut out = vec![0; self.words];
        self.term_coverage_into(term, &mut out);
        out
    }

    /// Bitset of rows on which `formula` evaluates to true.
    pub fn formula_output(&self, formula: &DnfFormula) -> Vec<u64> {
        let mut out = vec![0; self.words];
        let mut cov = vec![0; self.words];
        for term in formula.terms() {
            self.term_coverage_into(term, &mut cov);
            for (o, c) in out.iter_mut().zip(&cov) {
                *o |= c;
            }
        }
        out
    }

    pub(crate) fn clear_padding(&self, bits: &mut [u64]) {
        if self.rows == 0 {
            bits.fill(0);
        } else if let Some(last) = bits.last_mut() {
            *last &= tail_mask(self.rows);
        }
    }
}

/// A literal: variable index plus polarity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Literal {
    pub var: usize,
    pub positive: bool,
}

impl Literal {
    pub fn pos(var: usize) -> Self {
        Literal {
            var,
            positive: true,
        }
    }

    pub fn neg(var: usize) -> Self {
        Literal {
            var,
            positive: false,
        }
    }

    /// Whether an instance with `value` at `var` satisfies this literal.
    pub fn satisfied_by(&self, value: bool) -> bool {
        value == self.positive
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.positive {
            write!(f, "x{}", self.var)
        } else {
            write!(f, "!x{}", self.var)
        }
    }
}

/// A conjunction of literals stored as positive and negative masks.
///
/// Invariant: `pos & neg == 0`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Term {
    n: usize,
    pos: Vec<u64>,
    neg: Vec<u64>,
}

impl Term {
    /// The vacuous term, true everywhere.
    pub fn empty(n: usize) -> Self {
        Term {
            n,
            pos: vec![0; words_for(n)],
            neg: vec![0; words_for(n)],
        }
    }

    pub fn from_literals(n: usize, literals: &[Literal]) -> Result<Self> {
        let mut term = Term::empty(n);
        for &lit in literals {
            term.add_literal(lit)?;
        }
        Ok(term)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pos_mask(&self) -> &[u64] {
        &self.pos
    }

    pub fn neg_mask(&self) -> &[u64] {
        &self.neg
    }

    /// Number of literals (`m_i` in the DNF definition).
    pub fn len(&self) -> usize {
        count_ones(&self.pos) + count_ones(&self.neg)
    }

    pub fn is_empty(&self) -> bool {
        self.pos.iter().chain(&self.neg).all(|&w| w == 0)
    }

    pub fn mentions(&self, var: usize) -> bool {
        get_bit(&self.pos, var) || get_bit(&self.neg, var)
    }

    pub fn contains(&self, lit: Literal) -> bool {
        if lit.positive {
            get_bit(&self.pos, lit.var)
        } else {
            get_bit(&self.neg, lit.var)
        }
    }

    /// Literals in ascending variable order.
    pub fn literals(&self) -> Vec<Literal> {
        let mut out: Vec<Literal> = iter_ones(&self.pos)
            .map(Literal::pos)
            .chain(iter_ones(&self.neg).map(Literal::neg))
            .collect();
        out.sort_unstable_by_key(|l| l.var);
        out
    }

    pub fn add_literal(&mut self, lit: Literal) -> Result<()> {
        if lit.var >= self.n {
            return Err(Error::contract(format!(
                "literal x{} out of range for {} variables",
                lit.var, self.n
            )));
        }
        let (same, other) = if lit.positive {
            (&mut self.pos, &self.neg)
        } else {
            (&mut self.neg, &self.pos)
        };
        if get_bit(other, lit.var) {
            return Err(Error::contract(format!(
                "literal {lit} contradicts an existing literal"
            )));
        }
        set_bit(same, lit.var, true);
        Ok(())
    }

    pub fn remove_literal(&mut self, lit: Literal) {
        if lit.positive {
            set_bit(&mut self.pos, lit.var, false);
        } else {
            set_bit(&mut self.neg, lit.var, false);
        }
    }

    /// Drops every literal the instance violates; afterwards the term covers it.
    pub(crate) fn remove_violated(&mut self, inst: &[u64]) {
        for ((p, q), &x) in self.pos.iter_mut().zip(self.neg.iter_mut()).zip(inst) {
            *p &= x;
            *q &= !x;
        }
    }

    #[inline]
    pub(crate) fn covers_words(&self, inst: &[u64]) -> bool {
        self.pos
            .iter()
            .zip(&self.neg)
            .zip(inst)
            .all(|((&p, &q), &x)| x & p == p && x & q == 0)
    }

    #[inline]
    pub(crate) fn violated_count_words(&self, inst: &[u64]) -> usize {
        self.pos
            .iter()
            .zip(&self.neg)
            .zip(inst)
            .map(|((&p, &q), &x)| ((p & !x).count_ones() + (q & x).count_ones()) as usize)
            .sum()
    }

    pub(crate) fn is_consistent(&self) -> bool {
        self.pos.iter().zip(&self.neg).all(|(p, q)| p & q == 0)
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, lit) in self.literals().iter().enumerate() {
            if i > 0 {
                f.write_str(" & ")?;
            }
            write!(f, "{lit}")?;
        }
        f.write_str(")")
    }
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Term{self}")
    }
}

/// A disjunction of exactly `k` terms over `n` variables.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct DnfFormula {
    n: usize,
    terms: Vec<Term>,
}

impl DnfFormula {
    pub fn new(n: usize, terms: Vec<Term>) -> Result<Self> {
        if n == 0 || terms.is_empty() {
            return Err(Error::contract("a formula needs n >= 1 and k >= 1"));
        }
        for term in &terms {
            check_dim(n, term.n())?;
        }
        Ok(DnfFormula { n, terms })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub(crate) fn term_mut(&mut self, i: usize) -> &mut Term {
        &mut self.terms[i]
    }

    #[inline]
    pub(crate) fn eval_words(&self, inst: &[u64]) -> bool {
        self.terms.iter().any(|t| t.covers_words(inst))
    }

    pub fn eval(&self, inst: &BitInstance) -> Result<bool> {
        eval_formula(self, inst)
    }

    /// Total literal count over all terms.
    pub fn literal_count(&self) -> usize {
        self.terms.iter().map(Term::len).sum()
    }

    /// Parses the text format. `n` must be supplied since the text does not
    /// carry the variable count.
    pub fn parse(text: &str, n: usize) -> Result<Self> {
        parse_formula(text, n)
    }
}

impl fmt::Display for DnfFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, term) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(" | ")?;
            }
            write!(f, "{term}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for DnfFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DnfFormula[n={}, k={}]({self})", self.n, self.k())
    }
}

pub fn eval_term(term: &Term, inst: &BitInstance) -> Result<bool> {
    check_dim(term.n(), inst.n())?;
    Ok(term.covers_words(inst.words()))
}

pub fn eval_formula(f: &DnfFormula, inst: &BitInstance) -> Result<bool> {
    check_dim(f.n(), inst.n())?;
    Ok(f.eval_words(inst.words()))
}

/// Number of instances on which `f` disagrees with the label.
pub fn score(f: &DnfFormula, data: &BitDataset) -> Result<usize> {
    check_dim(f.n(), data.n())?;
    Ok(data
        .rows()
        .filter(|&(row, label)| f.eval_words(row) != label)
        .count())
}

/// Number of literals of `term` that `inst` violates.
pub fn literal_diff_count(term: &Term, inst: &BitInstance) -> Result<usize> {
    check_dim(term.n(), inst.n())?;
    Ok(term.violated_count_words(inst.words()))
}

/// A random term: every variable is independently a positive literal, a
/// negative literal, or absent, each with probability 1/3.
pub fn random_term<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Term {
    let mut term = Term::empty(n);
    for v in 0..n {
        match rng.random_range(0..3u8) {
            0 => set_bit(&mut term.pos, v, true),
            1 => set_bit(&mut term.neg, v, true),
            _ => {}
        }
    }
    term
}

pub fn random_formula<R: Rng + ?Sized>(k: usize, n: usize, rng: &mut R) -> Result<DnfFormula> {
    if k == 0 || n == 0 {
        return Err(Error::contract(format!(
            "random formula needs k >= 1 and n >= 1 (got k={k}, n={n})"
        )));
    }
    let terms = (0..k).map(|_| random_term(n, rng)).collect();
    DnfFormula::new(n, terms)
}

pub fn parse_formula(text: &str, n: usize) -> Result<DnfFormula> {
    let text = text.trim();
    let mut terms = Vec::new();
    for chunk in text.split(" | ") {
        let chunk = chunk.trim();
        let inner = chunk
            .strip_prefix('(')
            .and_then(|c| c.strip_suffix(')'))
            .ok_or_else(|| Error::parse(1, format!("term `{chunk}` is not parenthesised")))?;
        let mut term = Term::empty(n);
        if !inner.trim().is_empty() {
            for lit in inner.split(" & ") {
                let lit = lit.trim();
                let (positive, rest) = match lit.strip_prefix('!') {
                    Some(rest) => (false, rest),
                    None => (true, lit),
                };
                let var: usize = rest
                    .strip_prefix('x')
                    .and_then(|d| d.parse().ok())
                    .ok_or_else(|| Error::parse(1, format!("bad literal `{lit}`")))?;
                term.add_literal(Literal { var, positive })
                    .map_err(|e| Error::parse(1, e.to_string()))?;
            }
        }
        terms.push(term);
    }
    DnfFormula::new(n, terms)
}
