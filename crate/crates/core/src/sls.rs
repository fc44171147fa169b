//! Stochastic local search for k-term DNF formulas.
//!
//! The search repairs a candidate formula one misclassified training
//! instance at a time:
//!
//! * a missed positive instance loosens a term (one random literal, or every
//!   literal the instance violates, is removed);
//! * a falsely covered negative instance tightens a covering term by one
//!   literal that the instance violates, picked at random or greedily on a
//!   random batch of training instances.
//!
//! The candidate with the lowest validation score seen so far is returned.
//! When the current search trajectory has not improved on its own best
//! validation score for `restart_after` iterations, the candidate is
//! replaced by a fresh random formula.
//!
//! Coverage of every term is kept as a bitset over instances, computed from
//! the column-major [`BitColumns`] view, so one iteration costs one term
//! re-evaluation over the data rather than `k`.

use rand::Rng;

use crate::boolcore::{
    get_bit, random_formula, select_one, tail_mask, words_for,
    BitColumns, BitDataset, DnfFormula, Literal,
};
use crate::error::{check_dim, Error, Result};
use crate::rng::rng_from_seed;

#[derive(Clone, Debug, PartialEq)]
pub struct SlsParams {
    pub k: usize,
    pub max_iteration: usize,
    /// Probability of loosening a uniformly drawn term instead of the closest one.
    pub p_g1: f64,
    /// Probability of removing one random literal instead of all violated ones.
    pub p_g2: f64,
    /// Probability of adding a random literal instead of the greedy best one.
    pub p_s: f64,
    pub batch_size: usize,
    pub restart_after: usize,
    pub seed: u64,
    /// Record `(iteration, training score)` for every iteration.
    pub record_trace: bool,
}

impl Default for SlsParams {
    fn default() -> Self {
        SlsParams {
            k: 40,
            max_iteration: 10_000,
            p_g1: 0.5,
            p_g2: 0.5,
            p_s: 0.5,
            batch_size: 64,
            restart_after: 600,
            seed: 0,
            record_trace: false,
        }
    }
}

impl SlsParams {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p_g1", self.p_g1), ("p_g2", self.p_g2), ("p_s", self.p_s)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::contract(format!("{name} = {p} is not a probability")));
            }
        }
        if self.k == 0 {
            return Err(Error::contract("k must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::contract("batch_size must be at least 1"));
        }
        if self.restart_after == 0 {
            return Err(Error::contract("restart_after must be at least 1"));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        SlsParams {
            seed,
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlsResult {
    pub formula: DnfFormula,
    pub best_validation_score: usize,
    pub iterations_used: usize,
    pub restarts: usize,
    pub train_score_trace: Option<Vec<(usize, usize)>>,
}

/// Per-dataset search state: term coverages and the formula's output.
struct Coverage {
    cols: BitColumns,
    labels: Vec<u64>,
    words: usize,
    /// `k` bitsets of `words` words each.
    terms: Vec<u64>,
    covered: Vec<u64>,
}

impl Coverage {
    fn new(data: &BitDataset, formula: &DnfFormula) -> Self {
        let cols = data.columns();
        let words = cols.words();
        let mut labels = data.label_words().to_vec();
        labels.resize(words, 0);
        let mut cov = Coverage {
            cols,
            labels,
            words,
            terms: vec![0; formula.k() * words],
            covered: vec![0; words],
        };
        cov.refresh_all(formula);
        cov
    }

    fn term(&self, t: usize) -> &[u64] {
        &self.terms[t * self.words..(t + 1) * self.words]
    }

    fn refresh_term(&mut self, formula: &DnfFormula, t: usize) {
        let (w, cols) = (self.words, &self.cols);
        cols.term_coverage_into(&formula.terms()[t], &mut self.terms[t * w..(t + 1) * w]);
        self.refresh_output();
    }

    fn refresh_all(&mut self, formula: &DnfFormula) {
        let w = self.words;
        for (t, term) in formula.terms().iter().enumerate() {
            self.cols
                .term_coverage_into(term, &mut self.terms[t * w..(t + 1) * w]);
        }
        self.refresh_output();
    }

    fn refresh_output(&mut self) {
        self.covered.fill(0);
        for chunk in self.terms.chunks_exact(self.words) {
            for (o, c) in self.covered.iter_mut().zip(chunk) {
                *o |= c;
            }
        }
    }

    fn score(&self) -> usize {
        self.covered
            .iter()
            .zip(&self.labels)
            .map(|(c, l)| (c ^ l).count_ones() as usize)
            .sum()
    }

    /// Picks a uniformly random misclassified row, if any.
    fn random_miss<R: Rng>(&self, rng: &mut R) -> Option<usize> {
        let misses = self.score();
        if misses == 0 {
            return None;
        }
        let rank = rng.random_range(0..misses);
        let mut remaining = rank;
        for (wi, (c, l)) in self.covered.iter().zip(&self.labels).enumerate() {
            let w = c ^ l;
            let ones = w.count_ones() as usize;
            if remaining < ones {
                return select_one(&[w], remaining).map(|b| wi * 64 + b);
            }
            remaining -= ones;
        }
        unreachable!("rank {rank} below miss count {misses}")
    }
}

/// Runs the local search. `validation` may be empty, in which case the
/// training set doubles as the validation set.
pub fn sls_search(train: &BitDataset, validation: &BitDataset, params: &SlsParams) -> Result<SlsResult> {
    params.validate()?;
    if train.is_empty() {
        return Err(Error::contract("training set is empty"));
    }
    if !validation.is_empty() {
        check_dim(train.n(), validation.n())?;
    }
    let n = train.n();
    let k = params.k;
    let mut rng = rng_from_seed(params.seed);

    let mut formula = random_formula(k, n, &mut rng)?;
    let mut train_cov = Coverage::new(train, &formula);
    let mut val_cov = (!validation.is_empty()).then(|| Coverage::new(validation, &formula));

    let mut optimal = formula.clone();
    let mut min_score = usize::MAX;
    let mut iteration = 0;
    // best score since the last restart; a fresh trajectory is judged on
    // its own progress, not against the global best
    let mut run_best = usize::MAX;
    let mut since_improvement = 0;
    let mut restarts = 0;
    let mut trace = params.record_trace.then(Vec::new);

    while iteration < params.max_iteration && min_score > 0 {
        iteration += 1;
        let new_score = match &val_cov {
            Some(v) => v.score(),
            None => train_cov.score(),
        };
        if new_score < min_score {
            min_score = new_score;
            optimal = formula.clone();
        }
        if new_score < run_best {
            run_best = new_score;
            since_improvement = 0;
        } else {
            since_improvement += 1;
        }
        if let Some(trace) = trace.as_mut() {
            trace.push((iteration, train_cov.score()));
        }
        if min_score == 0 {
            break;
        }
        if since_improvement >= params.restart_after {
            formula = random_formula(k, n, &mut rng)?;
            train_cov.refresh_all(&formula);
            if let Some(v) = val_cov.as_mut() {
                v.refresh_all(&formula);
            }
            run_best = usize::MAX;
            since_improvement = 0;
            restarts += 1;
            continue;
        }

        let Some(missed) = train_cov.random_miss(&mut rng) else {
            break;
        };
        let inst = train.row(missed);
        let changed = if train.label(missed) {
            loosen(&mut formula, inst, params, &mut rng)
        } else {
            tighten(&mut formula, inst, missed, &train_cov, params, &mut rng)
        };
        if let Some(t) = changed {
            debug_assert!(formula.terms()[t].is_consistent());
            train_cov.refresh_term(&formula, t);
            if let Some(v) = val_cov.as_mut() {
                v.refresh_term(&formula, t);
            }
        }
    }

    if min_score == usize::MAX {
        // max_iteration == 0: the initial candidate is the answer
        min_score = match &val_cov {
            Some(v) => v.score(),
            None => train_cov.score(),
        };
    }

    Ok(SlsResult {
        formula: optimal,
        best_validation_score: min_score,
        iterations_used: iteration,
        restarts,
        train_score_trace: trace,
    })
}

/// Positive-label repair. Returns the index of the modified term.
fn loosen<R: Rng>(formula: &mut DnfFormula, inst: &[u64], params: &SlsParams, rng: &mut R) -> Option<usize> {
    let k = formula.k();
    let t = if rng.random_bool(params.p_g1) {
        rng.random_range(0..k)
    } else {
        let mut best = (usize::MAX, 0);
        for (i, term) in formula.terms().iter().enumerate() {
            let d = term.violated_count_words(inst);
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    };
    if rng.random_bool(params.p_g2) {
        let literals = formula.terms()[t].literals();
        if literals.is_empty() {
            return None;
        }
        let lit = literals[rng.random_range(0..literals.len())];
        formula.term_mut(t).remove_literal(lit);
    } else {
        formula.term_mut(t).remove_violated(inst);
        debug_assert!(formula.terms()[t].covers_words(inst));
    }
    Some(t)
}

/// Negative-label repair: add to a covering term one literal the instance
/// violates. Returns the index of the modified term.
fn tighten<R: Rng>(
    formula: &mut DnfFormula,
    inst: &[u64],
    row: usize,
    train: &Coverage,
    params: &SlsParams,
    rng: &mut R,
) -> Option<usize> {
    let k = formula.k();
    let n = formula.n();
    let covering: Vec<usize> = (0..k).filter(|&t| get_bit(train.term(t), row)).collect();
    debug_assert!(!covering.is_empty());
    let t = covering[rng.random_range(0..covering.len())];
    let term = &formula.terms()[t];

    let candidates: Vec<Literal> = (0..n)
        .filter(|&v| !term.mentions(v))
        .map(|v| Literal {
            var: v,
            positive: !get_bit(inst, v),
        })
        .collect();
    if candidates.is_empty() {
        // the term is exactly this instance's minterm; no single literal excludes it
        return None;
    }

    let lit = if rng.random_bool(params.p_s) {
        candidates[rng.random_range(0..candidates.len())]
    } else {
        greedy_literal(&candidates, t, train, params.batch_size, rng)
    };
    formula
        .term_mut(t)
        .add_literal(lit)
        .expect("candidate literals never contradict the term");
    debug_assert!(!formula.terms()[t].covers_words(inst));
    Some(t)
}

/// The candidate whose addition to term `t` minimises the score on a batch
/// of training rows drawn uniformly with replacement. Ties go to the lowest
/// variable index.
fn greedy_literal<R: Rng>(
    candidates: &[Literal],
    t: usize,
    train: &Coverage,
    batch_size: usize,
    rng: &mut R,
) -> Literal {
    let rows = train.cols.rows();
    let batch: Vec<usize> = (0..batch_size).map(|_| rng.random_range(0..rows)).collect();
    let words = words_for(batch_size);
    let mut labels = vec![0u64; words];
    let mut others = vec![0u64; words];
    let mut own = vec![0u64; words];
    let k = train.terms.len() / train.words;
    for (b, &r) in batch.iter().enumerate() {
        let bit = 1u64 << (b % 64);
        if get_bit(&train.labels, r) {
            labels[b / 64] |= bit;
        }
        if get_bit(train.term(t), r) {
            own[b / 64] |= bit;
        }
        if (0..k).any(|o| o != t && get_bit(train.term(o), r)) {
            others[b / 64] |= bit;
        }
    }
    let last = tail_mask(batch_size);

    let mut lit_bits = vec![0u64; words];
    let mut best: Option<(usize, Literal)> = None;
    for &lit in candidates {
        let col = train.cols.column(lit.var);
        lit_bits.fill(0);
        for (b, &r) in batch.iter().enumerate() {
            if get_bit(col, r) == lit.positive {
                lit_bits[b / 64] |= 1u64 << (b % 64);
            }
        }
        let mut errors = 0;
        for w in 0..words {
            let out = others[w] | (own[w] & lit_bits[w]);
            let mask = if w + 1 == words { last } else { u64::MAX };
            errors += ((out ^ labels[w]) & mask).count_ones() as usize;
        }
        if best.is_none_or(|(e, _)| errors < e) {
            best = Some((errors, lit));
        }
    }
    best.expect("candidates is non-empty").1
}

/// Same result as [`crate::boolcore::score`], evaluated in chunks of
/// `batch_size` rows.
pub fn score_batchwise(f: &DnfFormula, data: &BitDataset, batch_size: usize) -> Result<usize> {
    if batch_size == 0 {
        return Err(Error::contract("batch_size must be at least 1"));
    }
    check_dim(f.n(), data.n())?;
    let mut total = 0;
    let mut start = 0;
    while start < data.len() {
        let end = (start + batch_size).min(data.len());
        total += (start..end)
            .filter(|&i| f.eval_words(data.row(i)) != data.label(i))
            .count();
        start = end;
    }
    Ok(total)
}

/// Fraction of rows of `data` whose label `f` reproduces.
pub fn fit_rate(f: &DnfFormula, data: &BitDataset) -> Result<f64> {
    check_dim(f.n(), data.n())?;
    if data.is_empty() {
        return Ok(1.0);
    }
    let cols = data.columns();
    let out = cols.formula_output(f);
    let mut labels = data.label_words().to_vec();
    labels.resize(out.len(), 0);
    let wrong: usize = out.iter().zip(&labels).map(|(o, l)| (o ^ l).count_ones() as usize).sum();
    Ok(1.0 - wrong as f64 / data.len() as f64)
}
