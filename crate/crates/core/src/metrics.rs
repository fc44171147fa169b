//! Agreement metrics and the corrected resampled t-test for comparing
//! methods over repeated train/test splits.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Significance level used when reporting test decisions.
pub const ALPHA: f64 = 0.05;

fn agreement(a: &[bool], b: &[bool]) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::contract("cannot compare empty label lists"));
    }
    crate::error::check_dim(a.len(), b.len())?;
    Ok(a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / a.len() as f64)
}

/// Fraction of positions where two label lists agree.
pub fn similarity(pred_a: &[bool], pred_b: &[bool]) -> Result<f64> {
    agreement(pred_a, pred_b)
}

pub fn accuracy(pred: &[bool], truth: &[bool]) -> Result<f64> {
    agreement(pred, truth)
}

/// One metric value per run, plus the split sizes behind every run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunScores {
    pub values: Vec<f64>,
    pub n_train: usize,
    pub n_test: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TTest {
    pub t: f64,
    /// Two-sided.
    pub p: f64,
}

impl TTest {
    pub fn significant(&self, alpha: f64) -> bool {
        self.p < alpha
    }
}

fn mean_var(d: &[f64]) -> (f64, f64) {
    let j = d.len() as f64;
    let mean = d.iter().sum::<f64>() / j;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (j - 1.0);
    (mean, var)
}

/// Paired t-test whose variance term is inflated by `n_test / n_train` to
/// account for overlapping training sets across runs:
/// `t = mean(d) / sqrt((1/J + n_test/n_train) var(d))`, `J - 1` degrees
/// of freedom. Zero variance gives `t = 0, p = 1` for a zero mean and an
/// infinite `t` with `p = 0` otherwise.
pub fn corrected_resampled_ttest(a: &RunScores, b: &RunScores) -> Result<TTest> {
    if a.values.len() != b.values.len() {
        return Err(Error::contract(format!(
            "paired test over {} and {} runs",
            a.values.len(),
            b.values.len()
        )));
    }
    if a.values.len() < 2 {
        return Err(Error::contract("the t-test needs at least two runs"));
    }
    if (a.n_train, a.n_test) != (b.n_train, b.n_test) {
        return Err(Error::contract("paired runs must share their split sizes"));
    }
    if a.n_train == 0 {
        return Err(Error::contract("n_train must be positive"));
    }
    let d: Vec<f64> = a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect();
    let (mean, var) = mean_var(&d);
    if var == 0.0 {
        return Ok(if mean == 0.0 {
            TTest { t: 0.0, p: 1.0 }
        } else {
            TTest {
                t: f64::INFINITY.copysign(mean),
                p: 0.0,
            }
        });
    }
    let j = d.len() as f64;
    let t = mean / ((1.0 / j + a.n_test as f64 / a.n_train as f64) * var).sqrt();
    Ok(TTest {
        t,
        p: two_sided_p(t, j - 1.0),
    })
}

/// `P(|T| >= |t|)` for Student's t with `df` degrees of freedom.
pub fn two_sided_p(t: f64, df: f64) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0)
}
