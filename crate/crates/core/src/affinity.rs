//! Second-choice affinity between unseen documents and a set of known ones.
//!
//! A softmax classifier learns to tell the training documents apart from
//! their symbol features. Symbols of a new document are then classified,
//! and the class ranked second for each symbol is tallied: the document a
//! model most often "almost" picks is read as the closest known alphabet.

use std::fmt::Write as _;

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::FeatureSet;
use crate::error::{Error, Result};
use crate::rng;

const GRADIENT_BLOCK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierParams {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
}

impl Default for ClassifierParams {
    fn default() -> Self {
        Self {
            epochs: 300,
            learning_rate: 0.5,
            l2: 1e-4,
        }
    }
}

/// Multinomial logistic regression over standardized features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxClassifier {
    pub classes: Vec<String>,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// `classes x dim`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub training_accuracy: f64,
}

impl SoftmaxClassifier {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Per-class logits for one raw feature vector.
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        let z: Vec<f64> = x
            .iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect();
        logits(&self.weights, &self.bias, &z)
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        ranked(&self.scores(x))[0]
    }

    pub fn accuracy(&self, fs: &FeatureSet, class: usize) -> f64 {
        let hits = fs
            .vectors()
            .iter_rows()
            .filter(|r| self.predict(r) == class)
            .count();
        hits as f64 / fs.len() as f64
    }
}

fn logits(weights: &[f64], bias: &[f64], z: &[f64]) -> Vec<f64> {
    weights
        .chunks_exact(z.len())
        .zip(bias)
        .map(|(w, b)| b + w.iter().zip(z).map(|(a, x)| a * x).sum::<f64>())
        .collect()
}

fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    v.iter_mut().for_each(|x| *x /= total);
}

/// Class indices by descending score; equal scores keep class order.
pub fn ranked(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// Fits the classifier by full-batch gradient descent on cross-entropy.
/// Each training feature set is one class, in the given order.
pub fn train_symbol_classifier(
    training: &[FeatureSet],
    params: &ClassifierParams,
    seed: u64,
) -> Result<SoftmaxClassifier> {
    if training.len() < 2 {
        return Err(Error::Param(format!(
            "need at least 2 training documents, got {}",
            training.len()
        )));
    }
    let dim = training[0].dim();
    for fs in training {
        if fs.dim() != dim {
            return Err(Error::Dim {
                expected: dim,
                actual: fs.dim(),
            });
        }
    }
    if params.epochs == 0 || !(params.learning_rate > 0.0) || !(params.l2 >= 0.0) {
        return Err(Error::Param("invalid classifier hyper-parameters".into()));
    }
    let classes = training.len();
    let n: usize = training.iter().map(FeatureSet::len).sum();
    let mut mean = vec![0.0; dim];
    for fs in training {
        for row in fs.vectors().iter_rows() {
            mean.iter_mut()
                .zip(row)
                .for_each(|(m, v)| *m += v / n as f64);
        }
    }
    let mut scale = vec![0.0; dim];
    for fs in training {
        for row in fs.vectors().iter_rows() {
            scale
                .iter_mut()
                .zip(row.iter().zip(&mean))
                .for_each(|(s, (v, m))| *s += (v - m) * (v - m) / n as f64);
        }
    }
    scale.iter_mut().for_each(|s| {
        *s = s.sqrt();
        if *s < 1e-12 {
            *s = 1.0;
        }
    });
    let mut xs = Vec::with_capacity(n * dim);
    let mut ys = Vec::with_capacity(n);
    for (c, fs) in training.iter().enumerate() {
        for row in fs.vectors().iter_rows() {
            xs.extend(
                row.iter()
                    .zip(&mean)
                    .zip(&scale)
                    .map(|((v, m), s)| (v - m) / s),
            );
            ys.push(c);
        }
    }
    let mut rng = rng::seeded(seed);
    let init = Normal::new(0.0, 0.01).expect("valid normal");
    let mut weights: Vec<f64> = (0..classes * dim).map(|_| init.sample(&mut rng)).collect();
    let mut bias = vec![0.0; classes];
    for _ in 0..params.epochs {
        // Fixed-size blocks summed in order keep the result independent of
        // the thread pool.
        let partials: Vec<(Vec<f64>, Vec<f64>)> = xs
            .par_chunks(dim * GRADIENT_BLOCK)
            .zip(ys.par_chunks(GRADIENT_BLOCK))
            .map(|(xb, yb)| {
                let mut gw = vec![0.0; classes * dim];
                let mut gb = vec![0.0; classes];
                for (z, &y) in xb.chunks_exact(dim).zip(yb) {
                    let mut p = logits(&weights, &bias, z);
                    softmax_in_place(&mut p);
                    p[y] -= 1.0;
                    for (c, &err) in p.iter().enumerate() {
                        gb[c] += err;
                        gw[c * dim..(c + 1) * dim]
                            .iter_mut()
                            .zip(z)
                            .for_each(|(g, x)| *g += err * x);
                    }
                }
                (gw, gb)
            })
            .collect();
        let mut gw = vec![0.0; classes * dim];
        let mut gb = vec![0.0; classes];
        for (pw, pb) in partials {
            gw.iter_mut().zip(pw).for_each(|(a, g)| *a += g);
            gb.iter_mut().zip(pb).for_each(|(a, g)| *a += g);
        }
        let step = params.learning_rate / n as f64;
        for (w, g) in weights.iter_mut().zip(&gw) {
            *w -= step * g + params.learning_rate * params.l2 * *w;
        }
        bias.iter_mut().zip(&gb).for_each(|(b, g)| *b -= step * g);
    }
    let correct = xs
        .chunks_exact(dim)
        .zip(&ys)
        .filter(|(z, &y)| ranked(&logits(&weights, &bias, z))[0] == y)
        .count();
    Ok(SoftmaxClassifier {
        classes: training.iter().map(|f| f.document_id.clone()).collect(),
        mean,
        scale,
        weights,
        bias,
        training_accuracy: correct as f64 / n as f64,
    })
}

/// Share of test symbols whose second-ranked class is each training class.
pub fn second_choice_histogram(model: &SoftmaxClassifier, test: &FeatureSet) -> Result<Vec<f64>> {
    if test.dim() != model.dim() {
        return Err(Error::Dim {
            expected: model.dim(),
            actual: test.dim(),
        });
    }
    let mut counts = vec![0usize; model.classes.len()];
    for row in test.vectors().iter_rows() {
        counts[ranked(&model.scores(row))[1]] += 1;
    }
    Ok(counts
        .into_iter()
        .map(|c| c as f64 / test.len() as f64)
        .collect())
}

/// Test documents (rows) against training documents (columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinityTable {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl AffinityTable {
    pub fn build(model: &SoftmaxClassifier, tests: &[FeatureSet]) -> Result<Self> {
        let values = tests
            .iter()
            .map(|t| second_choice_histogram(model, t))
            .collect::<Result<_>>()?;
        Ok(AffinityTable {
            rows: tests.iter().map(|t| t.document_id.clone()).collect(),
            cols: model.classes.clone(),
            values,
        })
    }

    /// Header row of training ids, one line per test document.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("test\\train");
        for c in &self.cols {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (id, row) in self.rows.iter().zip(&self.values) {
            out.push_str(id);
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}
