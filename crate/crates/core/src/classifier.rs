//! Linear multi-label disease classifier trained with binary cross entropy
//! over pooled patch features, plus the closed-form class activation map.
//!
//! For a linear head over patch features the usual gradient-weighted
//! activation map degenerates to the per-patch score `<w_class, f_p>`, so the
//! map is computed exactly: ReLU the scores, min-max normalize over patches,
//! and broadcast each patch score over its pixel block.
//!
//! Persistence: magic `AMMRGCLF`, version u16, class count u32, feature
//! dimension u32, then weights and bias as little-endian f64.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::metrics::{LabelVector, NUM_DISEASES};
use crate::numerics::{dot_slices, Matrix, Vector};
use crate::roi::ActivationMap;

pub const CLASSIFIER_MAGIC: [u8; 8] = *b"AMMRGCLF";
pub const CLASSIFIER_VERSION: u16 = 1;

const PROB_CLAMP: f64 = 1e-12;

/// 14-way multi-label linear classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    weights: Matrix,
    bias: Vector,
}

/// Full-batch gradient descent settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 5e-5, epochs: 200, seed: 0 }
    }
}

/// Trained classifier together with the per-epoch mean loss.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub classifier: LinearClassifier,
    pub loss_trace: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LinearClassifier {
    pub fn new(weights: Matrix, bias: Vector) -> Result<Self> {
        if weights.rows() != NUM_DISEASES || bias.dim() != NUM_DISEASES {
            return Err(Error::Dimension(format!(
                "classifier must have {NUM_DISEASES} rows, got weights {}x{} and bias {}",
                weights.rows(),
                weights.cols(),
                bias.dim()
            )));
        }
        Ok(Self { weights, bias })
    }

    /// Small random initialization, deterministic per seed.
    pub fn init(feature_dim: usize, seed: u64) -> Result<Self> {
        if feature_dim == 0 {
            return Err(Error::Dimension("feature dimension must be positive".into()));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let dist = Normal::new(0.0, 0.01).expect("valid normal");
        let w: Vec<f64> = (0..NUM_DISEASES * feature_dim).map(|_| dist.sample(&mut rng)).collect();
        let b: Vec<f64> = (0..NUM_DISEASES).map(|_| dist.sample(&mut rng)).collect();
        Ok(Self { weights: Matrix::new(NUM_DISEASES, feature_dim, w)?, bias: Vector::new(b)? })
    }

    pub fn feature_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> &Vector {
        &self.bias
    }

    pub fn class_weights(&self, class_id: usize) -> &[f64] {
        self.weights.row(class_id)
    }

    /// `sigmoid(W f + b)`, one probability per disease.
    pub fn predict_probs(&self, pooled_feature: &Vector) -> Result<Vector> {
        if pooled_feature.dim() != self.weights.cols() {
            return Err(Error::Dimension(format!(
                "feature dimension {} does not match classifier dimension {}",
                pooled_feature.dim(),
                self.weights.cols()
            )));
        }
        let probs: Vec<f64> = (0..NUM_DISEASES)
            .map(|k| sigmoid(dot_slices(self.weights.row(k), pooled_feature.as_slice()) + self.bias.get(k)))
            .collect();
        Vector::new(probs)
    }

    pub fn predict_labels(&self, pooled_feature: &Vector, threshold: f64) -> Result<LabelVector> {
        let probs = self.predict_probs(pooled_feature)?;
        let mut bits = [false; NUM_DISEASES];
        for (i, slot) in bits.iter_mut().enumerate() {
            *slot = probs.get(i) > threshold;
        }
        Ok(LabelVector::new(bits))
    }

    /// Class activation map over a square patch grid. Per-patch scores are
    /// `max(0, <w_class, f_p>)`, min-max normalized over patches, then
    /// broadcast over each patch's pixel block. All-equal scores give the
    /// all-zero map.
    pub fn linear_cam(&self, patch_features: &Matrix, class_id: usize, patch_size: usize) -> Result<ActivationMap> {
        if class_id >= NUM_DISEASES {
            return Err(Error::InvalidInput(format!("class_id {class_id} out of range")));
        }
        if patch_features.cols() != self.weights.cols() {
            return Err(Error::Dimension(format!(
                "patch feature dimension {} does not match classifier dimension {}",
                patch_features.cols(),
                self.weights.cols()
            )));
        }
        let n_patches = patch_features.rows();
        let grid = (n_patches as f64).sqrt().round() as usize;
        if grid * grid != n_patches {
            return Err(Error::Dimension(format!(
                "{n_patches} patches do not form a square grid"
            )));
        }
        let w = self.weights.row(class_id);
        let scores: Vec<f64> = (0..n_patches)
            .map(|p| dot_slices(w, patch_features.row(p)).max(0.0))
            .collect();
        let min = scores.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let normalized: Vec<f64> = if max > min {
            scores.iter().map(|s| (s - min) / (max - min)).collect()
        } else {
            vec![0.0; n_patches]
        };
        let side = grid * patch_size;
        let mut values = vec![0.0; side * side];
        for (p, v) in normalized.iter().enumerate() {
            let (pr, pc) = (p / grid, p % grid);
            for py in 0..patch_size {
                for px in 0..patch_size {
                    values[(pr * patch_size + py) * side + pc * patch_size + px] = *v;
                }
            }
        }
        ActivationMap::new(side, side, values)
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(&CLASSIFIER_MAGIC)?;
        w.write_all(&CLASSIFIER_VERSION.to_le_bytes())?;
        w.write_all(&(NUM_DISEASES as u32).to_le_bytes())?;
        w.write_all(&(self.weights.cols() as u32).to_le_bytes())?;
        for v in self.weights.as_slice() {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in self.bias.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| Error::Parse {
            offset: 0,
            message: "unexpected end of file reading classifier magic".into(),
        })?;
        if magic != CLASSIFIER_MAGIC {
            return Err(Error::Parse { offset: 0, message: "bad magic, not a classifier file".into() });
        }
        let mut buf = [0u8; 2];
        r.read_exact(&mut buf).map_err(|_| Error::Parse {
            offset: 8,
            message: "unexpected end of file reading version".into(),
        })?;
        let version = u16::from_le_bytes(buf);
        if version != CLASSIFIER_VERSION {
            return Err(Error::Parse {
                offset: 8,
                message: format!("unsupported classifier version {version}"),
            });
        }
        let mut buf4 = [0u8; 4];
        r.read_exact(&mut buf4).map_err(|_| Error::Parse {
            offset: 10,
            message: "unexpected end of file reading class count".into(),
        })?;
        let classes = u32::from_le_bytes(buf4) as usize;
        if classes != NUM_DISEASES {
            return Err(Error::Parse {
                offset: 10,
                message: format!("classifier has {classes} classes, expected {NUM_DISEASES}"),
            });
        }
        r.read_exact(&mut buf4).map_err(|_| Error::Parse {
            offset: 14,
            message: "unexpected end of file reading feature dimension".into(),
        })?;
        let dim = u32::from_le_bytes(buf4) as usize;
        let mut read_f64s = |n: usize, offset: u64| -> Result<Vec<f64>> {
            let mut bytes = vec![0u8; n * 8];
            r.read_exact(&mut bytes).map_err(|_| Error::Parse {
                offset,
                message: format!("unexpected end of file reading {n} parameters"),
            })?;
            Ok(bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect())
        };
        let w = read_f64s(NUM_DISEASES * dim, 18)?;
        let b = read_f64s(NUM_DISEASES, 18 + (NUM_DISEASES * dim * 8) as u64)?;
        Self::new(Matrix::new(NUM_DISEASES, dim, w)?, Vector::new(b)?)
    }
}

/// Summed binary cross entropy over the 14 labels, probabilities clamped to
/// `[1e-12, 1 - 1e-12]`.
pub fn bce_loss(probs: &Vector, labels: &LabelVector) -> Result<f64> {
    if probs.dim() != NUM_DISEASES {
        return Err(Error::Dimension(format!(
            "probability vector has dimension {}, expected {NUM_DISEASES}",
            probs.dim()
        )));
    }
    let mut loss = 0.0;
    for (p, y) in probs.iter().zip(labels.iter()) {
        let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        loss -= if y { p.ln() } else { (1.0 - p).ln() };
    }
    Ok(loss)
}

fn mean_loss(clf: &LinearClassifier, features: &[Vector], labels: &[LabelVector]) -> Result<f64> {
    let mut total = 0.0;
    for (f, y) in features.iter().zip(labels) {
        total += bce_loss(&clf.predict_probs(f)?, y)?;
    }
    Ok(total / features.len() as f64)
}

/// Full-batch gradient descent on the mean BCE. Deterministic for a given
/// seed; the loss trace has one entry per epoch, the loss before that
/// epoch's update, plus a final entry for the trained parameters.
pub fn train(features: &[Vector], labels: &[LabelVector], config: &TrainConfig) -> Result<TrainOutcome> {
    if features.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    if features.len() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} features but {} label rows",
            features.len(),
            labels.len()
        )));
    }
    let dim = features[0].dim();
    for (i, f) in features.iter().enumerate() {
        if f.dim() != dim {
            return Err(Error::Dimension(format!(
                "feature {i} has dimension {}, expected {dim}",
                f.dim()
            )));
        }
    }
    if !config.learning_rate.is_finite() || config.learning_rate < 0.0 {
        return Err(Error::InvalidInput(format!(
            "learning rate must be finite and >= 0, got {}",
            config.learning_rate
        )));
    }
    if config.epochs == 0 {
        return Err(Error::InvalidInput("epochs must be at least 1".into()));
    }

    let clf = LinearClassifier::init(dim, config.seed)?;
    let mut w: Vec<f64> = clf.weights.as_slice().to_vec();
    let mut b: Vec<f64> = clf.bias.as_slice().to_vec();
    let n = features.len() as f64;
    let mut loss_trace = Vec::with_capacity(config.epochs + 1);

    for _ in 0..config.epochs {
        let current = LinearClassifier::new(
            Matrix::new(NUM_DISEASES, dim, w.clone())?,
            Vector::new(b.clone())?,
        )?;
        loss_trace.push(mean_loss(&current, features, labels)?);

        let mut gw = vec![0.0; NUM_DISEASES * dim];
        let mut gb = vec![0.0; NUM_DISEASES];
        for (f, y) in features.iter().zip(labels) {
            let probs = current.predict_probs(f)?;
            for k in 0..NUM_DISEASES {
                let residual = probs.get(k) - if y.get(k) { 1.0 } else { 0.0 };
                gb[k] += residual / n;
                let row = &mut gw[k * dim..(k + 1) * dim];
                for (g, x) in row.iter_mut().zip(f.as_slice()) {
                    *g += residual * x / n;
                }
            }
        }
        for (wi, gi) in w.iter_mut().zip(&gw) {
            *wi -= config.learning_rate * gi;
        }
        for (bi, gi) in b.iter_mut().zip(&gb) {
            *bi -= config.learning_rate * gi;
        }
    }

    let classifier = LinearClassifier::new(Matrix::new(NUM_DISEASES, dim, w)?, Vector::new(b)?)?;
    loss_trace.push(mean_loss(&classifier, features, labels)?);
    Ok(TrainOutcome { classifier, loss_trace })
}
