//! Parameter sweep harnesses: inverse temperature, visual bank cap, and
//! report memory size, each emitting one row per swept value.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::bank::{build_report_memory, build_visual_bank};
use crate::config::PipelineConfig;
use crate::corpus::DISEASES;
use crate::error::{Error, Result};
use crate::hopfield::{retrieve, HopfieldConfig, PatternMatrix, RetrievalMode};
use crate::numerics::{cosine, dot_slices, Vector};
use crate::pipeline::{corpus_for, run_stage1, Stage1Output};

/// One row of the inverse-temperature sweep over the stored-pattern
/// recovery task.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaSweepPoint {
    pub beta: f64,
    /// Fraction of trials whose retrieval lands on the planted pattern with
    /// cosine at least 0.95.
    pub accuracy: f64,
    pub mean_iterations: f64,
}

const RECOVERY_DIRECTIONS: usize = 8;
const RECOVERY_DIM: usize = 8;
const RECOVERY_TRIALS: usize = 128;
const RECOVERY_NOISE: f64 = 0.2;
const RECOVERY_BAR: f64 = 0.95;

/// Sign-balanced recovery memory: an orthonormal frame and its negations,
/// 16 unit patterns whose pairwise cosines are 0 or -1.
fn recovery_patterns(seed: u64) -> PatternMatrix {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(RECOVERY_DIRECTIONS);
    while basis.len() < RECOVERY_DIRECTIONS {
        let mut v: Vec<f64> = (0..RECOVERY_DIM)
            .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
            .collect();
        for b in &basis {
            let proj = dot_slices(&v, b);
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi -= proj * bi;
            }
        }
        let norm = dot_slices(&v, &v).sqrt();
        if norm < 1e-6 {
            continue;
        }
        for vi in v.iter_mut() {
            *vi /= norm;
        }
        basis.push(v);
    }
    let mut rows = Vec::with_capacity(2 * RECOVERY_DIRECTIONS);
    for b in basis {
        rows.push(Vector::new(b.iter().map(|x| -x).collect()).unwrap());
        rows.push(Vector::new(b).unwrap());
    }
    PatternMatrix::from_rows(&rows).expect("non-empty pattern set")
}

/// Stored-pattern recovery accuracy for one beta.
pub fn recovery_accuracy(beta: f64, seed: u64) -> Result<BetaSweepPoint> {
    let patterns = recovery_patterns(seed);
    let noise = Normal::new(0.0, RECOVERY_NOISE).expect("valid normal");
    let mut rng = ChaCha12Rng::seed_from_u64(seed.wrapping_add(1));
    let config = HopfieldConfig::new(beta, RetrievalMode::Cccp)?;

    let mut recovered = 0usize;
    let mut iteration_sum = 0usize;
    for trial in 0..RECOVERY_TRIALS {
        let k = trial % patterns.count();
        let query: Vec<f64> = patterns
            .row(k)
            .iter()
            .map(|m| m + noise.sample(&mut rng))
            .collect();
        let result = retrieve(&Vector::new(query)?, &patterns, &config)?;
        let target = Vector::new(patterns.row(k).to_vec())?;
        if cosine(&result.updated, &target)? >= RECOVERY_BAR {
            recovered += 1;
        }
        iteration_sum += result.iterations;
    }
    Ok(BetaSweepPoint {
        beta,
        accuracy: recovered as f64 / RECOVERY_TRIALS as f64,
        mean_iterations: iteration_sum as f64 / RECOVERY_TRIALS as f64,
    })
}

/// One sweep row per beta value, on the shared recovery task.
pub fn sweep_beta(betas: &[f64], seed: u64) -> Result<Vec<BetaSweepPoint>> {
    if betas.is_empty() {
        return Err(Error::InvalidInput("beta sweep needs at least one value".into()));
    }
    betas.iter().map(|&b| recovery_accuracy(b, seed)).collect()
}

/// One row of the visual-bank cap sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct CapSweepPoint {
    pub cap: usize,
    pub total_entries: usize,
    pub min_per_disease: usize,
    pub max_per_disease: usize,
}

/// Rebuilds the visual bank at each cap over one stage-1 run.
pub fn sweep_cap(caps: &[usize], cfg: &PipelineConfig) -> Result<Vec<CapSweepPoint>> {
    if caps.is_empty() {
        return Err(Error::InvalidInput("cap sweep needs at least one value".into()));
    }
    let corpus = corpus_for(cfg)?;
    let s1 = run_stage1(&corpus, cfg)?;
    caps.iter()
        .map(|&cap| {
            let bank = build_visual_bank(s1.visual_candidates.clone(), cap)?;
            let counts: Vec<usize> = (0..DISEASES.len())
                .map(|d| bank.count_for_disease(d as u8))
                .collect();
            Ok(CapSweepPoint {
                cap,
                total_entries: bank.len(),
                min_per_disease: counts.iter().copied().min().unwrap_or(0),
                max_per_disease: counts.iter().copied().max().unwrap_or(0),
            })
        })
        .collect()
}

/// One row of the report-memory size sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportSizeSweepPoint {
    pub size: usize,
    pub total_entries: usize,
}

/// Rebuilds the report memory at each size budget over one stage-1 run.
pub fn sweep_report_size(sizes: &[usize], cfg: &PipelineConfig) -> Result<Vec<ReportSizeSweepPoint>> {
    if sizes.is_empty() {
        return Err(Error::InvalidInput("report-size sweep needs at least one value".into()));
    }
    let corpus = corpus_for(cfg)?;
    let s1 = run_stage1(&corpus, cfg)?;
    sweep_report_size_from(&s1, sizes)
}

pub fn sweep_report_size_from(s1: &Stage1Output, sizes: &[usize]) -> Result<Vec<ReportSizeSweepPoint>> {
    sizes
        .iter()
        .map(|&size| {
            let mem = build_report_memory(s1.report_candidates.clone(), size)?;
            Ok(ReportSizeSweepPoint { size, total_entries: mem.len() })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovery_patterns_are_sign_balanced_and_separated() {
        let p = recovery_patterns(3);
        assert_eq!(p.count(), 16);
        for i in 0..p.count() {
            let ni = dot_slices(p.row(i), p.row(i)).sqrt();
            assert!((ni - 1.0).abs() < 1e-12);
            for j in 0..i {
                let c = dot_slices(p.row(i), p.row(j));
                assert!(c <= 0.3 + 1e-12, "cos({i},{j}) = {c}");
            }
        }
        // Sign balance: the pattern sum vanishes.
        let mut sum = [0.0; RECOVERY_DIM];
        for i in 0..p.count() {
            for (s, v) in sum.iter_mut().zip(p.row(i)) {
                *s += v;
            }
        }
        assert!(sum.iter().all(|s| s.abs() < 1e-12));
    }

    #[test]
    fn recovery_accuracy_rises_with_beta() {
        let low = recovery_accuracy(0.5, 11).unwrap();
        let high = recovery_accuracy(8.0, 11).unwrap();
        assert!(high.accuracy > low.accuracy, "low={low:?} high={high:?}");
        assert!(high.accuracy >= 0.9, "high={high:?}");
    }

    #[test]
    fn sweep_emits_one_row_per_value() {
        let rows = sweep_beta(&[0.5, 1.0, 2.0], 7).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(sweep_beta(&[], 7).is_err());
    }
}
