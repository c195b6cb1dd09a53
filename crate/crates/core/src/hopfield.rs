//! Modern Hopfield network: energy, association weights, gradient, iterative
//! retrieval, and the dual visual/report wrappers with projections.
//!
//! A query `q` is refined against stored patterns `m_j` by descending the
//! energy
//!
//! ```text
//! E(x) = ||x - q||^2 - lse_j( beta * <x, m_j> / sqrt(d) )
//! ```
//!
//! whose exact gradient is `2(x - q) - (beta / sqrt(d)) * sum_j alpha_j m_j`
//! with `alpha = softmax(beta * <x, m> / sqrt(d))`. The inverse temperature
//! `beta` is folded into the softmax scores so that energy, gradient, and the
//! fixed-point update `x <- sum_j alpha_j m_j` stay mutually consistent; the
//! gradient is verified against central finite differences of this energy.
//!
//! Two retrieval modes are provided. `Gradient` runs explicit gradient
//! descent with step size `eta`. `Cccp` iterates the classical one-step
//! attention update and is the default: it carries the usual retrieval
//! guarantee that well-separated patterns are recovered from noisy queries.

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numerics::{dot_slices, log_sum_exp, softmax, Matrix, Vector};

/// Immutable stack of stored patterns, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternMatrix {
    patterns: Matrix,
}

impl PatternMatrix {
    pub fn new(patterns: Matrix) -> Self {
        Self { patterns }
    }

    pub fn from_rows(rows: &[Vector]) -> Result<Self> {
        Ok(Self { patterns: Matrix::from_rows(rows)? })
    }

    /// Number of stored patterns N.
    pub fn count(&self) -> usize {
        self.patterns.rows()
    }

    /// Pattern dimension d.
    pub fn dim(&self) -> usize {
        self.patterns.cols()
    }

    pub fn row(&self, j: usize) -> &[f64] {
        self.patterns.row(j)
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.patterns
    }
}

/// How the retrieval iteration updates its candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RetrievalMode {
    /// Explicit gradient descent on the energy with step size `step_size`.
    Gradient,
    /// Fixed-point update `x <- sum_j alpha_j m_j`.
    Cccp,
}

impl FromStr for RetrievalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gradient" => Ok(Self::Gradient),
            "cccp" => Ok(Self::Cccp),
            other => Err(Error::InvalidInput(format!(
                "unknown retrieval mode `{other}` (expected `gradient` or `cccp`)"
            ))),
        }
    }
}

impl std::fmt::Display for RetrievalMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Gradient => "gradient",
            Self::Cccp => "cccp",
        })
    }
}

/// Retrieval dynamics parameters.
///
/// `beta` may be zero, the degenerate high-temperature limit in which the
/// association weights are uniform and gradient retrieval fixes the query.
#[derive(Debug, Clone, PartialEq)]
pub struct HopfieldConfig {
    pub beta: f64,
    pub mode: RetrievalMode,
    /// Step size eta, used by `Gradient` mode only.
    pub step_size: f64,
    pub max_iters: usize,
    /// Stop once the update norm drops below this.
    pub tolerance: f64,
}

impl HopfieldConfig {
    pub fn new(beta: f64, mode: RetrievalMode) -> Result<Self> {
        let cfg = Self { beta, mode, ..Self::default() };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_step_size(mut self, step_size: f64) -> Self {
        self.step_size = step_size;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.beta.is_finite() || self.beta < 0.0 {
            return Err(Error::InvalidInput(format!("beta must be finite and >= 0, got {}", self.beta)));
        }
        if !self.step_size.is_finite() || self.step_size <= 0.0 {
            return Err(Error::InvalidInput(format!("step_size must be positive, got {}", self.step_size)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidInput("max_iters must be at least 1".into()));
        }
        if !self.tolerance.is_finite() || self.tolerance <= 0.0 {
            return Err(Error::InvalidInput(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        Ok(())
    }
}

impl Default for HopfieldConfig {
    fn default() -> Self {
        Self {
            beta: 4.0,
            mode: RetrievalMode::Cccp,
            step_size: 0.01,
            max_iters: 32,
            tolerance: 1e-6,
        }
    }
}

/// Outcome of an iterative retrieval.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    /// Candidate at termination.
    pub updated: Vector,
    /// Association weights used by the final update step; on the N-simplex.
    pub weights: Vector,
    /// Energy before the first update and after every update.
    pub energy_trace: Vec<f64>,
    /// Number of update steps taken.
    pub iterations: usize,
}

fn check_dims(candidate: &Vector, memory: &PatternMatrix, what: &str) -> Result<()> {
    if candidate.dim() != memory.dim() {
        return Err(Error::Dimension(format!(
            "{what}: candidate dimension {} does not match pattern dimension {}",
            candidate.dim(),
            memory.dim()
        )));
    }
    Ok(())
}

/// Raw similarity scores `<candidate, m_j> / sqrt(d)`.
fn scores(candidate: &Vector, memory: &PatternMatrix) -> Vector {
    let inv_sqrt_d = 1.0 / (memory.dim() as f64).sqrt();
    let s: Vec<f64> = (0..memory.count())
        .map(|j| dot_slices(candidate.as_slice(), memory.row(j)) * inv_sqrt_d)
        .collect();
    Vector::new(s).expect("finite inputs give finite scores")
}

/// `alpha = softmax_j( beta * <candidate, m_j> / sqrt(d) )`.
pub fn association_weights(candidate: &Vector, memory: &PatternMatrix, beta: f64) -> Result<Vector> {
    check_dims(candidate, memory, "association_weights")?;
    let s = scores(candidate, memory);
    let scaled = Vector::new(s.iter().map(|x| beta * x).collect())?;
    Ok(softmax(&scaled))
}

/// Energy of a candidate against the memory, anchored at the query.
pub fn energy(candidate: &Vector, query: &Vector, memory: &PatternMatrix, beta: f64) -> Result<f64> {
    check_dims(candidate, memory, "energy")?;
    if candidate.dim() != query.dim() {
        return Err(Error::Dimension(format!(
            "energy: candidate dimension {} does not match query dimension {}",
            candidate.dim(),
            query.dim()
        )));
    }
    let anchor: f64 = candidate
        .iter()
        .zip(query.iter())
        .map(|(c, q)| (c - q) * (c - q))
        .sum();
    let s = scores(candidate, memory);
    let scaled = Vector::new(s.iter().map(|x| beta * x).collect())?;
    Ok(anchor - log_sum_exp(&scaled))
}

/// `sum_j alpha_j m_j`.
fn weighted_pattern_sum(alpha: &Vector, memory: &PatternMatrix) -> Vector {
    let mut out = vec![0.0; memory.dim()];
    for j in 0..memory.count() {
        let a = alpha.get(j);
        for (o, m) in out.iter_mut().zip(memory.row(j)) {
            *o += a * m;
        }
    }
    Vector::new(out).expect("finite weighted sum")
}

fn gradient_with_weights(
    candidate: &Vector,
    query: &Vector,
    memory: &PatternMatrix,
    beta: f64,
    alpha: &Vector,
) -> Vector {
    let combo = weighted_pattern_sum(alpha, memory);
    let coeff = beta / (memory.dim() as f64).sqrt();
    let g: Vec<f64> = candidate
        .iter()
        .zip(query.iter())
        .zip(combo.iter())
        .map(|((c, q), m)| 2.0 * (c - q) - coeff * m)
        .collect();
    Vector::new(g).expect("finite gradient")
}

/// Exact analytic gradient of [`energy`] with respect to the candidate.
pub fn energy_gradient(
    candidate: &Vector,
    query: &Vector,
    memory: &PatternMatrix,
    beta: f64,
) -> Result<Vector> {
    check_dims(candidate, memory, "energy_gradient")?;
    if candidate.dim() != query.dim() {
        return Err(Error::Dimension(format!(
            "energy_gradient: candidate dimension {} does not match query dimension {}",
            candidate.dim(),
            query.dim()
        )));
    }
    let alpha = association_weights(candidate, memory, beta)?;
    Ok(gradient_with_weights(candidate, query, memory, beta, &alpha))
}

/// One gradient-descent step `candidate - eta * grad E(candidate)`.
pub fn update_step(
    candidate: &Vector,
    query: &Vector,
    memory: &PatternMatrix,
    config: &HopfieldConfig,
) -> Result<Vector> {
    let g = energy_gradient(candidate, query, memory, config.beta)?;
    let next: Vec<f64> = candidate
        .iter()
        .zip(g.iter())
        .map(|(c, gi)| c - config.step_size * gi)
        .collect();
    Vector::new(next)
}

/// Iterative retrieval starting from the query itself.
///
/// Gradient mode descends the energy; cccp mode applies the fixed-point
/// update. Iteration stops once the update norm drops below
/// `config.tolerance` or after `config.max_iters` steps.
pub fn retrieve(query: &Vector, memory: &PatternMatrix, config: &HopfieldConfig) -> Result<RetrievalResult> {
    check_dims(query, memory, "retrieve")?;
    config.validate()?;

    let mut current = query.clone();
    let mut trace = Vec::with_capacity(config.max_iters + 1);
    trace.push(energy(&current, query, memory, config.beta)?);

    let mut final_weights: Option<Vector> = None;
    let mut iterations = 0;

    for iter in 1..=config.max_iters {
        let alpha = association_weights(&current, memory, config.beta)?;
        let next = match config.mode {
            RetrievalMode::Gradient => {
                let g = gradient_with_weights(&current, query, memory, config.beta, &alpha);
                let stepped: Vec<f64> = current
                    .iter()
                    .zip(g.iter())
                    .map(|(c, gi)| c - config.step_size * gi)
                    .collect();
                if stepped.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Numeric {
                        iteration: iter,
                        context: "gradient update produced a non-finite candidate".into(),
                    });
                }
                Vector::new(stepped)?
            }
            RetrievalMode::Cccp => weighted_pattern_sum(&alpha, memory),
        };

        let delta: f64 = next
            .iter()
            .zip(current.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if !delta.is_finite() {
            return Err(Error::Numeric {
                iteration: iter,
                context: "update norm is non-finite".into(),
            });
        }

        trace.push(energy(&next, query, memory, config.beta)?);
        final_weights = Some(alpha);
        current = next;
        iterations = iter;

        if delta < config.tolerance {
            break;
        }
    }

    Ok(RetrievalResult {
        updated: current,
        weights: final_weights.expect("max_iters >= 1 guarantees at least one step"),
        energy_trace: trace,
        iterations,
    })
}

/// Query and value maps that bridge between the query space, the associative
/// space where patterns are scored, and the output space. `None` means the
/// identity, which requires conforming dimensions.
#[derive(Debug, Clone, Default)]
pub struct HopfieldProjections {
    query_proj: Option<Matrix>,
    value_proj: Option<Matrix>,
}

impl HopfieldProjections {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn new(query_proj: Option<Matrix>, value_proj: Option<Matrix>) -> Self {
        Self { query_proj, value_proj }
    }

    /// Output dimension given the memory's pattern dimension.
    pub fn output_dim(&self, mem_dim: usize) -> usize {
        self.value_proj.as_ref().map_or(mem_dim, Matrix::rows)
    }

    fn project_query(&self, query: &Vector, mem_dim: usize) -> Result<Vector> {
        match &self.query_proj {
            None => {
                if query.dim() != mem_dim {
                    return Err(Error::Dimension(format!(
                        "identity query projection requires query dimension {} to match memory dimension {mem_dim}",
                        query.dim()
                    )));
                }
                Ok(query.clone())
            }
            Some(p) => {
                if p.rows() != mem_dim {
                    return Err(Error::Dimension(format!(
                        "query projection maps into dimension {} but memory has dimension {mem_dim}",
                        p.rows()
                    )));
                }
                p.matvec(query)
            }
        }
    }

    fn project_value(&self, combo: &Vector) -> Result<Vector> {
        match &self.value_proj {
            None => Ok(combo.clone()),
            Some(p) => p.matvec(combo),
        }
    }
}

/// Projects the query into the associative space, retrieves, and maps the
/// final convex combination of patterns through the value projection.
///
/// With identity projections and cccp mode this equals `retrieve(..).updated`.
pub fn hopfield_apply(
    query: &Vector,
    memory: &PatternMatrix,
    proj: &HopfieldProjections,
    config: &HopfieldConfig,
) -> Result<Vector> {
    let q = proj.project_query(query, memory.dim())?;
    let result = retrieve(&q, memory, config)?;
    let combo = weighted_pattern_sum(&result.weights, memory);
    proj.project_value(&combo)
}

/// Runs the visual and report retrievals for one query and concatenates the
/// two enhanced halves. Output dimension is `2 * d_out`; both projections
/// must agree on `d_out`.
pub fn dual_retrieve(
    query: &Vector,
    visual: &PatternMatrix,
    report: &PatternMatrix,
    proj_v: &HopfieldProjections,
    proj_r: &HopfieldProjections,
    config: &HopfieldConfig,
) -> Result<Vector> {
    let d_v = proj_v.output_dim(visual.dim());
    let d_r = proj_r.output_dim(report.dim());
    if d_v != d_r {
        return Err(Error::Dimension(format!(
            "dual_retrieve: visual output dimension {d_v} does not match report output dimension {d_r}"
        )));
    }
    let v = hopfield_apply(query, visual, proj_v, config)?;
    let r = hopfield_apply(query, report, proj_r, config)?;
    let mut out = Vec::with_capacity(v.dim() + r.dim());
    out.extend_from_slice(v.as_slice());
    out.extend_from_slice(r.as_slice());
    Vector::new(out)
}

/// Stacks [`dual_retrieve`] outputs for a fixed-size batch of disease
/// queries. Row `2i` holds query i's visual half and row `2i + 1` its report
/// half, so the output shape is `(expected * 2) x d_out`.
pub fn batch_enhance(
    queries: &[Vector],
    expected: usize,
    visual: &PatternMatrix,
    report: &PatternMatrix,
    proj_v: &HopfieldProjections,
    proj_r: &HopfieldProjections,
    config: &HopfieldConfig,
) -> Result<Matrix> {
    if queries.len() != expected {
        return Err(Error::InvalidInput(format!(
            "batch_enhance: expected {expected} queries, got {}",
            queries.len()
        )));
    }
    let mut rows = Vec::with_capacity(2 * queries.len());
    for q in queries {
        let pair = dual_retrieve(q, visual, report, proj_v, proj_r, config)?;
        let d_out = pair.dim() / 2;
        rows.push(Vector::new(pair.as_slice()[..d_out].to_vec())?);
        rows.push(Vector::new(pair.as_slice()[d_out..].to_vec())?);
    }
    Matrix::from_rows(&rows)
}
