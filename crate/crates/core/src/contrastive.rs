//! Pairwise cosine similarity, the positive-pair mask and the supervised
//! contrastive loss with its exact gradient.
//!
//! For a batch of `N` anchors with similarity matrix `S` (rows: queries,
//! columns: premise-hypothesis encodings), temperature `τ`, and positive set
//! `P(i) = { p ≠ i : y_p = y_i }`:
//!
//! ```text
//! L = - Σ_i 1/n_i Σ_{p ∈ P(i)} log( exp(S_ip/τ) / Σ_{a ≠ i} exp(S_ia/τ) )
//! ```
//!
//! where `n_i` is the normalizer selected by [`PCountConvention`].

use serde::{Deserialize, Serialize};

use crate::encoder::Embedding;
use crate::error::{Error, Result};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == m), "ragged rows");
        Self {
            rows: n,
            cols: m,
            data: rows.into_iter().flatten().collect(),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// `S[i][j] = cos(query_i, pair_j)`.
pub type SimilarityMatrix = Matrix;

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(a.len(), b.len()));
    }
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 || !na.is_finite() || !nb.is_finite() {
        return Err(Error::ZeroNorm);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Gradients of `cos(a, b)` with respect to `a` and `b`, scaled by `upstream`,
/// accumulated into `da` and `db`.
pub fn cosine_backward(a: &[f64], b: &[f64], upstream: f64, da: &mut [f64], db: &mut [f64]) {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let inv = 1.0 / (na * nb);
    let cos = dot * inv;
    let ca = cos / (na * na);
    let cb = cos / (nb * nb);
    for k in 0..a.len() {
        da[k] += upstream * (b[k] * inv - ca * a[k]);
        db[k] += upstream * (a[k] * inv - cb * b[k]);
    }
}

pub fn similarity_matrix(queries: &[Embedding], pairs: &[Embedding]) -> Result<SimilarityMatrix> {
    let mut s = Matrix::zeros(queries.len(), pairs.len());
    for (i, q) in queries.iter().enumerate() {
        for (j, p) in pairs.iter().enumerate() {
            s.set(i, j, cosine_similarity(q.as_slice(), p.as_slice())?);
        }
    }
    Ok(s)
}

/// Chains `∂L/∂S` through the cosine similarities onto the embeddings.
pub fn similarity_backward(
    queries: &[Embedding],
    pairs: &[Embedding],
    grad_s: &Matrix,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut dq: Vec<Vec<f64>> = queries.iter().map(|q| vec![0.0; q.dim()]).collect();
    let mut dp: Vec<Vec<f64>> = pairs.iter().map(|p| vec![0.0; p.dim()]).collect();
    for i in 0..queries.len() {
        for j in 0..pairs.len() {
            let g = grad_s.get(i, j);
            if g != 0.0 {
                cosine_backward(queries[i].as_slice(), pairs[j].as_slice(), g, &mut dq[i], &mut dp[j]);
            }
        }
    }
    (dq, dp)
}

/// `s_ij = 1` iff `key_i == key_j`; the diagonal is 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositiveMask {
    pub n: usize,
    bits: Vec<bool>,
}

impl PositiveMask {
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.n + j]
    }

    /// `Σ_p 1[y_p = y_i]`, self included.
    pub fn row_count(&self, i: usize) -> usize {
        self.bits[i * self.n..(i + 1) * self.n].iter().filter(|b| **b).count()
    }

    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j) as u8).collect())
            .collect()
    }
}

pub fn build_positive_mask<K: PartialEq>(keys: &[K]) -> PositiveMask {
    let n = keys.len();
    let bits = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| keys[i] == keys[j])
        .collect();
    PositiveMask { n, bits }
}

/// Normalizer applied to each anchor's positive sum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PCountConvention {
    /// `|P(i)| = Σ_p 1[y_p = y_i]`, which counts the anchor itself.
    #[default]
    Literal,
    /// `|P(i)| - 1`, the number of positives actually summed.
    ExcludeSelf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SclParams {
    pub temperature: f64,
    #[serde(default)]
    pub p_count: PCountConvention,
}

impl Default for SclParams {
    fn default() -> Self {
        Self {
            temperature: 0.07,
            p_count: PCountConvention::Literal,
        }
    }
}

impl SclParams {
    pub fn new(temperature: f64) -> Result<Self> {
        let p = Self {
            temperature,
            ..Self::default()
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::Temperature(self.temperature));
        }
        Ok(())
    }

    fn normalizer(&self, mask: &PositiveMask, i: usize) -> f64 {
        let count = mask.row_count(i);
        match self.p_count {
            PCountConvention::Literal => count as f64,
            PCountConvention::ExcludeSelf => (count - 1) as f64,
        }
    }
}

fn check_inputs(s: &SimilarityMatrix, mask: &PositiveMask, params: &SclParams) -> Result<()> {
    params.validate()?;
    if s.rows != s.cols {
        return Err(Error::DimensionMismatch(s.rows, s.cols));
    }
    if s.rows != mask.n {
        return Err(Error::DimensionMismatch(s.rows, mask.n));
    }
    for i in 0..mask.n {
        if mask.row_count(i) - usize::from(mask.get(i, i)) == 0 {
            return Err(Error::NoPositive(i));
        }
    }
    Ok(())
}

/// Per-row softmax over `a ≠ i` of `S_ia/τ`, with its log-sum-exp.
fn row_softmax(row: &[f64], i: usize, tau: f64) -> (f64, Vec<f64>) {
    let max = row
        .iter()
        .enumerate()
        .filter(|(a, _)| *a != i)
        .map(|(_, &v)| v / tau)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = row
        .iter()
        .enumerate()
        .map(|(a, &v)| if a == i { 0.0 } else { (v / tau - max).exp() })
        .collect();
    let z: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= z);
    (max + z.ln(), probs)
}

pub fn scl_loss(s: &SimilarityMatrix, mask: &PositiveMask, params: &SclParams) -> Result<f64> {
    Ok(scl_loss_and_gradient(s, mask, params)?.0)
}

pub fn scl_loss_gradient(s: &SimilarityMatrix, mask: &PositiveMask, params: &SclParams) -> Result<Matrix> {
    Ok(scl_loss_and_gradient(s, mask, params)?.1)
}

/// Loss and `∂L/∂S` in one pass.
///
/// For `a ≠ i`: `∂L/∂S_ia = (c_i · softmax_ia − 1[a ∈ P(i)]/n_i) / τ` with
/// `c_i = |P(i)|/n_i`; the diagonal receives no gradient.
pub fn scl_loss_and_gradient(
    s: &SimilarityMatrix,
    mask: &PositiveMask,
    params: &SclParams,
) -> Result<(f64, Matrix)> {
    check_inputs(s, mask, params)?;
    let tau = params.temperature;
    let n = s.rows;
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(n, n);
    for i in 0..n {
        let row = s.row(i);
        let (lse, probs) = row_softmax(row, i, tau);
        let norm = params.normalizer(mask, i);
        let mut positives = 0usize;
        let mut anchor = 0.0;
        for p in (0..n).filter(|&p| p != i && mask.get(i, p)) {
            anchor += lse - row[p] / tau;
            positives += 1;
        }
        loss += anchor / norm;
        let weight = positives as f64 / norm;
        let g = grad.row_mut(i);
        for a in (0..n).filter(|&a| a != i) {
            let pos = if mask.get(i, a) { 1.0 / norm } else { 0.0 };
            g[a] = (weight * probs[a] - pos) / tau;
        }
    }
    Ok((loss, grad))
}
