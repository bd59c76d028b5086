//! Dense vector and matrix primitives shared by pruning and the attention oracle.
//!
//! Everything is `f64` and row-major. Matrices are desk-scale, so the loops
//! below are plain scalar code.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Norms below this are treated as zero.
pub const NORM_EPS: f64 = 1e-12;

/// A non-empty vector of finite reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct RealVector(Vec<f64>);

impl RealVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput);
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for RealVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<RealVector> for Vec<f64> {
    fn from(v: RealVector) -> Self {
        v.0
    }
}

impl std::ops::Deref for RealVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Row-major matrix of finite reals.
///
/// Holds query hidden states, visual token embeddings and value vectors alike.
/// Serialized as `{"rows": .., "dim": .., "data": [..]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix")]
pub struct EmbeddingMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct RawMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
}

impl TryFrom<RawMatrix> for EmbeddingMatrix {
    type Error = Error;

    fn try_from(raw: RawMatrix) -> Result<Self> {
        Self::new(raw.rows, raw.dim, raw.data)
    }
}

impl EmbeddingMatrix {
    pub fn new(rows: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if rows.checked_mul(dim) != Some(data.len()) {
            return Err(Error::InvalidMatrix(format!(
                "data length {} != {rows} x {dim}",
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { rows, dim, data })
    }

    /// Builds a matrix from equally sized rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), dim, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        (0..self.rows).map(move |i| self.row(i))
    }

    /// Returns a copy with every entry multiplied by `alpha`.
    pub fn scaled(&self, alpha: f64) -> Result<Self> {
        Self::new(
            self.rows,
            self.dim,
            self.data.iter().map(|x| x * alpha).collect(),
        )
    }

    /// Largest Euclidean row norm, 0 for an empty matrix.
    pub fn max_row_norm(&self) -> f64 {
        self.iter_rows().map(norm).fold(0.0, f64::max)
    }
}

/// `n_query x n_visual` cosine similarities, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    n_query: usize,
    n_visual: usize,
    s: Vec<f64>,
}

impl SimilarityMatrix {
    /// Wraps raw similarities. Entries must be finite; they are not required
    /// to lie in [-1, 1] so that arbitrary score matrices can be analysed.
    pub fn new(n_query: usize, n_visual: usize, s: Vec<f64>) -> Result<Self> {
        if n_query.checked_mul(n_visual) != Some(s.len()) {
            return Err(Error::InvalidMatrix(format!(
                "data length {} != {n_query} x {n_visual}",
                s.len()
            )));
        }
        if s.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            n_query,
            n_visual,
            s,
        })
    }

    pub fn n_query(&self) -> usize {
        self.n_query
    }

    pub fn n_visual(&self) -> usize {
        self.n_visual
    }

    pub fn get(&self, t: usize, j: usize) -> f64 {
        self.s[t * self.n_visual + j]
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.s[t * self.n_visual..(t + 1) * self.n_visual]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.s
    }

    /// Entries of column `j`, one per query token.
    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_query).map(move |t| self.get(t, j))
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub fn l2_normalize(v: &[f64]) -> Result<Vec<f64>> {
    let n = norm(v);
    if n.is_nan() || n < NORM_EPS {
        return Err(Error::ZeroNorm { row: None });
    }
    Ok(v.iter().map(|x| x / n).collect())
}

/// Cosine of the angle between `h` and `v`, clamped to [-1, 1].
pub fn cosine_similarity(h: &[f64], v: &[f64]) -> Result<f64> {
    if h.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: h.len(),
            actual: v.len(),
        });
    }
    let (nh, nv) = (norm(h), norm(v));
    if !(nh >= NORM_EPS && nv >= NORM_EPS) {
        return Err(Error::ZeroNorm { row: None });
    }
    Ok((dot(h, v) / (nh * nv)).clamp(-1.0, 1.0))
}

fn normalized_rows(m: &EmbeddingMatrix) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(m.data.len());
    for (i, r) in m.iter_rows().enumerate() {
        let n = norm(r);
        if n.is_nan() || n < NORM_EPS {
            return Err(Error::ZeroNorm { row: Some(i) });
        }
        out.extend(r.iter().map(|x| x / n));
    }
    Ok(out)
}

/// Cosine similarity between every query row of `h` and every row of `v`.
///
/// Rows are l2-normalized once up front; entry `(t, j)` is the clamped dot
/// product of the normalized rows. A zero-norm row in `v` is reported with
/// its index.
pub fn similarity_matrix(h: &EmbeddingMatrix, v: &EmbeddingMatrix) -> Result<SimilarityMatrix> {
    if h.dim != v.dim {
        return Err(Error::DimensionMismatch {
            expected: h.dim,
            actual: v.dim,
        });
    }
    let hn = normalized_rows(h)?;
    let vn = normalized_rows(v)?;
    let d = h.dim;
    let mut s = Vec::with_capacity(h.rows * v.rows);
    for t in 0..h.rows {
        let ht = &hn[t * d..(t + 1) * d];
        for j in 0..v.rows {
            s.push(dot(ht, &vn[j * d..(j + 1) * d]).clamp(-1.0, 1.0));
        }
    }
    Ok(SimilarityMatrix {
        n_query: h.rows,
        n_visual: v.rows,
        s,
    })
}
