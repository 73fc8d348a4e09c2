use crate::error::{Error, Result};
use crate::math::{Matrix, Vector};

/// Per-token input vectors `h_1..h_M` with zero boundary vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationSequence {
    /// `M x d_h`, one row per token.
    pub h: Matrix,
    /// Stands for `h_0`; always zero.
    pub h_pre: Vector,
    /// Stands for `h_{M+1}`; always zero.
    pub h_post: Vector,
}

impl RepresentationSequence {
    pub fn new(h: Matrix) -> Result<Self> {
        if h.rows == 0 {
            return Err(Error::InvalidArgument(
                "representation sequence must be non-empty".into(),
            ));
        }
        if !h.is_finite() {
            return Err(Error::NonFinite("representation".into()));
        }
        let d_h = h.cols;
        Ok(RepresentationSequence {
            h,
            h_pre: Vector::zeros(d_h),
            h_post: Vector::zeros(d_h),
        })
    }

    pub fn from_vectors(vectors: &[Vector]) -> Result<Self> {
        let rows: Vec<Vec<f64>> = vectors.iter().map(|v| v.data.clone()).collect();
        Self::new(Matrix::from_rows(&rows)?)
    }

    pub fn len(&self) -> usize {
        self.h.rows
    }

    pub fn is_empty(&self) -> bool {
        self.h.rows == 0
    }

    pub fn d_h(&self) -> usize {
        self.h.cols
    }

    /// `h_i` for `i` in `0..=M+1`, 1-based with boundaries.
    pub fn at(&self, i: usize) -> &[f64] {
        if i == 0 {
            &self.h_pre.data
        } else if i > self.len() {
            &self.h_post.data
        } else {
            self.h.row(i - 1)
        }
    }
}

/// `M x L x L` table indexed `[i][a][b]` with `a` the previous and `b` the
/// current label, positions 0-based.
///
/// Position 0 has no real previous label: every row `a` there holds the
/// score conditioned on the begin-of-sequence label. Inference reads row 0
/// at position 0 and gradients place their mass there.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    len: usize,
    num_labels: usize,
    data: Vec<f64>,
}

pub type ScoreLattice = Lattice;
pub type LatticeGrad = Lattice;

impl Lattice {
    pub fn zeros(len: usize, num_labels: usize) -> Self {
        Lattice {
            len,
            num_labels,
            data: vec![0.0; len * num_labels * num_labels],
        }
    }

    pub fn from_vec(len: usize, num_labels: usize, data: Vec<f64>) -> Result<Self> {
        if len == 0 || num_labels == 0 {
            return Err(Error::InvalidArgument("empty lattice".into()));
        }
        if data.len() != len * num_labels * num_labels {
            return Err(Error::DimensionMismatch {
                context: "lattice",
                expected: len * num_labels * num_labels,
                found: data.len(),
            });
        }
        Ok(Lattice {
            len,
            num_labels,
            data,
        })
    }

    /// Builds a lattice from `f(i, a, b)`; at position 0 `a` is always the
    /// begin-of-sequence index `L` and the value is replicated across rows.
    pub fn from_fn(
        len: usize,
        num_labels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let l = num_labels;
        let mut lat = Lattice::zeros(len, l);
        for b in 0..l {
            let v = f(0, l, b);
            for a in 0..l {
                lat.data[a * l + b] = v;
            }
        }
        for i in 1..len {
            for a in 0..l {
                for b in 0..l {
                    lat.data[(i * l + a) * l + b] = f(i, a, b);
                }
            }
        }
        lat
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    #[inline]
    pub fn get(&self, i: usize, a: usize, b: usize) -> f64 {
        self.data[(i * self.num_labels + a) * self.num_labels + b]
    }

    #[inline]
    pub fn set(&mut self, i: usize, a: usize, b: usize, v: f64) {
        self.data[(i * self.num_labels + a) * self.num_labels + b] = v;
    }

    #[inline]
    pub fn add(&mut self, i: usize, a: usize, b: usize, v: f64) {
        self.data[(i * self.num_labels + a) * self.num_labels + b] += v;
    }

    /// The `L x L` slab of position `i`.
    pub fn position(&self, i: usize) -> &[f64] {
        let n = self.num_labels * self.num_labels;
        &self.data[i * n..(i + 1) * n]
    }

    /// Row `a` of position `i`: scores over the current label.
    pub fn row(&self, i: usize, a: usize) -> &[f64] {
        let l = self.num_labels;
        let start = (i * l + a) * l;
        &self.data[start..start + l]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Sum of `self ⊙ other`.
    pub fn inner(&self, other: &Lattice) -> f64 {
        self.data.iter().zip(&other.data).map(|(x, y)| x * y).sum()
    }

    /// Unnormalized score of a label path (start label handled via row 0).
    pub fn path_score(&self, labels: &[usize]) -> f64 {
        labels
            .iter()
            .enumerate()
            .map(|(i, &b)| {
                let a = if i == 0 { 0 } else { labels[i - 1] };
                self.get(i, a, b)
            })
            .sum()
    }

    pub(crate) fn check_shape(&self, len: usize, num_labels: usize) -> Result<()> {
        if self.len != len {
            return Err(Error::DimensionMismatch {
                context: "lattice length",
                expected: len,
                found: self.len,
            });
        }
        if self.num_labels != num_labels {
            return Err(Error::DimensionMismatch {
                context: "lattice labels",
                expected: num_labels,
                found: self.num_labels,
            });
        }
        Ok(())
    }

    /// Gradient folded onto the `(L+1) x L` label-pair rows used by the
    /// scorers: `M x (L+1)L`, row-major. Position 0 collapses onto the
    /// begin-of-sequence row; later positions leave it empty.
    pub(crate) fn pair_rows(&self) -> Vec<f64> {
        let l = self.num_labels;
        let width = (l + 1) * l;
        let mut out = vec![0.0; self.len * width];
        for a in 0..l {
            for b in 0..l {
                out[l * l + b] += self.get(0, a, b);
            }
        }
        for i in 1..self.len {
            out[i * width..i * width + l * l].copy_from_slice(self.position(i));
        }
        out
    }

    /// Inverse of [`Lattice::pair_rows`] for scores: replicate the
    /// begin-of-sequence row at position 0.
    pub(crate) fn from_pair_rows(len: usize, l: usize, pairs: &[f64]) -> Lattice {
        let width = (l + 1) * l;
        let mut lat = Lattice::zeros(len, l);
        for a in 0..l {
            lat.data[a * l..(a + 1) * l].copy_from_slice(&pairs[l * l..l * l + l]);
        }
        for i in 1..len {
            lat.data[i * l * l..(i + 1) * l * l]
                .copy_from_slice(&pairs[i * width..i * width + l * l]);
        }
        lat
    }
}
