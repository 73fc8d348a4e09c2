//! Concatenation potentials: one tanh hidden layer over
//! `[h_{i-1};] h_i; t_{y_{i-1}}; t_{y_i}` followed by a linear read-out.
//!
//! `mlp_w1` columns are laid out in that order, so the first layer splits
//! into per-block products that are computed once per word or label.

use crate::math::{gemm, matmul, Matrix, View};

use super::lattice::{Lattice, RepresentationSequence};
use super::linear::{add_into, current_rows};
use super::params::{FamilyTag, ModelParams, ParamGrad};

#[derive(Debug, Clone, Copy)]
struct Blocks {
    h_prev: Option<usize>,
    h_cur: usize,
    t_prev: usize,
    t_cur: usize,
}

fn blocks(params: &ModelParams) -> Blocks {
    let d_h = params.dims.d_h;
    let d_t = params.dims.d_t;
    let h_prev = (params.family == FamilyTag::ConcatMlp2W2L).then_some(0);
    let h_cur = if h_prev.is_some() { d_h } else { 0 };
    Blocks {
        h_prev,
        h_cur,
        t_prev: h_cur + d_h,
        t_cur: h_cur + d_h + d_t,
    }
}

/// Column block `[offset, offset + width)` of a row-major matrix.
fn column_block(m: &Matrix, offset: usize, width: usize) -> View<'_> {
    View {
        data: &m.data[offset..],
        rows: m.rows,
        cols: width,
        row_stride: m.cols as isize,
        col_stride: 1,
    }
}

fn add_to_column_block(m: &mut Matrix, offset: usize, block: &Matrix) {
    for r in 0..m.rows {
        let dst = &mut m.data[r * m.cols + offset..r * m.cols + offset + block.cols];
        for (d, s) in dst.iter_mut().zip(block.row(r)) {
            *d += s;
        }
    }
}

#[derive(Debug)]
pub(crate) struct MlpCache {
    /// `(L+1) x hidden`: first-layer contribution of the previous label.
    prev_label: Matrix,
    /// `L x hidden`: contribution of the current label plus the bias.
    cur_label: Matrix,
}

#[derive(Debug, Clone)]
pub(crate) struct MlpAux {
    d_prev_label: Matrix,
    d_cur_label: Matrix,
}

impl MlpAux {
    pub(crate) fn merge(&mut self, other: &MlpAux) {
        add_into(&mut self.d_prev_label, &other.d_prev_label);
        add_into(&mut self.d_cur_label, &other.d_cur_label);
    }
}

impl MlpCache {
    pub(crate) fn new(params: &ModelParams) -> Self {
        let l = params.dims.num_labels;
        let d_t = params.dims.d_t;
        let w1 = params.mlp_w1.as_ref().expect("validated");
        let b1 = params.mlp_b1.as_ref().expect("validated");
        let t_all = params.label_embeddings.as_ref().expect("validated");
        let blk = blocks(params);
        let prev_label = matmul(t_all.view(), column_block(w1, blk.t_prev, d_t).t());
        let mut cur_label = matmul(current_rows(t_all, l), column_block(w1, blk.t_cur, d_t).t());
        for b in 0..l {
            for (c, bias) in cur_label.row_mut(b).iter_mut().zip(&b1.data) {
                *c += bias;
            }
        }
        MlpCache {
            prev_label,
            cur_label,
        }
    }

    pub(crate) fn aux(&self) -> MlpAux {
        MlpAux {
            d_prev_label: Matrix::zeros(self.prev_label.rows, self.prev_label.cols),
            d_cur_label: Matrix::zeros(self.cur_label.rows, self.cur_label.cols),
        }
    }

    /// `M x hidden`: first-layer contribution of the word inputs.
    fn word_part(&self, params: &ModelParams, reps: &RepresentationSequence) -> Matrix {
        let d_h = params.dims.d_h;
        let w1 = params.mlp_w1.as_ref().expect("validated");
        let blk = blocks(params);
        let mut out = matmul(reps.h.view(), column_block(w1, blk.h_cur, d_h).t());
        if let Some(off) = blk.h_prev {
            let prev = matmul(reps.h.view(), column_block(w1, off, d_h).t());
            let hidden = out.cols;
            for i in 1..reps.len() {
                for (o, p) in out.data[i * hidden..(i + 1) * hidden]
                    .iter_mut()
                    .zip(prev.row(i - 1))
                {
                    *o += p;
                }
            }
        }
        out
    }

    /// Calls `f(i, a, b, hidden_activations)` for every scored label pair;
    /// position 0 only visits the begin-of-sequence row.
    fn for_each_pair(
        &self,
        words: &Matrix,
        l: usize,
        mut f: impl FnMut(usize, usize, usize, &[f64]),
    ) {
        let mut z = vec![0.0; words.cols];
        for i in 0..words.rows {
            let prev = if i == 0 { l..l + 1 } else { 0..l };
            for a in prev {
                for b in 0..l {
                    for (((zk, w), p), c) in z
                        .iter_mut()
                        .zip(words.row(i))
                        .zip(self.prev_label.row(a))
                        .zip(self.cur_label.row(b))
                    {
                        *zk = (w + p + c).tanh();
                    }
                    f(i, a, b, &z);
                }
            }
        }
    }

    pub(crate) fn score(&self, params: &ModelParams, reps: &RepresentationSequence) -> Lattice {
        let l = params.dims.num_labels;
        let w2 = &params.mlp_w2.as_ref().expect("validated").data;
        let words = self.word_part(params, reps);
        let width = (l + 1) * l;
        let mut pairs = vec![0.0; reps.len() * width];
        self.for_each_pair(&words, l, |i, a, b, z| {
            pairs[i * width + a * l + b] = z.iter().zip(w2).map(|(x, y)| x * y).sum();
        });
        Lattice::from_pair_rows(reps.len(), l, &pairs)
    }

    pub(crate) fn accumulate(
        &self,
        params: &ModelParams,
        reps: &RepresentationSequence,
        grad: &Lattice,
        aux: &mut MlpAux,
        out: &mut ParamGrad,
    ) {
        let l = params.dims.num_labels;
        let d_h = params.dims.d_h;
        let w2 = &params.mlp_w2.as_ref().expect("validated").data;
        let words = self.word_part(params, reps);
        let hidden = words.cols;
        let width = (l + 1) * l;
        let rows = grad.pair_rows();

        let mut d_words = Matrix::zeros(reps.len(), hidden);
        let mut d_w2 = vec![0.0; hidden];
        let mut delta = vec![0.0; hidden];
        self.for_each_pair(&words, l, |i, a, b, z| {
            let g = rows[i * width + a * l + b];
            if g == 0.0 {
                return;
            }
            for k in 0..hidden {
                d_w2[k] += g * z[k];
                delta[k] = g * w2[k] * (1.0 - z[k] * z[k]);
            }
            for (d, v) in d_words.row_mut(i).iter_mut().zip(&delta) {
                *d += v;
            }
            for (d, v) in aux.d_prev_label.row_mut(a).iter_mut().zip(&delta) {
                *d += v;
            }
            for (d, v) in aux.d_cur_label.row_mut(b).iter_mut().zip(&delta) {
                *d += v;
            }
        });

        for (d, v) in out
            .mlp_w2
            .as_mut()
            .expect("grad")
            .data
            .iter_mut()
            .zip(&d_w2)
        {
            *d += v;
        }
        let blk = blocks(params);
        let d_w1 = out.mlp_w1.as_mut().expect("grad");
        let block = matmul(d_words.t(), reps.h.view());
        add_to_column_block(d_w1, blk.h_cur, &block);
        if let Some(off) = blk.h_prev {
            // h_{i-1} feeds position i
            let m = reps.len();
            let shifted = View::new(&d_words.data[hidden..], m - 1, hidden);
            let mut block = Matrix::zeros(hidden, d_h);
            gemm(
                shifted.t(),
                View::new(&reps.h.data, m - 1, d_h),
                0.0,
                &mut block.data,
            );
            add_to_column_block(d_w1, off, &block);
        }
    }

    pub(crate) fn finish(&self, params: &ModelParams, aux: &MlpAux, out: &mut ParamGrad) {
        let l = params.dims.num_labels;
        let d_t = params.dims.d_t;
        let blk = blocks(params);
        let w1 = params.mlp_w1.as_ref().expect("validated");
        let t_all = params.label_embeddings.as_ref().expect("validated");
        let t_cur = current_rows(t_all, l);

        let b1 = out.mlp_b1.as_mut().expect("grad");
        for b in 0..l {
            for (d, v) in b1.data.iter_mut().zip(aux.d_cur_label.row(b)) {
                *d += v;
            }
        }

        let d_w1 = out.mlp_w1.as_mut().expect("grad");
        let block = matmul(aux.d_prev_label.t(), t_all.view());
        add_to_column_block(d_w1, blk.t_prev, &block);
        let block = matmul(aux.d_cur_label.t(), t_cur);
        add_to_column_block(d_w1, blk.t_cur, &block);

        let d_t_all = &mut out.label_embeddings.as_mut().expect("grad").data;
        gemm(
            aux.d_prev_label.view(),
            column_block(w1, blk.t_prev, d_t),
            1.0,
            d_t_all,
        );
        gemm(
            aux.d_cur_label.view(),
            column_block(w1, blk.t_cur, d_t),
            1.0,
            &mut d_t_all[..l * d_t],
        );
    }
}
