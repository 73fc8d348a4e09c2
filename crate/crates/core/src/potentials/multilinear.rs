//! Trilinear and the decomposed (rank-`d_r`) multilinear families.
//!
//! Both reduce to one product per sequence: a per-position feature matrix
//! (`M x k`) against a label-pair kernel (`(L+1)L x k`) that only depends
//! on the parameters and is built once per [`Scorer`](super::Scorer).

use crate::math::{gemm, matmul, Matrix, View};

use super::lattice::{Lattice, RepresentationSequence};
use super::linear::{add_into, current_rows};
use super::params::{FamilyTag, ModelParams, ParamField, ParamGrad};

/// Dense trilinear: kernel `v[p][(a,b)] = t_a^T U_p t_b`, `d_h x (L+1)L`.
#[derive(Debug)]
pub(crate) struct TrilinearCache {
    v: Matrix,
}

impl TrilinearCache {
    pub(crate) fn new(params: &ModelParams) -> Self {
        let l = params.dims.num_labels;
        let t_all = params.label_embeddings.as_ref().expect("validated");
        let t_cur = current_rows(t_all, l);
        let u = params.u_dense.as_ref().expect("validated");
        let width = (l + 1) * l;
        let mut v = Matrix::zeros(u.d1, width);
        for p in 0..u.d1 {
            let tu = matmul(t_all.view(), u.slab(p));
            gemm(tu.view(), t_cur.t(), 0.0, v.row_mut(p));
        }
        TrilinearCache { v }
    }

    pub(crate) fn aux(&self) -> Matrix {
        Matrix::zeros(self.v.rows, self.v.cols)
    }

    pub(crate) fn score(&self, l: usize, reps: &RepresentationSequence) -> Lattice {
        let pairs = matmul(reps.h.view(), self.v.view());
        Lattice::from_pair_rows(reps.len(), l, &pairs.data)
    }

    pub(crate) fn accumulate(
        &self,
        reps: &RepresentationSequence,
        grad: &Lattice,
        d_v: &mut Matrix,
    ) {
        let rows = grad.pair_rows();
        gemm(
            reps.h.t(),
            View::new(&rows, reps.len(), self.v.cols),
            1.0,
            &mut d_v.data,
        );
    }

    pub(crate) fn finish(&self, params: &ModelParams, d_v: &Matrix, out: &mut ParamGrad) {
        let l = params.dims.num_labels;
        let d_t = params.dims.d_t;
        let t_all = params.label_embeddings.as_ref().expect("validated");
        let t_cur = current_rows(t_all, l);
        let u = params.u_dense.as_ref().expect("validated");
        let mut d_t_all = Matrix::zeros(l + 1, d_t);
        let d_u = out.u_dense.as_mut().expect("grad");
        let slab = d_t * d_t;
        for p in 0..u.d1 {
            let dv_p = View::new(d_v.row(p), l + 1, l);
            // U_p -> T_all^T dV_p T_cur
            let left = matmul(t_all.t(), dv_p);
            gemm(
                left.view(),
                t_cur,
                0.0,
                &mut d_u.data[p * slab..(p + 1) * slab],
            );
            // T_all -> dV_p T_cur U_p^T
            let tu_t = matmul(t_cur, u.slab(p).t());
            gemm(dv_p, tu_t.view(), 1.0, &mut d_t_all.data);
            // T_cur -> dV_p^T T_all U_p
            let tu = matmul(t_all.view(), u.slab(p));
            gemm(dv_p.t(), tu.view(), 1.0, &mut d_t_all.data[..l * d_t]);
        }
        out.label_embeddings
            .as_mut()
            .expect("grad")
            .data
            .copy_from_slice(&d_t_all.data);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shift {
    /// `h_i`
    Current,
    /// `h_{i-1}`, zero at the first position.
    Previous,
    /// `h_{i+1}`, zero at the last position.
    Next,
}

fn word_factors(family: FamilyTag) -> &'static [(ParamField, Shift)] {
    match family {
        FamilyTag::DTrilinear => &[(ParamField::UH, Shift::Current)],
        FamilyTag::DQuadrilinear => &[
            (ParamField::UH1, Shift::Previous),
            (ParamField::UH2, Shift::Current),
        ],
        FamilyTag::DPentalinear => &[
            (ParamField::UH1, Shift::Previous),
            (ParamField::UH2, Shift::Current),
            (ParamField::UH3, Shift::Next),
        ],
        _ => unreachable!("not a decomposed family"),
    }
}

/// `g1 = t_a U_t1`, `g2 = t_b U_t2` and their row-wise products.
#[derive(Debug)]
pub(crate) struct DecomposedCache {
    g1: Matrix,
    g2: Matrix,
    /// `(L+1)L x d_r`, row `(a, b)` is `g1[a] ⊙ g2[b]`.
    kernel: Matrix,
}

impl DecomposedCache {
    pub(crate) fn new(params: &ModelParams) -> Self {
        let l = params.dims.num_labels;
        let d_r = params.dims.d_r;
        let t_all = params.label_embeddings.as_ref().expect("validated");
        let g1 = matmul(
            t_all.view(),
            params.u_t1.as_ref().expect("validated").view(),
        );
        let g2 = matmul(
            current_rows(t_all, l),
            params.u_t2.as_ref().expect("validated").view(),
        );
        let mut kernel = Matrix::zeros((l + 1) * l, d_r);
        for a in 0..=l {
            for b in 0..l {
                let row = kernel.row_mut(a * l + b);
                for ((k, x), y) in row.iter_mut().zip(g1.row(a)).zip(g2.row(b)) {
                    *k = x * y;
                }
            }
        }
        DecomposedCache { g1, g2, kernel }
    }

    pub(crate) fn aux(&self) -> Matrix {
        Matrix::zeros(self.kernel.rows, self.kernel.cols)
    }

    /// Word-side factors `g3, g4, (g5)` as `M x d_r` matrices.
    fn factors(&self, params: &ModelParams, reps: &RepresentationSequence) -> Vec<Matrix> {
        let m = reps.len();
        let d_r = params.dims.d_r;
        word_factors(params.family)
            .iter()
            .map(|&(field, shift)| {
                let u = View::new(
                    params.field(field).expect("validated"),
                    params.dims.d_h,
                    d_r,
                );
                let hu = matmul(reps.h.view(), u);
                match shift {
                    Shift::Current => hu,
                    Shift::Previous => {
                        let mut out = Matrix::zeros(m, d_r);
                        out.data[d_r..].copy_from_slice(&hu.data[..(m - 1) * d_r]);
                        out
                    }
                    Shift::Next => {
                        let mut out = Matrix::zeros(m, d_r);
                        out.data[..(m - 1) * d_r].copy_from_slice(&hu.data[d_r..]);
                        out
                    }
                }
            })
            .collect()
    }

    fn product(factors: &[Matrix], skip: Option<usize>) -> Matrix {
        let mut out = Matrix {
            rows: factors[0].rows,
            cols: factors[0].cols,
            data: vec![1.0; factors[0].data.len()],
        };
        for (k, f) in factors.iter().enumerate() {
            if Some(k) == skip {
                continue;
            }
            for (o, v) in out.data.iter_mut().zip(&f.data) {
                *o *= v;
            }
        }
        out
    }

    pub(crate) fn score(&self, params: &ModelParams, reps: &RepresentationSequence) -> Lattice {
        let factors = self.factors(params, reps);
        let features = Self::product(&factors, None);
        let pairs = matmul(features.view(), self.kernel.t());
        Lattice::from_pair_rows(reps.len(), params.dims.num_labels, &pairs.data)
    }

    pub(crate) fn accumulate(
        &self,
        params: &ModelParams,
        reps: &RepresentationSequence,
        grad: &Lattice,
        d_kernel: &mut Matrix,
        out: &mut ParamGrad,
    ) {
        let m = reps.len();
        let d_r = params.dims.d_r;
        let factors = self.factors(params, reps);
        let features = Self::product(&factors, None);
        let rows = grad.pair_rows();
        let rows = View::new(&rows, m, self.kernel.rows);

        gemm(rows.t(), features.view(), 1.0, &mut d_kernel.data);
        let d_features = matmul(rows, self.kernel.view());

        for (k, &(field, shift)) in word_factors(params.family).iter().enumerate() {
            let mut d_factor = Self::product(&factors, Some(k));
            for (d, g) in d_factor.data.iter_mut().zip(&d_features.data) {
                *d *= g;
            }
            // undo the shift: gradient w.r.t. H U before re-indexing
            let d_hu = match shift {
                Shift::Current => d_factor,
                Shift::Previous => {
                    let mut d = Matrix::zeros(m, d_r);
                    d.data[..(m - 1) * d_r].copy_from_slice(&d_factor.data[d_r..]);
                    d
                }
                Shift::Next => {
                    let mut d = Matrix::zeros(m, d_r);
                    d.data[d_r..].copy_from_slice(&d_factor.data[..(m - 1) * d_r]);
                    d
                }
            };
            let slot = out.field_mut(field).expect("grad");
            gemm(reps.h.t(), d_hu.view(), 1.0, slot);
        }
    }

    pub(crate) fn finish(&self, params: &ModelParams, d_kernel: &Matrix, out: &mut ParamGrad) {
        let l = params.dims.num_labels;
        let d_r = params.dims.d_r;
        let d_t = params.dims.d_t;
        let mut d_g1 = Matrix::zeros(l + 1, d_r);
        let mut d_g2 = Matrix::zeros(l, d_r);
        for a in 0..=l {
            for b in 0..l {
                let dk = d_kernel.row(a * l + b);
                let (g1, g2) = (self.g1.row(a), self.g2.row(b));
                let row1 = &mut d_g1.data[a * d_r..(a + 1) * d_r];
                for j in 0..d_r {
                    row1[j] += dk[j] * g2[j];
                }
                let row2 = &mut d_g2.data[b * d_r..(b + 1) * d_r];
                for j in 0..d_r {
                    row2[j] += dk[j] * g1[j];
                }
            }
        }
        let t_all = params.label_embeddings.as_ref().expect("validated");
        let t_cur = current_rows(t_all, l);
        let u_t1 = params.u_t1.as_ref().expect("validated");
        let u_t2 = params.u_t2.as_ref().expect("validated");

        gemm(
            t_all.t(),
            d_g1.view(),
            0.0,
            &mut out.u_t1.as_mut().expect("grad").data,
        );
        gemm(
            t_cur.t(),
            d_g2.view(),
            0.0,
            &mut out.u_t2.as_mut().expect("grad").data,
        );

        let d_t_all = &mut out.label_embeddings.as_mut().expect("grad").data;
        gemm(d_g1.view(), u_t1.t(), 0.0, d_t_all);
        gemm(d_g2.view(), u_t2.t(), 1.0, &mut d_t_all[..l * d_t]);
    }
}

pub(crate) fn merge(dst: &mut Matrix, src: &Matrix) {
    add_into(dst, src);
}
