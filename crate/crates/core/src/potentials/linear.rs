//! Softmax, Vanilla CRF and the two bilinear families.
//!
//! All four split into a label-pair term, an emission on the current label
//! and (ThreeBilinear only) an emission on the previous label:
//! `s(i, a, b) = pair[a][b] + cur[i][b] + prev[i][a]`.

use crate::math::{gemm, matmul, Matrix, View};

use super::lattice::{Lattice, RepresentationSequence};
use super::params::{FamilyTag, ModelParams, ParamGrad};

/// Label-only products, computed once per parameter value.
#[derive(Debug)]
pub(crate) struct BilinearCache {
    /// `(L+1) x L`, `t_a^T W_t t_b`.
    pair: Matrix,
    /// `d_h x L`, `W_h t_b` (or `W_h1 t_b`).
    proj_cur: Matrix,
    /// `d_h x (L+1)`, `W_h2 t_a`; ThreeBilinear only.
    proj_prev: Option<Matrix>,
}

#[derive(Debug, Clone)]
pub(crate) struct BilinearAux {
    d_pair: Matrix,
    d_proj_cur: Matrix,
    d_proj_prev: Option<Matrix>,
}

impl BilinearAux {
    pub(crate) fn merge(&mut self, other: &BilinearAux) {
        add_into(&mut self.d_pair, &other.d_pair);
        add_into(&mut self.d_proj_cur, &other.d_proj_cur);
        if let (Some(a), Some(b)) = (self.d_proj_prev.as_mut(), other.d_proj_prev.as_ref()) {
            add_into(a, b);
        }
    }
}

pub(crate) fn add_into(dst: &mut Matrix, src: &Matrix) {
    for (d, s) in dst.data.iter_mut().zip(&src.data) {
        *d += s;
    }
}

pub(crate) fn current_rows(t_all: &Matrix, l: usize) -> View<'_> {
    View::new(&t_all.data[..l * t_all.cols], l, t_all.cols)
}

fn emission_weight(params: &ModelParams) -> &Matrix {
    match params.family {
        FamilyTag::ThreeBilinear => params.w_h1.as_ref().expect("validated"),
        _ => params.w_h.as_ref().expect("validated"),
    }
}

impl BilinearCache {
    pub(crate) fn new(params: &ModelParams) -> Self {
        let l = params.dims.num_labels;
        let t_all = params.label_embeddings.as_ref().expect("validated");
        let t_cur = current_rows(t_all, l);
        let w_t = params.w_t.as_ref().expect("validated");
        let tw = matmul(t_all.view(), w_t.view());
        let pair = matmul(tw.view(), t_cur.t());
        let proj_cur = matmul(emission_weight(params).view(), t_cur.t());
        let proj_prev = params.w_h2.as_ref().map(|w| matmul(w.view(), t_all.t()));
        BilinearCache {
            pair,
            proj_cur,
            proj_prev,
        }
    }

    pub(crate) fn aux(&self) -> BilinearAux {
        BilinearAux {
            d_pair: Matrix::zeros(self.pair.rows, self.pair.cols),
            d_proj_cur: Matrix::zeros(self.proj_cur.rows, self.proj_cur.cols),
            d_proj_prev: self
                .proj_prev
                .as_ref()
                .map(|p| Matrix::zeros(p.rows, p.cols)),
        }
    }

    pub(crate) fn score(&self, l: usize, reps: &RepresentationSequence) -> Lattice {
        let cur = matmul(reps.h.view(), self.proj_cur.view());
        let prev = self
            .proj_prev
            .as_ref()
            .map(|p| matmul(reps.h.view(), p.view()));
        Lattice::from_fn(reps.len(), l, |i, a, b| {
            let mut s = self.pair.get(a, b) + cur.get(i, b);
            if let Some(prev) = &prev {
                s += prev.get(i, a);
            }
            s
        })
    }

    pub(crate) fn accumulate(
        &self,
        reps: &RepresentationSequence,
        grad: &Lattice,
        aux: &mut BilinearAux,
    ) {
        let l = grad.num_labels();
        accumulate_pair(grad, &mut aux.d_pair.data);
        let d_cur = current_sums(grad);
        gemm(
            reps.h.t(),
            View::new(&d_cur, reps.len(), l),
            1.0,
            &mut aux.d_proj_cur.data,
        );
        if let Some(d_prev_proj) = aux.d_proj_prev.as_mut() {
            let d_prev = previous_sums(grad);
            gemm(
                reps.h.t(),
                View::new(&d_prev, reps.len(), l + 1),
                1.0,
                &mut d_prev_proj.data,
            );
        }
    }

    pub(crate) fn finish(&self, params: &ModelParams, aux: &BilinearAux, out: &mut ParamGrad) {
        let l = params.dims.num_labels;
        let d_t = params.dims.d_t;
        let t_all = params.label_embeddings.as_ref().expect("validated");
        let t_cur = current_rows(t_all, l);
        let w_t = params.w_t.as_ref().expect("validated");
        let w_h = emission_weight(params);

        // pair = T_all W_t T_cur^T
        let dpt = matmul(t_all.t(), aux.d_pair.view());
        let d_wt = matmul(dpt.view(), t_cur);
        out.w_t
            .as_mut()
            .expect("grad")
            .data
            .copy_from_slice(&d_wt.data);

        let mut d_t_all = Matrix::zeros(l + 1, d_t);
        let tw_t = matmul(t_cur, w_t.t());
        gemm(aux.d_pair.view(), tw_t.view(), 1.0, &mut d_t_all.data);
        let tw = matmul(t_all.view(), w_t.view());
        gemm(aux.d_pair.t(), tw.view(), 1.0, &mut d_t_all.data[..l * d_t]);

        // proj_cur = W_h T_cur^T
        let d_wh = matmul(aux.d_proj_cur.view(), t_cur);
        let slot = match params.family {
            FamilyTag::ThreeBilinear => out.w_h1.as_mut(),
            _ => out.w_h.as_mut(),
        };
        slot.expect("grad").data.copy_from_slice(&d_wh.data);
        gemm(
            aux.d_proj_cur.t(),
            w_h.view(),
            1.0,
            &mut d_t_all.data[..l * d_t],
        );

        // proj_prev = W_h2 T_all^T
        if let (Some(d_prev), Some(w_h2)) = (aux.d_proj_prev.as_ref(), params.w_h2.as_ref()) {
            let d_wh2 = matmul(d_prev.view(), t_all.view());
            out.w_h2
                .as_mut()
                .expect("grad")
                .data
                .copy_from_slice(&d_wh2.data);
            gemm(d_prev.t(), w_h2.view(), 1.0, &mut d_t_all.data);
        }

        out.label_embeddings
            .as_mut()
            .expect("grad")
            .data
            .copy_from_slice(&d_t_all.data);
    }
}

/// Softmax logits and vanilla emissions: `H W_h`, `M x L`.
pub(crate) fn emissions(params: &ModelParams, reps: &RepresentationSequence) -> Matrix {
    matmul(
        reps.h.view(),
        params.w_h.as_ref().expect("validated").view(),
    )
}

pub(crate) fn score_softmax(params: &ModelParams, reps: &RepresentationSequence) -> Lattice {
    let e = emissions(params, reps);
    Lattice::from_fn(reps.len(), params.dims.num_labels, |i, _, b| e.get(i, b))
}

pub(crate) fn score_vanilla(params: &ModelParams, reps: &RepresentationSequence) -> Lattice {
    let e = emissions(params, reps);
    let phi = params.transitions.as_ref().expect("validated");
    Lattice::from_fn(reps.len(), params.dims.num_labels, |i, a, b| {
        phi.get(a, b) + e.get(i, b)
    })
}

/// Softmax: logits do not depend on the previous label, so every row of
/// every position feeds the same emission.
pub(crate) fn accumulate_softmax(
    reps: &RepresentationSequence,
    grad: &Lattice,
    out: &mut ParamGrad,
) {
    let l = grad.num_labels();
    let mut d_e = vec![0.0; reps.len() * l];
    for i in 0..reps.len() {
        for a in 0..l {
            for (d, g) in d_e[i * l..(i + 1) * l].iter_mut().zip(grad.row(i, a)) {
                *d += g;
            }
        }
    }
    let w = out.w_h.as_mut().expect("grad");
    gemm(reps.h.t(), View::new(&d_e, reps.len(), l), 1.0, &mut w.data);
}

pub(crate) fn accumulate_vanilla(
    reps: &RepresentationSequence,
    grad: &Lattice,
    out: &mut ParamGrad,
) {
    let l = grad.num_labels();
    accumulate_pair(grad, &mut out.transitions.as_mut().expect("grad").data);
    let d_e = current_sums(grad);
    let w = out.w_h.as_mut().expect("grad");
    gemm(reps.h.t(), View::new(&d_e, reps.len(), l), 1.0, &mut w.data);
}

/// Adds the lattice gradient into an `(L+1) x L` label-pair table.
pub(crate) fn accumulate_pair(grad: &Lattice, pair: &mut [f64]) {
    let l = grad.num_labels();
    for a in 0..l {
        for (d, g) in pair[l * l..].iter_mut().zip(grad.row(0, a)) {
            *d += g;
        }
    }
    for i in 1..grad.len() {
        for (d, g) in pair[..l * l].iter_mut().zip(grad.position(i)) {
            *d += g;
        }
    }
}

/// `M x L`: gradient summed over the previous label.
pub(crate) fn current_sums(grad: &Lattice) -> Vec<f64> {
    let l = grad.num_labels();
    let mut out = vec![0.0; grad.len() * l];
    for i in 0..grad.len() {
        let dst = &mut out[i * l..(i + 1) * l];
        for a in 0..l {
            for (d, g) in dst.iter_mut().zip(grad.row(i, a)) {
                *d += g;
            }
        }
    }
    out
}

/// `M x (L+1)`: gradient summed over the current label, position 0 folded
/// onto the begin-of-sequence column.
pub(crate) fn previous_sums(grad: &Lattice) -> Vec<f64> {
    let l = grad.num_labels();
    let w = l + 1;
    let mut out = vec![0.0; grad.len() * w];
    out[l] = grad.position(0).iter().sum();
    for i in 1..grad.len() {
        for a in 0..l {
            out[i * w + a] = grad.row(i, a).iter().sum();
        }
    }
    out
}
