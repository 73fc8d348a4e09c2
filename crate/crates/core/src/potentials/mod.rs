//! Per-position potential functions `s(x, y, i)` and their gradients.
//!
//! A [`Scorer`] wraps a parameter set and caches every product that only
//! depends on the labels (pairwise tables, label-pair kernels). It can then
//! score any number of sequences, and accumulate lattice gradients into a
//! [`GradAccumulator`] that [`Scorer::finish`] turns into a [`ParamGrad`].

mod lattice;
mod linear;
mod mlp;
mod multilinear;
mod params;

pub use lattice::{Lattice, LatticeGrad, RepresentationSequence, ScoreLattice};
pub use params::{Dims, FamilyTag, ModelParams, ParamField, ParamGrad, Shape};

use crate::error::{Error, Result};
use crate::math::{Matrix, Tensor3};

use linear::{BilinearAux, BilinearCache};
use mlp::{MlpAux, MlpCache};
use multilinear::{DecomposedCache, TrilinearCache};

#[derive(Debug)]
enum Cache {
    Softmax,
    Vanilla,
    Bilinear(BilinearCache),
    Trilinear(TrilinearCache),
    Decomposed(DecomposedCache),
    Mlp(MlpCache),
}

#[derive(Debug, Clone)]
enum Aux {
    None,
    Bilinear(BilinearAux),
    Kernel(Matrix),
    Mlp(MlpAux),
}

/// Partial gradient over one or more sequences.
#[derive(Debug, Clone)]
pub struct GradAccumulator {
    grad: ParamGrad,
    aux: Aux,
}

impl GradAccumulator {
    /// Adds `other` into `self`. Merge in a fixed order for reproducible sums.
    pub fn merge(&mut self, other: &GradAccumulator) {
        self.grad.axpy(1.0, &other.grad);
        match (&mut self.aux, &other.aux) {
            (Aux::Bilinear(a), Aux::Bilinear(b)) => a.merge(b),
            (Aux::Kernel(a), Aux::Kernel(b)) => multilinear::merge(a, b),
            (Aux::Mlp(a), Aux::Mlp(b)) => a.merge(b),
            _ => {}
        }
    }
}

/// Scores sequences against one fixed parameter set.
#[derive(Debug)]
pub struct Scorer<'p> {
    params: &'p ModelParams,
    cache: Cache,
}

impl<'p> Scorer<'p> {
    pub fn new(params: &'p ModelParams) -> Result<Self> {
        params.validate()?;
        let cache = match params.family {
            FamilyTag::Softmax => Cache::Softmax,
            FamilyTag::VanillaCrf => Cache::Vanilla,
            FamilyTag::TwoBilinear | FamilyTag::ThreeBilinear => {
                Cache::Bilinear(BilinearCache::new(params))
            }
            FamilyTag::Trilinear => Cache::Trilinear(TrilinearCache::new(params)),
            FamilyTag::DTrilinear | FamilyTag::DQuadrilinear | FamilyTag::DPentalinear => {
                Cache::Decomposed(DecomposedCache::new(params))
            }
            FamilyTag::ConcatMlp1W2L | FamilyTag::ConcatMlp2W2L => {
                Cache::Mlp(MlpCache::new(params))
            }
        };
        Ok(Scorer { params, cache })
    }

    pub fn params(&self) -> &ModelParams {
        self.params
    }

    pub fn num_labels(&self) -> usize {
        self.params.dims.num_labels
    }

    fn check_reps(&self, reps: &RepresentationSequence) -> Result<()> {
        if reps.d_h() != self.params.dims.d_h {
            return Err(Error::DimensionMismatch {
                context: "representation dim",
                expected: self.params.dims.d_h,
                found: reps.d_h(),
            });
        }
        if reps.is_empty() {
            return Err(Error::InvalidArgument("empty sequence".into()));
        }
        Ok(())
    }

    pub fn score(&self, reps: &RepresentationSequence) -> Result<ScoreLattice> {
        self.check_reps(reps)?;
        let l = self.num_labels();
        let p = self.params;
        Ok(match &self.cache {
            Cache::Softmax => linear::score_softmax(p, reps),
            Cache::Vanilla => linear::score_vanilla(p, reps),
            Cache::Bilinear(c) => c.score(l, reps),
            Cache::Trilinear(c) => c.score(l, reps),
            Cache::Decomposed(c) => c.score(p, reps),
            Cache::Mlp(c) => c.score(p, reps),
        })
    }

    pub fn accumulator(&self) -> GradAccumulator {
        let aux = match &self.cache {
            Cache::Softmax | Cache::Vanilla => Aux::None,
            Cache::Bilinear(c) => Aux::Bilinear(c.aux()),
            Cache::Trilinear(c) => Aux::Kernel(c.aux()),
            Cache::Decomposed(c) => Aux::Kernel(c.aux()),
            Cache::Mlp(c) => Aux::Mlp(c.aux()),
        };
        GradAccumulator {
            grad: self.params.zeros_like(),
            aux,
        }
    }

    /// Adds `Σ lat_grad[i][a][b] · ∂scores[i][a][b]/∂θ` for one sequence.
    pub fn accumulate(
        &self,
        reps: &RepresentationSequence,
        lat_grad: &LatticeGrad,
        acc: &mut GradAccumulator,
    ) -> Result<()> {
        self.check_reps(reps)?;
        lat_grad.check_shape(reps.len(), self.num_labels())?;
        let p = self.params;
        match (&self.cache, &mut acc.aux) {
            (Cache::Softmax, _) => linear::accumulate_softmax(reps, lat_grad, &mut acc.grad),
            (Cache::Vanilla, _) => linear::accumulate_vanilla(reps, lat_grad, &mut acc.grad),
            (Cache::Bilinear(c), Aux::Bilinear(aux)) => c.accumulate(reps, lat_grad, aux),
            (Cache::Trilinear(c), Aux::Kernel(aux)) => c.accumulate(reps, lat_grad, aux),
            (Cache::Decomposed(c), Aux::Kernel(aux)) => {
                c.accumulate(p, reps, lat_grad, aux, &mut acc.grad)
            }
            (Cache::Mlp(c), Aux::Mlp(aux)) => c.accumulate(p, reps, lat_grad, aux, &mut acc.grad),
            _ => {
                return Err(Error::InvalidArgument(
                    "accumulator was created by a different scorer".into(),
                ))
            }
        }
        Ok(())
    }

    /// Pushes the label-side partials through to the parameters.
    pub fn finish(&self, acc: GradAccumulator) -> ParamGrad {
        let GradAccumulator { mut grad, aux } = acc;
        let p = self.params;
        match (&self.cache, &aux) {
            (Cache::Bilinear(c), Aux::Bilinear(aux)) => c.finish(p, aux, &mut grad),
            (Cache::Trilinear(c), Aux::Kernel(aux)) => c.finish(p, aux, &mut grad),
            (Cache::Decomposed(c), Aux::Kernel(aux)) => c.finish(p, aux, &mut grad),
            (Cache::Mlp(c), Aux::Mlp(aux)) => c.finish(p, aux, &mut grad),
            _ => {}
        }
        grad
    }
}

/// Score table of one sequence.
pub fn score_lattice(params: &ModelParams, reps: &RepresentationSequence) -> Result<ScoreLattice> {
    Scorer::new(params)?.score(reps)
}

/// Parameter gradient of `Σ lat_grad ⊙ score_lattice(params, reps)`.
pub fn backprop_lattice(
    params: &ModelParams,
    reps: &RepresentationSequence,
    lat_grad: &LatticeGrad,
) -> Result<ParamGrad> {
    let scorer = Scorer::new(params)?;
    let mut acc = scorer.accumulator();
    scorer.accumulate(reps, lat_grad, &mut acc)?;
    Ok(scorer.finish(acc))
}

/// Dense `U[p][q][r] = Σ_j u_h[p][j] u_t1[q][j] u_t2[r][j]`.
pub fn reconstruct_dense_trilinear(u_t1: &Matrix, u_t2: &Matrix, u_h: &Matrix) -> Result<Tensor3> {
    let rank = u_h.cols;
    for (m, context) in [(u_t1, "u_t1 rank"), (u_t2, "u_t2 rank")] {
        if m.cols != rank {
            return Err(Error::DimensionMismatch {
                context,
                expected: rank,
                found: m.cols,
            });
        }
    }
    let mut u = Tensor3::zeros(u_h.rows, u_t1.rows, u_t2.rows);
    let mut idx = 0;
    for p in 0..u_h.rows {
        let hp = u_h.row(p);
        for q in 0..u_t1.rows {
            let tq = u_t1.row(q);
            for r in 0..u_t2.rows {
                let tr = u_t2.row(r);
                u.data[idx] = (0..rank).map(|j| hp[j] * tq[j] * tr[j]).sum();
                idx += 1;
            }
        }
    }
    Ok(u)
}
