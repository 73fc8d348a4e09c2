//! Linear-chain CRF sequence labeling with pluggable potential functions.
//!
//! The potential `s(x, y, i)` scores the label pair `(y_{i-1}, y_i)` at
//! position `i` from precomputed token vectors. Ten families are provided,
//! from an independent softmax through low-rank multilinear forms to a
//! concatenation MLP. Inference is exact and runs in log space.
//!
//! ```
//! use multicrf::{score_lattice, viterbi, Dims, FamilyTag, ModelParams, RngSeed};
//! use multicrf::{Matrix, RepresentationSequence};
//!
//! let params = ModelParams::init(FamilyTag::DQuadrilinear, Dims::new(3, 4, 4, 8), RngSeed(1));
//! let h = Matrix::from_vec(2, 4, vec![0.1, 0.2, 0.3, 0.4, -0.1, 0.0, 0.5, 0.2]).unwrap();
//! let reps = RepresentationSequence::new(h).unwrap();
//! let lattice = score_lattice(&params, &reps).unwrap();
//! assert_eq!(viterbi(&lattice).labels.len(), 2);
//! ```

pub mod data;
pub mod error;
pub mod eval;
pub mod inference;
pub mod math;
pub mod oracle;
pub mod potentials;
pub mod timing;
pub mod training;

pub use error::{Error, Result};
pub use eval::{mean_and_std, span_f1, token_accuracy, EvalResult};
pub use inference::{
    decode_softmax, log_partition, nll_and_grad, pairwise_marginals, viterbi, DecodeResult,
    PairwiseMarginals,
};
pub use math::{log_sum_exp, Matrix, RngSeed, Tensor3, Vector};
pub use potentials::{
    backprop_lattice, reconstruct_dense_trilinear, score_lattice, Dims, FamilyTag, Lattice,
    LatticeGrad, ModelParams, ParamField, ParamGrad, RepresentationSequence, ScoreLattice, Scorer,
};
pub use training::{train, DevMetric, Example, TrainConfig, TrainReport};
