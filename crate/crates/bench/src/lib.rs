//! Fixtures shared by the criterion benchmarks in `benches/`.

use multicrf::oracle::random_reps;
use multicrf::{Dims, FamilyTag, ModelParams, RepresentationSequence, RngSeed};

/// Sizes used by the benchmarks: 17 labels, 100-dim inputs, rank 128.
pub fn bench_dims() -> Dims {
    Dims::new(17, 100, 100, 128).with_mlp_hidden(128)
}

/// Model with default initialization and `count` random sequences of
/// length `len`.
pub fn fixture(
    family: FamilyTag,
    len: usize,
    count: usize,
) -> (ModelParams, Vec<RepresentationSequence>) {
    let dims = bench_dims();
    let params = ModelParams::init(family, dims, RngSeed(1));
    let mut rng = RngSeed(1).stream(3);
    let reps = (0..count)
        .map(|_| random_reps(len, dims.d_h, &mut rng))
        .collect();
    (params, reps)
}

/// Families timed by default: the baseline, the decomposed forms and one MLP.
pub const BENCH_FAMILIES: [FamilyTag; 5] = [
    FamilyTag::VanillaCrf,
    FamilyTag::DTrilinear,
    FamilyTag::DQuadrilinear,
    FamilyTag::DPentalinear,
    FamilyTag::ConcatMlp1W2L,
];
