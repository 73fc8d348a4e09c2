//! Reference implementations: exhaustive enumeration, central finite
//! differences, and synthetic corpora with known structure.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::distr::{Distribution, Uniform};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::data::{write_conll_path, write_embeddings, EmbeddingTable, TokenSequence};
use crate::error::{Error, Result};
use crate::inference::{log_partition, nll_and_grad, viterbi, DecodeResult, PairwiseMarginals};
use crate::math::{log_sum_exp_unchecked, Matrix, RngSeed, Vector};
use crate::potentials::{
    backprop_lattice, score_lattice, Dims, FamilyTag, ModelParams, ParamField, ParamGrad,
    RepresentationSequence, ScoreLattice,
};

/// Largest number of label paths the enumerators will visit.
pub const MAX_PATHS: f64 = 1e7;

fn check_size(lat: &ScoreLattice) -> Result<()> {
    let paths = (lat.num_labels() as f64).powi(lat.len() as i32);
    if paths > MAX_PATHS {
        return Err(Error::TooLarge {
            paths,
            cap: MAX_PATHS,
        });
    }
    Ok(())
}

/// Calls `f` on every label path. Position 0 is the fastest-changing digit,
/// so paths arrive in colexicographic order.
fn for_each_path(m: usize, l: usize, mut f: impl FnMut(&[usize])) {
    let mut path = vec![0usize; m];
    loop {
        f(&path);
        let mut i = 0;
        loop {
            if i == m {
                return;
            }
            path[i] += 1;
            if path[i] < l {
                break;
            }
            path[i] = 0;
            i += 1;
        }
    }
}

pub fn brute_force_log_partition(lat: &ScoreLattice) -> Result<f64> {
    check_size(lat)?;
    let mut scores = Vec::new();
    for_each_path(lat.len(), lat.num_labels(), |p| {
        scores.push(lat.path_score(p))
    });
    Ok(log_sum_exp_unchecked(&scores))
}

/// Enumeration-weighted pair counts in the same layout as
/// [`pairwise_marginals`]: position 0 uses row 0.
pub fn brute_force_marginals(lat: &ScoreLattice) -> Result<PairwiseMarginals> {
    let log_z = brute_force_log_partition(lat)?;
    let mut probs = ScoreLattice::zeros(lat.len(), lat.num_labels());
    for_each_path(lat.len(), lat.num_labels(), |p| {
        let w = (lat.path_score(p) - log_z).exp();
        for (i, &b) in p.iter().enumerate() {
            let a = if i == 0 { 0 } else { p[i - 1] };
            probs.add(i, a, b, w);
        }
    });
    Ok(PairwiseMarginals { probs })
}

/// Exhaustive argmax. Among equal scores the colexicographically smallest
/// path wins, which is the path Viterbi backtracking returns.
pub fn brute_force_best_path(lat: &ScoreLattice) -> Result<DecodeResult> {
    check_size(lat)?;
    let mut best = DecodeResult {
        labels: vec![0; lat.len()],
        score: f64::NEG_INFINITY,
    };
    for_each_path(lat.len(), lat.num_labels(), |p| {
        let s = lat.path_score(p);
        if s > best.score {
            best.score = s;
            best.labels.copy_from_slice(p);
        }
    });
    Ok(best)
}

/// Central differences of `f` with respect to every populated scalar.
pub fn finite_diff_grad(
    f: impl Fn(&ModelParams) -> f64,
    params: &ModelParams,
    step: f64,
) -> ParamGrad {
    let mut grad = params.zeros_like();
    let mut probe = params.clone();
    let fields: Vec<ParamField> = params.fields().map(|(f, _)| f).collect();
    for field in fields {
        let n = params.field(field).map_or(0, |d| d.len());
        for k in 0..n {
            let orig = params.field(field).expect("populated")[k];
            probe.field_mut(field).expect("populated")[k] = orig + step;
            let up = f(&probe);
            probe.field_mut(field).expect("populated")[k] = orig - step;
            let down = f(&probe);
            probe.field_mut(field).expect("populated")[k] = orig;
            grad.field_mut(field).expect("populated")[k] = (up - down) / (2.0 * step);
        }
    }
    grad
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Denominator floor used by [`gradient_check`].
pub const REL_ERROR_FLOOR: f64 = 1e-8;
pub const FD_STEP: f64 = 1e-5;
pub const GRAD_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Serialize)]
pub struct FieldError {
    pub field: String,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub family: FamilyTag,
    pub fields: Vec<FieldError>,
    pub log_partition_rel_error: f64,
    pub viterbi_matches: bool,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.fields
            .iter()
            .map(|f| f.max_rel_error)
            .fold(0.0, f64::max)
    }

    /// Fields whose error reaches `tol`.
    pub fn failures(&self, tol: f64) -> Vec<&FieldError> {
        self.fields
            .iter()
            .filter(|f| f.max_rel_error.is_nan() || f.max_rel_error >= tol)
            .collect()
    }

    pub fn passed(&self, tol: f64) -> bool {
        self.failures(tol).is_empty()
            && self.log_partition_rel_error < 1e-10
            && self.viterbi_matches
    }
}

/// Random representation sequence with entries in `[-1, 1)`.
pub fn random_reps(len: usize, d_h: usize, rng: &mut impl Rng) -> RepresentationSequence {
    let data = (0..len * d_h)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    RepresentationSequence::new(Matrix::from_vec(len, d_h, data).expect("sized")).expect("finite")
}

/// Sequence NLL of `gold` under `params`.
pub fn sequence_nll(
    params: &ModelParams,
    reps: &RepresentationSequence,
    gold: &[usize],
) -> Result<f64> {
    let lat = score_lattice(params, reps)?;
    Ok(nll_and_grad(&lat, gold)?.0)
}

/// Analytic NLL gradient (inference then potential backprop).
pub fn analytic_nll_grad(
    params: &ModelParams,
    reps: &RepresentationSequence,
    gold: &[usize],
) -> Result<ParamGrad> {
    let lat = score_lattice(params, reps)?;
    let (_, lat_grad) = nll_and_grad(&lat, gold)?;
    backprop_lattice(params, reps, &lat_grad)
}

/// Compares analytic and finite-difference NLL gradients on a random
/// instance, and checks inference on its lattice against enumeration.
/// `corrupt` perturbs the analytic gradient of one field (a negative
/// control for the check itself).
pub fn gradient_check(
    family: FamilyTag,
    dims: Dims,
    len: usize,
    seed: RngSeed,
    corrupt: Option<ParamField>,
) -> Result<GradCheckReport> {
    if len == 0 {
        return Err(Error::InvalidArgument(
            "sequence length must be >= 1".into(),
        ));
    }
    let params = ModelParams::init(family, dims, seed);
    let mut rng = seed.stream(1000);
    let reps = random_reps(len, dims.d_h, &mut rng);
    let gold: Vec<usize> = (0..len)
        .map(|_| rng.random_range(0..dims.num_labels))
        .collect();

    let mut analytic = analytic_nll_grad(&params, &reps, &gold)?;
    if let Some(field) = corrupt {
        let data = analytic.field_mut(field).ok_or_else(|| {
            Error::InvalidArgument(format!("{} is not a {family} field", field.name()))
        })?;
        for v in data.iter_mut() {
            *v = *v * 1.5 + 1e-2;
        }
    }
    let numeric = finite_diff_grad(
        |p| sequence_nll(p, &reps, &gold).unwrap_or(f64::NAN),
        &params,
        FD_STEP,
    );
    let fields = analytic
        .fields()
        .zip(numeric.fields())
        .map(|((field, a), (_, n))| {
            let (mut rel, mut abs) = (0.0f64, 0.0f64);
            for (&x, &y) in a.iter().zip(n) {
                let r = relative_error(x, y, REL_ERROR_FLOOR);
                rel = if r.is_nan() {
                    f64::INFINITY
                } else {
                    rel.max(r)
                };
                abs = abs.max((x - y).abs());
            }
            FieldError {
                field: field.name().to_string(),
                max_rel_error: rel,
                max_abs_error: abs,
            }
        })
        .collect();

    let lat = score_lattice(&params, &reps)?;
    let (fast, brute) = (log_partition(&lat), brute_force_log_partition(&lat)?);
    let log_partition_rel_error = ((fast - brute) / brute).abs();
    let v = viterbi(&lat);
    let b = brute_force_best_path(&lat)?;
    Ok(GradCheckReport {
        family,
        fields,
        log_partition_rel_error,
        viterbi_matches: v.labels == b.labels && v.score == b.score,
    })
}

/// A lattice scored by a randomly initialized model on random inputs.
#[derive(Debug, Clone)]
pub struct OracleInstance {
    pub family: FamilyTag,
    pub lattice: ScoreLattice,
}

/// Random family, `L` in 2..=5, `M` in 1..=6 and small random dimensions.
/// Inputs are drawn from `[-3, 3)` so the scores are not all near zero.
pub fn random_instance(seed: RngSeed) -> Result<OracleInstance> {
    let mut rng = seed.stream(2000);
    let family = FamilyTag::ALL[rng.random_range(0..FamilyTag::ALL.len())];
    let l = rng.random_range(2..=5);
    let m = rng.random_range(1..=6);
    let dims = Dims::new(
        l,
        rng.random_range(2..=6),
        rng.random_range(2..=5),
        rng.random_range(1..=4),
    )
    .with_mlp_hidden(rng.random_range(2..=6));
    let params = ModelParams::init(family, dims, seed);
    let mut h = random_reps(m, dims.d_h, &mut rng).h;
    h.data.iter_mut().for_each(|v| *v *= 3.0);
    let lattice = score_lattice(&params, &RepresentationSequence::new(h)?)?;
    Ok(OracleInstance { family, lattice })
}

/// Fast inference against enumeration on one lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InferenceCheck {
    /// `|logZ_fast - logZ_enum| / |logZ_enum|`.
    pub log_partition_rel_error: f64,
    pub viterbi_path_equal: bool,
    pub viterbi_score_equal: bool,
    /// Largest absolute difference of any pairwise marginal.
    pub marginal_abs_error: f64,
    /// Largest `|sum_{a,b} p[i][a][b] - 1|` over positions.
    pub position_sum_error: f64,
}

pub fn check_inference(lat: &ScoreLattice) -> Result<InferenceCheck> {
    let fast = log_partition(lat);
    let brute = brute_force_log_partition(lat)?;
    let v = viterbi(lat);
    let b = brute_force_best_path(lat)?;
    let pm = crate::inference::pairwise_marginals(lat);
    let bm = brute_force_marginals(lat)?;
    let position_sum_error = (0..lat.len())
        .map(|i| (pm.probs.position(i).iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    Ok(InferenceCheck {
        log_partition_rel_error: ((fast - brute) / brute).abs(),
        viterbi_path_equal: v.labels == b.labels,
        viterbi_score_equal: v.score == b.score,
        marginal_abs_error: lattice_max_diff(&pm.probs, &bm.probs),
        position_sum_error,
    })
}

/// Largest absolute entry-wise difference of two equally shaped lattices.
pub fn lattice_max_diff(a: &ScoreLattice, b: &ScoreLattice) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Vanilla CRF against TwoBilinear with one-hot label embeddings and
/// `w_t` equal to the transition table. The BOS embedding is random, so
/// the vanilla BOS row is set to its image under the table. Returns the
/// largest score difference on a random 6-token input.
pub fn equivalence_vanilla_two_bilinear(seed: RngSeed) -> Result<f64> {
    let l = 4;
    let dims = Dims::new(l, 5, l, 1);
    let mut vanilla = ModelParams::init(FamilyTag::VanillaCrf, dims, seed);
    let phi = vanilla
        .transitions
        .clone()
        .expect("vanilla has transitions");
    let mut rng = seed.stream(5);

    let mut two = ModelParams::zeros(FamilyTag::TwoBilinear, dims);
    let mut t = Matrix::zeros(l + 1, l);
    for a in 0..l {
        t.set(a, a, 1.0);
    }
    let bos: Vec<f64> = (0..l).map(|_| rng.random_range(-1.0..1.0)).collect();
    t.row_mut(l).copy_from_slice(&bos);
    two.label_embeddings = Some(t);
    two.w_t = Some(phi.top_rows(l));
    two.w_h = vanilla.w_h.clone();

    let bos_row: Vec<f64> = (0..l)
        .map(|b| (0..l).map(|q| bos[q] * phi.get(q, b)).sum())
        .collect();
    vanilla
        .transitions
        .as_mut()
        .expect("vanilla has transitions")
        .row_mut(l)
        .copy_from_slice(&bos_row);

    let reps = random_reps(6, dims.d_h, &mut rng);
    Ok(lattice_max_diff(
        &score_lattice(&vanilla, &reps)?,
        &score_lattice(&two, &reps)?,
    ))
}

/// ThreeBilinear with `w_h2 = 0` and the remaining weights copied from a
/// TwoBilinear model. Returns the largest score difference (exactly 0 when
/// the two agree bit for bit).
pub fn equivalence_three_two_bilinear(seed: RngSeed) -> Result<f64> {
    let dims = Dims::new(4, 5, 4, 3);
    let two = ModelParams::init(FamilyTag::TwoBilinear, dims, seed);
    let mut three = ModelParams::init(
        FamilyTag::ThreeBilinear,
        dims,
        RngSeed(seed.0.wrapping_add(50)),
    );
    three.label_embeddings = two.label_embeddings.clone();
    three.w_t = two.w_t.clone();
    three.w_h1 = two.w_h.clone();
    three.w_h2 = Some(Matrix::zeros(dims.d_h, dims.d_t));
    let reps = random_reps(5, dims.d_h, &mut seed.stream(6));
    Ok(lattice_max_diff(
        &score_lattice(&two, &reps)?,
        &score_lattice(&three, &reps)?,
    ))
}

/// The dense Trilinear model whose tensor is the reconstruction of a
/// D-Trilinear model's factors.
pub fn dense_equivalent(params: &ModelParams) -> Result<ModelParams> {
    let missing = || Error::InvalidArgument("not a d-trilinear model".into());
    let u = crate::potentials::reconstruct_dense_trilinear(
        params.u_t1.as_ref().ok_or_else(missing)?,
        params.u_t2.as_ref().ok_or_else(missing)?,
        params.u_h.as_ref().ok_or_else(missing)?,
    )?;
    let mut dense = ModelParams::zeros(FamilyTag::Trilinear, params.dims);
    dense.label_embeddings = params.label_embeddings.clone();
    dense.u_dense = Some(u);
    Ok(dense)
}

/// D-Trilinear against its dense reconstruction on a random 6-token
/// input. Returns the largest score difference.
pub fn equivalence_dense_trilinear(seed: RngSeed) -> Result<f64> {
    let dims = Dims::new(4, 5, 4, 3);
    let params = ModelParams::init(FamilyTag::DTrilinear, dims, seed);
    let reps = random_reps(6, dims.d_h, &mut seed.stream(9));
    Ok(lattice_max_diff(
        &score_lattice(&params, &reps)?,
        &score_lattice(&dense_equivalent(&params)?, &reps)?,
    ))
}

/// Relation between tokens and labels in a synthetic corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Order {
    /// The class of the current token equals the label.
    First,
    /// The label is the sum, mod L, of the classes of the previous and the
    /// current token (previous class 0 at the first position).
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LabelStyle {
    /// Labels named `L0..L{L-1}`, drawn from the transition matrix.
    Plain,
    /// One entity type in BIOES (`O, B-ENT, I-ENT, E-ENT, S-ENT`); label
    /// paths are always well formed. Requires `num_labels == 5`.
    Bioes,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub num_labels: usize,
    pub vocab_size: usize,
    pub d_h: usize,
    pub embedding_std: f64,
    pub order: Order,
    /// Row-stochastic `(L+1) x L`; row `L` is the start distribution.
    /// Random when `None`.
    pub transitions: Option<Matrix>,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: RngSeed,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub label_style: LabelStyle,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            num_labels: 5,
            vocab_size: 50,
            d_h: 64,
            embedding_std: 0.25,
            order: Order::First,
            transitions: None,
            min_len: 5,
            max_len: 15,
            seed: RngSeed(1),
            train: 2000,
            dev: 200,
            test: 200,
            label_style: LabelStyle::Plain,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub train: Vec<TokenSequence>,
    pub dev: Vec<TokenSequence>,
    pub test: Vec<TokenSequence>,
    pub embeddings: EmbeddingTable,
    /// Label names indexed by the generator's internal label id.
    pub labels: Vec<String>,
    pub transitions: Matrix,
}

const BIOES_NAMES: [&str; 5] = ["O", "B-ENT", "I-ENT", "E-ENT", "S-ENT"];

/// Legal BIOES successors of each state, with `O, B, I, E, S = 0..5` and
/// row 5 the start state.
fn bioes_transitions() -> Matrix {
    let outside = [0.6, 0.2, 0.0, 0.0, 0.2];
    let inside = [0.0, 0.0, 0.4, 0.6, 0.0];
    Matrix::from_rows(&[
        outside.to_vec(),
        inside.to_vec(),
        inside.to_vec(),
        outside.to_vec(),
        outside.to_vec(),
        outside.to_vec(),
    ])
    .expect("fixed shape")
}

fn random_transitions(l: usize, rng: &mut impl Rng) -> Matrix {
    let mut m = Matrix::zeros(l + 1, l);
    for a in 0..=l {
        let row = m.row_mut(a);
        row.iter_mut().for_each(|v| *v = rng.random_range(0.1..1.0));
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    m
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let l = self.num_labels;
        if l == 0 || self.vocab_size < l {
            return Err(Error::InvalidArgument(
                "need 1 <= num_labels <= vocab_size".into(),
            ));
        }
        if !(self.embedding_std > 0.0 && self.embedding_std.is_finite()) {
            return Err(Error::InvalidArgument("embedding_std must be > 0".into()));
        }
        if self.d_h == 0 || self.min_len == 0 || self.min_len > self.max_len {
            return Err(Error::InvalidArgument(
                "need d_h >= 1 and 1 <= min_len <= max_len".into(),
            ));
        }
        if self.label_style == LabelStyle::Bioes && l != BIOES_NAMES.len() {
            return Err(Error::InvalidArgument(
                "BIOES style needs num_labels = 5".into(),
            ));
        }
        if let Some(t) = &self.transitions {
            if (t.rows, t.cols) != (l + 1, l) {
                return Err(Error::DimensionMismatch {
                    context: "synthetic transitions",
                    expected: (l + 1) * l,
                    found: t.rows * t.cols,
                });
            }
            for a in 0..=l {
                let row = t.row(a);
                if row.iter().any(|&p| p.is_nan() || p < 0.0)
                    || (row.iter().sum::<f64>() - 1.0).abs() > 1e-9
                {
                    return Err(Error::InvalidArgument(format!(
                        "transition row {a} is not a distribution"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn draw(row: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    row.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

fn label_path(spec: &SyntheticSpec, trans: &Matrix, len: usize, rng: &mut impl Rng) -> Vec<usize> {
    let l = spec.num_labels;
    let mut path = Vec::with_capacity(len);
    let mut prev = l;
    for _ in 0..len {
        let y = draw(trans.row(prev), rng);
        path.push(y);
        prev = y;
    }
    if spec.label_style == LabelStyle::Bioes {
        // close a span left open at the end: B -> S, I -> E
        match path.last_mut() {
            Some(y @ 1) => *y = 4,
            Some(y @ 2) => *y = 3,
            _ => {}
        }
    }
    path
}

/// Samples a corpus. Token `w{v}` belongs to class `v mod L`; each token
/// has a fixed Gaussian embedding with entries of standard deviation
/// `embedding_std`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let l = spec.num_labels;
    let trans = match (&spec.transitions, spec.label_style) {
        (Some(t), _) => t.clone(),
        (None, LabelStyle::Bioes) => bioes_transitions(),
        (None, LabelStyle::Plain) => random_transitions(l, &mut spec.seed.stream(1)),
    };
    let labels: Vec<String> = match spec.label_style {
        LabelStyle::Plain => (0..l).map(|k| format!("L{k}")).collect(),
        LabelStyle::Bioes => BIOES_NAMES.iter().map(|s| s.to_string()).collect(),
    };

    let mut emb_rng = spec.seed.stream(2);
    let scale = spec.embedding_std;
    let mut vectors = HashMap::new();
    for v in 0..spec.vocab_size {
        let data: Vec<f64> = (0..spec.d_h)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut emb_rng);
                z * scale
            })
            .collect();
        vectors.insert(format!("w{v}"), Vector::new(data));
    }
    let embeddings = EmbeddingTable::new(spec.d_h, vectors)?;

    let members: Vec<Vec<usize>> = (0..l)
        .map(|c| (c..spec.vocab_size).step_by(l).collect())
        .collect();
    let lengths = Uniform::new_inclusive(spec.min_len, spec.max_len)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;

    let mut rng = spec.seed.stream(3);
    let mut sample = |count: usize| -> Result<Vec<TokenSequence>> {
        (0..count)
            .map(|_| {
                let len = lengths.sample(&mut rng);
                let path = label_path(spec, &trans, len, &mut rng);
                let mut prev_class = 0;
                let tokens = path
                    .iter()
                    .map(|&y| {
                        let class = match spec.order {
                            Order::First => y,
                            Order::Second => (y + l - prev_class) % l,
                        };
                        prev_class = class;
                        let pool = &members[class];
                        format!("w{}", pool[rng.random_range(0..pool.len())])
                    })
                    .collect();
                let names = path.iter().map(|&y| labels[y].clone()).collect();
                TokenSequence::new(tokens, Some(names))
            })
            .collect()
    };
    let train = sample(spec.train)?;
    let dev = sample(spec.dev)?;
    let test = sample(spec.test)?;
    Ok(SyntheticCorpus {
        train,
        dev,
        test,
        embeddings,
        labels,
        transitions: trans,
    })
}

/// Writes `train.conll`, `dev.conll`, `test.conll` and `embeddings.txt`
/// into `dir`, returning the paths by name.
pub fn write_synthetic(
    corpus: &SyntheticCorpus,
    dir: impl AsRef<Path>,
) -> Result<BTreeMap<&'static str, std::path::PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut paths = BTreeMap::new();
    for (name, file, seqs) in [
        ("train", "train.conll", &corpus.train),
        ("dev", "dev.conll", &corpus.dev),
        ("test", "test.conll", &corpus.test),
    ] {
        let path = dir.join(file);
        write_conll_path(&path, seqs)?;
        paths.insert(name, path);
    }
    let path = dir.join("embeddings.txt");
    write_embeddings(&path, &corpus.embeddings)?;
    paths.insert("embeddings", path);
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{load_embeddings, read_conll_path, spans_from_bioes};

    #[test]
    fn brute_force_examples() {
        let z = brute_force_log_partition(&ScoreLattice::zeros(2, 3)).unwrap();
        assert!((z - 2.0 * 3f64.ln()).abs() < 1e-12);
        let lat = ScoreLattice::from_fn(1, 2, |_, _, b| (b + 1) as f64);
        let z = brute_force_log_partition(&lat).unwrap();
        assert!((z - (1f64.exp() + 2f64.exp()).ln()).abs() < 1e-12);

        assert_eq!(
            brute_force_best_path(&ScoreLattice::zeros(4, 3))
                .unwrap()
                .labels,
            vec![0; 4]
        );
        let lat = ScoreLattice::from_fn(4, 3, |_, _, b| if b == 2 { 1.0 } else { 0.0 });
        assert_eq!(brute_force_best_path(&lat).unwrap().labels, vec![2; 4]);
    }

    #[test]
    fn too_large_is_rejected() {
        let lat = ScoreLattice::zeros(12, 5);
        assert!(matches!(
            brute_force_log_partition(&lat),
            Err(Error::TooLarge { .. })
        ));
        assert!(matches!(
            brute_force_best_path(&lat),
            Err(Error::TooLarge { .. })
        ));
    }

    #[test]
    fn finite_diff_examples() {
        let params = ModelParams::init(FamilyTag::VanillaCrf, Dims::new(2, 2, 1, 1), RngSeed(3));
        let g = finite_diff_grad(|_| 4.0, &params, FD_STEP);
        assert_eq!(g.norm_sq(), 0.0);

        let mut params = params;
        params.w_h.as_mut().unwrap().data[1] = 3.0;
        let g = finite_diff_grad(
            |p| p.w_h.as_ref().unwrap().data[1].powi(2),
            &params,
            FD_STEP,
        );
        assert!((g.w_h.as_ref().unwrap().data[1] - 6.0).abs() < 1e-6);
        assert!((g.norm_sq() - 36.0).abs() < 1e-5);
    }

    #[test]
    fn gradient_check_passes_and_catches_corruption() {
        let dims = Dims::new(4, 5, 4, 3).with_mlp_hidden(6);
        let r = gradient_check(FamilyTag::DQuadrilinear, dims, 5, RngSeed(42), None).unwrap();
        assert!(r.passed(GRAD_TOLERANCE), "{r:?}");
        let r = gradient_check(
            FamilyTag::DQuadrilinear,
            dims,
            5,
            RngSeed(42),
            Some(ParamField::UH1),
        )
        .unwrap();
        let failed: Vec<&str> = r
            .failures(GRAD_TOLERANCE)
            .iter()
            .map(|f| f.field.as_str())
            .collect();
        assert_eq!(failed, vec!["u_h1"]);
        assert!(gradient_check(
            FamilyTag::Softmax,
            dims,
            5,
            RngSeed(1),
            Some(ParamField::UH1)
        )
        .is_err());
    }

    fn small_spec(order: Order, style: LabelStyle) -> SyntheticSpec {
        SyntheticSpec {
            order,
            label_style: style,
            train: 30,
            dev: 5,
            test: 5,
            ..SyntheticSpec::default()
        }
    }

    fn class(token: &str, l: usize) -> usize {
        token[1..].parse::<usize>().unwrap() % l
    }

    #[test]
    fn first_order_labels_are_token_classes() {
        let c = generate_synthetic(&small_spec(Order::First, LabelStyle::Plain)).unwrap();
        for seq in c.train.iter().chain(&c.dev) {
            for (t, y) in seq.tokens.iter().zip(seq.labels.as_ref().unwrap()) {
                assert_eq!(format!("L{}", class(t, 5)), *y);
            }
        }
    }

    #[test]
    fn second_order_labels_depend_on_token_pairs() {
        let c = generate_synthetic(&small_spec(Order::Second, LabelStyle::Plain)).unwrap();
        for seq in &c.train {
            let mut prev = 0;
            for (t, y) in seq.tokens.iter().zip(seq.labels.as_ref().unwrap()) {
                let cur = class(t, 5);
                assert_eq!(format!("L{}", (prev + cur) % 5), *y);
                prev = cur;
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = small_spec(Order::Second, LabelStyle::Plain);
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.embeddings, b.embeddings);
        let other = generate_synthetic(&SyntheticSpec {
            seed: RngSeed(2),
            ..spec
        })
        .unwrap();
        assert_ne!(a.train, other.train);
    }

    #[test]
    fn bioes_paths_are_well_formed() {
        let c = generate_synthetic(&small_spec(Order::First, LabelStyle::Bioes)).unwrap();
        for seq in &c.train {
            let labels = seq.labels.as_ref().unwrap();
            let spans = spans_from_bioes(labels);
            let covered: usize = spans.iter().map(|s| s.end - s.start + 1).sum();
            let non_o = labels.iter().filter(|y| *y != "O").count();
            assert_eq!(covered, non_o, "{labels:?}");
        }
    }

    #[test]
    fn bad_specs_are_rejected() {
        let spec = SyntheticSpec {
            vocab_size: 3,
            ..SyntheticSpec::default()
        };
        assert!(generate_synthetic(&spec).is_err());
        let spec = SyntheticSpec {
            transitions: Some(Matrix::zeros(6, 5)),
            ..SyntheticSpec::default()
        };
        assert!(generate_synthetic(&spec).is_err());
        let spec = SyntheticSpec {
            num_labels: 4,
            label_style: LabelStyle::Bioes,
            ..SyntheticSpec::default()
        };
        assert!(generate_synthetic(&spec).is_err());
    }

    #[test]
    fn written_corpus_reads_back() {
        let c = generate_synthetic(&small_spec(Order::First, LabelStyle::Bioes)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let paths = write_synthetic(&c, dir.path()).unwrap();
        assert_eq!(read_conll_path(&paths["train"]).unwrap(), c.train);
        let table = load_embeddings(&paths["embeddings"], Some(64)).unwrap();
        assert_eq!(table.vectors, c.embeddings.vectors);
    }
}
