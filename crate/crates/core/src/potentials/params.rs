use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{init_matrix_with, Matrix, RngSeed, Tensor3, Vector};

/// Potential-function family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FamilyTag {
    Softmax,
    VanillaCrf,
    TwoBilinear,
    ThreeBilinear,
    Trilinear,
    DTrilinear,
    DQuadrilinear,
    DPentalinear,
    ConcatMlp1W2L,
    ConcatMlp2W2L,
}

impl FamilyTag {
    pub const ALL: [FamilyTag; 10] = [
        FamilyTag::Softmax,
        FamilyTag::VanillaCrf,
        FamilyTag::TwoBilinear,
        FamilyTag::ThreeBilinear,
        FamilyTag::Trilinear,
        FamilyTag::DTrilinear,
        FamilyTag::DQuadrilinear,
        FamilyTag::DPentalinear,
        FamilyTag::ConcatMlp1W2L,
        FamilyTag::ConcatMlp2W2L,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FamilyTag::Softmax => "softmax",
            FamilyTag::VanillaCrf => "vanilla-crf",
            FamilyTag::TwoBilinear => "two-bilinear",
            FamilyTag::ThreeBilinear => "three-bilinear",
            FamilyTag::Trilinear => "trilinear",
            FamilyTag::DTrilinear => "d-trilinear",
            FamilyTag::DQuadrilinear => "d-quadrilinear",
            FamilyTag::DPentalinear => "d-pentalinear",
            FamilyTag::ConcatMlp1W2L => "concat-mlp-1w2l",
            FamilyTag::ConcatMlp2W2L => "concat-mlp-2w2l",
        }
    }

    /// Whether the family models label-label dependencies (everything but softmax).
    pub fn is_crf(self) -> bool {
        self != FamilyTag::Softmax
    }

    pub fn uses_label_embeddings(self) -> bool {
        !matches!(self, FamilyTag::Softmax | FamilyTag::VanillaCrf)
    }

    pub fn is_decomposed(self) -> bool {
        matches!(
            self,
            FamilyTag::DTrilinear | FamilyTag::DQuadrilinear | FamilyTag::DPentalinear
        )
    }

    pub fn is_mlp(self) -> bool {
        matches!(self, FamilyTag::ConcatMlp1W2L | FamilyTag::ConcatMlp2W2L)
    }

    /// Parameter fields populated for this family, in canonical order.
    pub fn fields(self) -> &'static [ParamField] {
        use ParamField::*;
        match self {
            FamilyTag::Softmax => &[WH],
            FamilyTag::VanillaCrf => &[Transitions, WH],
            FamilyTag::TwoBilinear => &[LabelEmbeddings, WT, WH],
            FamilyTag::ThreeBilinear => &[LabelEmbeddings, WT, WH1, WH2],
            FamilyTag::Trilinear => &[LabelEmbeddings, UDense],
            FamilyTag::DTrilinear => &[LabelEmbeddings, UT1, UT2, UH],
            FamilyTag::DQuadrilinear => &[LabelEmbeddings, UT1, UT2, UH1, UH2],
            FamilyTag::DPentalinear => &[LabelEmbeddings, UT1, UT2, UH1, UH2, UH3],
            FamilyTag::ConcatMlp1W2L | FamilyTag::ConcatMlp2W2L => {
                &[LabelEmbeddings, MlpW1, MlpB1, MlpW2]
            }
        }
    }
}

impl fmt::Display for FamilyTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FamilyTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        FamilyTag::ALL
            .iter()
            .copied()
            .find(|f| f.name() == norm)
            .ok_or_else(|| Error::UnknownFamily(s.to_string()))
    }
}

/// Named parameter slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamField {
    LabelEmbeddings,
    Transitions,
    WH,
    WT,
    WH1,
    WH2,
    UDense,
    UT1,
    UT2,
    UH,
    UH1,
    UH2,
    UH3,
    MlpW1,
    MlpB1,
    MlpW2,
}

impl ParamField {
    pub const ALL: [ParamField; 16] = [
        ParamField::LabelEmbeddings,
        ParamField::Transitions,
        ParamField::WH,
        ParamField::WT,
        ParamField::WH1,
        ParamField::WH2,
        ParamField::UDense,
        ParamField::UT1,
        ParamField::UT2,
        ParamField::UH,
        ParamField::UH1,
        ParamField::UH2,
        ParamField::UH3,
        ParamField::MlpW1,
        ParamField::MlpB1,
        ParamField::MlpW2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamField::LabelEmbeddings => "label_embeddings",
            ParamField::Transitions => "transition_table",
            ParamField::WH => "w_h",
            ParamField::WT => "w_t",
            ParamField::WH1 => "w_h1",
            ParamField::WH2 => "w_h2",
            ParamField::UDense => "u_dense",
            ParamField::UT1 => "u_t1",
            ParamField::UT2 => "u_t2",
            ParamField::UH => "u_h",
            ParamField::UH1 => "u_h1",
            ParamField::UH2 => "u_h2",
            ParamField::UH3 => "u_h3",
            ParamField::MlpW1 => "mlp_w1",
            ParamField::MlpB1 => "mlp_b1",
            ParamField::MlpW2 => "mlp_w2",
        }
    }

    pub fn from_name(name: &str) -> Option<ParamField> {
        ParamField::ALL.iter().copied().find(|f| f.name() == name)
    }
}

impl fmt::Display for ParamField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Shape of a parameter field: `(rows, cols)` or `(rows, cols, depth)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub rows: usize,
    pub cols: usize,
    pub depth: Option<usize>,
}

impl Shape {
    pub fn len(&self) -> usize {
        self.rows * self.cols * self.depth.unwrap_or(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Size hyperparameters of a model.
///
/// `d_t` is ignored by softmax/vanilla, `d_r` only matters for the
/// decomposed families and `mlp_hidden` only for the concat-MLP ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub num_labels: usize,
    pub d_h: usize,
    pub d_t: usize,
    pub d_r: usize,
    pub mlp_hidden: usize,
}

impl Dims {
    pub fn new(num_labels: usize, d_h: usize, d_t: usize, d_r: usize) -> Self {
        Dims {
            num_labels,
            d_h,
            d_t,
            d_r,
            mlp_hidden: 128,
        }
    }

    pub fn with_mlp_hidden(mut self, hidden: usize) -> Self {
        self.mlp_hidden = hidden;
        self
    }

    /// Index of the synthetic begin-of-sequence label.
    pub fn bos(&self) -> usize {
        self.num_labels
    }

    /// Input width of the concat-MLP first layer.
    pub fn mlp_input(&self, family: FamilyTag) -> usize {
        let words = if family == FamilyTag::ConcatMlp2W2L {
            2
        } else {
            1
        };
        words * self.d_h + 2 * self.d_t
    }

    /// Expected shape of `field` for `family`.
    pub fn shape(&self, family: FamilyTag, field: ParamField) -> Shape {
        let l = self.num_labels;
        let m = |rows, cols| Shape {
            rows,
            cols,
            depth: None,
        };
        match field {
            ParamField::LabelEmbeddings => m(l + 1, self.d_t),
            ParamField::Transitions => m(l + 1, l),
            ParamField::WH => match family {
                FamilyTag::Softmax | FamilyTag::VanillaCrf => m(self.d_h, l),
                _ => m(self.d_h, self.d_t),
            },
            ParamField::WT => m(self.d_t, self.d_t),
            ParamField::WH1 | ParamField::WH2 => m(self.d_h, self.d_t),
            ParamField::UDense => Shape {
                rows: self.d_h,
                cols: self.d_t,
                depth: Some(self.d_t),
            },
            ParamField::UT1 | ParamField::UT2 => m(self.d_t, self.d_r),
            ParamField::UH | ParamField::UH1 | ParamField::UH2 | ParamField::UH3 => {
                m(self.d_h, self.d_r)
            }
            ParamField::MlpW1 => m(self.mlp_hidden, self.mlp_input(family)),
            ParamField::MlpB1 => m(1, self.mlp_hidden),
            ParamField::MlpW2 => m(1, self.mlp_hidden),
        }
    }
}

/// All weights of one potential family.
///
/// Exactly the fields listed by [`FamilyTag::fields`] are `Some`. Row
/// `num_labels` of `label_embeddings` and `transitions` belongs to the
/// begin-of-sequence label.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub family: FamilyTag,
    pub dims: Dims,
    pub label_embeddings: Option<Matrix>,
    pub transitions: Option<Matrix>,
    pub w_h: Option<Matrix>,
    pub w_t: Option<Matrix>,
    pub w_h1: Option<Matrix>,
    pub w_h2: Option<Matrix>,
    pub u_dense: Option<Tensor3>,
    pub u_t1: Option<Matrix>,
    pub u_t2: Option<Matrix>,
    pub u_h: Option<Matrix>,
    pub u_h1: Option<Matrix>,
    pub u_h2: Option<Matrix>,
    pub u_h3: Option<Matrix>,
    pub mlp_w1: Option<Matrix>,
    pub mlp_b1: Option<Vector>,
    pub mlp_w2: Option<Matrix>,
}

/// Gradient with respect to every populated field of a [`ModelParams`].
pub type ParamGrad = ModelParams;

impl ModelParams {
    /// All populated fields set to zero.
    pub fn zeros(family: FamilyTag, dims: Dims) -> Self {
        let mut p = ModelParams {
            family,
            dims,
            label_embeddings: None,
            transitions: None,
            w_h: None,
            w_t: None,
            w_h1: None,
            w_h2: None,
            u_dense: None,
            u_t1: None,
            u_t2: None,
            u_h: None,
            u_h1: None,
            u_h2: None,
            u_h3: None,
            mlp_w1: None,
            mlp_b1: None,
            mlp_w2: None,
        };
        for &field in family.fields() {
            let shape = dims.shape(family, field);
            p.put(field, shape, vec![0.0; shape.len()]);
        }
        p
    }

    /// Glorot-uniform initialization; each field draws from its own stream.
    pub fn init(family: FamilyTag, dims: Dims, seed: RngSeed) -> Self {
        let mut p = ModelParams::zeros(family, dims);
        for &field in family.fields() {
            let mut rng = seed.stream(field as u64 + 1);
            let shape = dims.shape(family, field);
            let data = match field {
                ParamField::MlpB1 => vec![0.0; shape.len()],
                ParamField::UDense => {
                    let bound = (6.0 / (shape.rows + shape.cols) as f64).sqrt();
                    (0..shape.len())
                        .map(|_| rng.random_range(-bound..=bound))
                        .collect()
                }
                _ => init_matrix_with(shape.rows, shape.cols, &mut rng).data,
            };
            p.put(field, shape, data);
        }
        p
    }

    /// Same family and dims, every populated field zero.
    pub fn zeros_like(&self) -> ParamGrad {
        ModelParams::zeros(self.family, self.dims)
    }

    fn put(&mut self, field: ParamField, shape: Shape, data: Vec<f64>) {
        let mat = || Matrix {
            rows: shape.rows,
            cols: shape.cols,
            data: data.clone(),
        };
        match field {
            ParamField::LabelEmbeddings => self.label_embeddings = Some(mat()),
            ParamField::Transitions => self.transitions = Some(mat()),
            ParamField::WH => self.w_h = Some(mat()),
            ParamField::WT => self.w_t = Some(mat()),
            ParamField::WH1 => self.w_h1 = Some(mat()),
            ParamField::WH2 => self.w_h2 = Some(mat()),
            ParamField::UDense => {
                self.u_dense = Some(Tensor3 {
                    d1: shape.rows,
                    d2: shape.cols,
                    d3: shape.depth.unwrap_or(1),
                    data: data.clone(),
                })
            }
            ParamField::UT1 => self.u_t1 = Some(mat()),
            ParamField::UT2 => self.u_t2 = Some(mat()),
            ParamField::UH => self.u_h = Some(mat()),
            ParamField::UH1 => self.u_h1 = Some(mat()),
            ParamField::UH2 => self.u_h2 = Some(mat()),
            ParamField::UH3 => self.u_h3 = Some(mat()),
            ParamField::MlpW1 => self.mlp_w1 = Some(mat()),
            ParamField::MlpB1 => self.mlp_b1 = Some(Vector::new(data.clone())),
            ParamField::MlpW2 => self.mlp_w2 = Some(mat()),
        }
    }

    /// Replace the contents of a field, checking the length against `dims`.
    pub fn set_field(&mut self, field: ParamField, data: Vec<f64>) -> Result<()> {
        if !self.family.fields().contains(&field) {
            return Err(Error::InvalidArgument(format!(
                "{} has no field {}",
                self.family, field
            )));
        }
        let shape = self.dims.shape(self.family, field);
        if data.len() != shape.len() {
            return Err(Error::DimensionMismatch {
                context: field.name(),
                expected: shape.len(),
                found: data.len(),
            });
        }
        self.put(field, shape, data);
        Ok(())
    }

    pub fn field(&self, field: ParamField) -> Option<&[f64]> {
        fn m(o: &Option<Matrix>) -> Option<&[f64]> {
            o.as_ref().map(|m| m.data.as_slice())
        }
        match field {
            ParamField::LabelEmbeddings => m(&self.label_embeddings),
            ParamField::Transitions => m(&self.transitions),
            ParamField::WH => m(&self.w_h),
            ParamField::WT => m(&self.w_t),
            ParamField::WH1 => m(&self.w_h1),
            ParamField::WH2 => m(&self.w_h2),
            ParamField::UDense => self.u_dense.as_ref().map(|t| t.data.as_slice()),
            ParamField::UT1 => m(&self.u_t1),
            ParamField::UT2 => m(&self.u_t2),
            ParamField::UH => m(&self.u_h),
            ParamField::UH1 => m(&self.u_h1),
            ParamField::UH2 => m(&self.u_h2),
            ParamField::UH3 => m(&self.u_h3),
            ParamField::MlpW1 => m(&self.mlp_w1),
            ParamField::MlpB1 => self.mlp_b1.as_ref().map(|v| v.data.as_slice()),
            ParamField::MlpW2 => m(&self.mlp_w2),
        }
    }

    pub fn field_mut(&mut self, field: ParamField) -> Option<&mut [f64]> {
        fn m(o: &mut Option<Matrix>) -> Option<&mut [f64]> {
            o.as_mut().map(|m| m.data.as_mut_slice())
        }
        match field {
            ParamField::LabelEmbeddings => m(&mut self.label_embeddings),
            ParamField::Transitions => m(&mut self.transitions),
            ParamField::WH => m(&mut self.w_h),
            ParamField::WT => m(&mut self.w_t),
            ParamField::WH1 => m(&mut self.w_h1),
            ParamField::WH2 => m(&mut self.w_h2),
            ParamField::UDense => self.u_dense.as_mut().map(|t| t.data.as_mut_slice()),
            ParamField::UT1 => m(&mut self.u_t1),
            ParamField::UT2 => m(&mut self.u_t2),
            ParamField::UH => m(&mut self.u_h),
            ParamField::UH1 => m(&mut self.u_h1),
            ParamField::UH2 => m(&mut self.u_h2),
            ParamField::UH3 => m(&mut self.u_h3),
            ParamField::MlpW1 => m(&mut self.mlp_w1),
            ParamField::MlpB1 => self.mlp_b1.as_mut().map(|v| v.data.as_mut_slice()),
            ParamField::MlpW2 => m(&mut self.mlp_w2),
        }
    }

    /// Populated fields in canonical order.
    pub fn fields(&self) -> impl Iterator<Item = (ParamField, &[f64])> + '_ {
        self.family
            .fields()
            .iter()
            .filter_map(move |&f| self.field(f).map(|d| (f, d)))
    }

    pub fn num_parameters(&self) -> usize {
        self.fields().map(|(_, d)| d.len()).sum()
    }

    /// `self += alpha * other`, field by field.
    pub fn axpy(&mut self, alpha: f64, other: &ModelParams) {
        for &field in self.family.fields() {
            if let (Some(dst), Some(src)) = (self.field_mut(field), other.field(field)) {
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += alpha * s;
                }
            }
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for &field in self.family.fields() {
            if let Some(dst) = self.field_mut(field) {
                dst.iter_mut().for_each(|v| *v *= alpha);
            }
        }
    }

    /// Squared L2 norm over all populated fields.
    pub fn norm_sq(&self) -> f64 {
        self.fields()
            .flat_map(|(_, d)| d.iter())
            .map(|v| v * v)
            .sum()
    }

    /// Checks that the populated fields match the family and dims, and are finite.
    pub fn validate(&self) -> Result<()> {
        let dims = &self.dims;
        if dims.num_labels == 0 || dims.d_h == 0 {
            return Err(Error::InvalidArgument(
                "num_labels and d_h must be positive".into(),
            ));
        }
        if self.family.uses_label_embeddings() && dims.d_t == 0 {
            return Err(Error::InvalidArgument("d_t must be positive".into()));
        }
        if self.family.is_decomposed() && dims.d_r == 0 {
            return Err(Error::InvalidArgument("d_r must be positive".into()));
        }
        if self.family.is_mlp() && dims.mlp_hidden == 0 {
            return Err(Error::InvalidArgument("mlp_hidden must be positive".into()));
        }
        for field in ParamField::ALL {
            let expected = self.family.fields().contains(&field);
            match (self.field(field), expected) {
                (None, true) => return Err(Error::MissingField(field.name().into())),
                (Some(_), false) => {
                    return Err(Error::InvalidArgument(format!(
                        "field {} is not used by {}",
                        field, self.family
                    )))
                }
                (Some(data), true) => {
                    let shape = dims.shape(self.family, field);
                    if data.len() != shape.len() || !self.shape_matches(field, shape) {
                        return Err(Error::DimensionMismatch {
                            context: field.name(),
                            expected: shape.len(),
                            found: data.len(),
                        });
                    }
                    if data.iter().any(|v| !v.is_finite()) {
                        return Err(Error::NonFinite(field.name().into()));
                    }
                }
                (None, false) => {}
            }
        }
        Ok(())
    }

    fn shape_matches(&self, field: ParamField, shape: Shape) -> bool {
        let mat = |o: &Option<Matrix>| {
            o.as_ref()
                .is_some_and(|m| m.rows == shape.rows && m.cols == shape.cols)
        };
        match field {
            ParamField::UDense => self.u_dense.as_ref().is_some_and(|t| {
                t.d1 == shape.rows && t.d2 == shape.cols && Some(t.d3) == shape.depth
            }),
            ParamField::MlpB1 => self.mlp_b1.as_ref().is_some_and(|v| v.dim() == shape.cols),
            ParamField::LabelEmbeddings => mat(&self.label_embeddings),
            ParamField::Transitions => mat(&self.transitions),
            ParamField::WH => mat(&self.w_h),
            ParamField::WT => mat(&self.w_t),
            ParamField::WH1 => mat(&self.w_h1),
            ParamField::WH2 => mat(&self.w_h2),
            ParamField::UT1 => mat(&self.u_t1),
            ParamField::UT2 => mat(&self.u_t2),
            ParamField::UH => mat(&self.u_h),
            ParamField::UH1 => mat(&self.u_h1),
            ParamField::UH2 => mat(&self.u_h2),
            ParamField::UH3 => mat(&self.u_h3),
            ParamField::MlpW1 => mat(&self.mlp_w1),
            ParamField::MlpW2 => mat(&self.mlp_w2),
        }
    }
}
