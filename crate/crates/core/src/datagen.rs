//! Synthetic regression families with disjoint in-distribution (train) and
//! out-of-distribution (test) input ranges.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::tensor::{SeededRng, Tensor2, TensorError};

pub const DEFAULT_N_TRAIN: usize = 4096;
pub const DEFAULT_N_TEST: usize = 1024;
pub const MIN_TRAIN_ROWS: usize = 128;
/// Attempts to draw an in-domain point before giving up.
pub const MAX_RESAMPLE: usize = 1000;

pub const POLY1D_MAX_DEGREE: usize = 9;
pub const POLY20D_DIM: usize = 20;
pub const POLY20D_MAX_TERMS: usize = 8;
pub const POLY20D_MAX_DEGREE: usize = 3;
pub const SH_MAX_DEGREE: u32 = 4;
/// Sine-product frequencies are drawn uniformly from this interval.
pub const SIN_FREQ_RANGE: (f64, f64) = (0.5, 3.0 * PI);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DataError {
    #[error("unknown Feynman equation id `{0}`")]
    UnknownEquationId(String),
    #[error("{equation} is undefined at {point:?}")]
    DomainError { equation: String, point: Vec<f64> },
    #[error("invalid dataset spec: {0}")]
    InvalidSpec(String),
    #[error("malformed dataset CSV at line {line}: {reason}")]
    Csv { line: usize, reason: String },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Poly1d,
    Poly20d,
    SinProduct,
    SphericalHarmonic,
    Feynman,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::Poly1d,
        Family::Poly20d,
        Family::SinProduct,
        Family::SphericalHarmonic,
        Family::Feynman,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Poly1d => "poly1d",
            Family::Poly20d => "poly20d",
            Family::SinProduct => "sin_product",
            Family::SphericalHarmonic => "spherical_harmonic",
            Family::Feynman => "feynman",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| format!("unknown dataset family `{s}`"))
    }
}

/// Half-open interval `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v < self.hi
    }

    pub fn disjoint(&self, other: &Interval) -> bool {
        self.hi <= other.lo || other.hi <= self.lo
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// How a family's input box is split into train and test ranges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangePattern {
    /// Train on `[0, 0.5)`, test on `[0.5, 1)`; on a bounded box, the lower
    /// half trains and the upper half tests.
    LowToHigh,
    /// Train on `[0, 1)`, test on `[-1, 0)`; on a bounded box, the upper
    /// half trains and the lower half tests.
    PositiveToNegative,
}

impl RangePattern {
    /// `(id, ood)` for the unit-scale polynomial and sine families.
    pub fn unit_ranges(self) -> (Interval, Interval) {
        match self {
            RangePattern::LowToHigh => (Interval::new(0.0, 0.5), Interval::new(0.5, 1.0)),
            RangePattern::PositiveToNegative => {
                (Interval::new(0.0, 1.0), Interval::new(-1.0, 0.0))
            }
        }
    }

    /// `(id, ood)` halves of a bounded input box.
    pub fn box_ranges(self, domain: Interval) -> (Interval, Interval) {
        let lower = Interval::new(domain.lo, domain.mid());
        let upper = Interval::new(domain.mid(), domain.hi);
        match self {
            RangePattern::LowToHigh => (lower, upper),
            RangePattern::PositiveToNegative => (upper, lower),
        }
    }
}

/// Family-specific parameters. `None` fields are drawn at realization time
/// from the spec seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FamilyParams {
    Poly1d {
        degree: usize,
        coefficients: Option<Vec<f64>>,
    },
    Poly20d {
        dim: usize,
        max_terms: usize,
        max_degree: usize,
    },
    SinProduct {
        frequencies: Option<[f64; 3]>,
    },
    SphericalHarmonic {
        degree: u32,
        order: i32,
    },
    Feynman {
        equation: String,
    },
}

impl FamilyParams {
    pub fn family(&self) -> Family {
        match self {
            FamilyParams::Poly1d { .. } => Family::Poly1d,
            FamilyParams::Poly20d { .. } => Family::Poly20d,
            FamilyParams::SinProduct { .. } => Family::SinProduct,
            FamilyParams::SphericalHarmonic { .. } => Family::SphericalHarmonic,
            FamilyParams::Feynman { .. } => Family::Feynman,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub params: FamilyParams,
    /// One interval per input dimension.
    pub id_range: Vec<Interval>,
    pub ood_range: Vec<Interval>,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coefficient: f64,
    /// Variable index per unit of degree; `[3, 3, 7]` is `x3^2 x7`.
    pub factors: Vec<usize>,
}

/// A fully determined target function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Target {
    /// `sum_i c_i x^i`.
    Poly1d { coefficients: Vec<f64> },
    Poly20d { dim: usize, terms: Vec<Monomial> },
    /// `sin(a x) sin(b x) sin(c x)`.
    SinProduct { frequencies: [f64; 3] },
    /// Real spherical harmonic of `(azimuth, polar)`.
    SphericalHarmonic { degree: u32, order: i32 },
    Feynman { equation: String },
}

impl Target {
    pub fn input_dim(&self) -> usize {
        match self {
            Target::Poly1d { .. } | Target::SinProduct { .. } => 1,
            Target::Poly20d { dim, .. } => *dim,
            Target::SphericalHarmonic { .. } => 2,
            Target::Feynman { equation } => feynman(equation).map(|e| e.domains.len()).unwrap_or(0),
        }
    }
}

/// Input/target pairs; `y` is a single column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub x: Tensor2,
    pub y: Tensor2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub spec: DatasetSpec,
    pub target: Target,
    pub train: Split,
    pub test: Split,
}

impl SampleSet {
    pub fn input_dim(&self) -> usize {
        self.train.x.cols()
    }
}

/// One closed-form equation from the Feynman symbolic regression collection.
pub struct FeynmanEquation {
    pub id: &'static str,
    pub formula: &'static str,
    pub variables: &'static [&'static str],
    /// Sampling box of each variable.
    pub domains: &'static [Interval],
    eval: fn(&[f64]) -> Option<f64>,
}

impl FeynmanEquation {
    pub fn eval(&self, x: &[f64]) -> Option<f64> {
        (self.eval)(x).filter(|v| v.is_finite())
    }
}

const B15: Interval = Interval::new(1.0, 5.0);
const B13: Interval = Interval::new(1.0, 3.0);

pub static FEYNMAN_EQUATIONS: [FeynmanEquation; 10] = [
    FeynmanEquation {
        id: "I.6.2a",
        formula: "exp(-theta^2/2) / sqrt(2 pi)",
        variables: &["theta"],
        domains: &[B13],
        eval: |v| Some((-v[0] * v[0] / 2.0).exp() / (2.0 * PI).sqrt()),
    },
    FeynmanEquation {
        id: "I.6.2",
        formula: "exp(-(theta/sigma)^2/2) / (sqrt(2 pi) sigma)",
        variables: &["sigma", "theta"],
        domains: &[B13, B13],
        eval: |v| {
            let (sigma, theta) = (v[0], v[1]);
            if sigma <= 0.0 {
                return None;
            }
            Some((-(theta / sigma).powi(2) / 2.0).exp() / ((2.0 * PI).sqrt() * sigma))
        },
    },
    FeynmanEquation {
        id: "I.8.14",
        formula: "sqrt((x2-x1)^2 + (y2-y1)^2)",
        variables: &["x1", "x2", "y1", "y2"],
        domains: &[B15, B15, B15, B15],
        eval: |v| Some(((v[1] - v[0]).powi(2) + (v[3] - v[2]).powi(2)).sqrt()),
    },
    FeynmanEquation {
        id: "I.10.7",
        formula: "m0 / sqrt(1 - v^2/c^2)",
        variables: &["m0", "v", "c"],
        domains: &[B15, Interval::new(1.0, 2.0), Interval::new(3.0, 10.0)],
        eval: |v| {
            let (m0, vel, c) = (v[0], v[1], v[2]);
            let s = 1.0 - vel * vel / (c * c);
            (s > 0.0).then(|| m0 / s.sqrt())
        },
    },
    FeynmanEquation {
        id: "I.12.1",
        formula: "mu N",
        variables: &["mu", "Nn"],
        domains: &[B15, B15],
        eval: |v| Some(v[0] * v[1]),
    },
    FeynmanEquation {
        id: "I.14.4",
        formula: "k x^2 / 2",
        variables: &["k_spring", "x"],
        domains: &[B15, B15],
        eval: |v| Some(v[0] * v[1] * v[1] / 2.0),
    },
    FeynmanEquation {
        id: "I.18.4",
        formula: "(m1 r1 + m2 r2) / (m1 + m2)",
        variables: &["m1", "m2", "r1", "r2"],
        domains: &[B15, B15, B15, B15],
        eval: |v| {
            let denom = v[0] + v[1];
            (denom != 0.0).then(|| (v[0] * v[2] + v[1] * v[3]) / denom)
        },
    },
    FeynmanEquation {
        id: "I.25.13",
        formula: "q / C",
        variables: &["q", "C"],
        domains: &[B15, B15],
        eval: |v| (v[1] != 0.0).then(|| v[0] / v[1]),
    },
    FeynmanEquation {
        id: "I.39.1",
        formula: "3/2 p V",
        variables: &["pr", "V"],
        domains: &[B15, B15],
        eval: |v| Some(1.5 * v[0] * v[1]),
    },
    FeynmanEquation {
        id: "II.3.24",
        formula: "P / (4 pi r^2)",
        variables: &["Pwr", "r"],
        domains: &[B15, B15],
        eval: |v| (v[1] != 0.0).then(|| v[0] / (4.0 * PI * v[1] * v[1])),
    },
];

pub fn feynman(id: &str) -> Result<&'static FeynmanEquation, DataError> {
    FEYNMAN_EQUATIONS
        .iter()
        .find(|e| e.id == id)
        .ok_or_else(|| DataError::UnknownEquationId(id.to_string()))
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// Associated Legendre function `P_l^m(x)` for `m >= 0`, including the
/// Condon-Shortley phase.
pub fn assoc_legendre(l: u32, m: u32, x: f64) -> f64 {
    let mut pmm = 1.0;
    if m > 0 {
        let somx2 = ((1.0 - x) * (1.0 + x)).max(0.0).sqrt();
        let mut fact = 1.0;
        for _ in 0..m {
            pmm *= -fact * somx2;
            fact += 2.0;
        }
    }
    if l == m {
        return pmm;
    }
    let mut pmmp1 = x * f64::from(2 * m + 1) * pmm;
    if l == m + 1 {
        return pmmp1;
    }
    let mut pll = 0.0;
    for ll in (m + 2)..=l {
        pll = (x * f64::from(2 * ll - 1) * pmmp1 - f64::from(ll + m - 1) * pmm) / f64::from(ll - m);
        pmm = pmmp1;
        pmmp1 = pll;
    }
    pll
}

/// Real orthonormal spherical harmonic at azimuth `phi`, polar angle `theta`.
pub fn real_spherical_harmonic(l: u32, m: i32, phi: f64, theta: f64) -> f64 {
    let am = m.unsigned_abs();
    let norm = ((2 * l + 1) as f64 / (4.0 * PI) * factorial(l - am) / factorial(l + am)).sqrt();
    let p = assoc_legendre(l, am, theta.cos());
    match m.cmp(&0) {
        std::cmp::Ordering::Equal => norm * p,
        std::cmp::Ordering::Greater => 2f64.sqrt() * norm * p * (f64::from(m) * phi).cos(),
        std::cmp::Ordering::Less => 2f64.sqrt() * norm * p * (f64::from(am) * phi).sin(),
    }
}

fn horner(coefficients: &[f64], x: f64) -> f64 {
    coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Exact value of a realized target at `x`.
pub fn target_eval(target: &Target, x: &[f64]) -> Result<f64, DataError> {
    let v = match target {
        Target::Poly1d { coefficients } => horner(coefficients, x[0]),
        Target::Poly20d { terms, .. } => terms
            .iter()
            .map(|t| t.coefficient * t.factors.iter().map(|&i| x[i]).product::<f64>())
            .sum(),
        Target::SinProduct { frequencies: [a, b, c] } => {
            (a * x[0]).sin() * (b * x[0]).sin() * (c * x[0]).sin()
        }
        Target::SphericalHarmonic { degree, order } => {
            real_spherical_harmonic(*degree, *order, x[0], x[1])
        }
        Target::Feynman { equation } => {
            let eq = feynman(equation)?;
            eq.eval(x).ok_or_else(|| DataError::DomainError {
                equation: equation.clone(),
                point: x.to_vec(),
            })?
        }
    };
    Ok(v)
}

fn spec_input_dim(params: &FamilyParams) -> Result<usize, DataError> {
    Ok(match params {
        FamilyParams::Poly1d { .. } | FamilyParams::SinProduct { .. } => 1,
        FamilyParams::Poly20d { dim, .. } => *dim,
        FamilyParams::SphericalHarmonic { .. } => 2,
        FamilyParams::Feynman { equation } => feynman(equation)?.domains.len(),
    })
}

/// Open interval `(0, 1)` draw.
fn open_unit(rng: &mut SeededRng) -> f64 {
    loop {
        let v = rng.unit();
        if v > 0.0 {
            return v;
        }
    }
}

impl DatasetSpec {
    /// Spec with the standard sample counts and the ranges `pattern` implies
    /// for this family.
    pub fn with_pattern(params: FamilyParams, pattern: RangePattern, seed: u64) -> Result<Self, DataError> {
        let dim = spec_input_dim(&params)?;
        let (id_range, ood_range): (Vec<_>, Vec<_>) = match &params {
            FamilyParams::SphericalHarmonic { .. } => [
                Interval::new(0.0, 2.0 * PI),
                Interval::new(0.0, PI),
            ]
            .into_iter()
            .map(|b| pattern.box_ranges(b))
            .unzip(),
            FamilyParams::Feynman { equation } => feynman(equation)?
                .domains
                .iter()
                .map(|&b| pattern.box_ranges(b))
                .unzip(),
            _ => (0..dim).map(|_| pattern.unit_ranges()).unzip(),
        };
        let spec = Self {
            params,
            id_range,
            ood_range,
            n_train: DEFAULT_N_TRAIN,
            n_test: DEFAULT_N_TEST,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn family(&self) -> Family {
        self.params.family()
    }

    pub fn input_dim(&self) -> usize {
        self.id_range.len()
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::InvalidSpec(m));
        let dim = spec_input_dim(&self.params)?;
        if self.id_range.len() != dim || self.ood_range.len() != dim {
            return bad(format!(
                "family {} needs {dim} ranges, got {}/{}",
                self.family(),
                self.id_range.len(),
                self.ood_range.len()
            ));
        }
        for (i, (a, b)) in self.id_range.iter().zip(&self.ood_range).enumerate() {
            for r in [a, b] {
                if !(r.lo < r.hi && r.lo.is_finite() && r.hi.is_finite()) {
                    return bad(format!("dimension {i}: empty range [{}, {})", r.lo, r.hi));
                }
            }
            if !a.disjoint(b) {
                return bad(format!("dimension {i}: ID and OOD ranges overlap"));
            }
        }
        if self.n_train < MIN_TRAIN_ROWS {
            return bad(format!("n_train {} < {MIN_TRAIN_ROWS}", self.n_train));
        }
        if self.n_test == 0 {
            return bad("n_test must be positive".into());
        }
        match &self.params {
            FamilyParams::Poly1d {
                degree,
                coefficients,
            } => {
                if *degree > POLY1D_MAX_DEGREE {
                    return bad(format!("poly1d degree {degree} > {POLY1D_MAX_DEGREE}"));
                }
                if let Some(c) = coefficients {
                    if c.len() != degree + 1 || c.iter().any(|v| !v.is_finite()) {
                        return bad("poly1d needs degree+1 finite coefficients".into());
                    }
                }
            }
            FamilyParams::Poly20d {
                dim,
                max_terms,
                max_degree,
            } => {
                if *dim == 0 || *dim > POLY20D_DIM || *max_terms == 0 || *max_degree == 0 {
                    return bad("poly20d needs 1..=20 dims, terms and degree >= 1".into());
                }
            }
            FamilyParams::SinProduct { frequencies } => {
                if let Some(f) = frequencies {
                    if f.iter().any(|v| !v.is_finite()) {
                        return bad("sin_product frequencies must be finite".into());
                    }
                }
            }
            FamilyParams::SphericalHarmonic { degree, order } => {
                if *degree > SH_MAX_DEGREE || order.unsigned_abs() > *degree {
                    return bad(format!("spherical harmonic l={degree}, m={order} out of range"));
                }
            }
            FamilyParams::Feynman { .. } => {}
        }
        Ok(())
    }

    fn draw_target(&self, rng: &mut SeededRng) -> Target {
        match &self.params {
            FamilyParams::Poly1d {
                degree,
                coefficients,
            } => Target::Poly1d {
                coefficients: coefficients
                    .clone()
                    .unwrap_or_else(|| (0..=*degree).map(|_| open_unit(rng)).collect()),
            },
            FamilyParams::Poly20d {
                dim,
                max_terms,
                max_degree,
            } => {
                let n_terms = 1 + rng.below(*max_terms);
                let terms = (0..n_terms)
                    .map(|_| {
                        let deg = 1 + rng.below(*max_degree);
                        let mut factors: Vec<usize> = (0..deg).map(|_| rng.below(*dim)).collect();
                        factors.sort_unstable();
                        Monomial {
                            coefficient: open_unit(rng),
                            factors,
                        }
                    })
                    .collect();
                Target::Poly20d { dim: *dim, terms }
            }
            FamilyParams::SinProduct { frequencies } => Target::SinProduct {
                frequencies: frequencies.unwrap_or_else(|| {
                    let (lo, hi) = SIN_FREQ_RANGE;
                    [0, 1, 2].map(|_| rng.uniform(lo, hi).expect("valid constant range"))
                }),
            },
            FamilyParams::SphericalHarmonic { degree, order } => Target::SphericalHarmonic {
                degree: *degree,
                order: *order,
            },
            FamilyParams::Feynman { equation } => Target::Feynman {
                equation: equation.clone(),
            },
        }
    }
}

fn draw_split(
    target: &Target,
    ranges: &[Interval],
    n: usize,
    rng: &mut SeededRng,
) -> Result<Split, DataError> {
    let dim = ranges.len();
    let mut xs = Vec::with_capacity(n * dim);
    let mut ys = Vec::with_capacity(n);
    let mut point = vec![0.0; dim];
    for _ in 0..n {
        let mut attempts = 0;
        let y = loop {
            for (p, r) in point.iter_mut().zip(ranges) {
                *p = rng.uniform(r.lo, r.hi)?;
            }
            match target_eval(target, &point) {
                Ok(v) => break v,
                Err(DataError::DomainError { .. }) if attempts + 1 < MAX_RESAMPLE => attempts += 1,
                Err(e) => return Err(e),
            }
        };
        xs.extend_from_slice(&point);
        ys.push(y);
    }
    Ok(Split {
        x: Tensor2::from_vec(n, dim, xs)?,
        y: Tensor2::from_vec(n, 1, ys)?,
    })
}

/// Draw the target's free parameters (substream `target`), then train and test
/// inputs (substream `inputs`), and evaluate targets exactly.
pub fn realize(spec: &DatasetSpec) -> Result<SampleSet, DataError> {
    spec.validate()?;
    let root = SeededRng::new(spec.seed);
    let target = spec.draw_target(&mut root.substream("target"));
    let mut inputs = root.substream("inputs");
    let train = draw_split(&target, &spec.id_range, spec.n_train, &mut inputs)?;
    let test = draw_split(&target, &spec.ood_range, spec.n_test, &mut inputs)?;
    Ok(SampleSet {
        spec: spec.clone(),
        target,
        train,
        test,
    })
}

/// The standard 70-spec suite: 20 poly1d, 10 poly20d, 20 sin_product,
/// 10 spherical_harmonic, 10 feynman. Range patterns alternate within each
/// family, starting with [`RangePattern::LowToHigh`].
pub fn default_suite(seed: u64) -> Vec<DatasetSpec> {
    let root = SeededRng::new(seed);
    let mut shape = root.substream("suite-shape");
    let mut out = Vec::with_capacity(70);
    let pattern = |i: usize| {
        if i % 2 == 0 {
            RangePattern::LowToHigh
        } else {
            RangePattern::PositiveToNegative
        }
    };
    let mut push = |params: FamilyParams, i: usize| {
        let spec_seed = root
            .substream(&format!("spec/{}/{i}", params.family()))
            .next_u64();
        out.push(DatasetSpec::with_pattern(params, pattern(i), spec_seed).expect("suite specs are valid"));
    };
    for i in 0..20 {
        let degree = shape.below(POLY1D_MAX_DEGREE + 1);
        push(
            FamilyParams::Poly1d {
                degree,
                coefficients: None,
            },
            i,
        );
    }
    for i in 0..10 {
        push(
            FamilyParams::Poly20d {
                dim: POLY20D_DIM,
                max_terms: POLY20D_MAX_TERMS,
                max_degree: POLY20D_MAX_DEGREE,
            },
            i,
        );
    }
    for i in 0..20 {
        push(FamilyParams::SinProduct { frequencies: None }, i);
    }
    for i in 0..10 {
        let degree = shape.below(SH_MAX_DEGREE as usize + 1) as u32;
        let order = shape.below(2 * degree as usize + 1) as i32 - degree as i32;
        push(FamilyParams::SphericalHarmonic { degree, order }, i);
    }
    for (i, eq) in FEYNMAN_EQUATIONS.iter().enumerate() {
        push(
            FamilyParams::Feynman {
                equation: eq.id.to_string(),
            },
            i,
        );
    }
    out
}

/// The default suite restricted to `families` (all of them when empty).
pub fn suite_for(seed: u64, families: &[Family]) -> Vec<DatasetSpec> {
    default_suite(seed)
        .into_iter()
        .filter(|s| families.is_empty() || families.contains(&s.family()))
        .collect()
}

/// CSV with header `x0,..,x{d-1},y,split`; train rows first.
pub fn to_csv(set: &SampleSet) -> String {
    let dim = set.input_dim();
    let mut out = String::new();
    for i in 0..dim {
        out.push_str(&format!("x{i},"));
    }
    out.push_str("y,split\n");
    for (split, name) in [(&set.train, "train"), (&set.test, "test")] {
        for r in 0..split.x.rows() {
            for v in split.x.row(r) {
                out.push_str(&format!("{v},"));
            }
            out.push_str(&format!("{},{name}\n", split.y.get(r, 0)));
        }
    }
    out
}

/// Parse the CSV produced by [`to_csv`] back into `(train, test)` splits.
pub fn from_csv(text: &str) -> Result<(Split, Split), DataError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(DataError::Csv {
        line: 1,
        reason: "empty file".into(),
    })?;
    let cols: Vec<&str> = header.split(',').collect();
    let dim = cols.len().checked_sub(2).filter(|d| *d > 0).ok_or(DataError::Csv {
        line: 1,
        reason: "header needs x columns, y and split".into(),
    })?;
    let expected: Vec<String> = (0..dim)
        .map(|i| format!("x{i}"))
        .chain(["y".to_string(), "split".to_string()])
        .collect();
    if cols != expected {
        return Err(DataError::Csv {
            line: 1,
            reason: format!("unexpected header `{header}`"),
        });
    }
    let mut parts: [(Vec<f64>, Vec<f64>); 2] = Default::default();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let err = |reason: String| DataError::Csv { line: i + 1, reason };
        if fields.len() != dim + 2 {
            return Err(err(format!("expected {} fields, got {}", dim + 2, fields.len())));
        }
        let which = match fields[dim + 1] {
            "train" => 0,
            "test" => 1,
            other => return Err(err(format!("unknown split `{other}`"))),
        };
        let nums = fields[..=dim]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| err(format!("`{f}`: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        parts[which].0.extend_from_slice(&nums[..dim]);
        parts[which].1.push(nums[dim]);
    }
    let [train, test] = parts.map(|(x, y)| {
        let n = y.len();
        Ok::<_, DataError>(Split {
            x: Tensor2::from_vec(n, dim, x)?,
            y: Tensor2::from_vec(n, 1, y)?,
        })
    });
    Ok((train?, test?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly(coefficients: Vec<f64>, pattern: RangePattern) -> DatasetSpec {
        DatasetSpec::with_pattern(
            FamilyParams::Poly1d {
                degree: coefficients.len() - 1,
                coefficients: Some(coefficients),
            },
            pattern,
            1,
        )
        .unwrap()
    }

    #[test]
    fn constant_polynomial() {
        let set = realize(&poly(vec![0.7], RangePattern::LowToHigh)).unwrap();
        assert!(set.train.y.data().iter().chain(set.test.y.data()).all(|&v| v == 0.7));
    }

    #[test]
    fn zero_frequency_sines() {
        let spec = DatasetSpec::with_pattern(
            FamilyParams::SinProduct {
                frequencies: Some([0.0; 3]),
            },
            RangePattern::PositiveToNegative,
            3,
        )
        .unwrap();
        let set = realize(&spec).unwrap();
        assert!(set.train.y.data().iter().chain(set.test.y.data()).all(|&v| v == 0.0));
    }

    #[test]
    fn quadratic_at_point_four() {
        let t = Target::Poly1d {
            coefficients: vec![0.5, 0.25, 0.125],
        };
        // 0.5 + 0.25*0.4 + 0.125*0.16
        let v = target_eval(&t, &[0.4]).unwrap();
        assert!((v - 0.62).abs() < 1e-15);
    }

    #[test]
    fn sine_product_spot() {
        let t = Target::SinProduct {
            frequencies: [PI, 1.0, 1.0],
        };
        assert!(target_eval(&t, &[1.0]).unwrap().abs() < 1e-15);
    }

    #[test]
    fn spherical_harmonic_closed_forms() {
        let y00 = Target::SphericalHarmonic { degree: 0, order: 0 };
        for (phi, theta) in [(0.0, 0.0), (1.0, 2.0), (5.0, 0.3)] {
            let v = target_eval(&y00, &[phi, theta]).unwrap();
            assert!((v - 0.5 / PI.sqrt()).abs() < 1e-15);
        }
        let y10 = Target::SphericalHarmonic { degree: 1, order: 0 };
        let v = target_eval(&y10, &[0.7, 0.0]).unwrap();
        assert!((v - (3.0 / (4.0 * PI)).sqrt()).abs() < 1e-15);
        for theta in [0.2, 1.1, 2.9] {
            let v = target_eval(&y10, &[0.0, theta]).unwrap();
            assert!((v - (3.0 / (4.0 * PI)).sqrt() * theta.cos()).abs() < 1e-14);
        }
    }

    #[test]
    fn spherical_harmonics_are_orthonormal() {
        // midpoint quadrature over the sphere as an independent check of the
        // normalization and Legendre recurrence
        let (n_theta, n_phi) = (200, 400);
        let basis: Vec<(u32, i32)> = (0..=SH_MAX_DEGREE)
            .flat_map(|l| (-(l as i32)..=l as i32).map(move |m| (l, m)))
            .collect();
        let mut gram = vec![vec![0.0; basis.len()]; basis.len()];
        let (dt, dp) = (PI / n_theta as f64, 2.0 * PI / n_phi as f64);
        for i in 0..n_theta {
            let theta = (i as f64 + 0.5) * dt;
            for j in 0..n_phi {
                let phi = (j as f64 + 0.5) * dp;
                let w = theta.sin() * dt * dp;
                let vals: Vec<f64> = basis
                    .iter()
                    .map(|&(l, m)| real_spherical_harmonic(l, m, phi, theta))
                    .collect();
                for a in 0..basis.len() {
                    for b in 0..basis.len() {
                        gram[a][b] += w * vals[a] * vals[b];
                    }
                }
            }
        }
        for a in 0..basis.len() {
            for b in 0..basis.len() {
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((gram[a][b] - want).abs() < 1e-3, "{:?} {:?}", basis[a], basis[b]);
            }
        }
    }

    #[test]
    fn feynman_errors() {
        let t = Target::Feynman {
            equation: "I.10.7".into(),
        };
        assert!(matches!(
            target_eval(&t, &[1.0, 5.0, 3.0]),
            Err(DataError::DomainError { .. })
        ));
        let ok = target_eval(&t, &[2.0, 0.0, 3.0]).unwrap();
        assert_eq!(ok, 2.0);
        let unknown = Target::Feynman {
            equation: "IX.1".into(),
        };
        assert!(matches!(
            target_eval(&unknown, &[1.0]),
            Err(DataError::UnknownEquationId(_))
        ));
        assert!(DatasetSpec::with_pattern(
            FamilyParams::Feynman {
                equation: "nope".into()
            },
            RangePattern::LowToHigh,
            0
        )
        .is_err());
    }

    #[test]
    fn suite_composition() {
        let suite = default_suite(17);
        assert_eq!(suite.len(), 70);
        let count = |f: Family| suite.iter().filter(|s| s.family() == f).count();
        assert_eq!(
            Family::ALL.map(count),
            [20, 10, 20, 10, 10]
        );
        assert!(suite.iter().all(|s| s.validate().is_ok()));
        assert_eq!(suite, default_suite(17));
        assert_ne!(suite, default_suite(18));
        assert_eq!(suite_for(17, &[Family::Poly1d, Family::SinProduct]).len(), 40);
    }

    #[test]
    fn overlapping_ranges_rejected() {
        let mut spec = poly(vec![1.0], RangePattern::LowToHigh);
        spec.ood_range = vec![Interval::new(0.4, 1.0)];
        assert!(matches!(spec.validate(), Err(DataError::InvalidSpec(_))));
        spec.ood_range = vec![Interval::new(0.5, 1.0)];
        spec.n_train = 127;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let spec = default_suite(3).into_iter().find(|s| s.family() == Family::Feynman).unwrap();
        let set = realize(&spec).unwrap();
        let (train, test) = from_csv(&to_csv(&set)).unwrap();
        assert_eq!(train, set.train);
        assert_eq!(test, set.test);
        assert!(from_csv("x0,y,split\n1,2,valid\n").is_err());
        assert!(from_csv("a,b\n").is_err());
    }
}
