//! Declarative model layer: the closed catalog of scalar time functions,
//! evolution-family specifications, direction spaces and test functions.
//! Everything here is immutable after construction and shared freely.

use crate::config::{self, Document, Section};
use crate::error::{Error, Result};
use crate::numeric::quad;
use nalgebra::{DMatrix, DVector};

/// Scalar function of time from a closed catalog. Every catalog member has
/// an exact antiderivative, which keeps propagator multipliers exact and
/// runs bit-reproducible.
#[derive(Debug, Clone, PartialEq)]
pub enum TimeFn {
    Const(f64),
    /// Coefficients in ascending degree.
    Poly(Vec<f64>),
    /// `amplitude * sin(frequency t + phase) + offset`.
    Trig {
        amplitude: f64,
        frequency: f64,
        phase: f64,
        offset: f64,
    },
    /// `-k^2 (t^k + 1)`.
    PresetAk { k: u32 },
    /// `sin(k t) + offset`.
    PresetBk { k: u32, offset: f64 },
    /// `-k^2 pi^2`, constant in time.
    PresetHeat { k: u32 },
}

impl TimeFn {
    pub fn zero() -> TimeFn {
        TimeFn::Const(0.0)
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TimeFn::Const(c) => *c,
            TimeFn::Poly(c) => c.iter().rev().fold(0.0, |acc, &ck| acc * t + ck),
            TimeFn::Trig {
                amplitude,
                frequency,
                phase,
                offset,
            } => amplitude * (frequency * t + phase).sin() + offset,
            TimeFn::PresetAk { k } => {
                let kf = *k as f64;
                -kf * kf * (t.powi(*k as i32) + 1.0)
            }
            TimeFn::PresetBk { k, offset } => (*k as f64 * t).sin() + offset,
            TimeFn::PresetHeat { k } => {
                let kf = *k as f64;
                -kf * kf * std::f64::consts::PI * std::f64::consts::PI
            }
        }
    }

    /// Whether an exact antiderivative is available (true across the catalog).
    pub fn has_exact_antiderivative(&self) -> bool {
        true
    }

    /// An antiderivative vanishing at 0.
    pub fn antiderivative(&self, t: f64) -> f64 {
        match self {
            TimeFn::Const(c) => c * t,
            TimeFn::Poly(c) => {
                let mut acc = 0.0;
                for (j, &cj) in c.iter().enumerate().rev() {
                    acc = acc * t + cj / (j as f64 + 1.0);
                }
                acc * t
            }
            TimeFn::Trig {
                amplitude,
                frequency,
                phase,
                offset,
            } => {
                if *frequency == 0.0 {
                    (amplitude * phase.sin() + offset) * t
                } else {
                    -amplitude * (frequency * t + phase).cos() / frequency + offset * t
                }
            }
            TimeFn::PresetAk { k } => {
                let kf = *k as f64;
                -kf * kf * (t.powi(*k as i32 + 1) / (kf + 1.0) + t)
            }
            TimeFn::PresetBk { k, offset } => {
                let kf = *k as f64;
                -(kf * t).cos() / kf + offset * t
            }
            TimeFn::PresetHeat { k } => {
                let kf = *k as f64;
                -kf * kf * std::f64::consts::PI * std::f64::consts::PI * t
            }
        }
    }

    /// Exact integral over `[s, t]`.
    pub fn integral(&self, s: f64, t: f64) -> f64 {
        self.antiderivative(t) - self.antiderivative(s)
    }

    /// Adaptive-quadrature integral, the oracle for the exact path.
    pub fn integral_quadrature(&self, s: f64, t: f64) -> Result<f64> {
        let mut f = |tau: f64| self.eval(tau);
        quad::integrate_adaptive(&mut f, s, t, 1e-13, &[])
    }

    /// Sampled sup of |f| on `[lo, hi]` (257-point grid); diagnostics only.
    pub fn sup_abs(&self, lo: f64, hi: f64) -> f64 {
        (0..=256)
            .map(|i| self.eval(lo + (hi - lo) * i as f64 / 256.0).abs())
            .fold(0.0, f64::max)
    }

    /// Sampled max of f on `[lo, hi]` (257-point grid); diagnostics only.
    pub fn sup_val(&self, lo: f64, hi: f64) -> f64 {
        (0..=256)
            .map(|i| self.eval(lo + (hi - lo) * i as f64 / 256.0))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_config_string(&self) -> String {
        match self {
            TimeFn::Const(c) => format!("const({c})"),
            TimeFn::Poly(c) => {
                let args: Vec<String> = c.iter().map(|v| format!("{v}")).collect();
                format!("poly({})", args.join(", "))
            }
            TimeFn::Trig {
                amplitude,
                frequency,
                phase,
                offset,
            } => format!("trig({amplitude}, {frequency}, {phase}, {offset})"),
            TimeFn::PresetAk { k } => format!("preset_ak({k})"),
            TimeFn::PresetBk { k, offset } => format!("preset_bk({k}, {offset})"),
            TimeFn::PresetHeat { k } => format!("preset_heat({k})"),
        }
    }

    /// Parse a single time function from call syntax, e.g. `trig(1, 2, 0, 0)`.
    pub fn parse(text: &str) -> Result<TimeFn> {
        let (name, args) = config::parse_call(text).map_err(Error::Validation)?;
        let expect = |n: usize| -> Result<()> {
            if args.len() == n {
                Ok(())
            } else {
                Err(Error::Validation(format!(
                    "`{name}` expects {n} argument(s), got {}",
                    args.len()
                )))
            }
        };
        let as_k = |v: f64| -> Result<u32> {
            if v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
                Ok(v as u32)
            } else {
                Err(Error::Validation(format!("mode index must be a positive integer, got {v}")))
            }
        };
        match name.as_str() {
            "zero" => {
                expect(0)?;
                Ok(TimeFn::Const(0.0))
            }
            "const" => {
                expect(1)?;
                Ok(TimeFn::Const(args[0]))
            }
            "poly" => {
                if args.is_empty() {
                    return Err(Error::Validation("`poly` needs coefficients".into()));
                }
                Ok(TimeFn::Poly(args))
            }
            "trig" => {
                expect(4)?;
                Ok(TimeFn::Trig {
                    amplitude: args[0],
                    frequency: args[1],
                    phase: args[2],
                    offset: args[3],
                })
            }
            "preset_ak" => {
                expect(1)?;
                Ok(TimeFn::PresetAk { k: as_k(args[0])? })
            }
            "preset_bk" => {
                expect(2)?;
                Ok(TimeFn::PresetBk {
                    k: as_k(args[0])?,
                    offset: args[1],
                })
            }
            "preset_heat" => {
                expect(1)?;
                Ok(TimeFn::PresetHeat { k: as_k(args[0])? })
            }
            other => Err(Error::Validation(format!("unknown time function `{other}`"))),
        }
    }
}

/// Expand a per-mode family spec into `n` time functions (1-based mode k).
///
/// Family forms: `zero`, `const(v)`, `poly(...)`, `trig(...)` (same function
/// for every mode), `preset_ak`, `preset_bk(c)`, `preset_heat` (mode-indexed),
/// `power(p)` (per-mode constant `(k pi)^p`).
fn expand_family(text: &str, n: usize) -> Result<Vec<TimeFn>> {
    let (name, args) = config::parse_call(text).map_err(Error::Validation)?;
    let modes = 1..=(n as u32);
    match name.as_str() {
        "preset_ak" if args.is_empty() => Ok(modes.map(|k| TimeFn::PresetAk { k }).collect()),
        "preset_heat" if args.is_empty() => Ok(modes.map(|k| TimeFn::PresetHeat { k }).collect()),
        "preset_bk" if args.len() == 1 => Ok(modes
            .map(|k| TimeFn::PresetBk {
                k,
                offset: args[0],
            })
            .collect()),
        "power" if args.len() == 1 => Ok(modes
            .map(|k| TimeFn::Const((k as f64 * std::f64::consts::PI).powf(args[0])))
            .collect()),
        _ => {
            let f = TimeFn::parse(text)?;
            Ok(vec![f; n])
        }
    }
}

/// One term `g_i(t) * M_i` of a dense coefficient family.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTerm {
    pub coef: TimeFn,
    pub matrix: DMatrix<f64>,
}

/// Coefficient families of the evolution equation.
#[derive(Debug, Clone, PartialEq)]
pub enum Coefficients {
    /// A(t), B(t) diagonal in the same basis.
    Diagonal { a: Vec<TimeFn>, b: Vec<TimeFn> },
    /// A(t) = a(t) I with diagonal B(t).
    ScalarIdentity { a: TimeFn, b: Vec<TimeFn> },
    /// A(t) = sum_i g_i(t) A_i and similarly B(t).
    Dense {
        a: Vec<DenseTerm>,
        b: Vec<DenseTerm>,
    },
}

/// A validated evolution model on the truncation to `dim` modes.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionModel {
    pub dim: usize,
    pub horizon: f64,
    pub coeffs: Coefficients,
    /// Affine drift term f(t), one entry per mode; zero by default.
    pub affine: Vec<TimeFn>,
}

impl EvolutionModel {
    pub fn diagonal(dim: usize, horizon: f64, a: Vec<TimeFn>, b: Vec<TimeFn>) -> Result<Self> {
        let m = EvolutionModel {
            dim,
            horizon,
            coeffs: Coefficients::Diagonal { a, b },
            affine: vec![TimeFn::zero(); dim],
        };
        m.validate()?;
        Ok(m)
    }

    /// Heat-type preset: `a_k = -k^2 pi^2`, `b_k = 1`.
    pub fn heat(dim: usize, horizon: f64) -> Self {
        let a = (1..=dim as u32).map(|k| TimeFn::PresetHeat { k }).collect();
        let b = vec![TimeFn::Const(1.0); dim];
        EvolutionModel::diagonal(dim, horizon, a, b).unwrap()
    }

    /// First example family: `a_k = -k^2(t^k+1)`, `b_k = sin(kt) + c`.
    pub fn example1(dim: usize, horizon: f64, c: f64) -> Self {
        let a = (1..=dim as u32).map(|k| TimeFn::PresetAk { k }).collect();
        let b = (1..=dim as u32)
            .map(|k| TimeFn::PresetBk { k, offset: c })
            .collect();
        EvolutionModel::diagonal(dim, horizon, a, b).unwrap()
    }

    pub fn with_affine(mut self, f: Vec<TimeFn>) -> Result<Self> {
        self.affine = f;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Validation("truncation dimension must be >= 1".into()));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::Validation("horizon must be positive".into()));
        }
        if self.affine.len() != self.dim {
            return Err(Error::Validation(format!(
                "affine term has {} entries, expected {}",
                self.affine.len(),
                self.dim
            )));
        }
        match &self.coeffs {
            Coefficients::Diagonal { a, b } => {
                if a.len() != self.dim {
                    return Err(Error::Validation(format!(
                        "drift list has {} entries, expected {}",
                        a.len(),
                        self.dim
                    )));
                }
                if b.len() != self.dim {
                    return Err(Error::Validation(format!(
                        "diffusion list has {} entries, expected {}",
                        b.len(),
                        self.dim
                    )));
                }
            }
            Coefficients::ScalarIdentity { b, .. } => {
                if b.len() != self.dim {
                    return Err(Error::Validation(format!(
                        "diffusion list has {} entries, expected {}",
                        b.len(),
                        self.dim
                    )));
                }
            }
            Coefficients::Dense { a, b } => {
                if a.is_empty() || b.is_empty() {
                    return Err(Error::Validation("dense families need >= 1 term".into()));
                }
                for (what, terms) in [("drift", a), ("diffusion", b)] {
                    for term in terms {
                        if term.matrix.nrows() != self.dim || term.matrix.ncols() != self.dim {
                            return Err(Error::Validation(format!(
                                "dense {what} matrix is {}x{}, expected {}x{}",
                                term.matrix.nrows(),
                                term.matrix.ncols(),
                                self.dim,
                                self.dim
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Whether per-mode scalar paths apply (diagonal and scalar-identity).
    pub fn is_diagonal(&self) -> bool {
        !matches!(self.coeffs, Coefficients::Dense { .. })
    }

    /// Drift function of mode `k` (0-based); panics on dense models.
    pub fn drift_mode(&self, k: usize) -> &TimeFn {
        match &self.coeffs {
            Coefficients::Diagonal { a, .. } => &a[k],
            Coefficients::ScalarIdentity { a, .. } => a,
            Coefficients::Dense { .. } => panic!("drift_mode on dense model"),
        }
    }

    /// Diffusion function of mode `k` (0-based); panics on dense models.
    pub fn diffusion_mode(&self, k: usize) -> &TimeFn {
        match &self.coeffs {
            Coefficients::Diagonal { b, .. } | Coefficients::ScalarIdentity { b, .. } => &b[k],
            Coefficients::Dense { .. } => panic!("diffusion_mode on dense model"),
        }
    }

    pub fn drift_matrix(&self, t: f64) -> DMatrix<f64> {
        match &self.coeffs {
            Coefficients::Dense { a, .. } => {
                let mut m = DMatrix::zeros(self.dim, self.dim);
                for term in a {
                    m += &term.matrix * term.coef.eval(t);
                }
                m
            }
            _ => DMatrix::from_diagonal(&DVector::from_fn(self.dim, |k, _| {
                self.drift_mode(k).eval(t)
            })),
        }
    }

    pub fn diffusion_matrix(&self, t: f64) -> DMatrix<f64> {
        match &self.coeffs {
            Coefficients::Dense { b, .. } => {
                let mut m = DMatrix::zeros(self.dim, self.dim);
                for term in b {
                    m += &term.matrix * term.coef.eval(t);
                }
                m
            }
            _ => DMatrix::from_diagonal(&DVector::from_fn(self.dim, |k, _| {
                self.diffusion_mode(k).eval(t)
            })),
        }
    }

    pub fn affine_vector(&self, t: f64) -> DVector<f64> {
        DVector::from_fn(self.dim, |k, _| self.affine[k].eval(t))
    }

    pub fn affine_is_zero(&self) -> bool {
        self.affine.iter().all(|f| *f == TimeFn::Const(0.0))
    }

    /// Sampled bound on the drift magnitude over `[lo, hi]`, used to size
    /// boundary-layer pre-splits.
    pub fn drift_rate_bound(&self, lo: f64, hi: f64) -> f64 {
        match &self.coeffs {
            Coefficients::Dense { a, .. } => a
                .iter()
                .map(|term| term.coef.sup_abs(lo, hi) * term.matrix.amax())
                .sum(),
            _ => (0..self.dim)
                .map(|k| self.drift_mode(k).sup_abs(lo, hi))
                .fold(0.0, f64::max),
        }
    }

    /// Summability proxy `sum_k sup|b_k|^2 / |lambda_k|` with
    /// `lambda_k = max_t a_k(t)`, reported when every `lambda_k` is nonzero.
    pub fn summability_diagnostic(&self) -> Option<f64> {
        if !self.is_diagonal() {
            return None;
        }
        let mut total = 0.0;
        for k in 0..self.dim {
            let lam = self.drift_mode(k).sup_val(0.0, self.horizon);
            if lam == 0.0 {
                return None;
            }
            let bsup = self.diffusion_mode(k).sup_abs(0.0, self.horizon);
            total += bsup * bsup / lam.abs();
        }
        Some(total)
    }

    /// Serialize to a `[model]` section that reparses to an equal model.
    pub fn to_config_text(&self) -> String {
        let mut out = String::from("[model]\n");
        let kind = match &self.coeffs {
            Coefficients::Diagonal { .. } => "diagonal",
            Coefficients::ScalarIdentity { .. } => "scalar_identity",
            Coefficients::Dense { .. } => "dense",
        };
        out.push_str(&format!("kind = {kind}\n"));
        out.push_str(&format!("n = {}\n", self.dim));
        out.push_str(&format!("t = {}\n", self.horizon));
        match &self.coeffs {
            Coefficients::Diagonal { a, b } => {
                for (k, f) in a.iter().enumerate() {
                    out.push_str(&format!("a_{} = {}\n", k + 1, f.to_config_string()));
                }
                for (k, f) in b.iter().enumerate() {
                    out.push_str(&format!("b_{} = {}\n", k + 1, f.to_config_string()));
                }
            }
            Coefficients::ScalarIdentity { a, b } => {
                out.push_str(&format!("a = {}\n", a.to_config_string()));
                for (k, f) in b.iter().enumerate() {
                    out.push_str(&format!("b_{} = {}\n", k + 1, f.to_config_string()));
                }
            }
            Coefficients::Dense { a, b } => {
                for (tag, terms) in [("a", a), ("b", b)] {
                    out.push_str(&format!("{tag}_terms = {}\n", terms.len()));
                    for (i, term) in terms.iter().enumerate() {
                        out.push_str(&format!(
                            "{tag}_term_{}_coef = {}\n",
                            i + 1,
                            term.coef.to_config_string()
                        ));
                        let rows: Vec<String> = (0..term.matrix.nrows())
                            .map(|r| {
                                (0..term.matrix.ncols())
                                    .map(|c| format!("{}", term.matrix[(r, c)]))
                                    .collect::<Vec<_>>()
                                    .join(", ")
                            })
                            .collect();
                        out.push_str(&format!(
                            "{tag}_term_{}_matrix = [{}]\n",
                            i + 1,
                            rows.join("; ")
                        ));
                    }
                }
            }
        }
        if !self.affine_is_zero() {
            for (k, f) in self.affine.iter().enumerate() {
                out.push_str(&format!("f_{} = {}\n", k + 1, f.to_config_string()));
            }
        }
        out
    }

    /// Build a model from a `[model]` section.
    pub fn from_section(sec: &mut Section) -> Result<EvolutionModel> {
        let kind = sec.take_required("kind")?.to_ascii_lowercase();
        let n = sec
            .take_usize("n")?
            .ok_or_else(|| Error::Validation("[model] missing required key `n`".into()))?;
        if n == 0 {
            return Err(Error::Validation("truncation dimension must be >= 1".into()));
        }
        let horizon = sec.take_f64_required("t")?;

        let take_mode_list = |tag: &str, sec: &mut Section, required: bool| -> Result<Option<Vec<TimeFn>>> {
            let family = sec.take(tag);
            let mut list = match family {
                Some(spec) => Some(expand_family(&spec, n)?),
                None => None,
            };
            // Per-mode overrides tag_1 .. tag_n (1-based).
            for k in 1..=n {
                if let Some(spec) = sec.take(&format!("{tag}_{k}")) {
                    let f = TimeFn::parse(&spec)?;
                    match &mut list {
                        Some(l) => l[k - 1] = f,
                        None => {
                            let mut l = vec![TimeFn::zero(); n];
                            l[k - 1] = f;
                            list = Some(l);
                        }
                    }
                }
            }
            if list.is_none() && required {
                return Err(Error::Validation(format!(
                    "[model] missing required key `{tag}` (per-mode list)"
                )));
            }
            Ok(list)
        };

        let coeffs = match kind.as_str() {
            "diagonal" => {
                let a = take_mode_list("a", sec, true)?.unwrap();
                let b = take_mode_list("b", sec, true)?.unwrap();
                Coefficients::Diagonal { a, b }
            }
            "scalar_identity" => {
                let a = TimeFn::parse(&sec.take_required("a")?)?;
                let b = take_mode_list("b", sec, true)?.unwrap();
                Coefficients::ScalarIdentity { a, b }
            }
            "dense" => {
                let take_terms = |tag: &str, sec: &mut Section| -> Result<Vec<DenseTerm>> {
                    let count = sec.take_usize(&format!("{tag}_terms"))?.ok_or_else(|| {
                        Error::Validation(format!("[model] missing `{tag}_terms`"))
                    })?;
                    let mut terms = Vec::with_capacity(count);
                    for i in 1..=count {
                        let coef = TimeFn::parse(
                            &sec.take_required(&format!("{tag}_term_{i}_coef"))?,
                        )?;
                        let rows = sec
                            .take_matrix(&format!("{tag}_term_{i}_matrix"))?
                            .ok_or_else(|| {
                                Error::Validation(format!(
                                    "[model] missing `{tag}_term_{i}_matrix`"
                                ))
                            })?;
                        let matrix = DMatrix::from_fn(rows.len(), rows[0].len(), |r, c| rows[r][c]);
                        terms.push(DenseTerm { coef, matrix });
                    }
                    Ok(terms)
                };
                let a = take_terms("a", sec)?;
                let b = take_terms("b", sec)?;
                Coefficients::Dense { a, b }
            }
            other => {
                return Err(Error::Validation(format!("unknown model kind `{other}`")));
            }
        };
        let affine = take_mode_list("f", sec, false)?.unwrap_or_else(|| vec![TimeFn::zero(); n]);

        sec.ensure_empty()?;
        let model = EvolutionModel {
            dim: n,
            horizon,
            coeffs,
            affine,
        };
        model.validate()?;
        Ok(model)
    }
}

/// Parse a configuration document and build the model from its `[model]`
/// section. Other sections are left to their own consumers.
pub fn load_model(text: &str) -> Result<EvolutionModel> {
    let mut doc = Document::parse(text)?;
    let mut sec = doc
        .take_section("model")
        .ok_or_else(|| Error::Validation("missing [model] section".into()))?;
    EvolutionModel::from_section(&mut sec)
}

/// Direction-space preset labels.
#[derive(Debug, Clone, PartialEq)]
pub enum SpacePreset {
    /// Identity weights: E = X.
    Ambient,
    /// Cameron–Martin weights of the instantaneous noise at `t0`:
    /// `w_k = 1/|b_k(t0)|`.
    CmAt { t0: f64 },
    /// Spectral Sobolev scale: `w_k = (k pi)^gamma`.
    Sobolev { gamma: f64 },
}

impl SpacePreset {
    pub fn parse(text: &str) -> Result<SpacePreset> {
        let (name, args) = config::parse_call(text).map_err(Error::Validation)?;
        match (name.as_str(), args.len()) {
            ("ambient", 0) => Ok(SpacePreset::Ambient),
            ("cm_at", 1) => Ok(SpacePreset::CmAt { t0: args[0] }),
            ("sobolev", 1) => Ok(SpacePreset::Sobolev { gamma: args[0] }),
            _ => Err(Error::Validation(format!(
                "unknown direction-space preset `{text}`"
            ))),
        }
    }

    pub fn to_config_string(&self) -> String {
        match self {
            SpacePreset::Ambient => "ambient".into(),
            SpacePreset::CmAt { t0 } => format!("cm_at({t0})"),
            SpacePreset::Sobolev { gamma } => format!("sobolev({gamma})"),
        }
    }
}

/// Weighted-l2 direction space E with norm `||h||_E = sqrt(sum (w_k h_k)^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionSpace {
    pub weights: Vec<f64>,
    pub label: String,
}

impl DirectionSpace {
    pub fn new(weights: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::Validation(
                "direction-space weights must be positive and finite".into(),
            ));
        }
        Ok(DirectionSpace {
            weights,
            label: label.into(),
        })
    }

    pub fn ambient(n: usize) -> Self {
        DirectionSpace::new(vec![1.0; n], "ambient").unwrap()
    }

    pub fn from_preset(preset: &SpacePreset, model: &EvolutionModel) -> Result<Self> {
        let n = model.dim;
        match preset {
            SpacePreset::Ambient => Ok(DirectionSpace::ambient(n)),
            SpacePreset::CmAt { t0 } => {
                if !model.is_diagonal() {
                    return Err(Error::Validation(
                        "cm_at weights require a diagonal diffusion family".into(),
                    ));
                }
                let mut w = Vec::with_capacity(n);
                for k in 0..n {
                    let b = model.diffusion_mode(k).eval(*t0);
                    if b == 0.0 {
                        return Err(Error::DegenerateDiffusion { mode: k + 1 });
                    }
                    w.push(1.0 / b.abs());
                }
                DirectionSpace::new(w, format!("cm_at({t0})"))
            }
            SpacePreset::Sobolev { gamma } => {
                let w = (1..=n)
                    .map(|k| (k as f64 * std::f64::consts::PI).powf(*gamma))
                    .collect();
                DirectionSpace::new(w, format!("sobolev({gamma})"))
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn norm(&self, h: &DVector<f64>) -> f64 {
        h.iter()
            .zip(&self.weights)
            .map(|(x, w)| (w * x) * (w * x))
            .sum::<f64>()
            .sqrt()
    }

    /// Dual norm of a functional `x -> <l, x>` restricted to E.
    pub fn dual_norm(&self, l: &DVector<f64>) -> f64 {
        l.iter()
            .zip(&self.weights)
            .map(|(x, w)| (x / w) * (x / w))
            .sum::<f64>()
            .sqrt()
    }

    /// Norm of the embedding E into X: `1 / min_k w_k`.
    pub fn embedding_constant(&self) -> f64 {
        1.0 / self.weights.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Rescale `h` to unit E-norm.
    pub fn normalize(&self, h: &DVector<f64>) -> DVector<f64> {
        let n = self.norm(h);
        if n == 0.0 {
            h.clone()
        } else {
            h / n
        }
    }
}

/// One-dimensional factors of separable test functions.
#[derive(Debug, Clone, PartialEq)]
pub enum TestFn1d {
    Constant(f64),
    /// `cos(freq x + phase)`.
    Cosine { freq: f64, phase: f64 },
    /// `tanh(slope x)`.
    TanhLinear { slope: f64 },
    /// `|sin(freq x)|`.
    AbsSin { freq: f64 },
}

impl TestFn1d {
    fn eval(&self, x: f64) -> f64 {
        match self {
            TestFn1d::Constant(c) => *c,
            TestFn1d::Cosine { freq, phase } => (freq * x + phase).cos(),
            TestFn1d::TanhLinear { slope } => (slope * x).tanh(),
            TestFn1d::AbsSin { freq } => (freq * x).sin().abs(),
        }
    }

    fn bound(&self) -> f64 {
        match self {
            TestFn1d::Constant(c) => c.abs(),
            _ => 1.0,
        }
    }

    fn analytic_order(&self) -> usize {
        match self {
            TestFn1d::AbsSin { .. } => 0,
            _ => usize::MAX,
        }
    }

    /// `order`-th derivative at x.
    fn derivative(&self, x: f64, order: usize) -> Result<f64> {
        if order == 0 {
            return Ok(self.eval(x));
        }
        match self {
            TestFn1d::Constant(_) => Ok(0.0),
            TestFn1d::Cosine { freq, phase } => Ok(freq.powi(order as i32)
                * (freq * x + phase + order as f64 * std::f64::consts::FRAC_PI_2).cos()),
            TestFn1d::TanhLinear { slope } => {
                Ok(slope.powi(order as i32) * tanh_derivative((slope * x).tanh(), order))
            }
            TestFn1d::AbsSin { .. } => Err(Error::UnsupportedOrder {
                requested: order,
                available: 0,
            }),
        }
    }

    fn to_config_string(&self) -> String {
        match self {
            TestFn1d::Constant(c) => format!("constant({c})"),
            TestFn1d::Cosine { freq, phase } => format!("cosine({freq}, {phase})"),
            TestFn1d::TanhLinear { slope } => format!("tanh_linear({slope})"),
            TestFn1d::AbsSin { freq } => format!("abs_sin({freq})"),
        }
    }

    fn parse(text: &str) -> Result<TestFn1d> {
        let (name, args) = config::parse_call(text).map_err(Error::Validation)?;
        match (name.as_str(), args.len()) {
            ("constant", 1) => Ok(TestFn1d::Constant(args[0])),
            ("cosine", 2) => Ok(TestFn1d::Cosine {
                freq: args[0],
                phase: args[1],
            }),
            ("cosine", 1) => Ok(TestFn1d::Cosine {
                freq: args[0],
                phase: 0.0,
            }),
            ("tanh_linear", 1) => Ok(TestFn1d::TanhLinear { slope: args[0] }),
            ("abs_sin", 1) => Ok(TestFn1d::AbsSin { freq: args[0] }),
            _ => Err(Error::Validation(format!(
                "unknown 1-d test function `{text}`"
            ))),
        }
    }
}

/// `tanh^(n)` expressed as a polynomial in `tau = tanh(u)`; derivative rule
/// `d/du p(tau) = p'(tau)(1 - tau^2)`.
fn tanh_derivative(tau: f64, order: usize) -> f64 {
    let mut coeffs: Vec<f64> = vec![0.0, 1.0];
    for _ in 0..order {
        // q = p' * (1 - tau^2)
        let mut q = vec![0.0; coeffs.len() + 1];
        for (j, &c) in coeffs.iter().enumerate().skip(1) {
            let d = c * j as f64;
            q[j - 1] += d;
            if j + 1 < q.len() {
                q[j + 1] -= d;
            }
        }
        while q.len() > 1 && *q.last().unwrap() == 0.0 {
            q.pop();
        }
        coeffs = q;
    }
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * tau + c)
}

/// Bounded test functions with analytic derivatives where available.
#[derive(Debug, Clone, PartialEq)]
pub enum TestFunction {
    Constant(f64),
    /// `cos(<l, x> + phase)`.
    Cosine { ell: DVector<f64>, phase: f64 },
    /// `tanh(<l, x>)`.
    TanhLinear { ell: DVector<f64> },
    /// `|sin(<l, x>)|`, the rough datum: Lipschitz but not C^1.
    AbsSin { ell: DVector<f64> },
    /// Product of per-mode factors.
    Separable(Vec<TestFn1d>),
}

impl TestFunction {
    pub fn cosine(ell: DVector<f64>, phase: f64) -> Self {
        TestFunction::Cosine { ell, phase }
    }

    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        match self {
            TestFunction::Constant(c) => *c,
            TestFunction::Cosine { ell, phase } => (ell.dot(x) + phase).cos(),
            TestFunction::TanhLinear { ell } => ell.dot(x).tanh(),
            TestFunction::AbsSin { ell } => ell.dot(x).sin().abs(),
            TestFunction::Separable(fs) => fs
                .iter()
                .enumerate()
                .map(|(k, f)| f.eval(x[k]))
                .product(),
        }
    }

    /// A bound with `|phi(x)| <= bound` for all x.
    pub fn bound(&self) -> f64 {
        match self {
            TestFunction::Constant(c) => c.abs(),
            TestFunction::Cosine { .. }
            | TestFunction::TanhLinear { .. }
            | TestFunction::AbsSin { .. } => 1.0,
            TestFunction::Separable(fs) => fs.iter().map(|f| f.bound()).product(),
        }
    }

    /// How many analytic directional derivatives are available.
    pub fn analytic_order(&self) -> usize {
        match self {
            TestFunction::AbsSin { .. } => 0,
            TestFunction::Separable(fs) => {
                fs.iter().map(|f| f.analytic_order()).min().unwrap_or(0)
            }
            _ => usize::MAX,
        }
    }

    /// Whether Gaussian expectations have a closed form (cosines and
    /// separable products of cosines/constants).
    pub fn has_closed_form_expectation(&self) -> bool {
        match self {
            TestFunction::Constant(_) | TestFunction::Cosine { .. } => true,
            TestFunction::Separable(fs) => fs
                .iter()
                .all(|f| matches!(f, TestFn1d::Constant(_) | TestFn1d::Cosine { .. })),
            _ => false,
        }
    }

    pub fn is_separable(&self) -> bool {
        matches!(
            self,
            TestFunction::Separable(_) | TestFunction::Cosine { .. } | TestFunction::Constant(_)
        )
    }

    /// Number of state dimensions this function constrains, if any.
    pub fn dim(&self) -> Option<usize> {
        match self {
            TestFunction::Constant(_) => None,
            TestFunction::Cosine { ell, .. }
            | TestFunction::TanhLinear { ell }
            | TestFunction::AbsSin { ell } => Some(ell.len()),
            TestFunction::Separable(fs) => Some(fs.len()),
        }
    }

    /// Exact mixed directional derivative along `dirs`.
    pub fn derivative(&self, x: &DVector<f64>, dirs: &[DVector<f64>]) -> Result<f64> {
        let n = dirs.len();
        if n == 0 {
            return Ok(self.eval(x));
        }
        let avail = self.analytic_order();
        if n > avail {
            return Err(Error::UnsupportedOrder {
                requested: n,
                available: avail,
            });
        }
        match self {
            TestFunction::Constant(_) => Ok(0.0),
            TestFunction::Cosine { ell, phase } => {
                let factor: f64 = dirs.iter().map(|h| ell.dot(h)).product();
                Ok(factor
                    * (ell.dot(x) + phase + n as f64 * std::f64::consts::FRAC_PI_2).cos())
            }
            TestFunction::TanhLinear { ell } => {
                let factor: f64 = dirs.iter().map(|h| ell.dot(h)).product();
                Ok(factor * tanh_derivative(ell.dot(x).tanh(), n))
            }
            TestFunction::AbsSin { .. } => unreachable!("order gate above"),
            TestFunction::Separable(fs) => {
                // Distribute each direction slot over the modes it touches.
                fn recur(
                    fs: &[TestFn1d],
                    x: &DVector<f64>,
                    dirs: &[DVector<f64>],
                    idx: usize,
                    counts: &mut [usize],
                ) -> Result<f64> {
                    if idx == dirs.len() {
                        let mut prod = 1.0;
                        for (k, f) in fs.iter().enumerate() {
                            prod *= f.derivative(x[k], counts[k])?;
                            if prod == 0.0 {
                                break;
                            }
                        }
                        return Ok(prod);
                    }
                    let mut acc = 0.0;
                    for k in 0..fs.len() {
                        let hk = dirs[idx][k];
                        if hk == 0.0 {
                            continue;
                        }
                        counts[k] += 1;
                        acc += hk * recur(fs, x, dirs, idx + 1, counts)?;
                        counts[k] -= 1;
                    }
                    Ok(acc)
                }
                let mut counts = vec![0usize; fs.len()];
                recur(fs, x, dirs, 0, &mut counts)
            }
        }
    }

    pub fn to_config_strings(&self) -> Vec<(String, String)> {
        let vecstr = |v: &DVector<f64>| {
            let items: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
            format!("[{}]", items.join(", "))
        };
        match self {
            TestFunction::Constant(c) => vec![
                ("kind".into(), "constant".into()),
                ("value".into(), format!("{c}")),
            ],
            TestFunction::Cosine { ell, phase } => vec![
                ("kind".into(), "cosine".into()),
                ("ell".into(), vecstr(ell)),
                ("phase".into(), format!("{phase}")),
            ],
            TestFunction::TanhLinear { ell } => vec![
                ("kind".into(), "tanh_linear".into()),
                ("ell".into(), vecstr(ell)),
            ],
            TestFunction::AbsSin { ell } => vec![
                ("kind".into(), "abs_sin".into()),
                ("ell".into(), vecstr(ell)),
            ],
            TestFunction::Separable(fs) => {
                let mut kv = vec![("kind".into(), "separable".into())];
                for (k, f) in fs.iter().enumerate() {
                    kv.push((format!("factor_{}", k + 1), f.to_config_string()));
                }
                kv
            }
        }
    }

    /// Build from a config section holding `kind`, `ell`/`value`/factors.
    pub fn from_section(sec: &mut Section, dim: usize) -> Result<TestFunction> {
        let kind = sec.take_required("kind")?.to_ascii_lowercase();
        let take_ell = |sec: &mut Section| -> Result<DVector<f64>> {
            let v = sec
                .take_vector("ell")?
                .ok_or_else(|| Error::Validation("test function needs `ell`".into()))?;
            if v.len() != dim {
                return Err(Error::Validation(format!(
                    "`ell` has {} entries, expected {dim}",
                    v.len()
                )));
            }
            Ok(DVector::from_vec(v))
        };
        let f = match kind.as_str() {
            "constant" => TestFunction::Constant(sec.take_f64_required("value")?),
            "cosine" => {
                let ell = take_ell(sec)?;
                let phase = sec.take_f64("phase")?.unwrap_or(0.0);
                TestFunction::Cosine { ell, phase }
            }
            "tanh_linear" => TestFunction::TanhLinear { ell: take_ell(sec)? },
            "abs_sin" => TestFunction::AbsSin { ell: take_ell(sec)? },
            "separable" => {
                let mut fs = Vec::with_capacity(dim);
                for k in 1..=dim {
                    let spec = sec
                        .take(&format!("factor_{k}"))
                        .unwrap_or_else(|| "constant(1)".into());
                    fs.push(TestFn1d::parse(&spec)?);
                }
                TestFunction::Separable(fs)
            }
            other => {
                return Err(Error::Validation(format!("unknown test function `{other}`")));
            }
        };
        Ok(f)
    }
}

/// Source term `psi(sigma, x) = rho(sigma) * phi(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceTerm {
    pub rho: TimeFn,
    pub spatial: TestFunction,
}

impl SourceTerm {
    pub fn new(rho: TimeFn, spatial: TestFunction) -> Self {
        SourceTerm { rho, spatial }
    }

    pub fn eval(&self, sigma: f64, x: &DVector<f64>) -> f64 {
        self.rho.eval(sigma) * self.spatial.eval(x)
    }

    /// Sup bound over `[0, horizon] x X`.
    pub fn bound(&self, horizon: f64) -> f64 {
        self.rho.sup_abs(0.0, horizon) * self.spatial.bound()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(k: usize, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |i, _| if i == k { 1.0 } else { 0.0 })
    }

    #[test]
    fn preset_values_match_definitions() {
        // a_1(1) = -1^2(1^1+1) = -2, b_1(0) = sin(0)+2 = 2, heat_3 = -9 pi^2.
        assert_eq!(TimeFn::PresetAk { k: 1 }.eval(1.0), -2.0);
        assert_eq!(TimeFn::PresetBk { k: 1, offset: 2.0 }.eval(0.0), 2.0);
        let pi = std::f64::consts::PI;
        assert!((TimeFn::PresetHeat { k: 3 }.eval(0.7) + 9.0 * pi * pi).abs() < 1e-12);
    }

    #[test]
    fn antiderivatives_match_quadrature() {
        let fns = vec![
            TimeFn::Const(1.7),
            TimeFn::Poly(vec![1.0, -2.0, 0.5, 3.0]),
            TimeFn::Trig {
                amplitude: 1.3,
                frequency: 2.0,
                phase: 0.4,
                offset: -0.2,
            },
            TimeFn::PresetAk { k: 3 },
            TimeFn::PresetBk { k: 5, offset: 2.0 },
            TimeFn::PresetHeat { k: 2 },
        ];
        // 100 random-ish subintervals of [0, 1.5] via Halton points.
        for f in &fns {
            assert!(f.has_exact_antiderivative());
            for i in 0..100 {
                let p = crate::numeric::halton::point(i, 2);
                let (mut s, mut t) = (1.5 * p[0], 1.5 * p[1]);
                if s > t {
                    std::mem::swap(&mut s, &mut t);
                }
                let exact = f.integral(s, t);
                let numeric = f.integral_quadrature(s, t).unwrap();
                let scale = exact.abs().max(1.0);
                assert!(
                    (exact - numeric).abs() <= 1e-12 * scale,
                    "{f:?} on [{s}, {t}]: {exact} vs {numeric}"
                );
            }
        }
    }

    #[test]
    fn load_model_diagonal_presets() {
        let text = "[model]\nkind = diagonal\nn = 4\nt = 1\na = preset_ak\nb = preset_bk(2)\n";
        let m = load_model(text).unwrap();
        assert_eq!(m.dim, 4);
        assert_eq!(m.drift_mode(0).eval(1.0), -2.0);
        assert_eq!(m.diffusion_mode(0).eval(0.0), 2.0);
        assert!(m.affine_is_zero());
    }

    #[test]
    fn load_model_missing_diffusion_is_validation_error() {
        let text = "[model]\nkind = diagonal\nn = 4\nt = 1\na = preset_ak\n";
        assert!(matches!(load_model(text), Err(Error::Validation(_))));
    }

    #[test]
    fn load_model_scalar_identity_trig() {
        let text = "[model]\nkind = scalar_identity\nn = 3\nt = 6.3\na = trig(1, 1, 0, 0)\nb = const(1)\n";
        let m = load_model(text).unwrap();
        let a = m.drift_matrix(std::f64::consts::FRAC_PI_2);
        for k in 0..3 {
            assert!((a[(k, k)] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn model_round_trips_through_config_text() {
        for text in [
            "[model]\nkind = diagonal\nn = 4\nt = 1\na = preset_ak\nb = preset_bk(2)\nb_2 = const(0)\nf = const(0.5)\n",
            "[model]\nkind = scalar_identity\nn = 2\nt = 2\na = trig(1, 1, 0, 0)\nb = power(-0.5)\n",
            "[model]\nkind = dense\nn = 2\nt = 1\na_terms = 1\na_term_1_coef = const(1)\na_term_1_matrix = [0, 1; -1, 0]\nb_terms = 1\nb_term_1_coef = const(1)\nb_term_1_matrix = [1, 0; 0, 1]\n",
        ] {
            let m = load_model(text).unwrap();
            let echoed = m.to_config_text();
            let m2 = load_model(&echoed).unwrap();
            assert_eq!(m, m2, "round-trip failed for:\n{text}");
        }
    }

    #[test]
    fn direction_space_presets() {
        let m = load_model("[model]\nkind = diagonal\nn = 3\nt = 1\na = const(0)\nb = preset_bk(2)\n")
            .unwrap();
        let amb = DirectionSpace::from_preset(&SpacePreset::Ambient, &m).unwrap();
        assert_eq!(amb.weights, vec![1.0; 3]);
        // b_k(0) = 2 for every k, so cm_at(0) weights are 1/2.
        let cm = DirectionSpace::from_preset(&SpacePreset::CmAt { t0: 0.0 }, &m).unwrap();
        for w in &cm.weights {
            assert!((w - 0.5).abs() < 1e-15);
        }
        let sob = DirectionSpace::from_preset(&SpacePreset::Sobolev { gamma: 0.5 }, &m).unwrap();
        for (k, w) in sob.weights.iter().enumerate() {
            let expect = ((k + 1) as f64 * std::f64::consts::PI).sqrt();
            assert!((w - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn cm_at_degenerate_mode_is_an_error() {
        let m = load_model(
            "[model]\nkind = diagonal\nn = 2\nt = 1\na = const(0)\nb = const(1)\nb_2 = const(0)\n",
        )
        .unwrap();
        let r = DirectionSpace::from_preset(&SpacePreset::CmAt { t0: 0.3 }, &m);
        assert_eq!(r.unwrap_err(), Error::DegenerateDiffusion { mode: 2 });
    }

    #[test]
    fn direction_space_norm_axioms() {
        let e_space = DirectionSpace::new(vec![1.0, 2.0, 0.5], "w").unwrap();
        for i in 0..64u64 {
            let p = crate::numeric::halton::point_in_box(i, 9, -2.0, 2.0);
            let u = DVector::from_vec(p[0..3].to_vec());
            let v = DVector::from_vec(p[3..6].to_vec());
            let lam = p[6] * 4.0 - 2.0;
            // Homogeneity and triangle inequality.
            assert!((e_space.norm(&(&u * lam)) - lam.abs() * e_space.norm(&u)).abs() < 1e-12);
            assert!(e_space.norm(&(&u + &v)) <= e_space.norm(&u) + e_space.norm(&v) + 1e-12);
        }
        assert!((e_space.embedding_constant() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn cosine_derivatives_match_finite_differences() {
        let n = 3;
        let ell = DVector::from_vec(vec![1.0, -0.5, 2.0]);
        let phi = TestFunction::Cosine {
            ell: ell.clone(),
            phase: 0.3,
        };
        let x = DVector::from_vec(vec![0.2, -0.1, 0.4]);
        // Step 1e-5 keeps roundoff amplification (2h)^-order below the
        // tolerance through order 2; deeper orders are exercised with the
        // Richardson differencer in the semigroup tests.
        for order in 1..=2usize {
            let dirs: Vec<DVector<f64>> = (0..order).map(|j| e(j % n, n)).collect();
            let exact = phi.derivative(&x, &dirs).unwrap();
            let h = 1e-5;
            let fd = |dirs: &[DVector<f64>], x: &DVector<f64>| -> f64 {
                fn go(
                    phi: &TestFunction,
                    x: &DVector<f64>,
                    dirs: &[DVector<f64>],
                    h: f64,
                ) -> f64 {
                    match dirs.split_last() {
                        None => phi.eval(x),
                        Some((d, rest)) => {
                            (go(phi, &(x + d * h), rest, h) - go(phi, &(x - d * h), rest, h))
                                / (2.0 * h)
                        }
                    }
                }
                go(&phi, x, dirs, h)
            };
            let approx = fd(&dirs, &x);
            let rel = (exact - approx).abs() / exact.abs().max(1e-3);
            assert!(rel <= 1e-5, "order {order}: {exact} vs {approx}");
        }
    }

    #[test]
    fn tanh_derivatives_match_closed_forms() {
        // tanh' = 1 - tanh^2, tanh'' = -2 tanh (1 - tanh^2).
        let u: f64 = 0.7;
        let tau = u.tanh();
        assert!((tanh_derivative(tau, 1) - (1.0 - tau * tau)).abs() < 1e-14);
        assert!((tanh_derivative(tau, 2) + 2.0 * tau * (1.0 - tau * tau)).abs() < 1e-14);
    }

    #[test]
    fn abs_sin_rejects_derivatives_and_is_lipschitz() {
        let ell = DVector::from_vec(vec![2.0, 1.0]);
        let phi = TestFunction::AbsSin { ell: ell.clone() };
        let x = DVector::from_vec(vec![0.1, 0.2]);
        assert!(matches!(
            phi.derivative(&x, &[e(0, 2)]),
            Err(Error::UnsupportedOrder { .. })
        ));
        let lip = ell.norm();
        for i in 0..256u64 {
            let p = crate::numeric::halton::point_in_box(i, 4, -3.0, 3.0);
            let a = DVector::from_vec(p[0..2].to_vec());
            let b = DVector::from_vec(p[2..4].to_vec());
            let lhs = (phi.eval(&a) - phi.eval(&b)).abs();
            assert!(lhs <= lip * (&a - &b).norm() + 1e-12);
        }
    }

    #[test]
    fn bounds_hold_on_sampled_points() {
        let fns = vec![
            TestFunction::Cosine {
                ell: DVector::from_vec(vec![1.0, 2.0]),
                phase: 0.7,
            },
            TestFunction::TanhLinear {
                ell: DVector::from_vec(vec![3.0, -1.0]),
            },
            TestFunction::AbsSin {
                ell: DVector::from_vec(vec![2.0, 5.0]),
            },
            TestFunction::Separable(vec![
                TestFn1d::Cosine {
                    freq: 2.0,
                    phase: 0.0,
                },
                TestFn1d::Constant(1.5),
            ]),
        ];
        for phi in &fns {
            let bound = phi.bound();
            for i in 0..10_000u64 {
                let p = crate::numeric::halton::point_in_box(i, 2, -8.0, 8.0);
                let x = DVector::from_vec(p);
                assert!(phi.eval(&x).abs() <= bound + 1e-12);
            }
        }
    }

    #[test]
    fn separable_derivative_product_rule() {
        let phi = TestFunction::Separable(vec![
            TestFn1d::Cosine {
                freq: 1.0,
                phase: 0.0,
            },
            TestFn1d::TanhLinear { slope: 2.0 },
        ]);
        let x = DVector::from_vec(vec![0.3, -0.2]);
        // d/dx1 d/dx2 [cos(x1) tanh(2 x2)] = -sin(x1) * 2(1-tanh^2(2x2)).
        let d = phi.derivative(&x, &[e(0, 2), e(1, 2)]).unwrap();
        let t = (2.0f64 * -0.2).tanh();
        let expect = -(0.3f64).sin() * 2.0 * (1.0 - t * t);
        assert!((d - expect).abs() < 1e-13);
    }

    #[test]
    fn summability_diagnostic_on_example_family() {
        let m = EvolutionModel::example1(8, 1.0, 2.0);
        let d = m.summability_diagnostic().unwrap();
        // lambda_k = max a_k = -k^2 (attained at t=0), sup|b_k| <= 3.
        let bound: f64 = (1..=8).map(|k| 9.0 / (k * k) as f64).sum();
        assert!(d > 0.0 && d <= bound + 1e-12);
    }
}
