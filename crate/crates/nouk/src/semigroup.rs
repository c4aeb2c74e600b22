//! The evolution family P_{s,t} and its derivative representations: plain
//! application, transported derivatives for smooth data, smoothing
//! derivatives through the I_n functionals, mixed forms, and the
//! finite-difference and Euler-Maruyama oracles.

use crate::error::{Error, Result};
use crate::gaussian::{h_hat, HHatFunctional, NormalSampler};
use crate::model::{EvolutionModel, TestFunction};
use crate::numeric::{chunked_reduce, MomentSum};
use crate::propagator::{self, GaussianState, Propagator};
use nalgebra::{DMatrix, DVector};
use std::time::{Duration, Instant};

// Stream identifiers; every Monte Carlo operation draws from its own stream.
pub const OP_APPLY: u64 = 0xA1;
pub const OP_SMOOTHING: u64 = 0xA2;
pub const OP_TRANSPORTED: u64 = 0xA3;
pub const OP_MIXED: u64 = 0xA4;
pub const OP_SDE: u64 = 0xA5;
pub const OP_U1: u64 = 0xA6;
pub const OP_SEMINORM: u64 = 0xA7;
pub const OP_BLOWUP: u64 = 0xA8;

/// Default Monte Carlo sample count.
pub const DEFAULT_SAMPLES: u64 = 1 << 16;
/// Default Gauss-Hermite nodes per mode.
pub const DEFAULT_GH_NODES: usize = 64;
/// Cap on the smoothing-derivative order (the variance of I_n grows fast).
pub const MAX_SMOOTHING_ORDER: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Mc,
    GaussHermite,
    ClosedForm,
    Fd,
    Sde,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Mc => "mc",
            Method::GaussHermite => "gauss_hermite",
            Method::ClosedForm => "closed_form",
            Method::Fd => "fd",
            Method::Sde => "sde",
        }
    }
}

/// Result of one evaluation with its uncertainty and provenance.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub value: f64,
    /// Monte Carlo standard error or deterministic error estimate; closed
    /// forms report 0.
    pub uncertainty: f64,
    pub method: Method,
    pub n_samples: u64,
    pub seed: u64,
    pub elapsed: Duration,
}

impl EvalReport {
    fn closed(value: f64, seed: u64, start: Instant) -> Self {
        EvalReport {
            value,
            uncertainty: 0.0,
            method: Method::ClosedForm,
            n_samples: 0,
            seed,
            elapsed: start.elapsed(),
        }
    }
}

/// Evaluation knobs shared by the P_{s,t} operations.
#[derive(Debug, Clone)]
pub struct EvalParams {
    /// Fixed method, or None for automatic selection (closed form when
    /// available, Gauss-Hermite for separable diagonal cases, else MC).
    pub method: Option<Method>,
    pub n_samples: u64,
    pub gh_nodes: usize,
    pub seed: u64,
    pub threads: usize,
    /// Stream id; override to share variates across related evaluations
    /// (common random numbers).
    pub op_id: Option<u64>,
}

impl Default for EvalParams {
    fn default() -> Self {
        EvalParams {
            method: None,
            n_samples: DEFAULT_SAMPLES,
            gh_nodes: DEFAULT_GH_NODES,
            seed: 0,
            threads: 1,
            op_id: None,
        }
    }
}

impl EvalParams {
    pub fn with_seed(seed: u64) -> Self {
        EvalParams {
            seed,
            ..Default::default()
        }
    }

    pub fn with_method(method: Method, seed: u64) -> Self {
        EvalParams {
            method: Some(method),
            seed,
            ..Default::default()
        }
    }
}

fn check_args(model: &EvolutionModel, phi: &TestFunction, s: f64, t: f64, x: &DVector<f64>) -> Result<()> {
    if !(0.0 <= s && s <= t && t <= model.horizon) {
        return Err(Error::Validation(format!(
            "require 0 <= s <= t <= {}, got s = {s}, t = {t}",
            model.horizon
        )));
    }
    if x.len() != model.dim {
        return Err(Error::Validation(format!(
            "state has {} entries, model dimension is {}",
            x.len(),
            model.dim
        )));
    }
    if let Some(d) = phi.dim() {
        if d != model.dim {
            return Err(Error::Validation(format!(
                "test function dimension {d} does not match model dimension {}",
                model.dim
            )));
        }
    }
    Ok(())
}

/// Closed-form value of `P_{s,t} phi (x)` for functions with closed Gaussian
/// expectations.
fn closed_form_apply(
    model: &EvolutionModel,
    phi: &TestFunction,
    s: f64,
    t: f64,
    x: &DVector<f64>,
) -> Result<f64> {
    let m = propagator::mean(model, s, t, x)?;
    match phi {
        TestFunction::Constant(c) => Ok(*c),
        TestFunction::Cosine { ell, phase } => {
            let cov = propagator::covariance(model, s, t)?;
            let var = cov.quadratic_form(ell);
            Ok((ell.dot(&m) + phase).cos() * (-0.5 * var).exp())
        }
        TestFunction::Separable(_) if model.is_diagonal() && phi.has_closed_form_expectation() => {
            let cov = propagator::covariance(model, s, t)?;
            crate::gaussian::gh_expectation(&cov, &m, phi, 2).and_then(|_| {
                // Product of per-mode characteristic functions, exactly.
                let q = cov.eigenvalues();
                let TestFunction::Separable(fs) = phi else {
                    unreachable!()
                };
                let mut prod = 1.0;
                for (k, f) in fs.iter().enumerate() {
                    prod *= match f {
                        crate::model::TestFn1d::Constant(c) => *c,
                        crate::model::TestFn1d::Cosine { freq, phase } => {
                            (freq * m[k] + phase).cos() * (-0.5 * q[k] * freq * freq).exp()
                        }
                        _ => return Err(Error::MethodUnavailable(
                            "no closed form for this factor".into(),
                        )),
                    };
                }
                Ok(prod)
            })
        }
        _ => Err(Error::MethodUnavailable(format!(
            "no closed-form expectation for {phi:?}"
        ))),
    }
}

/// `P_{s,t} phi (x) = int phi(y + m^x(t,s)) dN(0, Q(t,s))(y)`.
pub fn apply(
    model: &EvolutionModel,
    phi: &TestFunction,
    s: f64,
    t: f64,
    x: &DVector<f64>,
    params: &EvalParams,
) -> Result<EvalReport> {
    let start = Instant::now();
    check_args(model, phi, s, t, x)?;
    if s == t {
        return Ok(EvalReport::closed(phi.eval(x), params.seed, start));
    }
    let method = match params.method {
        Some(m) => m,
        None => {
            if phi.has_closed_form_expectation() && (model.is_diagonal() || matches!(phi, TestFunction::Cosine { .. } | TestFunction::Constant(_))) {
                Method::ClosedForm
            } else if phi.is_separable() && model.is_diagonal() {
                Method::GaussHermite
            } else {
                Method::Mc
            }
        }
    };
    match method {
        Method::ClosedForm => {
            let v = closed_form_apply(model, phi, s, t, x)?;
            Ok(EvalReport::closed(v, params.seed, start))
        }
        Method::GaussHermite => {
            if !model.is_diagonal() {
                return Err(Error::NotSeparable(
                    "Gauss-Hermite requires a diagonal model".into(),
                ));
            }
            let m = propagator::mean(model, s, t, x)?;
            let cov = propagator::covariance(model, s, t)?;
            let v = crate::gaussian::gh_expectation(&cov, &m, phi, params.gh_nodes)?;
            Ok(EvalReport {
                value: v,
                uncertainty: 0.0,
                method: Method::GaussHermite,
                n_samples: params.gh_nodes as u64,
                seed: params.seed,
                elapsed: start.elapsed(),
            })
        }
        Method::Mc => {
            let m = propagator::mean(model, s, t, x)?;
            let cov = propagator::covariance(model, s, t)?;
            let op = params.op_id.unwrap_or(OP_APPLY);
            let moments = mc_expect(&cov, params, op, |y| phi.eval(&(&m + y)));
            Ok(EvalReport {
                value: moments.mean(),
                uncertainty: moments.std_error(),
                method: Method::Mc,
                n_samples: moments.n,
                seed: params.seed,
                elapsed: start.elapsed(),
            })
        }
        other => Err(Error::MethodUnavailable(format!(
            "apply does not support method {}",
            other.as_str()
        ))),
    }
}

/// Deterministic chunked Monte Carlo expectation of `f(y)` under N(0, Q).
fn mc_expect<F>(cov: &GaussianState, params: &EvalParams, op_id: u64, f: F) -> MomentSum
where
    F: Fn(&DVector<f64>) -> f64 + Sync,
{
    let sampler = NormalSampler::new(params.seed);
    let dim = cov.dim();
    let partials = chunked_reduce(params.n_samples, params.threads, |range| {
        let mut acc = MomentSum::default();
        let mut z = DVector::zeros(dim);
        for i in range {
            sampler.fill_standard(op_id, i, &mut z);
            let y = cov.sqrt_apply(&z);
            acc.push(f(&y));
        }
        acc
    });
    partials.into_iter().fold(MomentSum::default(), MomentSum::merge)
}

/// Precomputed data for smoothing derivatives at fixed (s, t, directions):
/// the covariance, the transported directions, their Cameron-Martin
/// functionals, and the pairing matrix `G_ij = <Lambda h_i, Lambda h_j>`.
#[derive(Debug, Clone)]
pub struct SmoothingContext {
    pub cov: GaussianState,
    pub transported: Vec<DVector<f64>>,
    pub hhats: Vec<HHatFunctional>,
    pub gram: DMatrix<f64>,
}

impl SmoothingContext {
    pub fn new(
        model: &EvolutionModel,
        s: f64,
        t: f64,
        dirs: &[DVector<f64>],
    ) -> Result<Self> {
        if !(s < t) {
            return Err(Error::Validation(
                "smoothing context requires s < t".into(),
            ));
        }
        let u = propagator::transition(model, s, t)?;
        let cov = propagator::covariance(model, s, t)?;
        SmoothingContext::from_parts(&u, cov, dirs)
    }

    /// Build from an existing propagator/covariance pair.
    pub fn from_parts(
        u: &Propagator,
        cov: GaussianState,
        dirs: &[DVector<f64>],
    ) -> Result<Self> {
        let not_smoothing = |e: Error| match e {
            Error::KernelComponent { index } => Error::NotSmoothing { mode: index },
            other => other,
        };
        let transported: Vec<DVector<f64>> = dirs.iter().map(|h| u.apply(h)).collect();
        let mut hhats = Vec::with_capacity(dirs.len());
        let mut lambda_dirs = Vec::with_capacity(dirs.len());
        for uh in &transported {
            hhats.push(h_hat(&cov, uh).map_err(not_smoothing)?);
            lambda_dirs.push(cov.pinv_sqrt_apply(uh).map_err(not_smoothing)?);
        }
        let n = dirs.len();
        let gram = DMatrix::from_fn(n, n, |i, j| lambda_dirs[i].dot(&lambda_dirs[j]));
        Ok(SmoothingContext {
            cov,
            transported,
            hhats,
            gram,
        })
    }

    pub fn order(&self) -> usize {
        self.hhats.len()
    }

    /// Evaluate `I_n(y)` over the direction subset by the recursion
    /// `I_n = hhat_n I_{n-1} - sum_{j<n} G_jn I_{n-2 without j}`.
    pub fn in_eval(&self, y: &DVector<f64>, subset: &[usize]) -> f64 {
        let hv: Vec<f64> = self.hhats.iter().map(|f| f.eval(y)).collect();
        let mut mask = 0u32;
        for &i in subset {
            mask |= 1 << i;
        }
        let mut memo = vec![f64::NAN; 1 << self.order()];
        self.in_mask(mask, &hv, &mut memo)
    }

    /// `I_n(y)` over all context directions.
    pub fn in_eval_full(&self, y: &DVector<f64>) -> f64 {
        let all: Vec<usize> = (0..self.order()).collect();
        self.in_eval(y, &all)
    }

    /// Same, with the per-direction functional values precomputed.
    pub fn in_from_values(&self, hhat_values: &[f64]) -> f64 {
        let mask = (1u32 << self.order()) - 1;
        let mut memo = vec![f64::NAN; 1 << self.order()];
        self.in_mask(mask, hhat_values, &mut memo)
    }

    fn in_mask(&self, mask: u32, hv: &[f64], memo: &mut [f64]) -> f64 {
        if mask == 0 {
            return 1.0;
        }
        let cached = memo[mask as usize];
        if !cached.is_nan() {
            return cached;
        }
        let last = 31 - mask.leading_zeros() as usize;
        let rest = mask & !(1 << last);
        let mut v = hv[last] * self.in_mask(rest, hv, memo);
        let mut bits = rest;
        while bits != 0 {
            let j = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            let smaller = rest & !(1 << j);
            v -= self.gram[(j, last)] * self.in_mask(smaller, hv, memo);
        }
        memo[mask as usize] = v;
        v
    }

    /// Exhaustive pairing-expansion oracle: enumerate every set of disjoint
    /// pairs of the subset, with sign `(-1)^pairs`, pairing factors `G_ij`
    /// and functional factors on the unpaired indices.
    pub fn in_pairing_expansion(&self, y: &DVector<f64>, subset: &[usize]) -> f64 {
        let hv: Vec<f64> = self.hhats.iter().map(|f| f.eval(y)).collect();
        let matchings = enumerate_matchings(subset);
        let mut total = 0.0;
        for (pairs, singles) in &matchings {
            let mut term = if pairs.len() % 2 == 0 { 1.0 } else { -1.0 };
            for (i, j) in pairs {
                term *= self.gram[(*i, *j)];
            }
            for i in singles {
                term *= hv[*i];
            }
            total += term;
        }
        total
    }
}

/// All ways to choose disjoint index pairs from `set` (the rest unpaired),
/// materialized for the oracle.
fn enumerate_matchings(set: &[usize]) -> Vec<(Vec<(usize, usize)>, Vec<usize>)> {
    if set.is_empty() {
        return vec![(Vec::new(), Vec::new())];
    }
    let first = set[0];
    let rest = &set[1..];
    let mut out = Vec::new();
    // first unpaired
    for (pairs, mut singles) in enumerate_matchings(rest) {
        singles.insert(0, first);
        out.push((pairs, singles));
    }
    // first paired with each later element
    for (pos, &j) in rest.iter().enumerate() {
        let mut remaining: Vec<usize> = rest.to_vec();
        remaining.remove(pos);
        for (mut pairs, singles) in enumerate_matchings(&remaining) {
            pairs.insert(0, (first, j));
            out.push((pairs, singles));
        }
    }
    out
}

/// Closed-form mixed derivative of `P_{s,t} phi` along `dirs` for cosine
/// test functions: the transported/smoothing split collapses to
/// `R cos(theta + n pi/2) prod <l, U h_i>`.
fn closed_form_derivative(
    model: &EvolutionModel,
    phi: &TestFunction,
    s: f64,
    t: f64,
    x: &DVector<f64>,
    dirs: &[DVector<f64>],
) -> Result<f64> {
    match phi {
        TestFunction::Constant(_) => Ok(0.0),
        TestFunction::Cosine { ell, phase } => {
            let u = propagator::transition(model, s, t)?;
            let m = propagator::mean(model, s, t, x)?;
            let cov = propagator::covariance(model, s, t)?;
            let amp = (-0.5 * cov.quadratic_form(ell)).exp();
            let mut factor = amp;
            for h in dirs {
                factor *= ell.dot(&u.apply(h));
            }
            let n = dirs.len() as f64;
            Ok(factor * (ell.dot(&m) + phase + n * std::f64::consts::FRAC_PI_2).cos())
        }
        _ => Err(Error::MethodUnavailable(
            "closed-form derivatives exist for cosine data only".into(),
        )),
    }
}

/// `D^n_E (P_{s,t} phi)(x)(h_1..h_n)` through the smoothing representation
/// `int phi(y + m) I_n(y) dN(0, Q)`.
pub fn smoothing_derivative(
    model: &EvolutionModel,
    phi: &TestFunction,
    s: f64,
    t: f64,
    x: &DVector<f64>,
    dirs: &[DVector<f64>],
    params: &EvalParams,
) -> Result<EvalReport> {
    let start = Instant::now();
    check_args(model, phi, s, t, x)?;
    if dirs.is_empty() {
        return apply(model, phi, s, t, x, params);
    }
    if dirs.len() > MAX_SMOOTHING_ORDER {
        return Err(Error::Validation(format!(
            "smoothing order {} exceeds the cap {MAX_SMOOTHING_ORDER}",
            dirs.len()
        )));
    }
    if !(s < t) {
        return Err(Error::Validation(
            "smoothing derivatives require s < t".into(),
        ));
    }
    let method = match params.method {
        Some(m) => m,
        None => {
            if matches!(phi, TestFunction::Cosine { .. } | TestFunction::Constant(_)) {
                Method::ClosedForm
            } else {
                Method::Mc
            }
        }
    };
    match method {
        Method::ClosedForm => {
            // Representation identity: the smoothing integral of a cosine
            // equals the transported closed form.
            let v = closed_form_derivative(model, phi, s, t, x, dirs)?;
            Ok(EvalReport::closed(v, params.seed, start))
        }
        Method::Mc => {
            let ctx = SmoothingContext::new(model, s, t, dirs)?;
            let m = propagator::mean(model, s, t, x)?;
            let op = params.op_id.unwrap_or(OP_SMOOTHING);
            let moments = mc_expect(&ctx.cov, params, op, |y| {
                phi.eval(&(&m + y)) * ctx.in_eval_full(y)
            });
            Ok(EvalReport {
                value: moments.mean(),
                uncertainty: moments.std_error(),
                method: Method::Mc,
                n_samples: moments.n,
                seed: params.seed,
                elapsed: start.elapsed(),
            })
        }
        Method::GaussHermite => {
            let v = gh_smoothing(model, phi, s, t, x, dirs, params.gh_nodes)?;
            Ok(EvalReport {
                value: v,
                uncertainty: 0.0,
                method: Method::GaussHermite,
                n_samples: params.gh_nodes as u64,
                seed: params.seed,
                elapsed: start.elapsed(),
            })
        }
        other => Err(Error::MethodUnavailable(format!(
            "smoothing derivative does not support method {}",
            other.as_str()
        ))),
    }
}

/// Gauss-Hermite smoothing derivative for separable data on diagonal models,
/// orders 1 and 2, by independence moments.
fn gh_smoothing(
    model: &EvolutionModel,
    phi: &TestFunction,
    s: f64,
    t: f64,
    x: &DVector<f64>,
    dirs: &[DVector<f64>],
    nodes: usize,
) -> Result<f64> {
    if !model.is_diagonal() || !matches!(phi, TestFunction::Separable(_)) {
        return Err(Error::NotSeparable(
            "Gauss-Hermite smoothing path needs a diagonal model and separable data".into(),
        ));
    }
    if dirs.len() > 2 {
        return Err(Error::MethodUnavailable(
            "Gauss-Hermite smoothing path supports orders 1 and 2".into(),
        ));
    }
    let TestFunction::Separable(fs) = phi else {
        unreachable!()
    };
    let ctx = SmoothingContext::new(model, s, t, dirs)?;
    let m = propagator::mean(model, s, t, x)?;
    let q = ctx.cov.eigenvalues();
    let n = model.dim;
    // Per-mode moments E[y^p f(m + y)], p = 0, 1, 2.
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    let mut c = vec![0.0; n];
    for k in 0..n {
        let f = &fs[k];
        a[k] = crate::numeric::quad::gauss_hermite_expect_1d(
            |y| eval1(f, m[k] + y),
            0.0,
            q[k],
            nodes,
        );
        b[k] = crate::numeric::quad::gauss_hermite_expect_1d(
            |y| y * eval1(f, m[k] + y),
            0.0,
            q[k],
            nodes,
        );
        c[k] = crate::numeric::quad::gauss_hermite_expect_1d(
            |y| y * y * eval1(f, m[k] + y),
            0.0,
            q[k],
            nodes,
        );
    }
    let prod_except = |skip: &[usize]| -> f64 {
        let mut p = 1.0;
        for k in 0..n {
            if !skip.contains(&k) {
                p *= a[k];
            }
        }
        p
    };
    let d: Vec<&[f64]> = ctx.hhats.iter().map(|h| h.coeffs.as_slice()).collect();
    match dirs.len() {
        1 => {
            let mut total = 0.0;
            for k in 0..n {
                if d[0][k] != 0.0 {
                    total += d[0][k] * b[k] * prod_except(&[k]);
                }
            }
            Ok(total)
        }
        2 => {
            let mut total = 0.0;
            for k in 0..n {
                if d[0][k] * d[1][k] != 0.0 {
                    total += d[0][k] * d[1][k] * c[k] * prod_except(&[k]);
                }
                for l in 0..n {
                    if l != k && d[0][k] * d[1][l] != 0.0 {
                        total += d[0][k] * d[1][l] * b[k] * b[l] * prod_except(&[k, l]);
                    }
                }
            }
            total -= ctx.gram[(0, 1)] * prod_except(&[]);
            Ok(total)
        }
        _ => unreachable!(),
    }
}

fn eval1(f: &crate::model::TestFn1d, y: f64) -> f64 {
    match f {
        crate::model::TestFn1d::Constant(c) => *c,
        crate::model::TestFn1d::Cosine { freq, phase } => (freq * y + phase).cos(),
        crate::model::TestFn1d::TanhLinear { slope } => (slope * y).tanh(),
        crate::model::TestFn1d::AbsSin { freq } => (freq * y).sin().abs(),
    }
}

/// Transported derivative for k-times differentiable data:
/// `int D^k phi(y + m)(U h_1 .. U h_k) dN`.
pub fn transported_derivative(
    model: &EvolutionModel,
    phi: &TestFunction,
    s: f64,
    t: f64,
    x: &DVector<f64>,
    dirs: &[DVector<f64>],
    params: &EvalParams,
) -> Result<EvalReport> {
    let start = Instant::now();
    check_args(model, phi, s, t, x)?;
    let k = dirs.len();
    if k == 0 {
        return apply(model, phi, s, t, x, params);
    }
    if k > phi.analytic_order() {
        return Err(Error::UnsupportedOrder {
            requested: k,
            available: phi.analytic_order(),
        });
    }
    if s == t {
        let v = phi.derivative(x, dirs)?;
        return Ok(EvalReport::closed(v, params.seed, start));
    }
    let method = match params.method {
        Some(m) => m,
        None => {
            if matches!(phi, TestFunction::Cosine { .. } | TestFunction::Constant(_)) {
                Method::ClosedForm
            } else {
                Method::Mc
            }
        }
    };
    match method {
        Method::ClosedForm => {
            let v = closed_form_derivative(model, phi, s, t, x, dirs)?;
            Ok(EvalReport::closed(v, params.seed, start))
        }
        Method::Mc => {
            let u = propagator::transition(model, s, t)?;
            let transported: Vec<DVector<f64>> = dirs.iter().map(|h| u.apply(h)).collect();
            let m = propagator::mean(model, s, t, x)?;
            let cov = propagator::covariance(model, s, t)?;
            let op = params.op_id.unwrap_or(OP_TRANSPORTED);
            let mut failure = None;
            let moments = mc_expect(&cov, params, op, |y| {
                match phi.derivative(&(&m + y), &transported) {
                    Ok(v) => v,
                    Err(_) => f64::NAN,
                }
            });
            if moments.mean().is_nan() {
                failure = Some(Error::UnsupportedOrder {
                    requested: k,
                    available: phi.analytic_order(),
                });
            }
            if let Some(e) = failure {
                return Err(e);
            }
            Ok(EvalReport {
                value: moments.mean(),
                uncertainty: moments.std_error(),
                method: Method::Mc,
                n_samples: moments.n,
                seed: params.seed,
                elapsed: start.elapsed(),
            })
        }
        other => Err(Error::MethodUnavailable(format!(
            "transported derivative does not support method {}",
            other.as_str()
        ))),
    }
}

/// Mixed representation: the first `k_transported` directions act on the
/// data, the rest go through I_n:
/// `int D^k phi(m + y)(U h_1..U h_k) I_n(y)(h_{k+1}..) dN`.
pub fn mixed_derivative(
    model: &EvolutionModel,
    phi: &TestFunction,
    s: f64,
    t: f64,
    x: &DVector<f64>,
    dirs: &[DVector<f64>],
    k_transported: usize,
    params: &EvalParams,
) -> Result<EvalReport> {
    let start = Instant::now();
    check_args(model, phi, s, t, x)?;
    let total = dirs.len();
    if k_transported > total {
        return Err(Error::Validation(format!(
            "transported split {k_transported} exceeds direction count {total}"
        )));
    }
    let n_smooth = total - k_transported;
    if k_transported == 0 {
        return smoothing_derivative(model, phi, s, t, x, dirs, params);
    }
    if n_smooth == 0 {
        return transported_derivative(model, phi, s, t, x, dirs, params);
    }
    if k_transported > phi.analytic_order() {
        return Err(Error::UnsupportedOrder {
            requested: k_transported,
            available: phi.analytic_order(),
        });
    }
    if n_smooth > MAX_SMOOTHING_ORDER {
        return Err(Error::Validation(format!(
            "smoothing order {n_smooth} exceeds the cap {MAX_SMOOTHING_ORDER}"
        )));
    }
    if !(s < t) {
        return Err(Error::Validation("mixed derivatives require s < t".into()));
    }
    let method = match params.method {
        Some(m) => m,
        None => {
            if matches!(phi, TestFunction::Cosine { .. } | TestFunction::Constant(_)) {
                Method::ClosedForm
            } else {
                Method::Mc
            }
        }
    };
    match method {
        Method::ClosedForm => {
            let v = closed_form_derivative(model, phi, s, t, x, dirs)?;
            Ok(EvalReport::closed(v, params.seed, start))
        }
        Method::Mc => {
            let (trans_dirs, smooth_dirs) = dirs.split_at(k_transported);
            let u = propagator::transition(model, s, t)?;
            let transported: Vec<DVector<f64>> =
                trans_dirs.iter().map(|h| u.apply(h)).collect();
            let ctx = SmoothingContext::new(model, s, t, smooth_dirs)?;
            let m = propagator::mean(model, s, t, x)?;
            let op = params.op_id.unwrap_or(OP_MIXED);
            let moments = mc_expect(&ctx.cov, params, op, |y| {
                let dphi = phi.derivative(&(&m + y), &transported).unwrap_or(f64::NAN);
                dphi * ctx.in_eval_full(y)
            });
            if moments.mean().is_nan() {
                return Err(Error::UnsupportedOrder {
                    requested: k_transported,
                    available: phi.analytic_order(),
                });
            }
            Ok(EvalReport {
                value: moments.mean(),
                uncertainty: moments.std_error(),
                method: Method::Mc,
                n_samples: moments.n,
                seed: params.seed,
                elapsed: start.elapsed(),
            })
        }
        other => Err(Error::MethodUnavailable(format!(
            "mixed derivative does not support method {}",
            other.as_str()
        ))),
    }
}

/// Iterated central differences with one Richardson extrapolation level.
#[derive(Debug, Clone)]
pub struct FdReport {
    /// Richardson-extrapolated value.
    pub value: f64,
    /// Plain estimate at the base step.
    pub coarse: f64,
    /// Plain estimate at half the base step.
    pub fine: f64,
    /// `|value - fine|`, a crude error indicator.
    pub uncertainty: f64,
    pub step: f64,
}

/// Finite-difference mixed derivative of an arbitrary evaluator, order <= 4.
pub fn fd_derivative<F: FnMut(&DVector<f64>) -> f64>(
    mut f: F,
    x: &DVector<f64>,
    dirs: &[DVector<f64>],
    base_step: Option<f64>,
) -> Result<FdReport> {
    let order = dirs.len();
    if order == 0 {
        let v = f(x);
        return Ok(FdReport {
            value: v,
            coarse: v,
            fine: v,
            uncertainty: 0.0,
            step: 0.0,
        });
    }
    if order > 4 {
        return Err(Error::UnsupportedOrder {
            requested: order,
            available: 4,
        });
    }
    let scale = x.amax().max(1.0);
    // Central-difference roundoff grows like (2h)^-order, so deeper orders
    // need larger steps than the first-order default.
    let h = base_step.unwrap_or(match order {
        1 => (2.5e-6 * scale).max(1e-5),
        2 => 1e-3,
        3 => 3e-3,
        _ => 1e-2,
    });

    fn central<F: FnMut(&DVector<f64>) -> f64>(
        f: &mut F,
        x: &DVector<f64>,
        dirs: &[DVector<f64>],
        h: f64,
    ) -> f64 {
        match dirs.split_last() {
            None => f(x),
            Some((d, rest)) => {
                let plus = central(f, &(x + d * h), rest, h);
                let minus = central(f, &(x - d * h), rest, h);
                (plus - minus) / (2.0 * h)
            }
        }
    }

    let coarse = central(&mut f, x, dirs, h);
    let fine = central(&mut f, x, dirs, h / 2.0);
    let value = (4.0 * fine - coarse) / 3.0;
    Ok(FdReport {
        value,
        coarse,
        fine,
        uncertainty: (value - fine).abs(),
        step: h,
    })
}

/// Euler-Maruyama weak oracle for `P_{s,t} phi (x)`.
pub fn sde_expectation(
    model: &EvolutionModel,
    phi: &TestFunction,
    s: f64,
    t: f64,
    x: &DVector<f64>,
    n_paths: u64,
    n_steps: usize,
    seed: u64,
    threads: usize,
) -> Result<EvalReport> {
    let start = Instant::now();
    check_args(model, phi, s, t, x)?;
    if n_steps == 0 {
        return Err(Error::Validation("need n_steps >= 1".into()));
    }
    if s == t {
        return Ok(EvalReport::closed(phi.eval(x), seed, start));
    }
    let n = model.dim;
    let dt = (t - s) / n_steps as f64;
    let sqrt_dt = dt.sqrt();
    let sampler = NormalSampler::new(seed);

    let moments = if model.is_diagonal() {
        // Coefficients per step, shared across paths.
        let mut coef = Vec::with_capacity(n_steps);
        for j in 0..n_steps {
            let tau = s + j as f64 * dt;
            let a: Vec<f64> = (0..n).map(|k| model.drift_mode(k).eval(tau)).collect();
            let b: Vec<f64> = (0..n).map(|k| model.diffusion_mode(k).eval(tau)).collect();
            let f: Vec<f64> = (0..n).map(|k| model.affine[k].eval(tau)).collect();
            coef.push((a, b, f));
        }
        let partials = chunked_reduce(n_paths, threads, |range| {
            let mut acc = MomentSum::default();
            for i in range {
                let mut state: Vec<f64> = x.iter().copied().collect();
                for (j, (a, b, f)) in coef.iter().enumerate() {
                    for k in 0..n {
                        let z = sampler.normal(OP_SDE, i, (j * n + k) as u64);
                        state[k] += (a[k] * state[k] + f[k]) * dt + b[k] * sqrt_dt * z;
                    }
                }
                acc.push(phi.eval(&DVector::from_vec(state)));
            }
            acc
        });
        partials.into_iter().fold(MomentSum::default(), MomentSum::merge)
    } else {
        let mut coef = Vec::with_capacity(n_steps);
        for j in 0..n_steps {
            let tau = s + j as f64 * dt;
            coef.push((
                model.drift_matrix(tau),
                model.diffusion_matrix(tau),
                model.affine_vector(tau),
            ));
        }
        let partials = chunked_reduce(n_paths, threads, |range| {
            let mut acc = MomentSum::default();
            let mut z = DVector::zeros(n);
            for i in range {
                let mut state = x.clone();
                for (j, (a, b, f)) in coef.iter().enumerate() {
                    for k in 0..n {
                        z[k] = sampler.normal(OP_SDE, i, (j * n + k) as u64);
                    }
                    state = &state + (a * &state + f) * dt + b * &z * sqrt_dt;
                }
                acc.push(phi.eval(&state));
            }
            acc
        });
        partials.into_iter().fold(MomentSum::default(), MomentSum::merge)
    };
    Ok(EvalReport {
        value: moments.mean(),
        uncertainty: moments.std_error(),
        method: Method::Sde,
        n_samples: moments.n,
        seed,
        elapsed: start.elapsed(),
    })
}

/// Chapman-Kolmogorov defect `|P_{s,t} phi - P_{s,r}(P_{r,t} phi)|(x)` in
/// closed form; cosine data keeps the inner application composable.
pub fn chapman_defect(
    model: &EvolutionModel,
    phi: &TestFunction,
    s: f64,
    r: f64,
    t: f64,
    x: &DVector<f64>,
) -> Result<f64> {
    if !(s <= r && r <= t) {
        return Err(Error::Validation("require s <= r <= t".into()));
    }
    let TestFunction::Cosine { ell, phase } = phi else {
        return Err(Error::MethodUnavailable(
            "Chapman defect needs cosine data".into(),
        ));
    };
    let lhs = closed_form_apply(model, phi, s, t, x)?;
    // P_{r,t} phi as a function of its evaluation point is again a scaled
    // cosine: amplitude R(t,r), direction U(t,r)^T l, phase + <l, g(t,r)>.
    let u_tr = propagator::transition(model, r, t)?;
    let cov_tr = propagator::covariance(model, r, t)?;
    let g_tr = propagator::mean(model, r, t, &DVector::zeros(model.dim))?;
    let amp = (-0.5 * cov_tr.quadratic_form(ell)).exp();
    let ell_inner = u_tr.apply_transpose(ell);
    let phase_inner = phase + ell.dot(&g_tr);
    let inner = TestFunction::Cosine {
        ell: ell_inner,
        phase: phase_inner,
    };
    let rhs = amp * closed_form_apply(model, &inner, s, r, x)?;
    Ok((lhs - rhs).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{TestFn1d, TimeFn};
    use crate::numeric::halton;

    fn flat_model(n: usize) -> EvolutionModel {
        EvolutionModel::diagonal(
            n,
            1.0,
            vec![TimeFn::Const(0.0); n],
            vec![TimeFn::Const(1.0); n],
        )
        .unwrap()
    }

    fn random_diag_model(idx: u64, n: usize) -> EvolutionModel {
        let p = halton::point_in_box(idx, 2 * n, -1.0, 1.0);
        let a: Vec<TimeFn> = (0..n).map(|k| TimeFn::Const(p[k] - 0.4)).collect();
        let b: Vec<TimeFn> = (0..n)
            .map(|k| TimeFn::Const(0.6 + 0.5 * (p[n + k] + 1.0)))
            .collect();
        EvolutionModel::diagonal(n, 1.0, a, b).unwrap()
    }

    fn cosine_phi(idx: u64, n: usize) -> TestFunction {
        let p = halton::point_in_box(idx + 7000, n + 1, -1.0, 1.0);
        TestFunction::Cosine {
            ell: DVector::from_vec(p[..n].to_vec()),
            phase: p[n],
        }
    }

    #[test]
    fn apply_identity_at_equal_times() {
        let m = flat_model(3);
        let phi = cosine_phi(0, 3);
        let x = DVector::from_vec(vec![0.3, -0.2, 0.8]);
        let r = apply(&m, &phi, 0.4, 0.4, &x, &EvalParams::default()).unwrap();
        assert_eq!(r.value, phi.eval(&x));
        assert_eq!(r.uncertainty, 0.0);
    }

    #[test]
    fn apply_constant_is_exact_probability() {
        let m = random_diag_model(3, 4);
        let x = DVector::zeros(4);
        let r = apply(&m, &TestFunction::Constant(1.0), 0.1, 0.9, &x, &EvalParams::default())
            .unwrap();
        assert_eq!(r.value, 1.0);
        assert_eq!(r.uncertainty, 0.0);
    }

    #[test]
    fn apply_methods_agree_on_cosine() {
        for idx in 0..6u64 {
            let m = random_diag_model(idx, 5);
            let phi = cosine_phi(idx, 5);
            let x = DVector::from_vec(halton::point_in_box(idx + 50, 5, -1.0, 1.0));
            let (s, t) = (0.2, 0.9);
            let closed = apply(&m, &phi, s, t, &x, &EvalParams::with_method(Method::ClosedForm, 1))
                .unwrap();
            let gh = apply(
                &m,
                &phi,
                s,
                t,
                &x,
                &EvalParams::with_method(Method::GaussHermite, 1),
            )
            .unwrap();
            assert!(
                (gh.value - closed.value).abs() <= 1e-10,
                "idx {idx}: gh {} vs closed {}",
                gh.value,
                closed.value
            );
            let mc = apply(&m, &phi, s, t, &x, &EvalParams::with_method(Method::Mc, 17 + idx))
                .unwrap();
            assert!(
                (mc.value - closed.value).abs() <= 4.0 * mc.uncertainty,
                "idx {idx}: mc {} +- {} vs {}",
                mc.value,
                mc.uncertainty,
                closed.value
            );
        }
    }

    #[test]
    fn apply_is_a_contraction_in_sup_norm() {
        for idx in 0..4u64 {
            let m = random_diag_model(idx, 3);
            let phis = vec![
                cosine_phi(idx, 3),
                TestFunction::AbsSin {
                    ell: DVector::from_vec(vec![2.0, 0.5, -1.0]),
                },
                TestFunction::TanhLinear {
                    ell: DVector::from_vec(vec![1.0, -2.0, 0.3]),
                },
            ];
            let x = DVector::from_vec(vec![1.5, -0.7, 0.2]);
            for phi in &phis {
                let r = apply(&m, phi, 0.0, 0.8, &x, &EvalParams::with_seed(idx)).unwrap();
                assert!(
                    r.value.abs() <= phi.bound() + 1e-12,
                    "{:?}: {} vs bound {}",
                    r.method,
                    r.value,
                    phi.bound()
                );
            }
        }
    }

    #[test]
    fn in_eval_low_orders_match_hand_formulas() {
        let m = random_diag_model(2, 4);
        let dirs: Vec<DVector<f64>> = (0..2)
            .map(|j| DVector::from_vec(halton::point_in_box(90 + j, 4, -1.0, 1.0)))
            .collect();
        let ctx = SmoothingContext::new(&m, 0.2, 0.8, &dirs).unwrap();
        let y = DVector::from_vec(vec![0.4, -0.6, 0.1, 0.9]);
        let h0 = ctx.hhats[0].eval(&y);
        let h1 = ctx.hhats[1].eval(&y);
        assert!((ctx.in_eval(&y, &[0]) - h0).abs() < 1e-14);
        let i2 = ctx.in_eval(&y, &[0, 1]);
        assert!((i2 - (h0 * h1 - ctx.gram[(0, 1)])).abs() < 1e-13);
    }

    #[test]
    fn in_recursion_equals_pairing_expansion_to_order_4() {
        for idx in 0..25u64 {
            let m = random_diag_model(idx % 5, 4);
            let dirs: Vec<DVector<f64>> = (0..4)
                .map(|j| DVector::from_vec(halton::point_in_box(idx * 7 + j, 4, -1.0, 1.0)))
                .collect();
            let ctx = SmoothingContext::new(&m, 0.1, 0.7, &dirs).unwrap();
            for yi in 0..40u64 {
                let y = DVector::from_vec(halton::point_in_box(500 + yi, 4, -2.0, 2.0));
                for order in 1..=4usize {
                    let subset: Vec<usize> = (0..order).collect();
                    let rec = ctx.in_eval(&y, &subset);
                    let oracle = ctx.in_pairing_expansion(&y, &subset);
                    assert!(
                        (rec - oracle).abs() <= 1e-12 * oracle.abs().max(1.0),
                        "idx {idx}, y {yi}, order {order}: {rec} vs {oracle}"
                    );
                }
            }
        }
    }

    #[test]
    fn smoothing_derivative_zero_direction_is_zero() {
        let m = flat_model(3);
        let phi = TestFunction::AbsSin {
            ell: DVector::from_vec(vec![1.0, 0.0, 0.0]),
        };
        let x = DVector::zeros(3);
        let dirs = vec![DVector::zeros(3)];
        let r = smoothing_derivative(&m, &phi, 0.0, 0.5, &x, &dirs, &EvalParams::default())
            .unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.uncertainty, 0.0);
    }

    #[test]
    fn smoothing_mc_matches_closed_form_first_order() {
        for idx in 0..4u64 {
            let m = random_diag_model(idx, 4);
            let phi = cosine_phi(idx + 3, 4);
            let x = DVector::from_vec(halton::point_in_box(idx, 4, -1.0, 1.0));
            let h = DVector::from_vec(halton::point_in_box(idx + 11, 4, -1.0, 1.0));
            let closed = smoothing_derivative(
                &m,
                &phi,
                0.2,
                0.7,
                &x,
                std::slice::from_ref(&h),
                &EvalParams::with_method(Method::ClosedForm, 0),
            )
            .unwrap();
            let mc = smoothing_derivative(
                &m,
                &phi,
                0.2,
                0.7,
                &x,
                std::slice::from_ref(&h),
                &EvalParams::with_method(Method::Mc, 100 + idx),
            )
            .unwrap();
            assert!(
                (mc.value - closed.value).abs() <= 4.0 * mc.uncertainty,
                "idx {idx}: {} +- {} vs {}",
                mc.value,
                mc.uncertainty,
                closed.value
            );
        }
    }

    #[test]
    fn smoothing_second_order_matches_fd_of_closed_apply() {
        let m = random_diag_model(1, 3);
        let phi = cosine_phi(5, 3);
        let x = DVector::from_vec(vec![0.2, -0.4, 0.1]);
        let h1 = DVector::from_vec(vec![1.0, 0.5, 0.0]);
        let h2 = DVector::from_vec(vec![0.0, 1.0, -0.5]);
        let closed = smoothing_derivative(
            &m,
            &phi,
            0.1,
            0.8,
            &x,
            &[h1.clone(), h2.clone()],
            &EvalParams::with_method(Method::ClosedForm, 0),
        )
        .unwrap();
        let fd = fd_derivative(
            |xp| {
                apply(&m, &phi, 0.1, 0.8, xp, &EvalParams::with_method(Method::ClosedForm, 0))
                    .unwrap()
                    .value
            },
            &x,
            &[h1, h2],
            Some(1e-3),
        )
        .unwrap();
        let rel = (closed.value - fd.value).abs() / closed.value.abs().max(1e-6);
        assert!(rel <= 1e-6, "closed {} vs fd {}", closed.value, fd.value);
    }

    #[test]
    fn gh_smoothing_matches_closed_form_on_separable_cosine() {
        let m = random_diag_model(2, 3);
        // Separable cosine along mode 1 times constant: its smoothing
        // derivative equals the plain cosine closed form.
        let phi_sep = TestFunction::Separable(vec![
            TestFn1d::Cosine { freq: 1.3, phase: 0.2 },
            TestFn1d::Constant(1.0),
            TestFn1d::Constant(1.0),
        ]);
        let phi_cos = TestFunction::Cosine {
            ell: DVector::from_vec(vec![1.3, 0.0, 0.0]),
            phase: 0.2,
        };
        let x = DVector::from_vec(vec![0.4, 0.1, -0.3]);
        let h1 = DVector::from_vec(vec![0.7, -0.2, 0.5]);
        let h2 = DVector::from_vec(vec![-0.1, 0.9, 0.3]);
        for dirs in [vec![h1.clone()], vec![h1.clone(), h2.clone()]] {
            let gh = smoothing_derivative(
                &m,
                &phi_sep,
                0.2,
                0.9,
                &x,
                &dirs,
                &EvalParams::with_method(Method::GaussHermite, 0),
            )
            .unwrap();
            let closed = smoothing_derivative(
                &m,
                &phi_cos,
                0.2,
                0.9,
                &x,
                &dirs,
                &EvalParams::with_method(Method::ClosedForm, 0),
            )
            .unwrap();
            assert!(
                (gh.value - closed.value).abs() <= 1e-9,
                "order {}: gh {} vs closed {}",
                dirs.len(),
                gh.value,
                closed.value
            );
        }
    }

    #[test]
    fn transported_matches_smoothing_within_mc_error() {
        let m = random_diag_model(4, 3);
        let phi = cosine_phi(9, 3);
        let x = DVector::from_vec(vec![0.1, 0.4, -0.2]);
        let h = DVector::from_vec(vec![0.5, -0.7, 0.2]);
        let a = transported_derivative(
            &m,
            &phi,
            0.3,
            0.9,
            &x,
            std::slice::from_ref(&h),
            &EvalParams::with_method(Method::Mc, 7),
        )
        .unwrap();
        let b = smoothing_derivative(
            &m,
            &phi,
            0.3,
            0.9,
            &x,
            std::slice::from_ref(&h),
            &EvalParams::with_method(Method::Mc, 8),
        )
        .unwrap();
        let se = (a.uncertainty.powi(2) + b.uncertainty.powi(2)).sqrt();
        assert!(
            (a.value - b.value).abs() <= 4.0 * se,
            "{} vs {} (se {se})",
            a.value,
            b.value
        );
    }

    #[test]
    fn transported_equal_times_and_constants() {
        let m = flat_model(2);
        let phi = cosine_phi(2, 2);
        let x = DVector::from_vec(vec![0.7, -0.1]);
        let h = DVector::from_vec(vec![1.0, 2.0]);
        let r = transported_derivative(
            &m,
            &phi,
            0.5,
            0.5,
            &x,
            std::slice::from_ref(&h),
            &EvalParams::default(),
        )
        .unwrap();
        let exact = phi.derivative(&x, std::slice::from_ref(&h)).unwrap();
        assert_eq!(r.value, exact);
        let c = transported_derivative(
            &m,
            &TestFunction::Constant(3.0),
            0.2,
            0.8,
            &x,
            std::slice::from_ref(&h),
            &EvalParams::default(),
        )
        .unwrap();
        assert_eq!(c.value, 0.0);
        // Rough datum rejects analytic orders.
        let rough = TestFunction::AbsSin {
            ell: DVector::from_vec(vec![1.0, 0.0]),
        };
        assert!(matches!(
            transported_derivative(&m, &rough, 0.2, 0.8, &x, &[h], &EvalParams::default()),
            Err(Error::UnsupportedOrder { .. })
        ));
    }

    #[test]
    fn mixed_degenerate_splits_delegate() {
        let m = random_diag_model(6, 3);
        let phi = cosine_phi(11, 3);
        let x = DVector::from_vec(vec![0.0, 0.3, -0.5]);
        let dirs: Vec<DVector<f64>> = (0..2)
            .map(|j| DVector::from_vec(halton::point_in_box(70 + j, 3, -1.0, 1.0)))
            .collect();
        let p = EvalParams::with_method(Method::Mc, 5);
        let all_smooth = mixed_derivative(&m, &phi, 0.2, 0.8, &x, &dirs, 0, &p).unwrap();
        let direct = smoothing_derivative(&m, &phi, 0.2, 0.8, &x, &dirs, &p).unwrap();
        assert_eq!(all_smooth.value, direct.value);
        let all_trans = mixed_derivative(&m, &phi, 0.2, 0.8, &x, &dirs, 2, &p).unwrap();
        let direct_t = transported_derivative(&m, &phi, 0.2, 0.8, &x, &dirs, &p).unwrap();
        assert_eq!(all_trans.value, direct_t.value);
    }

    #[test]
    fn mixed_k1_n1_matches_second_order_fd() {
        let m = random_diag_model(7, 3);
        let phi = cosine_phi(13, 3);
        let x = DVector::from_vec(vec![0.25, -0.1, 0.6]);
        let h1 = DVector::from_vec(vec![0.8, 0.1, -0.4]);
        let h2 = DVector::from_vec(vec![-0.3, 1.1, 0.2]);
        let closed = mixed_derivative(
            &m,
            &phi,
            0.15,
            0.75,
            &x,
            &[h1.clone(), h2.clone()],
            1,
            &EvalParams::with_method(Method::ClosedForm, 0),
        )
        .unwrap();
        let fd = fd_derivative(
            |xp| {
                apply(&m, &phi, 0.15, 0.75, xp, &EvalParams::with_method(Method::ClosedForm, 0))
                    .unwrap()
                    .value
            },
            &x,
            &[h1, h2],
            Some(2e-3),
        )
        .unwrap();
        let rel = (closed.value - fd.value).abs() / closed.value.abs().max(1e-6);
        assert!(rel <= 1e-5, "closed {} vs fd {}", closed.value, fd.value);
        // MC route agrees within its error bars.
        let mc = mixed_derivative(
            &m,
            &phi,
            0.15,
            0.75,
            &x,
            &[
                DVector::from_vec(vec![0.8, 0.1, -0.4]),
                DVector::from_vec(vec![-0.3, 1.1, 0.2]),
            ],
            1,
            &EvalParams::with_method(Method::Mc, 23),
        )
        .unwrap();
        assert!((mc.value - closed.value).abs() <= 4.0 * mc.uncertainty);
    }

    #[test]
    fn fd_handles_linear_and_cosine_and_rejects_deep_orders() {
        let x = DVector::from_vec(vec![0.0, 0.0]);
        let ell = DVector::from_vec(vec![2.0, -1.0]);
        let lin = fd_derivative(
            |p| ell.dot(p),
            &x,
            &[DVector::from_vec(vec![1.0, 1.0])],
            None,
        )
        .unwrap();
        assert!((lin.value - 1.0).abs() < 1e-12);
        let cos2 = fd_derivative(
            |p| p[0].cos(),
            &x,
            &[
                DVector::from_vec(vec![1.0, 0.0]),
                DVector::from_vec(vec![1.0, 0.0]),
            ],
            None,
        )
        .unwrap();
        assert!((cos2.value + 1.0).abs() < 1e-8, "{}", cos2.value);
        let r = fd_derivative(|p| p[0], &x, &vec![DVector::from_vec(vec![1.0, 0.0]); 5], None);
        assert!(matches!(r, Err(Error::UnsupportedOrder { .. })));
    }

    #[test]
    fn sde_deterministic_when_noise_free() {
        let m = EvolutionModel::diagonal(
            2,
            1.0,
            vec![TimeFn::Const(0.0); 2],
            vec![TimeFn::Const(0.0); 2],
        )
        .unwrap();
        let phi = cosine_phi(1, 2);
        let x = DVector::from_vec(vec![0.4, -0.9]);
        let r = sde_expectation(&m, &phi, 0.0, 1.0, &x, 64, 16, 3, 1).unwrap();
        // All paths are frozen at x; only summation roundoff remains.
        assert!((r.value - phi.eval(&x)).abs() <= 4.0 * f64::EPSILON);
        assert!(r.uncertainty <= 1e-12);
    }

    #[test]
    fn sde_weak_error_matches_apply_and_halves_with_steps() {
        let m = EvolutionModel::diagonal(
            1,
            1.0,
            vec![TimeFn::Const(-1.0)],
            vec![TimeFn::Const(1.0)],
        )
        .unwrap();
        let phi = TestFunction::Cosine {
            ell: DVector::from_vec(vec![1.5]),
            phase: 0.0,
        };
        let x = DVector::from_vec(vec![0.8]);
        let exact = apply(&m, &phi, 0.0, 1.0, &x, &EvalParams::with_method(Method::ClosedForm, 0))
            .unwrap()
            .value;
        // Coarse stepping: bias dominates the Monte Carlo error.
        let paths = 1 << 20;
        let coarse = sde_expectation(&m, &phi, 0.0, 1.0, &x, paths, 8, 11, 1).unwrap();
        let fine = sde_expectation(&m, &phi, 0.0, 1.0, &x, paths, 16, 11, 1).unwrap();
        let bias_c = (coarse.value - exact).abs();
        let bias_f = (fine.value - exact).abs();
        assert!(bias_c > 6.0 * coarse.uncertainty, "coarse bias not resolved");
        let ratio = bias_c / bias_f;
        assert!(
            (1.3..3.2).contains(&ratio),
            "weak order-1 ratio {ratio} (biases {bias_c:.2e}, {bias_f:.2e})"
        );
        // Fine stepping agrees within 4 sigma plus the remaining O(dt) bias.
        let many = sde_expectation(&m, &phi, 0.0, 1.0, &x, 1 << 16, 1 << 10, 13, 1).unwrap();
        let tol = 4.0 * many.uncertainty + 2.0 * bias_f / 64.0;
        assert!(
            (many.value - exact).abs() <= tol,
            "{} vs {exact} (tol {tol})",
            many.value
        );
    }

    #[test]
    fn chapman_defect_closed_form_composition() {
        let m = EvolutionModel::example1(5, 1.0, 2.0);
        let phi = cosine_phi(21, 5);
        let x = DVector::from_vec(halton::point_in_box(33, 5, -1.0, 1.0));
        assert_eq!(chapman_defect(&m, &phi, 0.3, 0.3, 0.9, &x).unwrap(), 0.0);
        assert!(chapman_defect(&m, &phi, 0.3, 0.9, 0.9, &x).unwrap() <= 1e-14);
        for idx in 0..20u64 {
            let p = halton::point(idx, 3);
            let s = 0.5 * p[0];
            let r = s + (0.9 - s) * p[1];
            let t = r + (1.0 - r) * p[2];
            let d = chapman_defect(&m, &phi, s, r, t, &x).unwrap();
            assert!(d <= 1e-10, "defect {d:.3e} at ({s}, {r}, {t})");
        }
    }

    #[test]
    fn apply_and_smoothing_on_dense_model() {
        // Rotation-plus-damping drift with identity-ish noise.
        let n = 2;
        let a1 = nalgebra::DMatrix::from_row_slice(n, n, &[-0.3, -1.0, 1.0, -0.3]);
        let b1 = nalgebra::DMatrix::from_row_slice(n, n, &[1.0, 0.2, 0.0, 0.8]);
        let m = EvolutionModel {
            dim: n,
            horizon: 1.0,
            coeffs: crate::model::Coefficients::Dense {
                a: vec![crate::model::DenseTerm {
                    coef: TimeFn::Const(1.0),
                    matrix: a1,
                }],
                b: vec![crate::model::DenseTerm {
                    coef: TimeFn::Const(1.0),
                    matrix: b1,
                }],
            },
            affine: vec![TimeFn::zero(); n],
        };
        let phi = TestFunction::Cosine {
            ell: DVector::from_vec(vec![1.1, -0.6]),
            phase: 0.25,
        };
        let x = DVector::from_vec(vec![0.4, -0.2]);
        let closed = apply(&m, &phi, 0.1, 0.9, &x, &EvalParams::with_method(Method::ClosedForm, 0))
            .unwrap();
        let mc = apply(&m, &phi, 0.1, 0.9, &x, &EvalParams::with_method(Method::Mc, 3)).unwrap();
        assert!(
            (mc.value - closed.value).abs() <= 4.0 * mc.uncertainty,
            "dense mc {} +- {} vs closed {}",
            mc.value,
            mc.uncertainty,
            closed.value
        );
        // First smoothing derivative against the closed form.
        let h = DVector::from_vec(vec![0.7, 0.4]);
        let d_closed = smoothing_derivative(
            &m,
            &phi,
            0.1,
            0.9,
            &x,
            std::slice::from_ref(&h),
            &EvalParams::with_method(Method::ClosedForm, 0),
        )
        .unwrap();
        let d_mc = smoothing_derivative(
            &m,
            &phi,
            0.1,
            0.9,
            &x,
            std::slice::from_ref(&h),
            &EvalParams::with_method(Method::Mc, 5),
        )
        .unwrap();
        assert!(
            (d_mc.value - d_closed.value).abs() <= 4.0 * d_mc.uncertainty,
            "dense smoothing {} +- {} vs {}",
            d_mc.value,
            d_mc.uncertainty,
            d_closed.value
        );
        // The SDE oracle agrees too (weak bias at 2^9 steps is tiny here).
        let sde = sde_expectation(&m, &phi, 0.1, 0.9, &x, 1 << 15, 1 << 9, 9, 1).unwrap();
        assert!(
            (sde.value - closed.value).abs() <= 4.0 * sde.uncertainty + 5e-3,
            "dense sde {} +- {} vs {}",
            sde.value,
            sde.uncertainty,
            closed.value
        );
    }

    #[test]
    fn mc_is_thread_count_invariant() {
        let m = random_diag_model(8, 4);
        let phi = TestFunction::TanhLinear {
            ell: DVector::from_vec(vec![1.0, -0.5, 0.25, 0.7]),
        };
        let x = DVector::zeros(4);
        let mut p1 = EvalParams::with_method(Method::Mc, 99);
        p1.threads = 1;
        let mut p8 = EvalParams::with_method(Method::Mc, 99);
        p8.threads = 8;
        let a = apply(&m, &phi, 0.1, 0.9, &x, &p1).unwrap();
        let b = apply(&m, &phi, 0.1, 0.9, &x, &p8).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.uncertainty.to_bits(), b.uncertainty.to_bits());
    }
}
