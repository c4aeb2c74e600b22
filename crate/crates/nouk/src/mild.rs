//! Mild solution `u = u0 + u1` of the backward problem and its directional
//! derivatives. The time integral in `u1` is discretized on a geometrically
//! graded mesh toward `sigma = s`, where derivative integrands blow up like
//! `(sigma - s)^{-(n-k) theta}`.

use crate::error::{Error, Result};
use crate::model::{EvolutionModel, SourceTerm, TestFunction};
use crate::numeric::quad;
use crate::semigroup::{self, EvalParams, EvalReport, Method, OP_U1};
use nalgebra::DVector;
use std::time::Instant;

/// Graded composite quadrature specification for the `u1` time integral.
#[derive(Debug, Clone)]
pub struct QuadSpec {
    /// Number of geometric panels (>= 1).
    pub panels: usize,
    /// Geometric ratio toward `sigma = s` (> 1).
    pub grading_ratio: f64,
    /// Gauss-Legendre nodes per panel.
    pub nodes_per_panel: usize,
    /// Blow-up exponent hint used to gate derivative singularities.
    pub theta_hint: f64,
}

impl Default for QuadSpec {
    fn default() -> Self {
        QuadSpec {
            panels: 20,
            grading_ratio: 2.0,
            nodes_per_panel: 8,
            theta_hint: 0.5,
        }
    }
}

impl QuadSpec {
    pub fn validate(&self) -> Result<()> {
        if self.panels == 0 {
            return Err(Error::Validation("need >= 1 quadrature panel".into()));
        }
        if !(self.grading_ratio > 1.0) {
            return Err(Error::Validation("grading ratio must exceed 1".into()));
        }
        if self.nodes_per_panel == 0 {
            return Err(Error::Validation("need >= 1 node per panel".into()));
        }
        Ok(())
    }

    /// Panel edges covering `[s, t]` with widths `w, w r, w r^2, ...` so the
    /// first panel has width `(t-s)(r-1)/(r^panels - 1)`.
    pub fn edges(&self, s: f64, t: f64) -> Vec<f64> {
        let r = self.grading_ratio;
        let total = t - s;
        let w0 = total * (r - 1.0) / (r.powi(self.panels as i32) - 1.0);
        let mut edges = Vec::with_capacity(self.panels + 1);
        edges.push(s);
        let mut acc = 0.0;
        let mut width = w0;
        for j in 0..self.panels {
            acc += width;
            width *= r;
            edges.push(if j + 1 == self.panels { t } else { s + acc });
        }
        edges
    }

    /// Uniform-mesh variant with the same node budget, for comparisons.
    pub fn uniform(&self) -> QuadSpec {
        QuadSpec {
            grading_ratio: 1.0 + 1e-12,
            ..self.clone()
        }
    }
}

/// Composite graded Gauss-Legendre integral of `f` over `[s, t]` with an
/// embedded coarse rule: returns (value, quadrature error estimate).
fn graded_integral<F: FnMut(f64) -> Result<(f64, f64)>>(
    spec: &QuadSpec,
    s: f64,
    t: f64,
    mut f: F,
) -> Result<(f64, f64, f64)> {
    let edges = spec.edges(s, t);
    let fine = quad::gauss_legendre(spec.nodes_per_panel);
    let coarse = quad::gauss_legendre((spec.nodes_per_panel / 2).max(1));
    let mut value = 0.0;
    let mut coarse_value = 0.0;
    let mut inner_unc = 0.0;
    for w in edges.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let c = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        for (xn, wn) in fine.nodes.iter().zip(&fine.weights) {
            let (v, u) = f(c + half * xn)?;
            value += wn * half * v;
            inner_unc += wn * half * u;
        }
        for (xn, wn) in coarse.nodes.iter().zip(&coarse.weights) {
            let (v, _) = f(c + half * xn)?;
            coarse_value += wn * half * v;
        }
    }
    Ok((value, (value - coarse_value).abs(), inner_unc))
}

/// `u0(s, x) = P_{s,t} phi (x)`.
pub fn u0(
    model: &EvolutionModel,
    phi: &TestFunction,
    s: f64,
    t: f64,
    x: &DVector<f64>,
    params: &EvalParams,
) -> Result<EvalReport> {
    semigroup::apply(model, phi, s, t, x, params)
}

/// `u1(s, x) = -int_s^t (P_{s,sigma} psi(sigma, .))(x) dsigma` on the graded
/// mesh; inner evaluations are closed-form for cosine data, Gauss-Hermite
/// for separable data on diagonal models, Monte Carlo otherwise (with one
/// shared stream across quadrature nodes).
pub fn u1(
    model: &EvolutionModel,
    psi: &SourceTerm,
    s: f64,
    t: f64,
    x: &DVector<f64>,
    spec: &QuadSpec,
    params: &EvalParams,
) -> Result<EvalReport> {
    let start = Instant::now();
    spec.validate()?;
    if s == t {
        return Ok(EvalReport {
            value: 0.0,
            uncertainty: 0.0,
            method: Method::ClosedForm,
            n_samples: 0,
            seed: params.seed,
            elapsed: start.elapsed(),
        });
    }
    // Common random numbers across sigma nodes.
    let mut inner_params = params.clone();
    inner_params.op_id = Some(params.op_id.unwrap_or(OP_U1));
    let mut method_used = Method::ClosedForm;
    let mut samples = 0u64;
    let (value, quad_unc, inner_unc) = graded_integral(spec, s, t, |sigma| {
        let rep = semigroup::apply(model, &psi.spatial, s, sigma, x, &inner_params)?;
        method_used = rep.method;
        samples = samples.max(rep.n_samples);
        Ok((psi.rho.eval(sigma) * rep.value, psi.rho.eval(sigma).abs() * rep.uncertainty))
    })?;
    Ok(EvalReport {
        value: -value,
        uncertainty: quad_unc + inner_unc,
        method: method_used,
        n_samples: samples,
        seed: params.seed,
        elapsed: start.elapsed(),
    })
}

/// `u = u0 + u1` with combined uncertainty.
pub fn mild_solution(
    model: &EvolutionModel,
    phi: &TestFunction,
    psi: &SourceTerm,
    s: f64,
    t: f64,
    x: &DVector<f64>,
    spec: &QuadSpec,
    params: &EvalParams,
) -> Result<EvalReport> {
    let start = Instant::now();
    let a = u0(model, phi, s, t, x, params)?;
    let b = u1(model, psi, s, t, x, spec, params)?;
    Ok(EvalReport {
        value: a.value + b.value,
        uncertainty: (a.uncertainty.powi(2) + b.uncertainty.powi(2)).sqrt(),
        method: if a.method == b.method { a.method } else { Method::Mc },
        n_samples: a.n_samples.max(b.n_samples),
        seed: params.seed,
        elapsed: start.elapsed(),
    })
}

/// `D^n_E u(s, .)(x)(dirs)`: the `u0` part through the semigroup derivative
/// operations, the `u1` part as a graded time integral of mixed derivatives
/// with transported order `k = min(n, analytic order of psi)` so the
/// integrand singularity is `(sigma - s)^{-(n-k) theta}`.
pub fn mild_derivative(
    model: &EvolutionModel,
    phi: &TestFunction,
    psi: &SourceTerm,
    s: f64,
    t: f64,
    x: &DVector<f64>,
    dirs: &[DVector<f64>],
    theta: f64,
    spec: &QuadSpec,
    params: &EvalParams,
) -> Result<EvalReport> {
    let start = Instant::now();
    spec.validate()?;
    let n = dirs.len();
    if n == 0 {
        return mild_solution(model, phi, psi, s, t, x, spec, params);
    }
    let k_psi = n.min(psi.spatial.analytic_order());
    let beta = (n - k_psi) as f64 * theta;
    if beta >= 1.0 {
        return Err(Error::DivergentSingularity { exponent: beta });
    }
    // u0 part.
    let k_phi = n.min(phi.analytic_order());
    let part0 = if matches!(phi, TestFunction::Constant(_)) {
        EvalReport {
            value: 0.0,
            uncertainty: 0.0,
            method: Method::ClosedForm,
            n_samples: 0,
            seed: params.seed,
            elapsed: start.elapsed(),
        }
    } else {
        semigroup::mixed_derivative(model, phi, s, t, x, dirs, k_phi, params)?
    };
    // u1 part: spatially constant sources differentiate to zero.
    if matches!(psi.spatial, TestFunction::Constant(_)) {
        return Ok(EvalReport {
            value: part0.value,
            uncertainty: part0.uncertainty,
            method: part0.method,
            n_samples: part0.n_samples,
            seed: params.seed,
            elapsed: start.elapsed(),
        });
    }
    if s == t {
        return Ok(part0);
    }
    let mut inner_params = params.clone();
    inner_params.op_id = Some(params.op_id.unwrap_or(OP_U1) ^ 0x5a5a);
    let mut samples = 0u64;
    let mut worst_method = Method::ClosedForm;
    let (int_value, quad_unc, inner_unc) = graded_integral(spec, s, t, |sigma| {
        let rep = semigroup::mixed_derivative(
            model,
            &psi.spatial,
            s,
            sigma,
            x,
            dirs,
            k_psi,
            &inner_params,
        )?;
        if rep.method != Method::ClosedForm {
            worst_method = rep.method;
        }
        samples = samples.max(rep.n_samples);
        Ok((psi.rho.eval(sigma) * rep.value, psi.rho.eval(sigma).abs() * rep.uncertainty))
    })?;
    Ok(EvalReport {
        value: part0.value - int_value,
        uncertainty: (part0.uncertainty.powi(2)
            + (quad_unc + inner_unc).powi(2))
        .sqrt(),
        method: if part0.method == Method::ClosedForm && worst_method == Method::ClosedForm {
            Method::ClosedForm
        } else {
            Method::Mc
        },
        n_samples: part0.n_samples.max(samples),
        seed: params.seed,
        elapsed: start.elapsed(),
    })
}


/// Precomputed evaluator of the `u1` directional derivative for cosine
/// sources at fixed `(s, t, dirs)`. Cosine data is transported analytically,
/// so every sigma-node quantity is x-independent and estimators that sweep
/// many evaluation points reuse it.
#[derive(Debug, Clone)]
pub struct CosineSourcePlan {
    fine: Vec<PlanNode>,
    coarse: Vec<PlanNode>,
    order_phase: f64,
}

#[derive(Debug, Clone)]
struct PlanNode {
    /// Quadrature weight times rho(sigma) times the transported amplitude
    /// `exp(-<Q l, l>/2) prod <l, U h_i>`.
    scale: f64,
    /// Transported frequency `U(sigma, s)^T l`.
    freq: DVector<f64>,
    /// Phase offset `<l, g(sigma, s)> + phase`.
    offset: f64,
}

impl CosineSourcePlan {
    pub fn new(
        model: &EvolutionModel,
        psi: &SourceTerm,
        s: f64,
        t: f64,
        dirs: &[DVector<f64>],
        spec: &QuadSpec,
    ) -> Result<Self> {
        let TestFunction::Cosine { ell, phase } = &psi.spatial else {
            return Err(Error::MethodUnavailable(
                "derivative plans need a cosine source".into(),
            ));
        };
        spec.validate()?;
        let build = |nodes_per_panel: usize| -> Result<Vec<PlanNode>> {
            let rule = quad::gauss_legendre(nodes_per_panel);
            let edges = spec.edges(s, t);
            let mut out = Vec::new();
            for w in edges.windows(2) {
                let c = 0.5 * (w[0] + w[1]);
                let half = 0.5 * (w[1] - w[0]);
                for (xn, wn) in rule.nodes.iter().zip(&rule.weights) {
                    let sigma = c + half * xn;
                    let u = crate::propagator::transition(model, s, sigma)?;
                    let cov = crate::propagator::covariance(model, s, sigma)?;
                    let g = crate::propagator::mean(
                        model,
                        s,
                        sigma,
                        &DVector::zeros(model.dim),
                    )?;
                    let mut scale = wn * half
                        * psi.rho.eval(sigma)
                        * (-0.5 * cov.quadratic_form(ell)).exp();
                    for h in dirs {
                        scale *= ell.dot(&u.apply(h));
                    }
                    out.push(PlanNode {
                        scale,
                        freq: u.apply_transpose(ell),
                        offset: ell.dot(&g) + phase,
                    });
                }
            }
            Ok(out)
        };
        Ok(CosineSourcePlan {
            fine: build(spec.nodes_per_panel)?,
            coarse: build((spec.nodes_per_panel / 2).max(1))?,
            order_phase: dirs.len() as f64 * std::f64::consts::FRAC_PI_2,
        })
    }

    /// `(-integral, quadrature error estimate)` at `x`.
    pub fn eval(&self, x: &DVector<f64>) -> (f64, f64) {
        let sum = |nodes: &[PlanNode]| {
            nodes
                .iter()
                .map(|n| n.scale * (n.freq.dot(x) + n.offset + self.order_phase).cos())
                .sum::<f64>()
        };
        let fine = sum(&self.fine);
        let coarse = sum(&self.coarse);
        (-fine, (fine - coarse).abs())
    }
}
