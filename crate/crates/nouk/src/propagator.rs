//! Evolution operator U(t,s), affine means, covariance operators Q(t,s),
//! the smoothing operator Lambda(t,s) = Q(t,s)^{-1/2} U(t,s), and the
//! controllability-Gramian / minimum-energy diagnostics.
//!
//! Diagonal families use exact antiderivative multipliers and adaptive
//! quadrature per mode; dense families go through RK4 with one step-halving
//! Richardson estimate (the quadrature form of the covariance is kept as an
//! oracle).

use crate::error::{Error, Result};
use crate::model::{DirectionSpace, EvolutionModel};
use crate::numeric::quad;
use crate::numeric::rk4;
use nalgebra::{DMatrix, DVector};

/// Relative eigenvalue scale below which spectrum is treated as kernel:
/// `lambda < dim * 2^-40 * lambda_max`.
pub const RANK_ULP_SCALE: f64 = 9.094947017729282e-13; // 2^-40

/// Relative tolerance of per-mode covariance quadrature.
const COV_REL_TOL: f64 = 1e-12;
/// Relative tolerance of the affine-mean quadrature.
const MEAN_REL_TOL: f64 = 1e-10;
/// Kernel-component threshold relative to the vector norm.
const KERNEL_COMPONENT_REL: f64 = 1e-9;

fn rk4_base_step(model: &EvolutionModel) -> f64 {
    model.horizon * 1e-3
}

/// Largest singular value.
fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.iter().all(|v| *v == 0.0) {
        return 0.0;
    }
    m.clone().singular_values().max()
}

/// Two-parameter evolution operator at fixed endpoints.
#[derive(Debug, Clone)]
pub enum PropagatorRep {
    /// Per-mode multipliers `exp(int_s^t a_k)`.
    Diagonal(Vec<f64>),
    /// One multiplier on the identity.
    Scalar(f64),
    Dense(DMatrix<f64>),
}

#[derive(Debug, Clone)]
pub struct Propagator {
    pub rep: PropagatorRep,
    pub s: f64,
    pub t: f64,
    dim: usize,
}

impl Propagator {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.rep {
            PropagatorRep::Diagonal(d) => {
                DVector::from_fn(self.dim, |k, _| d[k] * v[k])
            }
            PropagatorRep::Scalar(mu) => v * *mu,
            PropagatorRep::Dense(m) => m * v,
        }
    }

    /// Adjoint applied to a vector (`U(t,s)^* l`).
    pub fn apply_transpose(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.rep {
            PropagatorRep::Dense(m) => m.transpose() * v,
            _ => self.apply(v),
        }
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        match &self.rep {
            PropagatorRep::Diagonal(d) => {
                DMatrix::from_diagonal(&DVector::from_vec(d.clone()))
            }
            PropagatorRep::Scalar(mu) => DMatrix::identity(self.dim, self.dim) * *mu,
            PropagatorRep::Dense(m) => m.clone(),
        }
    }

    /// Per-mode multiplier for diagonal representations.
    pub fn multiplier(&self, k: usize) -> f64 {
        match &self.rep {
            PropagatorRep::Diagonal(d) => d[k],
            PropagatorRep::Scalar(mu) => *mu,
            PropagatorRep::Dense(m) => m[(k, k)],
        }
    }
}

/// Compute U(t,s).
pub fn transition(model: &EvolutionModel, s: f64, t: f64) -> Result<Propagator> {
    check_interval(model, s, t)?;
    let n = model.dim;
    if model.is_diagonal() {
        let mut d = Vec::with_capacity(n);
        for k in 0..n {
            let expo = model.drift_mode(k).integral(s, t);
            if expo > 709.0 {
                return Err(Error::IntegratorFailure(format!(
                    "transition multiplier overflow in mode {}",
                    k + 1
                )));
            }
            d.push(expo.exp());
        }
        let rep = if matches!(model.coeffs, crate::model::Coefficients::ScalarIdentity { .. }) {
            PropagatorRep::Scalar(d[0])
        } else {
            PropagatorRep::Diagonal(d)
        };
        return Ok(Propagator { rep, s, t, dim: n });
    }
    let deriv = |tau: f64, u: &DMatrix<f64>| model.drift_matrix(tau) * u;
    let (u, _) = rk4::solve(&deriv, s, t, &DMatrix::identity(n, n), rk4_base_step(model))?;
    Ok(Propagator {
        rep: PropagatorRep::Dense(u),
        s,
        t,
        dim: n,
    })
}

/// Mean `m^x(t,s) = U(t,s) x + g(t,s)` with `g(t,s) = int_s^t U(t,r) f(r) dr`.
pub fn mean(model: &EvolutionModel, s: f64, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
    check_interval(model, s, t)?;
    let u = transition(model, s, t)?;
    let mut m = u.apply(x);
    if model.affine_is_zero() {
        return Ok(m);
    }
    if model.is_diagonal() {
        for k in 0..model.dim {
            let a = model.drift_mode(k);
            let f = &model.affine[k];
            let a_t = a.antiderivative(t);
            let rate = a.sup_abs(s, t);
            let split = quad::boundary_layer_split(s, t, t, rate);
            let mut integrand = |sigma: f64| {
                let expo = a_t - a.antiderivative(sigma);
                if expo > 709.0 {
                    f64::INFINITY
                } else {
                    expo.exp() * f.eval(sigma)
                }
            };
            let g = quad::integrate_adaptive(&mut integrand, s, t, MEAN_REL_TOL, &split)?;
            if !g.is_finite() {
                return Err(Error::IntegratorFailure(format!(
                    "affine mean overflow in mode {}",
                    k + 1
                )));
            }
            m[k] += g;
        }
        return Ok(m);
    }
    // Dense path: solve dm/dtau = A m + f jointly.
    let deriv = |tau: f64, y: &DMatrix<f64>| {
        let mut d = model.drift_matrix(tau) * y;
        let f = model.affine_vector(tau);
        for k in 0..model.dim {
            d[(k, 0)] += f[k];
        }
        d
    };
    let y0 = DMatrix::from_fn(model.dim, 1, |k, _| x[k]);
    let (y, _) = rk4::solve(&deriv, s, t, &y0, rk4_base_step(model))?;
    Ok(DVector::from_fn(model.dim, |k, _| y[(k, 0)]))
}

/// Covariance representation with nonnegative factored spectrum.
#[derive(Debug, Clone)]
pub enum CovarianceRep {
    Diagonal { q: Vec<f64> },
    Dense {
        eigvecs: DMatrix<f64>,
        eigvals: Vec<f64>,
    },
}

/// Gaussian state: mean plus positive-semidefinite covariance with rank,
/// square root, and pseudo-inverse square root.
#[derive(Debug, Clone)]
pub struct GaussianState {
    pub mean: DVector<f64>,
    pub rep: CovarianceRep,
    rank: usize,
    rank_tol: f64,
}

impl GaussianState {
    pub fn diagonal(mean: DVector<f64>, mut q: Vec<f64>) -> Result<Self> {
        let qmax = q.iter().copied().fold(0.0, f64::max);
        let tol = q.len() as f64 * RANK_ULP_SCALE * qmax;
        for (k, v) in q.iter_mut().enumerate() {
            if *v < -tol {
                return Err(Error::Internal(format!(
                    "negative covariance {v:.3e} in mode {} beyond tolerance",
                    k + 1
                )));
            }
            if *v <= tol {
                *v = 0.0;
            }
        }
        let rank = q.iter().filter(|v| **v > 0.0).count();
        Ok(GaussianState {
            mean,
            rep: CovarianceRep::Diagonal { q },
            rank,
            rank_tol: tol,
        })
    }

    pub fn dense(mean: DVector<f64>, q: DMatrix<f64>) -> Result<Self> {
        let n = q.nrows();
        if q.ncols() != n || mean.len() != n {
            return Err(Error::Internal("covariance shape mismatch".into()));
        }
        let scale = q.amax();
        let mut defect: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                defect = defect.max((q[(i, j)] - q[(j, i)]).abs());
            }
        }
        if defect > 1e-12 * scale.max(1e-300) {
            return Err(Error::Internal(format!(
                "covariance symmetry defect {defect:.3e} exceeds 1e-12 * {scale:.3e}"
            )));
        }
        let sym = (&q + q.transpose()) * 0.5;
        let eig = sym.symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| {
            eig.eigenvalues[j]
                .partial_cmp(&eig.eigenvalues[i])
                .unwrap()
        });
        let lmax = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
        let tol = n as f64 * RANK_ULP_SCALE * lmax;
        let mut eigvals = Vec::with_capacity(n);
        let mut eigvecs = DMatrix::zeros(n, n);
        for (col, &src) in order.iter().enumerate() {
            let lam = eig.eigenvalues[src];
            if lam < -tol {
                return Err(Error::Internal(format!(
                    "negative eigenvalue {lam:.3e} beyond tolerance {tol:.3e}"
                )));
            }
            eigvals.push(if lam <= tol { 0.0 } else { lam });
            eigvecs.set_column(col, &eig.eigenvectors.column(src));
        }
        let rank = eigvals.iter().filter(|v| **v > 0.0).count();
        Ok(GaussianState {
            mean,
            rep: CovarianceRep::Dense { eigvecs, eigvals },
            rank,
            rank_tol: tol,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn rank_tolerance(&self) -> f64 {
        self.rank_tol
    }

    /// Eigenvalues (descending for dense, per-mode for diagonal).
    pub fn eigenvalues(&self) -> Vec<f64> {
        match &self.rep {
            CovarianceRep::Diagonal { q } => q.clone(),
            CovarianceRep::Dense { eigvals, .. } => eigvals.clone(),
        }
    }

    pub fn trace(&self) -> f64 {
        self.eigenvalues().iter().sum()
    }

    pub fn covariance_matrix(&self) -> DMatrix<f64> {
        match &self.rep {
            CovarianceRep::Diagonal { q } => {
                DMatrix::from_diagonal(&DVector::from_vec(q.clone()))
            }
            CovarianceRep::Dense { eigvecs, eigvals } => {
                let lam = DMatrix::from_diagonal(&DVector::from_vec(eigvals.clone()));
                eigvecs * lam * eigvecs.transpose()
            }
        }
    }

    /// `<Q l, l>`.
    pub fn quadratic_form(&self, l: &DVector<f64>) -> f64 {
        match &self.rep {
            CovarianceRep::Diagonal { q } => {
                l.iter().zip(q).map(|(x, qk)| qk * x * x).sum()
            }
            CovarianceRep::Dense { eigvecs, eigvals } => {
                let y = eigvecs.transpose() * l;
                y.iter().zip(eigvals).map(|(x, lam)| lam * x * x).sum()
            }
        }
    }

    /// Apply the square-root factor `S` (with `S S^T = Q`) to `z`.
    pub fn sqrt_apply(&self, z: &DVector<f64>) -> DVector<f64> {
        match &self.rep {
            CovarianceRep::Diagonal { q } => {
                DVector::from_fn(self.dim(), |k, _| q[k].sqrt() * z[k])
            }
            CovarianceRep::Dense { eigvecs, eigvals } => {
                let scaled = DVector::from_fn(self.dim(), |k, _| eigvals[k].sqrt() * z[k]);
                eigvecs * scaled
            }
        }
    }

    pub fn sqrt_matrix(&self) -> DMatrix<f64> {
        match &self.rep {
            CovarianceRep::Diagonal { q } => DMatrix::from_diagonal(&DVector::from_fn(
                self.dim(),
                |k, _| q[k].sqrt(),
            )),
            CovarianceRep::Dense { eigvecs, eigvals } => {
                let lam = DMatrix::from_diagonal(&DVector::from_fn(self.dim(), |k, _| {
                    eigvals[k].sqrt()
                }));
                eigvecs * lam
            }
        }
    }

    /// Apply the pseudo-inverse square root `Q^{-1/2}`; errors with
    /// `KernelComponent` when `v` has mass on the kernel.
    pub fn pinv_sqrt_apply(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        let comp_tol = KERNEL_COMPONENT_REL * v.norm();
        match &self.rep {
            CovarianceRep::Diagonal { q } => {
                let mut out = DVector::zeros(self.dim());
                for k in 0..self.dim() {
                    if q[k] > 0.0 {
                        out[k] = v[k] / q[k].sqrt();
                    } else if v[k].abs() > comp_tol {
                        return Err(Error::KernelComponent { index: k + 1 });
                    }
                }
                Ok(out)
            }
            CovarianceRep::Dense { eigvecs, eigvals } => {
                let y = eigvecs.transpose() * v;
                let mut w = DVector::zeros(self.dim());
                for k in 0..self.dim() {
                    if eigvals[k] > 0.0 {
                        w[k] = y[k] / eigvals[k].sqrt();
                    } else if y[k].abs() > comp_tol {
                        return Err(Error::KernelComponent { index: k + 1 });
                    }
                }
                Ok(eigvecs * w)
            }
        }
    }

    pub fn pinv_sqrt_matrix(&self) -> DMatrix<f64> {
        match &self.rep {
            CovarianceRep::Diagonal { q } => DMatrix::from_diagonal(&DVector::from_fn(
                self.dim(),
                |k, _| if q[k] > 0.0 { 1.0 / q[k].sqrt() } else { 0.0 },
            )),
            CovarianceRep::Dense { eigvecs, eigvals } => {
                let lam = DMatrix::from_diagonal(&DVector::from_fn(self.dim(), |k, _| {
                    if eigvals[k] > 0.0 {
                        1.0 / eigvals[k].sqrt()
                    } else {
                        0.0
                    }
                }));
                eigvecs * lam * eigvecs.transpose()
            }
        }
    }

    /// Coordinates of `v` in the covariance eigenbasis.
    pub fn to_eigenbasis(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.rep {
            CovarianceRep::Diagonal { .. } => v.clone(),
            CovarianceRep::Dense { eigvecs, .. } => eigvecs.transpose() * v,
        }
    }
}

/// Covariance `Q(t,s) = int_s^t U(t,r) B(r) B(r)^T U(t,r)^T dr` as a
/// zero-mean Gaussian state.
pub fn covariance(model: &EvolutionModel, s: f64, t: f64) -> Result<GaussianState> {
    check_interval(model, s, t)?;
    let n = model.dim;
    if model.is_diagonal() {
        let mut q = Vec::with_capacity(n);
        for k in 0..n {
            q.push(covariance_mode(model, k, s, t)?);
        }
        return GaussianState::diagonal(DVector::zeros(n), q);
    }
    let deriv = |tau: f64, qm: &DMatrix<f64>| {
        let a = model.drift_matrix(tau);
        let b = model.diffusion_matrix(tau);
        &a * qm + qm * a.transpose() + &b * b.transpose()
    };
    let (q, _) = rk4::solve(&deriv, s, t, &DMatrix::zeros(n, n), rk4_base_step(model))?;
    GaussianState::dense(DVector::zeros(n), q)
}

/// One diagonal covariance entry `q_k(t,s)` by adaptive quadrature.
pub fn covariance_mode(model: &EvolutionModel, k: usize, s: f64, t: f64) -> Result<f64> {
    if s == t {
        return Ok(0.0);
    }
    let a = model.drift_mode(k);
    let b = model.diffusion_mode(k);
    let a_t = a.antiderivative(t);
    let rate = 2.0 * a.sup_abs(s, t);
    let split = quad::boundary_layer_split(s, t, t, rate);
    let mut integrand = |sigma: f64| {
        let expo = 2.0 * (a_t - a.antiderivative(sigma));
        let bv = b.eval(sigma);
        if expo > 709.0 {
            f64::INFINITY
        } else {
            expo.exp() * bv * bv
        }
    };
    let q = quad::integrate_adaptive(&mut integrand, s, t, COV_REL_TOL, &split)?;
    if !q.is_finite() {
        return Err(Error::IntegratorFailure(format!(
            "covariance overflow in mode {}",
            k + 1
        )));
    }
    Ok(q)
}

/// Direct double-quadrature oracle for the defining covariance integral;
/// composite Gauss-Legendre in `r` with dense propagator solves per node.
pub fn covariance_quadrature_oracle(
    model: &EvolutionModel,
    s: f64,
    t: f64,
    panels: usize,
) -> Result<DMatrix<f64>> {
    let n = model.dim;
    let rule = quad::gauss_legendre(8);
    let h = (t - s) / panels as f64;
    let mut acc = DMatrix::zeros(n, n);
    for p in 0..panels {
        let lo = s + p as f64 * h;
        let c = lo + 0.5 * h;
        for (xn, w) in rule.nodes.iter().zip(&rule.weights) {
            let r = c + 0.5 * h * xn;
            let u = transition(model, r, t)?.matrix();
            let b = model.diffusion_matrix(r);
            let m = &u * &b;
            acc += &m * m.transpose() * (*w * 0.5 * h);
        }
    }
    Ok(acc)
}

/// The operator `Lambda(t,s) W^{-1}` with `W = diag(w)`; its largest singular
/// value is the operator norm of `Lambda(t,s)` from E to X.
#[derive(Debug, Clone)]
pub enum LambdaRep {
    Diagonal(Vec<f64>),
    Dense(DMatrix<f64>),
}

#[derive(Debug, Clone)]
pub struct LambdaOperator {
    pub rep: LambdaRep,
    pub s: f64,
    pub t: f64,
    norm: f64,
}

impl LambdaOperator {
    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        match &self.rep {
            LambdaRep::Diagonal(d) => DMatrix::from_diagonal(&DVector::from_vec(d.clone())),
            LambdaRep::Dense(m) => m.clone(),
        }
    }
}

/// Build `Lambda(t,s) W^{-1}`, failing with `NotSmoothing` when a kernel mode
/// of Q(t,s) carries a nonzero transported direction.
pub fn lambda_operator(
    model: &EvolutionModel,
    space: &DirectionSpace,
    s: f64,
    t: f64,
) -> Result<LambdaOperator> {
    if !(s < t) {
        return Err(Error::Validation("lambda operator requires s < t".into()));
    }
    check_interval(model, s, t)?;
    let n = model.dim;
    if space.dim() != n {
        return Err(Error::Validation(format!(
            "direction space has {} weights, model dimension is {n}",
            space.dim()
        )));
    }
    if model.is_diagonal() {
        let u = transition(model, s, t)?;
        let cov = covariance(model, s, t)?;
        let q = match &cov.rep {
            CovarianceRep::Diagonal { q } => q.clone(),
            _ => unreachable!(),
        };
        let ratios: Vec<f64> = (0..n)
            .map(|k| u.multiplier(k) / space.weights[k])
            .collect();
        let ratio_max = ratios.iter().copied().fold(0.0, f64::max);
        let mut entries = vec![0.0; n];
        for k in 0..n {
            if q[k] > 0.0 {
                entries[k] = ratios[k] / q[k].sqrt();
            } else if ratios[k] > RANK_ULP_SCALE * ratio_max {
                return Err(Error::NotSmoothing { mode: k + 1 });
            }
        }
        let norm = entries.iter().copied().fold(0.0, f64::max);
        return Ok(LambdaOperator {
            rep: LambdaRep::Diagonal(entries),
            s,
            t,
            norm,
        });
    }
    let u = transition(model, s, t)?;
    let cov = covariance(model, s, t)?;
    let mut uw = u.matrix();
    for j in 0..n {
        let inv_w = 1.0 / space.weights[j];
        for i in 0..n {
            uw[(i, j)] *= inv_w;
        }
    }
    // Kernel obstruction: rows of V^T U W^{-1} for null eigendirections.
    if let CovarianceRep::Dense { eigvecs, eigvals } = &cov.rep {
        let vt_uw = eigvecs.transpose() * &uw;
        let scale = spectral_norm(&uw);
        for (j, lam) in eigvals.iter().enumerate() {
            if *lam == 0.0 {
                let row_norm = vt_uw.row(j).norm();
                if row_norm > RANK_ULP_SCALE * scale {
                    return Err(Error::NotSmoothing { mode: j + 1 });
                }
            }
        }
    }
    let m = cov.pinv_sqrt_matrix() * uw;
    let norm = spectral_norm(&m);
    Ok(LambdaOperator {
        rep: LambdaRep::Dense(m),
        s,
        t,
        norm,
    })
}

/// Minimum-energy control steering 0 to `target` over `[s, t]`.
#[derive(Debug, Clone)]
pub struct MinEnergyControl {
    /// Control values on the uniform midpoint grid.
    pub controls: Vec<DVector<f64>>,
    /// Discrete L2((s,t); Y) norm of the control.
    pub norm: f64,
    /// `| ||y||_{L2} - ||Q(t,s)^{-1/2} target|| |`.
    pub defect: f64,
    /// Least-squares residual of the discrete solve.
    pub residual: f64,
}

/// Discretize `L y = sum_j dsigma U(t,sigma_j) B(sigma_j) y_j` on a uniform
/// midpoint grid and return the minimum-norm least-squares control.
pub fn gramian_min_energy(
    model: &EvolutionModel,
    s: f64,
    t: f64,
    target: &DVector<f64>,
    grid: usize,
) -> Result<MinEnergyControl> {
    if !(s < t) {
        return Err(Error::Validation("minimum-energy control requires s < t".into()));
    }
    check_interval(model, s, t)?;
    let n = model.dim;
    let dt = (t - s) / grid as f64;
    let mut mats: Vec<DMatrix<f64>> = Vec::with_capacity(grid);
    for j in 0..grid {
        let sigma = s + (j as f64 + 0.5) * dt;
        let u = transition(model, sigma, t)?;
        let b = model.diffusion_matrix(sigma);
        mats.push(match &u.rep {
            PropagatorRep::Dense(um) => um * &b,
            _ => {
                let mut m = b.clone();
                for i in 0..n {
                    let mult = u.multiplier(i);
                    for c in 0..n {
                        m[(i, c)] *= mult;
                    }
                }
                m
            }
        });
    }
    let mut gram = DMatrix::zeros(n, n);
    for m in &mats {
        gram += m * m.transpose() * dt;
    }
    let gram_state = GaussianState::dense(DVector::zeros(n), gram.clone())?;
    // p = Gram^+ target via the eigensystem.
    let p = {
        let y = gram_state.to_eigenbasis(target);
        let mut w = DVector::zeros(n);
        for (k, lam) in gram_state.eigenvalues().iter().enumerate() {
            if *lam > 0.0 {
                w[k] = y[k] / lam;
            }
        }
        match &gram_state.rep {
            CovarianceRep::Dense { eigvecs, .. } => eigvecs * w,
            _ => w,
        }
    };
    let residual = (&gram * &p - target).norm();
    if residual > 1e-6 * target.norm().max(1e-300) {
        return Err(Error::Range(format!(
            "target outside the numerical range of the discrete Gramian (residual {residual:.3e})"
        )));
    }
    let controls: Vec<DVector<f64>> = mats.iter().map(|m| m.transpose() * &p).collect();
    let norm_sq: f64 = controls.iter().map(|y| dt * y.norm_squared()).sum();
    let norm = norm_sq.sqrt();
    let exact = covariance(model, s, t)?
        .pinv_sqrt_apply(target)
        .map_err(|e| match e {
            Error::KernelComponent { index } => Error::Range(format!(
                "target has a component on the covariance kernel (mode {index})"
            )),
            other => other,
        })?
        .norm();
    Ok(MinEnergyControl {
        controls,
        norm,
        defect: (norm - exact).abs(),
        residual,
    })
}

/// Operator-norm defect of the composition law `U(t,r) U(r,s) = U(t,s)`.
pub fn cocycle_defect(model: &EvolutionModel, s: f64, r: f64, t: f64) -> Result<f64> {
    if !(s <= r && r <= t) {
        return Err(Error::Validation("cocycle defect requires s <= r <= t".into()));
    }
    let u_ts = transition(model, s, t)?;
    let u_rs = transition(model, s, r)?;
    let u_tr = transition(model, r, t)?;
    match (&u_ts.rep, &u_rs.rep, &u_tr.rep) {
        (PropagatorRep::Dense(_), _, _) => {
            let diff = u_tr.matrix() * u_rs.matrix() - u_ts.matrix();
            Ok(spectral_norm(&diff))
        }
        _ => {
            let mut defect: f64 = 0.0;
            for k in 0..model.dim {
                let comp = u_tr.multiplier(k) * u_rs.multiplier(k);
                defect = defect.max((comp - u_ts.multiplier(k)).abs());
            }
            Ok(defect)
        }
    }
}

/// Monotonicity and Lipschitz diagnostics of `s -> Q(t,s)`.
#[derive(Debug, Clone)]
pub struct MonotonicityReport {
    /// `max(0, lambda_max(Q(t,s2) - Q(t,s1)))`; positive values violate
    /// the decrease of Q(t, .) in s.
    pub defect: f64,
    /// `||Q(t,s1) - Q(t,s2)|| / |s2 - s1|`.
    pub lipschitz_ratio: f64,
    /// Sampled bound `sup||U||^2 sup||B||^2` to compare the ratio against.
    pub lipschitz_bound: f64,
    /// Scale `trace Q(t,s1)` for relative comparisons.
    pub scale: f64,
}

pub fn cov_monotonicity_defect(
    model: &EvolutionModel,
    t: f64,
    s1: f64,
    s2: f64,
) -> Result<MonotonicityReport> {
    if !(s1 <= s2 && s2 < t) {
        return Err(Error::Validation(
            "monotonicity defect requires s1 <= s2 < t".into(),
        ));
    }
    let q1 = covariance(model, s1, t)?;
    let q2 = covariance(model, s2, t)?;
    let scale = q1.trace();
    let (defect, norm_diff) = match (&q1.rep, &q2.rep) {
        (CovarianceRep::Diagonal { q: a }, CovarianceRep::Diagonal { q: b }) => {
            let mut dmax: f64 = 0.0;
            let mut nmax: f64 = 0.0;
            for (qa, qb) in a.iter().zip(b) {
                dmax = dmax.max(qb - qa);
                nmax = nmax.max((qa - qb).abs());
            }
            (dmax.max(0.0), nmax)
        }
        _ => {
            let diff = q2.covariance_matrix() - q1.covariance_matrix();
            let eig = diff.clone().symmetric_eigen();
            let lam_max = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (lam_max.max(0.0), spectral_norm(&diff))
        }
    };
    let lipschitz_ratio = if s2 > s1 { norm_diff / (s2 - s1) } else { 0.0 };
    // Sampled sup||U(t, .)|| over the interval and sup||B||.
    let mut u_sup: f64 = 0.0;
    for i in 0..=16 {
        let r = s1 + (t - s1) * i as f64 / 16.0;
        let u = transition(model, r, t)?;
        let nu = match &u.rep {
            PropagatorRep::Dense(m) => spectral_norm(m),
            _ => (0..model.dim)
                .map(|k| u.multiplier(k).abs())
                .fold(0.0, f64::max),
        };
        u_sup = u_sup.max(nu);
    }
    let mut b_sup: f64 = 0.0;
    for i in 0..=16 {
        let r = s1 + (t - s1) * i as f64 / 16.0;
        b_sup = b_sup.max(spectral_norm(&model.diffusion_matrix(r)));
    }
    Ok(MonotonicityReport {
        defect,
        lipschitz_ratio,
        lipschitz_bound: u_sup * u_sup * b_sup * b_sup,
        scale,
    })
}

/// Equivalence constants between the Cameron-Martin norms of Q(t,s1) and
/// Q(t,s2): `C12 = sigma_max(Q(t,s1)^{-1/2} Q(t,s2)^{1/2})` and symmetric.
pub fn cm_equivalence_constants(
    model: &EvolutionModel,
    t: f64,
    s1: f64,
    s2: f64,
) -> Result<(f64, f64)> {
    if !(s1 <= s2 && s2 < t) {
        return Err(Error::Validation(
            "equivalence constants require s1 <= s2 < t".into(),
        ));
    }
    let q1 = covariance(model, s1, t)?;
    let q2 = covariance(model, s2, t)?;
    let n = model.dim;
    if q1.rank() < n || q2.rank() < n {
        return Err(Error::RankDeficient(format!(
            "covariances have ranks {} and {} at truncation {n}",
            q1.rank(),
            q2.rank()
        )));
    }
    match (&q1.rep, &q2.rep) {
        (CovarianceRep::Diagonal { q: a }, CovarianceRep::Diagonal { q: b }) => {
            let mut c12: f64 = 0.0;
            let mut c21: f64 = 0.0;
            for (qa, qb) in a.iter().zip(b) {
                c12 = c12.max((qb / qa).sqrt());
                c21 = c21.max((qa / qb).sqrt());
            }
            Ok((c12, c21))
        }
        _ => {
            let m12 = q1.pinv_sqrt_matrix() * q2.sqrt_matrix();
            let m21 = q2.pinv_sqrt_matrix() * q1.sqrt_matrix();
            Ok((spectral_norm(&m12), spectral_norm(&m21)))
        }
    }
}

/// Embedding constant of the Cameron-Martin space of Q(t,s) into that of the
/// instantaneous noise Q(t): `sigma_max(Q(t)^{-1/2} Q(t,s)^{1/2})`, plus a
/// sampled reference bound of the form `M sqrt(t-s)`.
pub fn ht_embedding_constant(model: &EvolutionModel, s: f64, t: f64) -> Result<(f64, f64)> {
    if !(s < t) {
        return Err(Error::Validation("embedding constant requires s < t".into()));
    }
    let cov = covariance(model, s, t)?;
    let n = model.dim;
    if cov.rank() < n {
        return Err(Error::RankDeficient(format!(
            "Q(t,s) has rank {} at truncation {n}",
            cov.rank()
        )));
    }
    if model.is_diagonal() {
        let q = cov.eigenvalues();
        let mut c: f64 = 0.0;
        for k in 0..n {
            let bt = model.diffusion_mode(k).eval(t);
            if bt == 0.0 {
                return Err(Error::RankDeficient(format!(
                    "b_{}(t) = 0: instantaneous noise is rank deficient",
                    k + 1
                )));
            }
            c = c.max(q[k].sqrt() / bt.abs());
        }
        // Reference M: sampled sup over sigma of ||U(t,sigma)||_{H_sigma -> H_t}.
        let mut m_hat: f64 = 0.0;
        for i in 0..=32 {
            let sigma = s + (t - s) * i as f64 / 32.0;
            let u = transition(model, sigma, t)?;
            for k in 0..n {
                let bs = model.diffusion_mode(k).eval(sigma).abs();
                let bt = model.diffusion_mode(k).eval(t).abs();
                m_hat = m_hat.max(bs * u.multiplier(k).abs() / bt);
            }
        }
        return Ok((c, m_hat * (t - s).sqrt()));
    }
    let bt = model.diffusion_matrix(t);
    let qt = GaussianState::dense(DVector::zeros(n), &bt * bt.transpose())?;
    if qt.rank() < n {
        return Err(Error::RankDeficient(
            "instantaneous noise covariance is rank deficient".into(),
        ));
    }
    let m = qt.pinv_sqrt_matrix() * cov.sqrt_matrix();
    let c = spectral_norm(&m);
    let mut m_hat: f64 = 0.0;
    for i in 0..=32 {
        let sigma = s + (t - s) * i as f64 / 32.0;
        let u = transition(model, sigma, t)?.matrix();
        let bs = model.diffusion_matrix(sigma);
        let qs = GaussianState::dense(DVector::zeros(n), &bs * bs.transpose())?;
        let op = qt.pinv_sqrt_matrix() * u * qs.sqrt_matrix();
        m_hat = m_hat.max(spectral_norm(&op));
    }
    Ok((c, m_hat * (t - s).sqrt()))
}

fn check_interval(model: &EvolutionModel, s: f64, t: f64) -> Result<()> {
    if !(0.0 <= s && s <= t && t <= model.horizon) {
        return Err(Error::Validation(format!(
            "require 0 <= s <= t <= {}, got s = {s}, t = {t}",
            model.horizon
        )));
    }
    Ok(())
}
