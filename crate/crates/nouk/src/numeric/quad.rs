//! Quadrature: adaptive Gauss–Kronrod (G7,K15) integration with optional
//! pre-splitting for boundary layers, plus Gauss–Legendre and Gauss–Hermite
//! rules computed by Golub–Welsch and cached.

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

// QUADPACK dqk15 abscissae (positive half, descending) and weights.
const XGK: [f64; 8] = [
    0.991455371120813,
    0.949107912342759,
    0.864864423359769,
    0.741531185599394,
    0.586087235467691,
    0.405845151377397,
    0.207784955007898,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529,
    0.063092092629979,
    0.104790010322250,
    0.140653259715525,
    0.169004726639267,
    0.190350578064785,
    0.204432940075298,
    0.209482141084728,
];
const WG: [f64; 4] = [
    0.129484966168870,
    0.279705391489277,
    0.381830050505119,
    0.417959183673469,
];

/// One (G7,K15) panel: returns the K15 value and |K15 - G7|.
fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let fsum = f(c - x) + f(c + x);
        k += WGK[j] * fsum;
        if j % 2 == 1 {
            g += WG[j / 2] * fsum;
        }
    }
    (k * h, (k - g).abs() * h.abs())
}

fn refine<F: FnMut(f64) -> f64>(
    f: &mut F,
    a: f64,
    b: f64,
    tol_per_len: f64,
    tol_floor: f64,
    depth: usize,
) -> Result<f64> {
    let (v, e) = gk15(f, a, b);
    if e <= (tol_per_len * (b - a).abs()).max(tol_floor) {
        return Ok(v);
    }
    let m = 0.5 * (a + b);
    if depth == 0 || m <= a.min(b) || m >= a.max(b) {
        return Err(Error::IntegratorFailure(format!(
            "quadrature step underflow on [{a}, {b}] (residual error {e:.3e})"
        )));
    }
    Ok(refine(f, a, m, tol_per_len, tol_floor, depth - 1)?
        + refine(f, m, b, tol_per_len, tol_floor, depth - 1)?)
}

/// Adaptive integration of `f` over `[a, b]` to relative tolerance `rel_tol`.
///
/// `breakpoints` seeds the subdivision; callers integrating boundary-layer
/// integrands pass a geometric pre-split so the layer cannot be missed by
/// the first coarse panels. The global tolerance is distributed over the
/// interval proportionally to panel length and re-tightened once after a
/// rough first pass.
pub fn integrate_adaptive<F: FnMut(f64) -> f64>(
    f: &mut F,
    a: f64,
    b: f64,
    rel_tol: f64,
    breakpoints: &[f64],
) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let mut edges: Vec<f64> = Vec::with_capacity(breakpoints.len() + 2);
    edges.push(a);
    let lo = a.min(b);
    let hi = a.max(b);
    let mut inner: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|p| *p > lo && *p < hi)
        .collect();
    inner.sort_by(|x, y| x.partial_cmp(y).unwrap());
    if a > b {
        inner.reverse();
    }
    edges.extend(inner);
    edges.push(b);

    let mut rough = 0.0;
    for w in edges.windows(2) {
        rough += gk15(f, w[0], w[1]).0;
    }
    let len = (b - a).abs();
    let mut total = rough;
    // One re-tightening pass: the rough total sets the absolute budget.
    for _ in 0..2 {
        let scale = total.abs().max(1e-300);
        let tol_per_len = rel_tol * scale / len;
        // Thin panels cannot beat roundoff; the floor keeps the summed
        // overshoot at a harmless multiple of the target.
        let tol_floor = rel_tol * scale * 2f64.powi(-20);
        let mut acc = 0.0;
        for w in edges.windows(2) {
            acc += refine(f, w[0], w[1], tol_per_len, tol_floor, 48)?;
        }
        let stable = (acc - total).abs() <= rel_tol * acc.abs().max(1e-300);
        total = acc;
        if stable {
            break;
        }
    }
    Ok(total)
}

/// Geometric pre-split toward `edge` (one of the endpoints) resolving a
/// boundary layer of the given `rate` (integrand varies like `exp(-rate*d)`
/// with `d` the distance to `edge`).
pub fn boundary_layer_split(a: f64, b: f64, edge: f64, rate: f64) -> Vec<f64> {
    let len = (b - a).abs();
    if len == 0.0 || !rate.is_finite() {
        return Vec::new();
    }
    let levels = ((len * rate.abs()).max(1.0).log2().ceil() as usize + 2).min(60);
    let toward_b = (edge - b).abs() < (edge - a).abs();
    (1..=levels)
        .map(|j| {
            let d = len * 0.5f64.powi(j as i32);
            if toward_b {
                b - (b - a).signum() * d
            } else {
                a + (b - a).signum() * d
            }
        })
        .collect()
}

/// Nodes and weights of a quadrature rule.
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Golub–Welsch: eigen-decompose the symmetric Jacobi matrix with zero
/// diagonal and off-diagonals `beta`, first-moment `mu0`.
fn golub_welsch(beta: &[f64], mu0: f64) -> Rule {
    let n = beta.len() + 1;
    let mut j = DMatrix::zeros(n, n);
    for (k, &b) in beta.iter().enumerate() {
        j[(k, k + 1)] = b;
        j[(k + 1, k)] = b;
    }
    let eig = j.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], mu0 * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    // Symmetrize: both rules here are even, so pair up mirrored nodes to make
    // odd integrands cancel exactly.
    let mut nodes: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let mut weights: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    for i in 0..n / 2 {
        let m = n - 1 - i;
        let x = 0.5 * (nodes[m] - nodes[i]);
        nodes[i] = -x;
        nodes[m] = x;
        let w = 0.5 * (weights[i] + weights[m]);
        weights[i] = w;
        weights[m] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Rule { nodes, weights }
}

fn cache() -> &'static Mutex<HashMap<(u8, usize), Arc<Rule>>> {
    static CACHE: OnceLock<Mutex<HashMap<(u8, usize), Arc<Rule>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Arc<Rule> {
    let mut guard = cache().lock().unwrap();
    guard
        .entry((0, n))
        .or_insert_with(|| {
            let beta: Vec<f64> = (1..n)
                .map(|k| {
                    let k = k as f64;
                    k / (4.0 * k * k - 1.0).sqrt()
                })
                .collect();
            Arc::new(golub_welsch(&beta, 2.0))
        })
        .clone()
}

/// `n`-point Gauss–Hermite rule for weight `exp(-x^2)` on the real line.
pub fn gauss_hermite(n: usize) -> Arc<Rule> {
    let mut guard = cache().lock().unwrap();
    guard
        .entry((1, n))
        .or_insert_with(|| {
            let beta: Vec<f64> = (1..n).map(|k| (k as f64 / 2.0).sqrt()).collect();
            Arc::new(golub_welsch(&beta, std::f64::consts::PI.sqrt()))
        })
        .clone()
}

/// Expectation of `f` under the scalar normal N(mean, var) by Gauss–Hermite.
pub fn gauss_hermite_expect_1d<F: FnMut(f64) -> f64>(
    mut f: F,
    mean: f64,
    var: f64,
    nodes: usize,
) -> f64 {
    if var <= 0.0 {
        return f(mean);
    }
    let rule = gauss_hermite(nodes);
    let scale = (2.0 * var).sqrt();
    let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
    rule.nodes
        .iter()
        .zip(&rule.weights)
        .map(|(&x, &w)| w * f(mean + scale * x))
        .sum::<f64>()
        * inv_sqrt_pi
}

/// Fixed composite Gauss–Legendre integral over `[a, b]` with `panels`
/// uniform panels of `n` nodes; used as a reference rule in oracles.
pub fn composite_gauss_legendre<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    panels: usize,
    n: usize,
) -> f64 {
    let rule = gauss_legendre(n);
    let h = (b - a) / panels as f64;
    let mut acc = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let c = lo + 0.5 * h;
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            acc += w * f(c + 0.5 * h * x);
        }
    }
    acc * 0.5 * h
}
