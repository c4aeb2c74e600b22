//! Halton low-discrepancy sequences for deterministic sup-sampling.

const PRIMES: [u64; 32] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    97, 101, 103, 107, 109, 113, 127, 131,
];

/// Radical-inverse of `i` in the given base.
pub fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let b = base as f64;
    while i > 0 {
        f /= b;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// The `i`-th Halton point in `dims` dimensions, entries in (0, 1).
///
/// Index 0 is skipped so the origin never appears; for `dims` beyond the
/// prime table, bases recycle with an index shift.
pub fn point(i: u64, dims: usize) -> Vec<f64> {
    (0..dims)
        .map(|d| {
            let base = PRIMES[d % PRIMES.len()];
            let shift = (d / PRIMES.len()) as u64 * 61;
            radical_inverse(i + 1 + shift, base)
        })
        .collect()
}

/// The `i`-th Halton point mapped affinely into `[lo, hi]^dims`.
pub fn point_in_box(i: u64, dims: usize, lo: f64, hi: f64) -> Vec<f64> {
    point(i, dims)
        .into_iter()
        .map(|u| lo + (hi - lo) * u)
        .collect()
}

/// The `i`-th Halton direction: mapped to `[-1, 1]^dims`, guaranteed nonzero.
pub fn direction(i: u64, dims: usize) -> Vec<f64> {
    let mut d: Vec<f64> = point(i, dims).into_iter().map(|u| 2.0 * u - 1.0).collect();
    if d.iter().all(|v| v.abs() < 1e-12) {
        d[0] = 1.0;
    }
    d
}
