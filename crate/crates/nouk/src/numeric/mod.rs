//! Shared numerical machinery: quadrature rules, adaptive integration,
//! a fixed-step RK4 integrator with step-halving error control, Halton
//! sequences and log-log least-squares fits.

pub mod fit;
pub mod halton;
pub mod quad;
pub mod rk4;

/// Deterministic chunked reduction used by every Monte Carlo loop.
///
/// The item range `0..n` is split into fixed-size chunks (independent of the
/// thread count), each chunk is evaluated sequentially by `work`, and the
/// partial results are combined strictly in chunk order. Results are
/// therefore bit-identical for any `threads >= 1`.
pub fn chunked_reduce<P, W>(n: u64, threads: usize, work: W) -> Vec<P>
where
    P: Send,
    W: Fn(std::ops::Range<u64>) -> P + Sync,
{
    const CHUNK: u64 = 8192;
    let n_chunks = n.div_ceil(CHUNK).max(1);
    let ranges: Vec<std::ops::Range<u64>> = (0..n_chunks)
        .map(|c| (c * CHUNK)..((c + 1) * CHUNK).min(n))
        .collect();
    let threads = threads.max(1).min(ranges.len());
    if threads == 1 {
        return ranges.into_iter().map(work).collect();
    }
    let mut out: Vec<Option<P>> = Vec::new();
    out.resize_with(ranges.len(), || None);
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots = std::sync::Mutex::new(&mut out);
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= ranges.len() {
                    break;
                }
                let p = work(ranges[i].clone());
                let mut guard = slots.lock().unwrap();
                guard[i] = Some(p);
            });
        }
    });
    out.into_iter().map(|p| p.unwrap()).collect()
}

/// Running mean / standard error accumulator for one Monte Carlo chunk.
#[derive(Debug, Clone, Copy, Default)]
pub struct MomentSum {
    pub n: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl MomentSum {
    pub fn push(&mut self, v: f64) {
        self.n += 1;
        self.sum += v;
        self.sum_sq += v * v;
    }

    pub fn merge(mut self, other: MomentSum) -> MomentSum {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum / self.n as f64
        }
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        let var = ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    }
}
