//! Deterministic parallelism helpers.
//!
//! All floating-point reductions go through [`chunked_sum`], which always
//! accumulates in fixed-size chunks combined in index order. The result is
//! bit-identical no matter how many worker threads run (including the
//! sequential build without the `parallel` feature), so determinism never
//! depends on the thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Chunk length for reductions. Fixed so the combine tree never changes.
pub const SUM_CHUNK: usize = 4096;

/// Minimum element count before an elementwise kernel goes parallel.
pub const PAR_THRESHOLD: usize = 16_384;

/// Sum of a slice with a fixed chunked accumulation order.
pub fn chunked_sum(xs: &[f64]) -> f64 {
    #[cfg(feature = "parallel")]
    {
        if xs.len() >= PAR_THRESHOLD {
            let partials: Vec<f64> = xs
                .par_chunks(SUM_CHUNK)
                .map(|c| c.iter().sum::<f64>())
                .collect();
            return partials.iter().sum();
        }
    }
    let mut partials = Vec::with_capacity(xs.len() / SUM_CHUNK + 1);
    for c in xs.chunks(SUM_CHUNK) {
        partials.push(c.iter().sum::<f64>());
    }
    partials.iter().sum()
}

/// Elementwise map into a new vector; parallel for large inputs.
pub fn map_unary(xs: &[f64], f: impl Fn(f64) -> f64 + Sync + Send) -> Vec<f64> {
    let mut out = vec![0.0; xs.len()];
    #[cfg(feature = "parallel")]
    {
        if xs.len() >= PAR_THRESHOLD {
            out.par_iter_mut()
                .zip(xs.par_iter())
                .for_each(|(o, &x)| *o = f(x));
            return out;
        }
    }
    for (o, &x) in out.iter_mut().zip(xs) {
        *o = f(x);
    }
    out
}

/// Elementwise zip-map into a new vector; parallel for large inputs.
pub fn map_binary(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64 + Sync + Send) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    let mut out = vec![0.0; a.len()];
    #[cfg(feature = "parallel")]
    {
        if a.len() >= PAR_THRESHOLD {
            out.par_iter_mut()
                .zip(a.par_iter().zip(b.par_iter()))
                .for_each(|(o, (&x, &y))| *o = f(x, y));
            return out;
        }
    }
    for i in 0..a.len() {
        out[i] = f(a[i], b[i]);
    }
    out
}

/// Run a fallible job over items, in parallel when enabled, preserving order.
pub fn try_map_items<T, U, E, F>(items: Vec<T>, f: F) -> Result<Vec<U>, E>
where
    T: Send,
    U: Send,
    E: Send,
    F: Fn(T) -> Result<U, E> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        return items.into_par_iter().map(f).collect();
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.into_iter().map(f).collect()
    }
}

/// Cap the global worker pool. Call once at startup; later calls are ignored.
pub fn limit_threads(n: usize) {
    #[cfg(feature = "parallel")]
    {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = n;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunked_sum_matches_reference_order() {
        let xs: Vec<f64> = (0..100_000).map(|i| (i as f64).sin()).collect();
        let a = chunked_sum(&xs);
        // Reference: same fixed chunking, forced sequential.
        let mut partials = Vec::new();
        for c in xs.chunks(SUM_CHUNK) {
            partials.push(c.iter().sum::<f64>());
        }
        let b: f64 = partials.iter().sum();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
