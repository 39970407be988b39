use std::ops::Range;

use rayon::prelude::*;

const MIN_CHUNK: usize = 64;
const MAX_CHUNKS: usize = 16;

/// Splits `0..n` into contiguous chunks and evaluates them in parallel,
/// then reduces the partial sums in chunk order.
///
/// The chunking depends only on `n`, so the result is bit-identical for any
/// number of worker threads.
pub(crate) fn ordered_sum<F>(n: usize, grad_len: usize, f: F) -> (f64, Vec<f64>)
where
    F: Fn(Range<usize>, &mut [f64]) -> f64 + Sync,
{
    let chunk = n.div_ceil(MAX_CHUNKS).max(MIN_CHUNK);
    let ranges: Vec<Range<usize>> = (0..n)
        .step_by(chunk)
        .map(|s| s..(s + chunk).min(n))
        .collect();
    if ranges.len() <= 1 {
        let mut grad = vec![0.0; grad_len];
        let total = f(0..n, &mut grad);
        return (total, grad);
    }
    let parts: Vec<(f64, Vec<f64>)> = ranges
        .into_par_iter()
        .map(|r| {
            let mut grad = vec![0.0; grad_len];
            let total = f(r, &mut grad);
            (total, grad)
        })
        .collect();
    let mut parts = parts.into_iter();
    let (mut total, mut grad) = parts.next().unwrap_or((0.0, vec![0.0; grad_len]));
    for (t, g) in parts {
        total += t;
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    (total, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn independent_of_thread_count() {
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| {
                    ordered_sum(10_000, 3, |r, g| {
                        let mut s = 0.0;
                        for i in r {
                            let v = (i as f64).sin() * 1e-3;
                            s += v;
                            g[i % 3] += v * v;
                        }
                        s
                    })
                })
        };
        assert_eq!(run(1), run(7));
    }
}
