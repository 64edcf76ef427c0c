use rayon::prelude::*;

use crate::error::Result;

/// Sentences per work unit in gradient accumulation. Fixed so the summation
/// order, and therefore every bit of the result, does not depend on the
/// number of worker threads.
pub const CHUNK: usize = 64;

/// Sums `f` over fixed-size chunks of `items`. Each call of `f` adds its
/// gradient into a zeroed buffer of length `dim` and returns its scalar.
/// Chunks run in parallel in waves of one chunk per thread; their results
/// are added to the totals strictly in chunk order.
pub fn ordered_chunk_sum<T, F>(items: &[T], dim: usize, f: F) -> Result<(f64, Vec<f64>)>
where
    T: Sync,
    F: Fn(usize, &[T], &mut [f64]) -> Result<f64> + Sync,
{
    let mut total = 0.0;
    let mut grad = vec![0.0; dim];
    let chunks: Vec<(usize, &[T])> = items
        .chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| (c * CHUNK, chunk))
        .collect();
    let threads = rayon::current_num_threads().max(1);

    if threads == 1 {
        let mut buf = vec![0.0; dim];
        for (offset, chunk) in chunks {
            buf.iter_mut().for_each(|v| *v = 0.0);
            total += f(offset, chunk, &mut buf)?;
            for (g, b) in grad.iter_mut().zip(&buf) {
                *g += b;
            }
        }
        return Ok((total, grad));
    }

    for wave in chunks.chunks(threads) {
        let results: Vec<Result<(f64, Vec<f64>)>> = wave
            .par_iter()
            .map(|&(offset, chunk)| {
                let mut buf = vec![0.0; dim];
                let v = f(offset, chunk, &mut buf)?;
                Ok((v, buf))
            })
            .collect();
        for r in results {
            let (v, buf) = r?;
            total += v;
            for (g, b) in grad.iter_mut().zip(&buf) {
                *g += b;
            }
        }
    }
    Ok((total, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn independent_of_thread_count() {
        let items: Vec<f64> = (0..1000).map(|i| (i as f64).sin() * 1e3).collect();
        let f = |_: usize, chunk: &[f64], g: &mut [f64]| {
            for (j, x) in chunk.iter().enumerate() {
                g[j % 3] += x * 1.1;
            }
            Ok(chunk.iter().sum::<f64>())
        };
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| ordered_chunk_sum(&items, 3, f)).unwrap();
        let b = four.install(|| ordered_chunk_sum(&items, 3, f)).unwrap();
        assert_eq!(a.0.to_bits(), b.0.to_bits());
        for (x, y) in a.1.iter().zip(&b.1) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}
