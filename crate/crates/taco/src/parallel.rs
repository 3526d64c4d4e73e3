//! Order-preserving parallel map over scoped threads.
//!
//! Work is split into contiguous chunks and results are concatenated in
//! input order, so outputs do not depend on the worker count.

use std::num::NonZeroUsize;
use std::thread;

use taco_core::flow_sampler::{BetaEvaluator, BridgeConfig};
use taco_core::measures::Points;

/// Worker count: `TACO_THREADS` if set to a positive integer, else the
/// available parallelism.
pub fn workers() -> usize {
    std::env::var("TACO_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| thread::available_parallelism().map(NonZeroUsize::get).unwrap_or(1))
}

pub fn par_map<T, U, E, F>(items: &[T], f: F) -> Result<Vec<U>, E>
where
    T: Sync,
    U: Send,
    E: Send,
    F: Fn(&T) -> Result<U, E> + Sync,
{
    let n = workers().min(items.len()).max(1);
    if n == 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(n);
    let parts: Vec<Result<Vec<U>, E>> = thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| {
                let f = &f;
                s.spawn(move || part.iter().map(f).collect::<Result<Vec<U>, E>>())
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(items.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Frozen-ODE transport of every source through `eval`.
pub fn transport(eval: &BetaEvaluator, sources: &Points, cfg: &BridgeConfig) -> taco_core::Result<Points> {
    cfg.validate()?;
    let idx: Vec<usize> = (0..sources.len()).collect();
    let rows = par_map(&idx, |&i| {
        let mut scratch = Vec::new();
        eval.transport(sources.row(i), cfg, &mut scratch)
    })?;
    let mut out = Points::empty(sources.dim());
    for r in &rows {
        out.push(r);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let v: Vec<u32> = (0..1000).collect();
        let out: Vec<u32> = par_map(&v, |x| Ok::<_, ()>(x * 2)).unwrap();
        assert_eq!(out, v.iter().map(|x| x * 2).collect::<Vec<_>>());
    }

    #[test]
    fn first_error_wins() {
        let v: Vec<u32> = (0..10).collect();
        let r: Result<Vec<u32>, u32> = par_map(&v, |&x| if x >= 3 { Err(x) } else { Ok(x) });
        assert_eq!(r, Err(3));
    }
}
