//! Node-parallel sweeps. Every node update reads only the previous iterate,
//! so serial and parallel runs give identical results.

/// `out[i] = f(i)` for every node.
#[cfg(feature = "parallel")]
pub(crate) fn fill<T: Send>(out: &mut [T], f: impl Fn(usize) -> T + Sync + Send) {
    use rayon::prelude::*;
    const MIN_CHUNK: usize = 256;
    out.par_iter_mut()
        .with_min_len(MIN_CHUNK)
        .enumerate()
        .for_each(|(i, o)| *o = f(i));
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn fill<T: Send>(out: &mut [T], f: impl Fn(usize) -> T + Sync + Send) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = f(i);
    }
}

pub(crate) fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}
