//! Data-parallel helpers with a sequential fallback.
//!
//! The hot outer loops of this crate (seed sweeps, ablation cells, central
//! difference probes, matrix product rows) are embarrassingly parallel. When
//! the `parallel` feature is enabled they run on the rayon thread pool;
//! without it the same helpers degrade to plain sequential iteration so the
//! crate still builds with `--no-default-features`. Results are collected in
//! input order and every work item owns its random stream, so outputs are
//! bit-identical across thread counts and across the two modes.

/// Map `f` over `items`, preserving order.
#[cfg(feature = "parallel")]
pub fn par_map<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.into_par_iter().map(f).collect()
}

/// Map `f` over `items`, preserving order.
#[cfg(not(feature = "parallel"))]
pub fn par_map<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    items.into_iter().map(f).collect()
}

/// Run `f` on each row chunk of `data` (each chunk is `cols` long).
#[cfg(feature = "parallel")]
pub fn par_rows<F>(data: &mut [f64], cols: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    use rayon::prelude::*;
    data.par_chunks_mut(cols)
        .enumerate()
        .for_each(|(i, row)| f(i, row));
}

/// Run `f` on each row chunk of `data` (each chunk is `cols` long).
#[cfg(not(feature = "parallel"))]
pub fn par_rows<F>(data: &mut [f64], cols: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    for (i, row) in data.chunks_mut(cols).enumerate() {
        f(i, row);
    }
}

/// True when the parallel feature is compiled in.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
