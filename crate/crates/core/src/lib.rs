pub mod capture;
pub mod dataset;
pub mod evaluation;
pub mod featstore;
pub mod numkernel;
pub mod ranknet;
pub mod training;

/// Runs `f` on a dedicated pool of `threads` workers, or on the global pool
/// when `threads` is 0.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    if threads == 0 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}
