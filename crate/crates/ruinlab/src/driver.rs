//! Multi-threaded execution of Monte Carlo jobs.

use ruinlab_core::estimators::EstimateReport;
use ruinlab_core::montecarlo::{RuinJob, Tally};

/// Runs all chunks of `job` on up to `workers` threads. Each thread takes a
/// contiguous block of chunks; tallies are reduced in chunk order, so the output
/// does not depend on `workers`.
pub fn run_job(job: &RuinJob, workers: usize) -> Vec<EstimateReport> {
    job.finish(&run_tallies(job, workers))
}

pub fn run_tallies(job: &RuinJob, workers: usize) -> Vec<Tally> {
    let n = job.chunk_count();
    let workers = workers.clamp(1, n.max(1));
    let mut tallies = vec![Tally::default(); n];
    if workers == 1 {
        for (i, t) in tallies.iter_mut().enumerate() {
            *t = job.run_chunk(i);
        }
        return tallies;
    }
    let per = n.div_ceil(workers);
    std::thread::scope(|s| {
        for (b, block) in tallies.chunks_mut(per).enumerate() {
            s.spawn(move || {
                for (k, t) in block.iter_mut().enumerate() {
                    *t = job.run_chunk(b * per + k);
                }
            });
        }
    });
    tallies
}

/// Number of hardware threads, at least 1.
pub fn available_workers() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}
