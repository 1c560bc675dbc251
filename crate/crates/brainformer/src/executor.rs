use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use brainformer_core::search::{Candidate, TrialExecutor, TrialOutcome};
use brainformer_core::Result;

/// Evaluates a generation on up to `workers` scoped threads. Outcomes are
/// returned in job order whatever order they finish in.
#[derive(Debug, Clone, Copy)]
pub struct ThreadedExecutor {
    pub workers: usize,
}

impl TrialExecutor for ThreadedExecutor {
    fn execute(
        &self,
        jobs: &[Candidate],
        run: &(dyn Fn(&Candidate) -> TrialOutcome + Sync),
    ) -> Result<Vec<TrialOutcome>> {
        let workers = self.workers.clamp(1, jobs.len().max(1));
        if workers == 1 {
            return Ok(jobs.iter().map(run).collect());
        }
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<TrialOutcome>>> = Mutex::new(vec![None; jobs.len()]);
        thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(job) = jobs.get(i) else { break };
                    let out = run(job);
                    slots
                        .lock()
                        .expect("no worker panics while holding the lock")[i] = Some(out);
                });
            }
        });
        Ok(slots
            .into_inner()
            .expect("workers joined")
            .into_iter()
            .map(|o| o.expect("every job ran"))
            .collect())
    }
}
