//! Read-audit instrumentation for dataset access.
//!
//! Training strategies must never touch held-out test data. Every sample
//! container in the crate counts reads per [`Phase`]; trainers enter the
//! `Training` phase, fine-tuning enters `FineTuning`, and scorers enter
//! `Evaluation`. A leakage audit then reduces to asserting that a test-side
//! container recorded zero reads in the two learning phases.
//!
//! The phase is tracked per thread. Batch math that fans out to worker
//! threads must grab its sample slice on the guarded thread first.

use std::cell::Cell;
use std::sync::atomic::{AtomicU64, Ordering};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Idle = 0,
    Training = 1,
    FineTuning = 2,
    Evaluation = 3,
}

pub const PHASES: [Phase; 4] = [
    Phase::Idle,
    Phase::Training,
    Phase::FineTuning,
    Phase::Evaluation,
];

thread_local! {
    static CURRENT: Cell<Phase> = const { Cell::new(Phase::Idle) };
}

/// Phase currently active on this thread.
pub fn current_phase() -> Phase {
    CURRENT.with(|c| c.get())
}

/// RAII guard that sets the thread's phase and restores the previous one.
pub struct PhaseGuard {
    previous: Phase,
}

impl PhaseGuard {
    pub fn enter(phase: Phase) -> Self {
        let previous = CURRENT.with(|c| c.replace(phase));
        PhaseGuard { previous }
    }
}

impl Drop for PhaseGuard {
    fn drop(&mut self) {
        let prev = self.previous;
        CURRENT.with(|c| c.set(prev));
    }
}

/// Per-phase read counters attached to a sample container.
#[derive(Debug, Default)]
pub struct ReadCounters {
    counts: [AtomicU64; 4],
}

impl ReadCounters {
    pub fn new() -> Self {
        Self::default()
    }

    /// Record `n` sample reads under the calling thread's phase.
    pub fn record(&self, n: u64) {
        let phase = current_phase();
        self.counts[phase as usize].fetch_add(n, Ordering::Relaxed);
    }

    pub fn reads(&self, phase: Phase) -> u64 {
        self.counts[phase as usize].load(Ordering::Relaxed)
    }

    /// Reads accumulated during learning phases (training + fine-tuning).
    pub fn learning_reads(&self) -> u64 {
        self.reads(Phase::Training) + self.reads(Phase::FineTuning)
    }

    pub fn reset(&self) {
        for c in &self.counts {
            c.store(0, Ordering::Relaxed);
        }
    }
}

impl Clone for ReadCounters {
    // Clones start clean: counters describe a container's history, not its contents.
    fn clone(&self) -> Self {
        Self::new()
    }
}
