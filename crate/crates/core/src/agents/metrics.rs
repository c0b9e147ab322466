use std::sync::Mutex;

/// One finished training episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRecord {
    /// Completion order across all workers.
    pub episode: u64,
    pub worker: usize,
    /// Shared step counter when the episode ended.
    pub global_step: u64,
    pub steps: u32,
    pub success: bool,
    pub ret: f64,
}

/// Thread-safe episode log.
#[derive(Debug, Default)]
pub struct MetricsLog {
    records: Mutex<Vec<EpisodeRecord>>,
}

impl MetricsLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, worker: usize, global_step: u64, steps: u32, success: bool, ret: f64) {
        let mut r = self.records.lock().unwrap_or_else(|e| e.into_inner());
        let episode = r.len() as u64;
        r.push(EpisodeRecord {
            episode,
            worker,
            global_step,
            steps,
            success,
            ret,
        });
    }

    pub fn snapshot(&self) -> Vec<EpisodeRecord> {
        self.records.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn len(&self) -> usize {
        self.records.lock().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
