use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

/// Monotone query accounting shared between oracles and attack sessions.
/// Counters are never reset mid-attack; concurrent increments are atomic.
#[derive(Debug, Default)]
pub struct QueryMeter {
    window_queries: AtomicU64,
    trace_queries: AtomicU64,
    per_sample: Mutex<BTreeMap<String, u64>>,
}

impl QueryMeter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_window(&self, sample_id: Option<&str>) {
        self.window_queries.fetch_add(1, Ordering::Relaxed);
        if let Some(id) = sample_id {
            let mut map = self.per_sample.lock().unwrap();
            *map.entry(id.to_string()).or_insert(0) += 1;
        }
    }

    /// A trace classification: one trace query billed as `windows` window
    /// queries, so remote and local accounting stay identical.
    pub fn record_trace(&self, sample_id: Option<&str>, windows: u64) {
        self.trace_queries.fetch_add(1, Ordering::Relaxed);
        self.window_queries.fetch_add(windows, Ordering::Relaxed);
        if let Some(id) = sample_id {
            let mut map = self.per_sample.lock().unwrap();
            *map.entry(id.to_string()).or_insert(0) += windows;
        }
    }

    pub fn window_queries(&self) -> u64 {
        self.window_queries.load(Ordering::Relaxed)
    }

    pub fn trace_queries(&self) -> u64 {
        self.trace_queries.load(Ordering::Relaxed)
    }

    pub fn sample_queries(&self, sample_id: &str) -> u64 {
        self.per_sample.lock().unwrap().get(sample_id).copied().unwrap_or(0)
    }

    pub fn per_sample(&self) -> BTreeMap<String, u64> {
        self.per_sample.lock().unwrap().clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    #[test]
    fn concurrent_increments_are_exact() {
        let meter = Arc::new(QueryMeter::new());
        let mut handles = Vec::new();
        for _ in 0..8 {
            let m = Arc::clone(&meter);
            handles.push(std::thread::spawn(move || {
                for _ in 0..1000 {
                    m.record_window(Some("s"));
                }
            }));
        }
        for h in handles {
            h.join().unwrap();
        }
        assert_eq!(meter.window_queries(), 8000);
        assert_eq!(meter.sample_queries("s"), 8000);
    }
}
