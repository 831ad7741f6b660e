use std::io::Write;
use std::sync::{Mutex, MutexGuard};

static SERIAL: Mutex<()> = Mutex::new(());

/// Serializes the heavy tests; survives a poisoned lock from a failed test.
pub fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

/// Writes the criterion line straight to stdout, outside the harness capture.
pub fn report(id: &str, title: &str, pass: bool, detail: String) {
    let line = format!("{} criterion {id} ({title}): {detail}\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).ok();
    out.flush().ok();
}

pub fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n.max(1) as f64
}

pub fn workers_for_host() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get()).min(4)
}
