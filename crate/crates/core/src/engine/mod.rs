//! Partitioned execution engine.
//!
//! One orchestrator (the calling thread) hands partition ids to a pool of
//! workers, collects their partial sums and reduces them in a fixed tree order
//! over partition ids, so the result never depends on which worker solved what
//! or in which order messages arrived. Workers report liveness through
//! heartbeats; a worker that stays silent for `heartbeat_miss_limit` ticks while
//! holding a partition is declared dead and its partition is re-queued.

mod checkpoint;

pub use checkpoint::{CheckpointError, CheckpointRecord, CheckpointStore, COORDINATOR_PARTITION};

use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, Receiver, RecvTimeoutError, Sender};
use rand::Rng;
use thiserror::Error;

use crate::problem::{CounterRng, Partition};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("no-available-worker: all {workers} workers failed with {pending} partitions unsolved")]
    NoAvailableWorker { workers: usize, pending: usize },
    #[error("iteration-timeout: iteration {iteration} exceeded {ticks} ticks")]
    IterationTimeout { iteration: usize, ticks: u64 },
    #[error("partition {partition} failed: {message}")]
    Work { partition: usize, message: String },
    #[error("engine needs at least one worker and one partition")]
    Empty,
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub workers: usize,
    /// Missed heartbeats before a busy worker is declared dead.
    pub heartbeat_miss_limit: u64,
    /// Heartbeat period.
    pub tick: Duration,
    /// Probability that a worker dies on receiving an assignment.
    pub failure_probability: f64,
    pub failure_seed: u64,
    /// Ticks after which an iteration is abandoned; `None` waits forever.
    pub iteration_timeout_ticks: Option<u64>,
    /// Replacement workers that may be spawned per iteration for dead ones.
    pub replacement_budget: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            workers: 1,
            heartbeat_miss_limit: 3,
            tick: Duration::from_millis(20),
            failure_probability: 0.0,
            failure_seed: 0,
            iteration_timeout_ticks: None,
            replacement_budget: 64,
        }
    }
}

impl EngineConfig {
    pub fn with_workers(workers: usize) -> Self {
        Self { workers, ..Self::default() }
    }
}

/// Owner-side values every worker needs for one primal update.
#[derive(Debug, Clone, PartialEq)]
pub struct DualBroadcast<T> {
    pub iteration: usize,
    /// `r_s = X^{(t)ᵀ} w_s − d_s + ν_s/ρ`, S×J row-major.
    pub residuals: Vec<T>,
    /// `φ_j'(z_j)` at the iteration-start snapshot.
    pub owner_slope: Vec<T>,
    pub beta: T,
    pub rho: T,
}

/// Per-partition contributions to the global reductions.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialSums<T> {
    /// `Σ_{i∈k} w_{s,i} x_i`, S×J row-major.
    pub constraint_lhs: Vec<T>,
    /// `Σ_{i∈k} ω_i ∘ x_i`, length J.
    pub owner_aggregate: Vec<T>,
    /// `Σ_{i∈k} ‖x_i^{new} − x_i^{old}‖²`.
    pub squared_change: T,
}

impl<T: Scalar> PartialSums<T> {
    pub fn zeros(combined: usize, owners: usize) -> Self {
        Self {
            constraint_lhs: vec![T::zero(); combined * owners],
            owner_aggregate: vec![T::zero(); owners],
            squared_change: T::zero(),
        }
    }

    pub fn merge(&self, other: &Self) -> Self {
        let add = |a: &[T], b: &[T]| a.iter().zip(b).map(|(&x, &y)| x + y).collect();
        Self {
            constraint_lhs: add(&self.constraint_lhs, &other.constraint_lhs),
            owner_aggregate: add(&self.owner_aggregate, &other.owner_aggregate),
            squared_change: self.squared_change + other.squared_change,
        }
    }
}

/// Pairwise reduction in index order: `((0+1)+(2+3))+...`. The shape depends only
/// on the number of inputs, which keeps results bit-identical across runs.
pub fn tree_reduce<T: Scalar>(mut items: Vec<PartialSums<T>>) -> Option<PartialSums<T>> {
    if items.is_empty() {
        return None;
    }
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len().div_ceil(2));
        let mut it = items.chunks(2);
        for pair in &mut it {
            next.push(match pair {
                [a, b] => a.merge(b),
                [a] => a.clone(),
                _ => unreachable!(),
            });
        }
        items = next;
    }
    items.pop()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionOutput<T> {
    /// New rows of `X` for the partition, row-major.
    pub rows: Vec<T>,
    pub sums: PartialSums<T>,
}

#[derive(Debug, Clone)]
pub enum EngineMessage<T> {
    AssignPartition { partition_id: usize, iteration: usize, attempt: u32 },
    PartialSums { worker_id: usize, partition_id: usize, iteration: usize, output: Result<PartitionOutput<T>, String> },
    DualBroadcast(Arc<DualBroadcast<T>>),
    Heartbeat { worker_id: usize, iteration: usize },
    ReassignAck { worker_id: usize, partition_id: usize },
    Shutdown,
}

/// What the health checker did during one iteration.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReassignmentReport {
    pub failed_workers: Vec<usize>,
    pub requeued_partitions: Vec<usize>,
    pub discarded_messages: usize,
    pub reassign_acks: usize,
}

impl ReassignmentReport {
    pub fn is_empty(&self) -> bool {
        self.failed_workers.is_empty() && self.requeued_partitions.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct IterationOutcome<T> {
    /// New rows per partition, indexed by partition id.
    pub blocks: Vec<Vec<T>>,
    pub sums: PartialSums<T>,
    pub report: ReassignmentReport,
    /// Accepted `PartialSums` per partition; always 1 on success.
    pub accepted: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum WorkerState {
    Idle,
    Busy(usize),
    Dead,
}

/// Seeded chaos: decides whether a worker dies when handed an assignment.
#[derive(Debug, Clone, Copy)]
struct FailureInjector {
    probability: f64,
    seed: u64,
}

impl FailureInjector {
    fn should_fail(&self, iteration: usize, partition: usize, attempt: u32) -> bool {
        if self.probability <= 0.0 {
            return false;
        }
        let stream = ((iteration as u64) << 32) ^ ((partition as u64) << 8) ^ u64::from(attempt);
        CounterRng::with_stream(self.seed, stream).gen::<f64>() < self.probability
    }
}

pub struct Engine {
    config: EngineConfig,
    partitions: Vec<Partition>,
}

impl Engine {
    pub fn new(config: EngineConfig, partitions: Vec<Partition>) -> Result<Self, EngineError> {
        if config.workers == 0 || partitions.is_empty() {
            return Err(EngineError::Empty);
        }
        Ok(Self { config, partitions })
    }

    pub fn partitions(&self) -> &[Partition] {
        &self.partitions
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    /// Runs `work` once per partition against `broadcast` and reduces the results.
    ///
    /// Partitions held by workers that fail the health check are re-queued and
    /// solved again from the same snapshot; at most one result per partition is
    /// accepted.
    pub fn run_iteration<T, F>(&self, broadcast: DualBroadcast<T>, work: &F) -> Result<IterationOutcome<T>, EngineError>
    where
        T: Scalar,
        F: Fn(&Partition, &DualBroadcast<T>) -> Result<PartitionOutput<T>, String> + Sync,
    {
        let iteration = broadcast.iteration;
        let broadcast = Arc::new(broadcast);
        let injector = FailureInjector { probability: self.config.failure_probability, seed: self.config.failure_seed };
        let workers = self.config.workers;
        let tick = self.config.tick;
        let parts = &self.partitions;

        thread::scope(|scope| {
            let (to_orch, from_workers) = unbounded::<EngineMessage<T>>();
            let (stop_tx, stop_rx) = unbounded::<()>();
            let spawn = |worker_id: usize| {
                let (tx, rx) = unbounded::<EngineMessage<T>>();
                let out = to_orch.clone();
                let stop = stop_rx.clone();
                scope.spawn(move || worker_loop(worker_id, rx, out, stop, parts, work, injector, tick));
                tx.send(EngineMessage::DualBroadcast(Arc::clone(&broadcast))).ok();
                tx
            };
            let mut inboxes: Vec<Sender<EngineMessage<T>>> = (0..workers).map(spawn).collect();
            let result = self.orchestrate(iteration, &mut inboxes, &from_workers, &spawn);
            for tx in &inboxes {
                tx.send(EngineMessage::Shutdown).ok();
            }
            drop(stop_tx);
            result
        })
    }

    fn orchestrate<T: Scalar>(
        &self,
        iteration: usize,
        inboxes: &mut Vec<Sender<EngineMessage<T>>>,
        inbox: &Receiver<EngineMessage<T>>,
        spawn: &dyn Fn(usize) -> Sender<EngineMessage<T>>,
    ) -> Result<IterationOutcome<T>, EngineError> {
        let n_parts = self.partitions.len();
        let workers = inboxes.len();
        let mut replacements = 0usize;
        let start = Instant::now();
        let tick_of = |now: Instant| (now.duration_since(start).as_nanos() / self.config.tick.as_nanos().max(1)) as u64;

        let mut pending: VecDeque<usize> = (0..n_parts).collect();
        let mut attempts = vec![0u32; n_parts];
        let mut state = vec![WorkerState::Idle; workers];
        let mut last_seen = vec![0u64; workers];
        let mut results: Vec<Option<PartitionOutput<T>>> = vec![None; n_parts];
        let mut accepted = vec![0u32; n_parts];
        let mut remaining = n_parts;
        let mut report = ReassignmentReport::default();

        let assign = |inboxes: &[Sender<EngineMessage<T>>],
                      state: &mut [WorkerState],
                      last_seen: &mut [u64],
                      pending: &mut VecDeque<usize>,
                      attempts: &[u32],
                      now: u64| {
            for w in 0..state.len() {
                if state[w] != WorkerState::Idle {
                    continue;
                }
                let Some(pid) = pending.pop_front() else { break };
                state[w] = WorkerState::Busy(pid);
                last_seen[w] = now;
                let msg = EngineMessage::AssignPartition { partition_id: pid, iteration, attempt: attempts[pid] };
                if inboxes[w].send(msg).is_err() {
                    // Inbox already gone; the health check will reclaim the partition.
                }
            }
        };
        assign(inboxes, &mut state, &mut last_seen, &mut pending, &attempts, 0);

        while remaining > 0 {
            match inbox.recv_timeout(self.config.tick) {
                Ok(EngineMessage::PartialSums { worker_id, partition_id, iteration: it, output }) => {
                    let now = tick_of(Instant::now());
                    if state[worker_id] == WorkerState::Dead || it != iteration || results[partition_id].is_some() {
                        report.discarded_messages += 1;
                        if state[worker_id] != WorkerState::Dead {
                            state[worker_id] = WorkerState::Idle;
                        }
                    } else {
                        let out = output.map_err(|message| EngineError::Work { partition: partition_id, message })?;
                        results[partition_id] = Some(out);
                        accepted[partition_id] += 1;
                        remaining -= 1;
                        state[worker_id] = WorkerState::Idle;
                        last_seen[worker_id] = now;
                    }
                    assign(inboxes, &mut state, &mut last_seen, &mut pending, &attempts, now);
                }
                Ok(EngineMessage::Heartbeat { worker_id, iteration: it }) => {
                    if it == iteration && state[worker_id] != WorkerState::Dead {
                        last_seen[worker_id] = tick_of(Instant::now());
                    }
                }
                Ok(EngineMessage::ReassignAck { .. }) => report.reassign_acks += 1,
                Ok(_) | Err(RecvTimeoutError::Timeout) | Err(RecvTimeoutError::Disconnected) => {}
            }

            let now = tick_of(Instant::now());
            let dead_before = report.failed_workers.len();
            self.health_check_and_reassign(now, &mut state, &last_seen, &results, &mut pending, &mut attempts, &mut report, inboxes);
            for _ in dead_before..report.failed_workers.len() {
                if replacements >= self.config.replacement_budget {
                    break;
                }
                replacements += 1;
                inboxes.push(spawn(state.len()));
                state.push(WorkerState::Idle);
                last_seen.push(now);
            }
            assign(inboxes, &mut state, &mut last_seen, &mut pending, &attempts, now);
            if remaining > 0 && state.iter().all(|s| *s == WorkerState::Dead) {
                return Err(EngineError::NoAvailableWorker { workers, pending: remaining });
            }
            if let Some(limit) = self.config.iteration_timeout_ticks {
                if now > limit {
                    return Err(EngineError::IterationTimeout { iteration, ticks: limit });
                }
            }
        }

        let blocks: Vec<Vec<T>> = results.iter_mut().map(|r| r.as_mut().map(|o| std::mem::take(&mut o.rows)).unwrap_or_default()).collect();
        let sums = tree_reduce(results.into_iter().map(|r| r.expect("all partitions solved").sums).collect())
            .expect("at least one partition");
        Ok(IterationOutcome { blocks, sums, report, accepted })
    }

    /// Declares busy workers with `heartbeat_miss_limit` silent ticks dead and
    /// re-queues their unsolved partitions.
    #[allow(clippy::too_many_arguments)]
    fn health_check_and_reassign<T>(
        &self,
        now: u64,
        state: &mut [WorkerState],
        last_seen: &[u64],
        results: &[Option<PartitionOutput<T>>],
        pending: &mut VecDeque<usize>,
        attempts: &mut [u32],
        report: &mut ReassignmentReport,
        inboxes: &[Sender<EngineMessage<T>>],
    ) {
        for w in 0..state.len() {
            let WorkerState::Busy(pid) = state[w] else { continue };
            if now.saturating_sub(last_seen[w]) < self.config.heartbeat_miss_limit {
                continue;
            }
            state[w] = WorkerState::Dead;
            inboxes[w].send(EngineMessage::Shutdown).ok();
            report.failed_workers.push(w);
            if results[pid].is_none() {
                attempts[pid] += 1;
                pending.push_back(pid);
                report.requeued_partitions.push(pid);
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn worker_loop<T, F>(
    worker_id: usize,
    inbox: Receiver<EngineMessage<T>>,
    out: Sender<EngineMessage<T>>,
    stop: Receiver<()>,
    parts: &[Partition],
    work: &F,
    injector: FailureInjector,
    tick: Duration,
) where
    T: Scalar,
    F: Fn(&Partition, &DualBroadcast<T>) -> Result<PartitionOutput<T>, String> + Sync,
{
    let mut broadcast: Option<Arc<DualBroadcast<T>>> = None;
    let iteration_hint = AtomicUsize::new(0);
    let iteration_ref = &iteration_hint;
    thread::scope(|scope| {
        let (alive_tx, alive_rx) = unbounded::<()>();
        let hb_out = out.clone();
        scope.spawn(move || loop {
            // Heartbeats stop when the worker drops `alive_tx` (death or exit)
            // or the orchestrator drops the stop channel.
            match stop.recv_timeout(tick) {
                Err(RecvTimeoutError::Timeout) => {}
                _ => break,
            }
            if alive_rx.try_recv() == Err(crossbeam_channel::TryRecvError::Disconnected) {
                break;
            }
            let iteration = iteration_ref.load(Ordering::Relaxed);
            if hb_out.send(EngineMessage::Heartbeat { worker_id, iteration }).is_err() {
                break;
            }
        });

        let _alive = alive_tx;
        while let Ok(msg) = inbox.recv() {
            match msg {
                EngineMessage::DualBroadcast(b) => {
                    iteration_hint.store(b.iteration, Ordering::Relaxed);
                    broadcast = Some(b);
                }
                EngineMessage::AssignPartition { partition_id, iteration, attempt } => {
                    if injector.should_fail(iteration, partition_id, attempt) {
                        return;
                    }
                    if attempt > 0 {
                        out.send(EngineMessage::ReassignAck { worker_id, partition_id }).ok();
                    }
                    let output = match &broadcast {
                        Some(b) => work(&parts[partition_id], b),
                        None => Err("no broadcast received".to_string()),
                    };
                    let msg = EngineMessage::PartialSums { worker_id, partition_id, iteration, output };
                    if out.send(msg).is_err() {
                        return;
                    }
                }
                EngineMessage::Shutdown => return,
                _ => {}
            }
        }
    });
}
