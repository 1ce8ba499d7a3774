//! Quantum-by-quantum stream selection.
//!
//! The scheduler decides which active stream transmits next under one of
//! three modes: arrival-order FIFO (the stock sequential server), urgency
//! with non-incremental delivery (one response runs to completion within its
//! urgency class), or urgency with incremental round-robin delivery.
//!
//! One caller at a time drives the state machine; identical call sequences
//! produce identical outputs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::eps::PriorityParams;

/// Identity of one live transfer. Ids are assigned in strictly increasing
/// order of enqueue, so arrival order is recoverable from the id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StreamId(u64);

impl StreamId {
    pub fn value(self) -> u64 {
        self.0
    }
}

impl fmt::Display for StreamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stream {}", self.0)
    }
}

/// Delivery discipline, fixed at construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchedulerMode {
    /// Arrival order only; urgency is ignored.
    SequentialFifo,
    /// Most urgent first; within a class, one stream runs to completion.
    UrgencyNonIncremental,
    /// Most urgent first; within a class, quanta rotate round-robin.
    UrgencyIncremental,
}

impl SchedulerMode {
    pub const ALL: [SchedulerMode; 3] = [
        SchedulerMode::SequentialFifo,
        SchedulerMode::UrgencyNonIncremental,
        SchedulerMode::UrgencyIncremental,
    ];

    pub fn label(self) -> &'static str {
        match self {
            SchedulerMode::SequentialFifo => "fifo",
            SchedulerMode::UrgencyNonIncremental => "urgency",
            SchedulerMode::UrgencyIncremental => "urgency-incremental",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.label() == label)
    }
}

impl fmt::Display for SchedulerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// A live transfer inside the scheduler.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamEntry {
    pub id: StreamId,
    pub params: PriorityParams,
    pub bytes_total: u64,
    pub bytes_remaining: u64,
    pub arrival_seq: u64,
}

/// Outcome of one selection: the stream to serve and how many bytes it may
/// transmit this quantum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grant {
    pub id: StreamId,
    pub granted_bytes: u64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SchedulerError {
    #[error("byte count must be positive")]
    ZeroBytes,
    #[error("unknown or completed {0}")]
    UnknownStream(StreamId),
    #[error("{id}: reported {reported} bytes with only {remaining} remaining")]
    Overrun {
        id: StreamId,
        reported: u64,
        remaining: u64,
    },
}

#[derive(Debug)]
pub struct Scheduler {
    mode: SchedulerMode,
    streams: BTreeMap<StreamId, StreamEntry>,
    by_urgency: BTreeSet<(u8, StreamId)>,
    next_id: u64,
    next_arrival: u64,
    // round-robin cursor: id of the most recent grant (incremental mode)
    last_granted: Option<StreamId>,
}

impl Scheduler {
    pub fn new(mode: SchedulerMode) -> Self {
        Self {
            mode,
            streams: BTreeMap::new(),
            by_urgency: BTreeSet::new(),
            next_id: 1,
            next_arrival: 0,
            last_granted: None,
        }
    }

    pub fn mode(&self) -> SchedulerMode {
        self.mode
    }

    pub fn is_idle(&self) -> bool {
        self.streams.is_empty()
    }

    pub fn active_len(&self) -> usize {
        self.streams.len()
    }

    pub fn get(&self, id: StreamId) -> Option<&StreamEntry> {
        self.streams.get(&id)
    }

    pub fn active(&self) -> impl Iterator<Item = &StreamEntry> {
        self.streams.values()
    }

    /// Admit a stream. It stays active until its bytes are fully reported
    /// sent.
    pub fn enqueue(
        &mut self,
        size_bytes: u64,
        params: PriorityParams,
    ) -> Result<StreamId, SchedulerError> {
        if size_bytes == 0 {
            return Err(SchedulerError::ZeroBytes);
        }
        let id = StreamId(self.next_id);
        self.next_id += 1;
        let arrival_seq = self.next_arrival;
        self.next_arrival += 1;
        self.by_urgency.insert((params.urgency.value(), id));
        self.streams.insert(
            id,
            StreamEntry {
                id,
                params,
                bytes_total: size_bytes,
                bytes_remaining: size_bytes,
                arrival_seq,
            },
        );
        Ok(id)
    }

    /// Pick the stream that transmits next and the byte budget it receives.
    /// Returns `None` exactly when no stream is active.
    ///
    /// Selection never preempts mid-quantum: a change of the most urgent
    /// stream takes effect at the next call.
    pub fn select_next(&mut self, quantum_bytes: u64) -> Option<Grant> {
        assert!(quantum_bytes > 0, "quantum must be positive");
        let id = match self.mode {
            // ids increase with arrival, so the first key is the oldest stream
            SchedulerMode::SequentialFifo => *self.streams.keys().next()?,
            SchedulerMode::UrgencyNonIncremental => self.by_urgency.first()?.1,
            SchedulerMode::UrgencyIncremental => {
                let &(top_urgency, first_in_class) = self.by_urgency.first()?;
                // rotate within the minimum-urgency class: the next arrival
                // after the previous grant, wrapping to the oldest
                self.last_granted
                    .and_then(|last| {
                        self.by_urgency
                            .range((top_urgency, StreamId(last.0 + 1))..=(top_urgency, StreamId(u64::MAX)))
                            .next()
                            .map(|&(_, id)| id)
                    })
                    .unwrap_or(first_in_class)
            }
        };
        let entry = &self.streams[&id];
        let granted_bytes = quantum_bytes.min(entry.bytes_remaining);
        self.last_granted = Some(id);
        Some(Grant { id, granted_bytes })
    }

    /// Report a transmission. Returns true exactly when the stream completed
    /// and left the active set.
    pub fn on_sent(&mut self, id: StreamId, bytes: u64) -> Result<bool, SchedulerError> {
        if bytes == 0 {
            return Err(SchedulerError::ZeroBytes);
        }
        let entry = self
            .streams
            .get_mut(&id)
            .ok_or(SchedulerError::UnknownStream(id))?;
        if bytes > entry.bytes_remaining {
            return Err(SchedulerError::Overrun {
                id,
                reported: bytes,
                remaining: entry.bytes_remaining,
            });
        }
        entry.bytes_remaining -= bytes;
        if entry.bytes_remaining == 0 {
            let key = (entry.params.urgency.value(), id);
            self.streams.remove(&id);
            self.by_urgency.remove(&key);
            Ok(true)
        } else {
            Ok(false)
        }
    }

    /// Replace a stream's priority signals. Takes effect from the next
    /// selection; arrival order is unchanged.
    pub fn reprioritize(
        &mut self,
        id: StreamId,
        new_params: PriorityParams,
    ) -> Result<(), SchedulerError> {
        let entry = self
            .streams
            .get_mut(&id)
            .ok_or(SchedulerError::UnknownStream(id))?;
        let old_key = (entry.params.urgency.value(), id);
        let new_key = (new_params.urgency.value(), id);
        entry.params = new_params;
        if old_key != new_key {
            self.by_urgency.remove(&old_key);
            self.by_urgency.insert(new_key);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eps::UrgencyLevel;

    fn urgent(u: u8) -> PriorityParams {
        PriorityParams::new(UrgencyLevel::new(u).unwrap(), false)
    }

    /// Drain the scheduler, returning the ids of consecutive grants.
    fn drain(s: &mut Scheduler, quantum: u64) -> Vec<u64> {
        let mut order = Vec::new();
        while let Some(grant) = s.select_next(quantum) {
            order.push(grant.id.value());
            s.on_sent(grant.id, grant.granted_bytes).unwrap();
        }
        order
    }

    #[test]
    fn ids_increase_with_arrival() {
        let mut s = Scheduler::new(SchedulerMode::SequentialFifo);
        let a = s.enqueue(1000, urgent(2)).unwrap();
        let b = s.enqueue(500, urgent(0)).unwrap();
        assert_eq!(a.value(), 1);
        assert_eq!(b.value(), 2);
        assert_eq!(s.active_len(), 2);
        assert!(s.get(a).unwrap().arrival_seq < s.get(b).unwrap().arrival_seq);
    }

    #[test]
    fn zero_size_enqueue_is_rejected() {
        let mut s = Scheduler::new(SchedulerMode::SequentialFifo);
        assert_eq!(s.enqueue(0, urgent(3)), Err(SchedulerError::ZeroBytes));
    }

    #[test]
    fn single_stream_grant_is_clamped() {
        let mut s = Scheduler::new(SchedulerMode::UrgencyNonIncremental);
        let id = s.enqueue(700, urgent(1)).unwrap();
        assert_eq!(s.select_next(1200), Some(Grant { id, granted_bytes: 700 }));
        assert_eq!(s.select_next(500), Some(Grant { id, granted_bytes: 500 }));
    }

    #[test]
    fn non_incremental_runs_one_stream_to_completion() {
        let mut s = Scheduler::new(SchedulerMode::UrgencyNonIncremental);
        let a = s.enqueue(2500, urgent(2)).unwrap();
        let b = s.enqueue(2500, urgent(2)).unwrap();
        let order = drain(&mut s, 1000);
        assert_eq!(order, vec![a.value(), a.value(), a.value(), b.value(), b.value(), b.value()]);
    }

    #[test]
    fn more_urgent_arrival_preempts_at_quantum_boundary() {
        let mut s = Scheduler::new(SchedulerMode::UrgencyNonIncremental);
        let a = s.enqueue(3000, urgent(5)).unwrap();
        let g = s.select_next(1000).unwrap();
        assert_eq!(g.id, a);
        s.on_sent(a, 1000).unwrap();
        let b = s.enqueue(1000, urgent(1)).unwrap();
        assert_eq!(s.select_next(1000).unwrap().id, b);
        s.on_sent(b, 1000).unwrap();
        // preempted stream resumes at the head of its class
        assert_eq!(s.select_next(1000).unwrap().id, a);
    }

    #[test]
    fn fifo_ignores_urgency() {
        let mut a = Scheduler::new(SchedulerMode::SequentialFifo);
        let mut b = Scheduler::new(SchedulerMode::SequentialFifo);
        for (size, ua, ub) in [(900, 7, 0), (400, 0, 7), (1300, 4, 2)] {
            a.enqueue(size, urgent(ua)).unwrap();
            b.enqueue(size, urgent(ub)).unwrap();
        }
        assert_eq!(drain(&mut a, 500), drain(&mut b, 500));
    }

    #[test]
    fn incremental_rotates_within_the_top_class() {
        let mut s = Scheduler::new(SchedulerMode::UrgencyIncremental);
        let a = s.enqueue(3000, urgent(3)).unwrap();
        let b = s.enqueue(3000, urgent(3)).unwrap();
        let c = s.enqueue(3000, urgent(5)).unwrap();
        let mut order = Vec::new();
        for _ in 0..6 {
            let g = s.select_next(1000).unwrap();
            order.push(g.id.value());
            s.on_sent(g.id, g.granted_bytes).unwrap();
        }
        assert_eq!(order, vec![a.value(), b.value(), a.value(), b.value(), a.value(), b.value()]);
        // the lower class is reached only once the top class drains
        assert_eq!(s.select_next(1000).unwrap().id, c);
    }

    #[test]
    fn on_sent_tracks_completion() {
        let mut s = Scheduler::new(SchedulerMode::SequentialFifo);
        let id = s.enqueue(100, urgent(3)).unwrap();
        assert_eq!(s.on_sent(id, 40), Ok(false));
        assert_eq!(s.get(id).unwrap().bytes_remaining, 60);
        assert_eq!(s.on_sent(id, 60), Ok(true));
        assert!(s.is_idle());
        assert_eq!(s.on_sent(id, 1), Err(SchedulerError::UnknownStream(id)));
    }

    #[test]
    fn overrun_is_rejected() {
        let mut s = Scheduler::new(SchedulerMode::SequentialFifo);
        let id = s.enqueue(100, urgent(3)).unwrap();
        assert_eq!(
            s.on_sent(id, 101),
            Err(SchedulerError::Overrun { id, reported: 101, remaining: 100 })
        );
    }

    #[test]
    fn reprioritize_changes_selection() {
        let mut s = Scheduler::new(SchedulerMode::UrgencyNonIncremental);
        let a = s.enqueue(2000, urgent(2)).unwrap();
        let b = s.enqueue(2000, urgent(5)).unwrap();
        let g = s.select_next(1000).unwrap();
        assert_eq!(g.id, a);
        s.on_sent(a, 1000).unwrap();
        s.reprioritize(b, urgent(0)).unwrap();
        assert_eq!(s.select_next(1000).unwrap().id, b);
        // identical params keep the selection sequence unchanged
        s.reprioritize(b, urgent(0)).unwrap();
        assert_eq!(s.select_next(1000).unwrap().id, b);
    }

    #[test]
    fn reprioritize_unknown_stream_fails() {
        let mut s = Scheduler::new(SchedulerMode::UrgencyNonIncremental);
        let id = s.enqueue(10, urgent(1)).unwrap();
        s.on_sent(id, 10).unwrap();
        assert_eq!(s.reprioritize(id, urgent(0)), Err(SchedulerError::UnknownStream(id)));
    }

    #[test]
    fn selection_is_work_conserving() {
        let mut s = Scheduler::new(SchedulerMode::UrgencyIncremental);
        assert_eq!(s.select_next(100), None);
        s.enqueue(1, urgent(7)).unwrap();
        assert!(s.select_next(100).is_some());
    }
}
