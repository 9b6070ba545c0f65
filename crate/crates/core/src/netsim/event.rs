//! Time-ordered event queue with insertion-order tie breaking.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use super::engine::Chunk;

#[derive(Debug, Clone)]
pub enum EventKind {
    ChunkArrival { node: usize, chunk: Box<Chunk> },
    ChunkTxComplete { link: usize },
    SchedulerTick,
    FlowStart { flow: usize },
    FlowComplete { flow: usize },
    RoundTimer { tag: u64 },
}

#[derive(Debug, Clone)]
pub struct Event {
    pub time: f64,
    pub seq: u64,
    pub kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time.total_cmp(&other.time).then(self.seq.cmp(&other.seq))
    }
}

#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Reverse<Event>>,
    next_seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, time: f64, kind: EventKind) -> u64 {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse(Event { time, seq, kind }));
        seq
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.heap.peek().map(|e| e.0.time)
    }

    pub fn pop(&mut self) -> Option<Event> {
        self.heap.pop().map(|e| e.0)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Event> {
        self.heap.iter().map(|e| &e.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orders_by_time_then_insertion() {
        let mut q = EventQueue::new();
        q.push(2.0, EventKind::RoundTimer { tag: 0 });
        q.push(1.0, EventKind::RoundTimer { tag: 1 });
        q.push(1.0, EventKind::RoundTimer { tag: 2 });
        q.push(0.5, EventKind::RoundTimer { tag: 3 });
        let tags: Vec<u64> = std::iter::from_fn(|| q.pop())
            .map(|e| match e.kind {
                EventKind::RoundTimer { tag } => tag,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(tags, vec![3, 1, 2, 0]);
    }
}
