use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Simulation events. At equal times they are processed in the order
/// dwell-end, arrival, covering, uncovering, mission-end, then by
/// insertion, so departures release targets before arrivals claim them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    /// The dwell of `agent` at `target` ends; `version` identifies the plan
    /// that scheduled it so superseded plans are ignored.
    DwellEnd { agent: usize, target: usize, version: u64 },
    Arrival { agent: usize, target: usize },
    /// `target` became covered; notifies `agent`, which resides next to it.
    Covering { agent: usize, target: usize },
    /// `target` became uncovered; notifies `agent`.
    Uncovering { agent: usize, target: usize },
    MissionEnd,
}

impl EventKind {
    pub fn priority(&self) -> u8 {
        match self {
            EventKind::DwellEnd { .. } => 0,
            EventKind::Arrival { .. } => 1,
            EventKind::Covering { .. } => 2,
            EventKind::Uncovering { .. } => 3,
            EventKind::MissionEnd => 4,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            EventKind::DwellEnd { .. } => "dwell-end",
            EventKind::Arrival { .. } => "arrival",
            EventKind::Covering { .. } => "covering",
            EventKind::Uncovering { .. } => "uncovering",
            EventKind::MissionEnd => "mission-end",
        }
    }

    pub fn agent(&self) -> Option<usize> {
        match *self {
            EventKind::DwellEnd { agent, .. }
            | EventKind::Arrival { agent, .. }
            | EventKind::Covering { agent, .. }
            | EventKind::Uncovering { agent, .. } => Some(agent),
            EventKind::MissionEnd => None,
        }
    }

    pub fn target(&self) -> Option<usize> {
        match *self {
            EventKind::DwellEnd { target, .. }
            | EventKind::Arrival { target, .. }
            | EventKind::Covering { target, .. }
            | EventKind::Uncovering { target, .. } => Some(target),
            EventKind::MissionEnd => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    pub seq: u64,
}

impl Eq for Event {}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed: BinaryHeap is a max-heap and we pop the earliest.
        other
            .time
            .total_cmp(&self.time)
            .then(other.kind.priority().cmp(&self.kind.priority()))
            .then(other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Deterministic priority queue ordered by `(time, priority, seq)`.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Event>,
    next_seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, time: f64, kind: EventKind) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Event { time, kind, seq });
    }

    pub fn pop(&mut self) -> Option<Event> {
        self.heap.pop()
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}
