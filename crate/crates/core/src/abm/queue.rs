use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Kind {
    /// Force-of-infection knot `j` of the individual's infectivity path.
    Knot(u16),
    Recover,
    EndLatency,
    Migrate,
}

impl Kind {
    /// Knots first, then recoveries, at equal times.
    fn priority(self) -> u8 {
        match self {
            Kind::Knot(_) => 0,
            Kind::Recover => 1,
            Kind::EndLatency => 2,
            Kind::Migrate => 3,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Scheduled {
    pub time: f64,
    pub seq: u64,
    pub who: u32,
    pub gen: u32,
    pub kind: Kind,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    // reversed so that BinaryHeap pops the earliest event
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.kind.priority().cmp(&self.kind.priority()))
            .then(other.seq.cmp(&self.seq))
    }
}

#[derive(Default)]
pub(crate) struct Queue {
    heap: BinaryHeap<Scheduled>,
    seq: u64,
}

impl Queue {
    pub fn push(&mut self, time: f64, who: u32, gen: u32, kind: Kind) {
        self.seq += 1;
        self.heap.push(Scheduled {
            time,
            seq: self.seq,
            who,
            gen,
            kind,
        });
    }

    pub fn next_time(&self) -> f64 {
        self.heap.peek().map_or(f64::INFINITY, |e| e.time)
    }

    pub fn pop(&mut self) -> Option<Scheduled> {
        self.heap.pop()
    }
}

/// Slot storage with reuse and generation counters for lazy cancellation.
pub(crate) struct Slots<T> {
    pub items: Vec<T>,
    pub gens: Vec<u32>,
    free: Vec<u32>,
}

impl<T> Default for Slots<T> {
    fn default() -> Self {
        Slots {
            items: Vec::new(),
            gens: Vec::new(),
            free: Vec::new(),
        }
    }
}

impl<T> Slots<T> {
    pub fn insert(&mut self, item: T) -> (u32, u32) {
        if let Some(i) = self.free.pop() {
            self.items[i as usize] = item;
            (i, self.gens[i as usize])
        } else {
            self.items.push(item);
            self.gens.push(0);
            ((self.items.len() - 1) as u32, 0)
        }
    }

    pub fn release(&mut self, i: u32) {
        self.gens[i as usize] = self.gens[i as usize].wrapping_add(1);
        self.free.push(i);
    }

    pub fn live(&self, i: u32, gen: u32) -> bool {
        self.gens[i as usize] == gen
    }
}

/// Incremental bookkeeping of a sum of piecewise-linear contributions.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct LinearSum {
    pub value: f64,
    pub slope: f64,
    pub time: f64,
}

impl LinearSum {
    pub fn at(&self, t: f64) -> f64 {
        (self.value + self.slope * (t - self.time)).max(0.0)
    }

    pub fn advance(&mut self, t: f64) {
        self.value += self.slope * (t - self.time);
        self.time = t;
    }
}

/// One individual's current contribution to a [`LinearSum`].
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Contribution {
    pub value: f64,
    pub slope: f64,
    pub time: f64,
}

impl Contribution {
    /// Replaces the contribution at time `t` (the sum must be advanced to
    /// `t`) and returns nothing; the total is updated in place.
    pub fn reset(&mut self, total: &mut LinearSum, t: f64, value: f64, slope: f64) {
        let old = self.value + self.slope * (t - self.time);
        total.value += value - old;
        total.slope += slope - self.slope;
        *self = Contribution {
            value,
            slope,
            time: t,
        };
    }
}
