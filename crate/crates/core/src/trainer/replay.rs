use std::collections::VecDeque;

use rand::Rng;

use crate::action::{TrajectorySegment, Transition};
use crate::error::{Error, Result};

/// FIFO transition store that tracks which segment windows are valid.
///
/// Records carry global indices. A start index is kept while its whole window
/// lies in one episode and in the buffer; episodes shorter than the window
/// contribute one padded start at their first record.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    window: usize,
    records: VecDeque<Transition>,
    first: u64,
    episode_start: u64,
    /// `(start, valid_len)` of every sampleable window, oldest first.
    starts: VecDeque<(u64, usize)>,
}

impl ReplayBuffer {
    /// `horizon` is the segment horizon `H`; windows hold `H + 1` records.
    pub fn new(capacity: usize, horizon: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument(
                "replay capacity must be positive".into(),
            ));
        }
        Ok(Self {
            capacity,
            window: horizon + 1,
            records: VecDeque::new(),
            first: 0,
            episode_start: 0,
            starts: VecDeque::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn horizon(&self) -> usize {
        self.window - 1
    }

    /// Number of distinct windows that can be sampled.
    pub fn num_segments(&self) -> usize {
        self.starts.len()
    }

    /// Appends a transition; `episode_end` closes the current episode.
    pub fn push(&mut self, t: Transition, episode_end: bool) {
        let index = self.first + self.records.len() as u64;
        self.records.push_back(t);
        let len = (index - self.episode_start + 1) as usize;
        if len >= self.window {
            self.starts
                .push_back((index + 1 - self.window as u64, self.window));
        }
        if episode_end {
            if len < self.window {
                self.starts.push_back((self.episode_start, len));
            }
            self.episode_start = index + 1;
        }
        while self.records.len() > self.capacity {
            self.records.pop_front();
            self.first += 1;
        }
        while self.starts.front().is_some_and(|&(s, _)| s < self.first) {
            self.starts.pop_front();
        }
    }

    /// Segment starting at global index `start` (which must be a valid start).
    fn segment(&self, start: u64, len: usize) -> Result<TrajectorySegment> {
        let off = (start - self.first) as usize;
        let recs: Vec<Transition> = self.records.range(off..off + len).cloned().collect();
        if len == self.window {
            TrajectorySegment::new(recs, start as usize)
        } else {
            TrajectorySegment::padded(recs, start as usize, self.window)
        }
    }

    /// `batch` windows drawn uniformly with replacement.
    pub fn sample_segments<R: Rng + ?Sized>(
        &self,
        batch: usize,
        r: &mut R,
    ) -> Result<Vec<TrajectorySegment>> {
        if self.starts.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        (0..batch)
            .map(|_| {
                let (s, l) = self.starts[r.random_range(0..self.starts.len())];
                self.segment(s, l)
            })
            .collect()
    }

    /// Global indices of all valid starts, oldest first.
    pub fn start_indices(&self) -> Vec<u64> {
        self.starts.iter().map(|&(s, _)| s).collect()
    }
}
