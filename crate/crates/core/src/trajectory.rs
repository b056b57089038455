use alloc::vec::Vec;

use crate::params::ModelParams;

/// Time-stamped snapshots produced by a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S> {
    pub times: Vec<f64>,
    pub records: Vec<S>,
    pub meta: ModelParams,
}

impl<S> Trajectory<S> {
    pub fn new(meta: ModelParams) -> Self {
        Trajectory { times: Vec::new(), records: Vec::new(), meta }
    }

    /// Appends a snapshot. Times must increase strictly.
    pub fn push(&mut self, t: f64, s: S) {
        debug_assert!(self.times.last().is_none_or(|&l| t > l));
        self.times.push(t);
        self.records.push(s);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<(f64, &S)> {
        Some((*self.times.last()?, self.records.last()?))
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &S)> {
        self.times.iter().copied().zip(self.records.iter())
    }
}
