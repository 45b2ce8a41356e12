//! Reordering lane outputs back into plane row order.

use std::collections::{BTreeMap, VecDeque};

use crate::error::{BlockedFifo, Error, Result};

/// A finished output row and the lane that computed it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LaneRow<R> {
    pub lane: usize,
    pub plane: usize,
    pub row: usize,
    pub data: R,
}

/// Lane that owns output row `row` when rows are dealt round-robin.
pub fn lane_of(row: usize, lanes: usize) -> usize {
    row % lanes
}

/// `(plane, row)` pairs in the order a shim write expects them.
pub fn gather_order(
    planes: impl IntoIterator<Item = usize>,
    rows: std::ops::Range<usize>,
) -> Vec<(usize, usize)> {
    planes
        .into_iter()
        .flat_map(|d| rows.clone().map(move |r| (d, r)))
        .collect()
}

/// Holds rows that arrive early until every row before them is out.
#[derive(Debug, Clone)]
pub struct ReorderBuffer<R> {
    lanes: usize,
    expected: VecDeque<(usize, usize)>,
    pending: BTreeMap<(usize, usize), LaneRow<R>>,
}

impl<R> ReorderBuffer<R> {
    pub fn new(lanes: usize, order: Vec<(usize, usize)>) -> Self {
        Self {
            lanes: lanes.max(1),
            expected: order.into(),
            pending: BTreeMap::new(),
        }
    }

    /// Accepts one lane row and returns the rows now ready, in order.
    pub fn push(&mut self, row: LaneRow<R>) -> Result<Vec<LaneRow<R>>> {
        let key = (row.plane, row.row);
        if !self.expected.contains(&key) || self.pending.contains_key(&key) {
            return Err(Error::Protocol(format!(
                "gather received unexpected row {} of plane {} from lane {}",
                row.row, row.plane, row.lane
            )));
        }
        self.pending.insert(key, row);
        let mut ready = Vec::new();
        while let Some(next) = self.expected.front() {
            match self.pending.remove(next) {
                Some(r) => {
                    ready.push(r);
                    self.expected.pop_front();
                }
                None => break,
            }
        }
        Ok(ready)
    }

    /// Fails with a deadlock naming the lane the next row should come from
    /// if any row never arrived.
    pub fn finish(&self) -> Result<()> {
        let Some(&(plane, row)) = self.expected.front() else {
            return Ok(());
        };
        Err(Error::Deadlock {
            cycle: 0,
            blocked: vec![BlockedFifo {
                fifo: format!("g{}", lane_of(row, self.lanes)),
                waiter: format!("gather (plane {plane}, row {row})"),
                side: "consume".into(),
                held: 0,
                requested: 1,
            }],
        })
    }
}

/// Orders the rows of `lanes` lanes as `order` says, whatever order they
/// finished in.
pub fn gather_and_order<R>(
    lanes: usize,
    order: Vec<(usize, usize)>,
    outputs: Vec<LaneRow<R>>,
) -> Result<Vec<LaneRow<R>>> {
    let mut buf = ReorderBuffer::new(lanes, order);
    let mut out = Vec::with_capacity(outputs.len());
    for row in outputs {
        out.extend(buf.push(row)?);
    }
    buf.finish()?;
    Ok(out)
}
