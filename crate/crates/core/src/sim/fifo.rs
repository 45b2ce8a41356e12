//! Object FIFOs: circular buffers with blocking acquire/release windows.
//!
//! Acquires are cumulative: asking for `n` elements while holding `m ≤ n`
//! grants `n` in total. An acquire that cannot be satisfied returns
//! `Ok(false)` and leaves the state untouched; the caller waits and retries.
//!
//! Produced elements pass through a delivery step before consumers see
//! them, so a timed model can put a link transfer in between.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Consume,
    Produce,
}

#[derive(Debug, Clone, Copy, Default)]
struct Port {
    /// Elements released so far.
    base: u64,
    held: usize,
}

#[derive(Debug, Clone)]
pub struct ObjectFifo<E> {
    name: String,
    capacity: usize,
    /// Element `start + i` lives in `slots[i]`.
    slots: VecDeque<Option<E>>,
    start: u64,
    committed: u64,
    delivered: u64,
    prod_held: usize,
    ports: Vec<Port>,
}

impl<E> ObjectFifo<E> {
    pub fn new(name: impl Into<String>, capacity: usize, consumers: usize) -> Self {
        assert!(
            capacity > 0 && consumers > 0,
            "fifo needs capacity and consumers"
        );
        Self {
            name: name.into(),
            capacity,
            slots: VecDeque::with_capacity(capacity),
            start: 0,
            committed: 0,
            delivered: 0,
            prod_held: 0,
            ports: vec![Port::default(); consumers],
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn consumers(&self) -> usize {
        self.ports.len()
    }

    fn head(&self) -> u64 {
        self.ports.iter().map(|p| p.base).min().unwrap_or(0)
    }

    /// Committed elements some consumer has not released yet.
    pub fn occupied(&self) -> usize {
        (self.committed - self.head()) as usize
    }

    pub fn acquired_produce(&self) -> usize {
        self.prod_held
    }

    pub fn acquired_consume(&self, port: usize) -> usize {
        self.ports[port].held
    }

    /// Committed but not yet visible to consumers.
    pub fn undelivered(&self) -> usize {
        (self.committed - self.delivered) as usize
    }

    pub fn committed(&self) -> u64 {
        self.committed
    }

    pub fn released(&self, port: usize) -> u64 {
        self.ports[port].base
    }

    /// Elements delivered to `port` and not yet released.
    pub fn available(&self, port: usize) -> usize {
        (self.delivered - self.ports[port].base) as usize
    }

    fn check_port(&self, port: usize) -> Result<()> {
        if port >= self.ports.len() {
            return Err(Error::Protocol(format!(
                "{}: no consumer port {port}",
                self.name
            )));
        }
        Ok(())
    }

    /// Tries to hold `n` elements on `side`. `port` is ignored for the
    /// producer.
    pub fn acquire(&mut self, side: Side, port: usize, n: usize) -> Result<bool> {
        if n == 0 || n > self.capacity {
            return Err(Error::Protocol(format!(
                "{}: acquire of {n} elements with capacity {}",
                self.name, self.capacity
            )));
        }
        match side {
            Side::Consume => {
                self.check_port(port)?;
                if self.available(port) < n {
                    return Ok(false);
                }
                let p = &mut self.ports[port];
                p.held = p.held.max(n);
            }
            Side::Produce => {
                if n > self.prod_held {
                    if self.occupied() + n > self.capacity {
                        return Ok(false);
                    }
                    self.slots
                        .resize_with(self.slots.len() + n - self.prod_held, || None);
                    self.prod_held = n;
                }
            }
        }
        Ok(true)
    }

    /// Gives back the oldest `n` held elements. Releasing more than is held
    /// is a protocol error.
    pub fn release(&mut self, side: Side, port: usize, n: usize) -> Result<()> {
        match side {
            Side::Consume => {
                self.check_port(port)?;
                let p = &mut self.ports[port];
                if n > p.held {
                    return Err(Error::Protocol(format!(
                        "{}: consumer {port} released {n} but holds {}",
                        self.name, p.held
                    )));
                }
                p.held -= n;
                p.base += n as u64;
                let head = self.head();
                while self.start < head {
                    self.slots.pop_front();
                    self.start += 1;
                }
            }
            Side::Produce => {
                if n > self.prod_held {
                    return Err(Error::Protocol(format!(
                        "{}: producer released {n} but holds {}",
                        self.name, self.prod_held
                    )));
                }
                let first = (self.committed - self.start) as usize;
                if self.slots.range(first..first + n).any(Option::is_none) {
                    return Err(Error::Protocol(format!(
                        "{}: released an unwritten element",
                        self.name
                    )));
                }
                self.prod_held -= n;
                self.committed += n as u64;
            }
        }
        Ok(())
    }

    /// Writes the `k`-th element of the producer's current window.
    pub fn put(&mut self, k: usize, element: E) -> Result<()> {
        if k >= self.prod_held {
            return Err(Error::Protocol(format!(
                "{}: write to slot {k} of a {}-element window",
                self.name, self.prod_held
            )));
        }
        let i = (self.committed - self.start) as usize + k;
        self.slots[i] = Some(element);
        Ok(())
    }

    /// The elements `port` currently holds, oldest first.
    pub fn held(&self, port: usize) -> impl Iterator<Item = &E> + '_ {
        let p = self.ports[port];
        let first = (p.base - self.start) as usize;
        self.slots
            .range(first..first + p.held)
            .map(|s| s.as_ref().expect("committed elements are written"))
    }

    /// The next element waiting for delivery.
    pub fn next_undelivered(&self) -> Option<&E> {
        if self.delivered == self.committed {
            return None;
        }
        self.slots[(self.delivered - self.start) as usize].as_ref()
    }

    /// Makes the next committed element visible to every consumer.
    pub fn deliver_one(&mut self) -> Result<()> {
        if self.delivered == self.committed {
            return Err(Error::Protocol(format!(
                "{}: nothing to deliver",
                self.name
            )));
        }
        self.delivered += 1;
        Ok(())
    }

    pub fn deliver_all(&mut self) {
        self.delivered = self.committed;
    }
}

/// What one Code-1 style consumer did for one output row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Code1Iteration {
    pub output_row: usize,
    /// Input rows held while computing, oldest first.
    pub window: Vec<usize>,
    pub released: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Code1Trace {
    pub iterations: Vec<Code1Iteration>,
    pub terminal_release: usize,
    /// How many windows each input row appeared in.
    pub uses: Vec<usize>,
    /// How many times each input row was produced.
    pub produced: Vec<usize>,
    /// Output rows in the order the writer drained them.
    pub written: Vec<usize>,
}

/// Replays the single-core loop on one plane of `rows` rows: acquire five
/// input rows and one output slot, compute, release one of each, then
/// release the remaining four. The input FIFO holds `depth` rows, double
/// buffered; a reader fills it and a writer drains the output.
pub fn code1_replay(rows: usize, depth: usize) -> Result<Code1Trace> {
    const WINDOW: usize = 5;
    if rows < WINDOW {
        return Err(Error::Parameter(format!(
            "need at least {WINDOW} rows, got {rows}"
        )));
    }
    let mut input = ObjectFifo::<usize>::new("in", 2 * depth, 1);
    let mut output = ObjectFifo::<usize>::new("out", 2, 1);
    let mut trace = Code1Trace {
        iterations: Vec::new(),
        terminal_release: 0,
        uses: vec![0; rows],
        produced: vec![0; rows],
        written: Vec::new(),
    };
    let outputs = rows - 4;
    let mut next_in = 0;
    let mut i = 0;
    while i < outputs {
        // The loop body can only start once both acquires succeed.
        let have_in = input.acquire(Side::Consume, 0, WINDOW)?;
        let have_out = have_in && output.acquire(Side::Produce, 0, 1)?;
        if !have_in {
            if next_in == rows || !input.acquire(Side::Produce, 0, 1)? {
                return Err(Error::Protocol("code-1 replay stalled on input".into()));
            }
            input.put(0, next_in)?;
            input.release(Side::Produce, 0, 1)?;
            input.deliver_all();
            trace.produced[next_in] += 1;
            next_in += 1;
            continue;
        }
        if !have_out {
            drain(&mut output, &mut trace.written)?;
            continue;
        }
        let window: Vec<usize> = input.held(0).copied().collect();
        for &r in &window {
            trace.uses[r] += 1;
        }
        output.put(0, i + 2)?;
        input.release(Side::Consume, 0, 1)?;
        output.release(Side::Produce, 0, 1)?;
        output.deliver_all();
        trace.iterations.push(Code1Iteration {
            output_row: i + 2,
            window,
            released: 1,
        });
        i += 1;
    }
    trace.terminal_release = input.acquired_consume(0);
    input.release(Side::Consume, 0, trace.terminal_release)?;
    while output.available(0) > 0 {
        drain(&mut output, &mut trace.written)?;
    }
    Ok(trace)
}

fn drain(output: &mut ObjectFifo<usize>, written: &mut Vec<usize>) -> Result<()> {
    if !output.acquire(Side::Consume, 0, 1)? {
        return Err(Error::Protocol("code-1 replay stalled on output".into()));
    }
    written.extend(output.held(0).copied());
    output.release(Side::Consume, 0, 1)
}
