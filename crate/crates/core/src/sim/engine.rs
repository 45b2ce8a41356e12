//! The event loop. Every core, shim reader and shim writer is a process
//! running a straight-line program of FIFO acquires, releases and timed
//! work steps. Programs are generated up front from the plan; data moves
//! between FIFOs as real row payloads.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::sync::Arc;

use super::cost::{core_kernel_cycles, gather_copy_cycles, RowTile};
use super::fifo::{ObjectFifo, Side};
use super::kernels::{elementary_row, flux_candidates, flux_update, lap_tile};
use super::transfer::{transfer_timing, ChannelArbiter, TransferTiming};
use crate::error::{BlockedFifo, Error, Result};
use crate::fabric::{Endpoint, FabricSpec, LinkKind, Position, Role};
use crate::grid::Dims;
use crate::mapper::{ElementKind, MappingPlan, ShimDirection};
use crate::numeric::Sample;
use crate::stencil::{CoeffView, HdiffParams, StencilSpec, HDIFF_HALO};

pub(crate) enum Work<'a> {
    Hdiff(&'a HdiffParams),
    Elementary(&'a StencilSpec),
}

#[derive(Clone)]
enum Token<T: Sample> {
    Row {
        d: u32,
        r: u32,
        data: Arc<[T]>,
    },
    Lap {
        d: u32,
        r: u32,
        data: Arc<[T::Acc]>,
    },
    Flux {
        d: u32,
        r: u32,
        cand: Arc<[T::Acc]>,
        mask: Arc<[bool]>,
        psi: Arc<[T]>,
    },
    Out {
        d: u32,
        r: u32,
        data: Arc<[T]>,
    },
}

impl<T: Sample> Token<T> {
    fn at(&self) -> (u32, u32) {
        match self {
            Token::Row { d, r, .. }
            | Token::Lap { d, r, .. }
            | Token::Flux { d, r, .. }
            | Token::Out { d, r, .. } => (*d, *r),
        }
    }
}

type FifoId = u32;

#[derive(Debug, Clone, Copy)]
enum Op {
    Load {
        out: FifoId,
        d: u32,
        r: u32,
    },
    Store {
        inp: FifoId,
    },
    Mono {
        inp: FifoId,
        port: u16,
        out: FifoId,
        d: u32,
        r: u32,
    },
    Lap {
        inp: FifoId,
        port: u16,
        out: FifoId,
        d: u32,
        r: u32,
    },
    FluxMac {
        inp: FifoId,
        port: u16,
        lap: FifoId,
        out: FifoId,
        d: u32,
        r: u32,
    },
    Flux {
        inp: FifoId,
        port: u16,
        lap: FifoId,
        out: FifoId,
        d: u32,
        r: u32,
    },
    FluxNonMac {
        ft: FifoId,
        out: FifoId,
        d: u32,
        r: u32,
    },
    Copy {
        from: FifoId,
        out: FifoId,
        d: u32,
        r: u32,
    },
    Elementary {
        inp: FifoId,
        port: u16,
        out: FifoId,
        d: u32,
        r: u32,
    },
}

#[derive(Debug, Clone, Copy)]
enum Step {
    AcqCons { fifo: FifoId, port: u16, n: u16 },
    AcqProd { fifo: FifoId },
    RelCons { fifo: FifoId, port: u16, n: u16 },
    RelProd { fifo: FifoId },
    Work { op: Op, cycles: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Event {
    Resume(usize),
    TransferDone(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ProcKind {
    Core(usize),
    Reader,
    Writer,
}

struct Proc {
    name: String,
    kind: ProcKind,
    steps: Vec<Step>,
    pc: usize,
    blocked: Option<(FifoId, Side, u16, u16)>,
    busy: u64,
}

struct FifoRt<T: Sample> {
    q: ObjectFifo<Token<T>>,
    /// Producer-side buffers of a DMA-backed link; `q` then holds the
    /// consumer-side buffers.
    src: Option<ObjectFifo<Token<T>>>,
    timing: TransferTiming,
    bytes: u64,
    channel: Option<usize>,
    in_flight: bool,
    prod_waiter: Option<usize>,
    cons_waiters: Vec<Option<usize>>,
    transfers: u64,
    busy: u64,
}

impl<T: Sample> FifoRt<T> {
    fn producer_ring(&mut self) -> &mut ObjectFifo<Token<T>> {
        self.src.as_mut().unwrap_or(&mut self.q)
    }
}

struct ChannelRt {
    arb: ChannelArbiter,
    bytes: u64,
    busy: u64,
}

pub(crate) struct ProcStats {
    pub kind: ProcKind,
    pub busy: u64,
    pub items: u64,
}

pub(crate) struct FifoStats {
    pub bytes: u64,
    pub transfers: u64,
    pub busy: u64,
}

pub(crate) struct ChannelStats {
    pub shim: usize,
    pub channel: usize,
    pub direction: ShimDirection,
    pub bytes: u64,
    pub busy: u64,
}

pub(crate) struct RunResult<T> {
    pub output: Vec<T>,
    pub total_cycles: u64,
    pub procs: Vec<ProcStats>,
    pub fifos: Vec<FifoStats>,
    pub channels: Vec<ChannelStats>,
    /// Cycle at which each output row reached host memory.
    pub store_times: Vec<u64>,
}

pub(crate) struct Engine<'a, T: Sample> {
    dims: Dims,
    input: &'a [T],
    output: Vec<T>,
    work: &'a Work<'a>,
    coeff: Option<CoeffView<'a, T>>,
    elem_taps: Vec<(i32, i32, T::Weight)>,
    fifos: Vec<FifoRt<T>>,
    procs: Vec<Proc>,
    channel_keys: Vec<(usize, usize, ShimDirection)>,
    channels: Vec<ChannelRt>,
    heap: BinaryHeap<Reverse<(u64, u64, Event)>>,
    seq: u64,
    now: u64,
    store_times: Vec<u64>,
    items: Vec<u64>,
}

impl<'a, T: Sample> Engine<'a, T> {
    pub fn new(
        plan: &'a MappingPlan,
        fabric: &'a FabricSpec,
        dims: Dims,
        input: &'a [T],
        work: &'a Work<'a>,
    ) -> Result<Self> {
        let mut channel_keys: Vec<(usize, usize, ShimDirection)> = plan
            .shim_assignments
            .iter()
            .map(|a| (a.shim, a.channel, a.direction))
            .collect();
        channel_keys.sort_by_key(|&(s, c, d)| (s, c, d == ShimDirection::Write));
        channel_keys.dedup();
        let channels = channel_keys
            .iter()
            .map(|_| ChannelRt {
                arb: ChannelArbiter::default(),
                bytes: 0,
                busy: 0,
            })
            .collect();
        let fifos = plan
            .fifos
            .iter()
            .map(|f| {
                let bits = f.element.bits(dims.cols, f.link);
                let key = match (f.shim_source(), f.shim_sink()) {
                    (Some((s, c)), _) => Some((s, c, ShimDirection::Read)),
                    (None, Some((s, c))) => Some((s, c, ShimDirection::Write)),
                    _ => None,
                };
                let channel = key.and_then(|k| channel_keys.iter().position(|&x| x == k));
                let dma = !matches!(f.link, LinkKind::NeighborMemory | LinkKind::Cascade);
                FifoRt {
                    q: ObjectFifo::new(f.name.clone(), f.capacity(), f.consumers.len()),
                    src: dma.then(|| ObjectFifo::new(f.name.clone(), f.capacity(), 1)),
                    timing: transfer_timing(fabric, f.link, f.streams, bits, channel.is_some()),
                    bytes: bits.div_ceil(8),
                    channel,
                    in_flight: false,
                    prod_waiter: None,
                    cons_waiters: vec![None; f.consumers.len()],
                    transfers: 0,
                    busy: 0,
                }
            })
            .collect();
        let (coeff, elem_taps) = match work {
            Work::Hdiff(p) => (Some(p.coeff_view::<T>()), Vec::new()),
            Work::Elementary(spec) => (
                None,
                spec.taps
                    .iter()
                    .map(|t| (t.dr, t.dc, T::weight(t.weight, spec.frac_bits)))
                    .collect(),
            ),
        };
        let programs = Programs::new(plan, fabric, dims, work)?;
        let procs: Vec<Proc> = programs.build()?;
        let items = vec![0; procs.len()];
        Ok(Self {
            dims,
            input,
            output: input.to_vec(),
            work,
            coeff,
            elem_taps,
            fifos,
            procs,
            channel_keys,
            channels,
            heap: BinaryHeap::new(),
            seq: 0,
            now: 0,
            store_times: Vec::new(),
            items,
        })
    }

    fn schedule(&mut self, at: u64, ev: Event) {
        self.seq += 1;
        self.heap.push(Reverse((at, self.seq, ev)));
    }

    fn wake(&mut self, p: Option<usize>) {
        if let Some(p) = p {
            self.schedule(self.now, Event::Resume(p));
        }
    }

    pub fn run(mut self) -> Result<RunResult<T>> {
        for p in 0..self.procs.len() {
            self.schedule(0, Event::Resume(p));
        }
        while let Some(Reverse((t, _, ev))) = self.heap.pop() {
            self.now = t;
            match ev {
                Event::Resume(p) => self.step(p)?,
                Event::TransferDone(f) => self.transfer_done(f)?,
            }
        }
        let blocked: Vec<BlockedFifo> = self
            .procs
            .iter()
            .filter(|p| p.pc < p.steps.len())
            .filter_map(|p| {
                let (f, side, port, n) = p.blocked?;
                let rt = &self.fifos[f as usize];
                let q = &rt.q;
                Some(BlockedFifo {
                    fifo: q.name().to_string(),
                    waiter: p.name.clone(),
                    side: match side {
                        Side::Consume => "consume".into(),
                        Side::Produce => "produce".into(),
                    },
                    held: match side {
                        Side::Consume => q.acquired_consume(port as usize),
                        Side::Produce => rt.src.as_ref().unwrap_or(q).acquired_produce(),
                    },
                    requested: n as usize,
                })
            })
            .collect();
        if self.procs.iter().any(|p| p.pc < p.steps.len()) {
            return Err(Error::Deadlock {
                cycle: self.now,
                blocked,
            });
        }
        let channels = self
            .channel_keys
            .iter()
            .zip(&self.channels)
            .map(|(&(shim, channel, direction), c)| ChannelStats {
                shim,
                channel,
                direction,
                bytes: c.bytes,
                busy: c.busy,
            })
            .collect();
        Ok(RunResult {
            output: self.output,
            total_cycles: self.now,
            procs: self
                .procs
                .iter()
                .zip(&self.items)
                .map(|(p, &items)| ProcStats {
                    kind: p.kind,
                    busy: p.busy,
                    items,
                })
                .collect(),
            fifos: self
                .fifos
                .iter()
                .map(|f| FifoStats {
                    bytes: f.bytes * f.transfers,
                    transfers: f.transfers,
                    busy: f.busy,
                })
                .collect(),
            channels,
            store_times: self.store_times,
        })
    }

    fn step(&mut self, p: usize) -> Result<()> {
        loop {
            let Some(&step) = self.procs[p].steps.get(self.procs[p].pc) else {
                return Ok(());
            };
            match step {
                Step::AcqCons { fifo, port, n } => {
                    let f = &mut self.fifos[fifo as usize];
                    if !f.q.acquire(Side::Consume, port as usize, n as usize)? {
                        f.cons_waiters[port as usize] = Some(p);
                        self.procs[p].blocked = Some((fifo, Side::Consume, port, n));
                        return Ok(());
                    }
                }
                Step::AcqProd { fifo } => {
                    let f = &mut self.fifos[fifo as usize];
                    if !f.producer_ring().acquire(Side::Produce, 0, 1)? {
                        f.prod_waiter = Some(p);
                        self.procs[p].blocked = Some((fifo, Side::Produce, 0, 1));
                        return Ok(());
                    }
                }
                Step::RelCons { fifo, port, n } => {
                    let f = &mut self.fifos[fifo as usize];
                    f.q.release(Side::Consume, port as usize, n as usize)?;
                    let w = f.prod_waiter.take();
                    self.wake(w);
                    self.try_transfer(fifo as usize)?;
                }
                Step::RelProd { fifo } => {
                    let rt = &mut self.fifos[fifo as usize];
                    rt.producer_ring().release(Side::Produce, 0, 1)?;
                    if let Some(src) = &mut rt.src {
                        src.deliver_all();
                    }
                    self.try_transfer(fifo as usize)?;
                }
                Step::Work { op, cycles } => {
                    self.execute(op)?;
                    if !matches!(op, Op::Load { .. } | Op::Store { .. }) {
                        self.items[p] += 1;
                    }
                    if cycles > 0 {
                        let proc = &mut self.procs[p];
                        proc.pc += 1;
                        proc.blocked = None;
                        proc.busy += u64::from(cycles);
                        self.schedule(self.now + u64::from(cycles), Event::Resume(p));
                        return Ok(());
                    }
                }
            }
            let proc = &mut self.procs[p];
            proc.pc += 1;
            proc.blocked = None;
        }
    }

    fn try_transfer(&mut self, f: usize) -> Result<()> {
        let rt = &mut self.fifos[f];
        if rt.in_flight {
            return Ok(());
        }
        match &rt.src {
            Some(src) => {
                if src.available(0) == 0 || !rt.q.acquire(Side::Produce, 0, 1)? {
                    return Ok(());
                }
            }
            None => {
                if rt.q.undelivered() == 0 {
                    return Ok(());
                }
            }
        }
        if let Some(ch) = rt.channel {
            if !self.channels[ch].arb.request(f) {
                return Ok(());
            }
        }
        self.start_transfer(f);
        Ok(())
    }

    fn start_transfer(&mut self, f: usize) {
        let rt = &mut self.fifos[f];
        rt.in_flight = true;
        let dur = rt.timing.duration;
        rt.busy += dur;
        if let Some(ch) = rt.channel {
            self.channels[ch].bytes += rt.bytes;
            self.channels[ch].busy += dur;
        }
        self.schedule(self.now + dur, Event::TransferDone(f));
    }

    fn transfer_done(&mut self, f: usize) -> Result<()> {
        let rt = &mut self.fifos[f];
        rt.in_flight = false;
        rt.transfers += 1;
        if let Some(src) = &mut rt.src {
            src.acquire(Side::Consume, 0, 1)?;
            let token = src.held(0).next().cloned().expect("delivered element");
            src.release(Side::Consume, 0, 1)?;
            rt.q.put(0, token)?;
            rt.q.release(Side::Produce, 0, 1)?;
        }
        rt.q.deliver_one()?;
        let mut waiters: Vec<usize> = rt
            .cons_waiters
            .iter_mut()
            .filter_map(Option::take)
            .collect();
        if rt.src.is_some() {
            waiters.extend(rt.prod_waiter.take());
        }
        let channel = rt.channel;
        for w in waiters {
            self.wake(Some(w));
        }
        if let Some(ch) = channel {
            if let Some(next) = self.channels[ch].arb.release() {
                self.start_transfer(next);
            }
        }
        self.try_transfer(f)
    }

    fn held(&self, fifo: FifoId, port: u16) -> Vec<Token<T>> {
        self.fifos[fifo as usize]
            .q
            .held(port as usize)
            .cloned()
            .collect()
    }

    /// The last `n` rows held on `port`, checked to be rows
    /// `r - n/2 ..= r + n/2` of plane `d`.
    fn window(&self, fifo: FifoId, port: u16, n: usize, d: u32, r: u32) -> Result<Vec<Arc<[T]>>> {
        let held = self.held(fifo, port);
        if held.len() < n {
            return Err(self.mismatch(fifo, d, r));
        }
        let first = r as i64 - (n / 2) as i64;
        held[held.len() - n..]
            .iter()
            .enumerate()
            .map(|(i, t)| match t {
                Token::Row { d: td, r: tr, data } if *td == d && *tr as i64 == first + i as i64 => {
                    Ok(data.clone())
                }
                _ => Err(self.mismatch(fifo, d, r)),
            })
            .collect()
    }

    fn first_held(&self, fifo: FifoId, d: u32, r: u32) -> Result<Token<T>> {
        match self.fifos[fifo as usize].q.held(0).next() {
            Some(t) if t.at() == (d, r) => Ok(t.clone()),
            _ => Err(self.mismatch(fifo, d, r)),
        }
    }

    fn mismatch(&self, fifo: FifoId, d: u32, r: u32) -> Error {
        Error::Protocol(format!(
            "{}: held elements do not match row {r} of plane {d}",
            self.fifos[fifo as usize].q.name()
        ))
    }

    fn put(&mut self, fifo: FifoId, token: Token<T>) -> Result<()> {
        self.fifos[fifo as usize].producer_ring().put(0, token)
    }

    fn row_base(&self, d: u32, r: u32) -> usize {
        d as usize * self.dims.plane_len() + r as usize * self.dims.cols
    }

    fn update_row(&self, cand: &[T::Acc], mask: &[bool], psi: &[T], d: u32, r: u32) -> Arc<[T]> {
        let Work::Hdiff(params) = self.work else {
            unreachable!("flux steps only run for hdiff")
        };
        let coeff = self.coeff.as_ref().expect("hdiff coefficients");
        flux_update(
            cand,
            mask,
            psi,
            coeff,
            self.row_base(d, r),
            params.srs_shift,
            params.limiter,
        )
        .into()
    }

    fn lap_of(rows: &[Arc<[T]>]) -> Arc<[T::Acc]> {
        lap_tile::<T>([&rows[0], &rows[1], &rows[2], &rows[3], &rows[4]]).into()
    }

    fn execute(&mut self, op: Op) -> Result<()> {
        match op {
            Op::Load { out, d, r } => {
                let base = self.row_base(d, r);
                let data: Arc<[T]> = self.input[base..base + self.dims.cols].into();
                self.put(out, Token::Row { d, r, data })
            }
            Op::Store { inp } => match self.fifos[inp as usize].q.held(0).next() {
                Some(Token::Out { d, r, data }) => {
                    let base = self.row_base(*d, *r);
                    self.output[base..base + self.dims.cols].copy_from_slice(data);
                    self.store_times.push(self.now);
                    Ok(())
                }
                _ => Err(Error::Protocol(format!(
                    "{}: shim write expected an output row",
                    self.fifos[inp as usize].q.name()
                ))),
            },
            Op::Mono {
                inp,
                port,
                out,
                d,
                r,
            } => {
                let rows = self.window(inp, port, 5, d, r)?;
                let lap = Self::lap_of(&rows);
                let (cand, mask) = flux_candidates::<T>(&lap, [&rows[1], &rows[2], &rows[3]]);
                let data = self.update_row(&cand, &mask, &rows[2], d, r);
                self.put(out, Token::Out { d, r, data })
            }
            Op::Lap {
                inp,
                port,
                out,
                d,
                r,
            } => {
                let rows = self.window(inp, port, 5, d, r)?;
                let data = Self::lap_of(&rows);
                self.put(out, Token::Lap { d, r, data })
            }
            Op::FluxMac {
                inp,
                port,
                lap,
                out,
                d,
                r,
            }
            | Op::Flux {
                inp,
                port,
                lap,
                out,
                d,
                r,
            } => {
                let rows = self.window(inp, port, 3, d, r)?;
                let Token::Lap { data: lap, .. } = self.first_held(lap, d, r)? else {
                    return Err(self.mismatch(lap, d, r));
                };
                let (cand, mask) = flux_candidates::<T>(&lap, [&rows[0], &rows[1], &rows[2]]);
                let token = if matches!(op, Op::Flux { .. }) {
                    Token::Out {
                        d,
                        r,
                        data: self.update_row(&cand, &mask, &rows[1], d, r),
                    }
                } else {
                    Token::Flux {
                        d,
                        r,
                        cand: cand.into(),
                        mask: mask.into(),
                        psi: rows[1].clone(),
                    }
                };
                self.put(out, token)
            }
            Op::FluxNonMac { ft, out, d, r } => {
                let Token::Flux {
                    cand, mask, psi, ..
                } = self.first_held(ft, d, r)?
                else {
                    return Err(self.mismatch(ft, d, r));
                };
                let data = self.update_row(&cand, &mask, &psi, d, r);
                self.put(out, Token::Out { d, r, data })
            }
            Op::Copy { from, out, d, r } => {
                let token = self.first_held(from, d, r)?;
                if !matches!(token, Token::Out { .. }) {
                    return Err(self.mismatch(from, d, r));
                }
                self.put(out, token)
            }
            Op::Elementary {
                inp,
                port,
                out,
                d,
                r,
            } => {
                let Work::Elementary(spec) = self.work else {
                    unreachable!("elementary steps only run for elementary work")
                };
                let rr = spec.row_radius();
                let rows = self.window(inp, port, 2 * rr + 1, d, r)?;
                let window: Vec<&[T]> = rows.iter().map(|r| &r[..]).collect();
                let data = elementary_row::<T>(
                    &window,
                    rr,
                    spec.col_radius(),
                    &self.elem_taps,
                    spec.frac_bits,
                )
                .into();
                self.put(out, Token::Out { d, r, data })
            }
        }
    }
}

/// Program generation.
struct Programs<'a> {
    plan: &'a MappingPlan,
    fabric: &'a FabricSpec,
    dims: Dims,
    work: &'a Work<'a>,
    /// Rows each shim-fed FIFO streams, in order.
    streams: BTreeMap<usize, Vec<(u32, u32)>>,
}

fn fid(i: usize) -> FifoId {
    i as FifoId
}

impl<'a> Programs<'a> {
    fn new(
        plan: &'a MappingPlan,
        fabric: &'a FabricSpec,
        dims: Dims,
        work: &'a Work<'a>,
    ) -> Result<Self> {
        let mut p = Self {
            plan,
            fabric,
            dims,
            work,
            streams: BTreeMap::new(),
        };
        for (i, f) in plan.fifos.iter().enumerate() {
            if f.shim_source().is_none() {
                continue;
            }
            let mut rows: Vec<(u32, u32)> = Vec::new();
            for c in &f.consumers {
                let Endpoint::Core(core) = c else { continue };
                for (d, r) in p.items(*core) {
                    let rr = p.row_radius() as u32;
                    rows.extend((r - rr..=r + rr).map(|x| (d, x)));
                }
            }
            rows.sort_unstable();
            rows.dedup();
            p.streams.insert(i, rows);
        }
        Ok(p)
    }

    fn row_radius(&self) -> usize {
        match self.work {
            Work::Hdiff(_) => HDIFF_HALO,
            Work::Elementary(spec) => spec.row_radius(),
        }
    }

    fn output_rows(&self) -> std::ops::Range<usize> {
        match self.work {
            Work::Hdiff(_) => HDIFF_HALO..self.dims.rows - HDIFF_HALO,
            Work::Elementary(spec) => spec.interior(self.dims).0,
        }
    }

    /// Output rows `core` takes part in, in plane-row order.
    fn items(&self, core: Position) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        for w in self
            .plan
            .work_division
            .iter()
            .filter(|w| w.cores.contains(&core))
        {
            for d in (0..self.dims.depth).filter(|&d| w.planes.contains(d)) {
                for r in self.output_rows().filter(|&r| w.rows.contains(r)) {
                    out.push((d as u32, r as u32));
                }
            }
        }
        out.sort_unstable();
        out
    }

    fn consumed(&self, core: Position, element: ElementKind) -> Vec<(usize, u16)> {
        self.plan
            .fifos
            .iter()
            .enumerate()
            .filter(|(_, f)| f.element == element)
            .filter_map(|(i, f)| {
                let port = f
                    .consumers
                    .iter()
                    .position(|c| *c == Endpoint::Core(core))?;
                Some((i, port as u16))
            })
            .collect()
    }

    fn produced(&self, core: Position, element: ElementKind) -> Option<usize> {
        self.plan
            .fifos
            .iter()
            .position(|f| f.element == element && f.producer == Endpoint::Core(core))
    }

    fn need<X>(&self, v: Option<X>, core: Position, what: &str) -> Result<X> {
        v.ok_or_else(|| Error::Parameter(format!("core {core} has no {what} fifo")))
    }

    fn build(&self) -> Result<Vec<Proc>> {
        let mut procs = Vec::new();
        for (i, slot) in self.plan.slots.iter().enumerate() {
            procs.push(Proc {
                name: format!("core{} {:?}", slot.position, slot.role),
                kind: ProcKind::Core(i),
                steps: self.core_program(slot.position, slot.role)?,
                pc: 0,
                blocked: None,
                busy: 0,
            });
        }
        for (i, f) in self.plan.fifos.iter().enumerate() {
            if let Some(rows) = self.streams.get(&i) {
                let steps = rows
                    .iter()
                    .flat_map(|&(d, r)| {
                        [
                            Step::AcqProd { fifo: fid(i) },
                            Step::Work {
                                op: Op::Load { out: fid(i), d, r },
                                cycles: 0,
                            },
                            Step::RelProd { fifo: fid(i) },
                        ]
                    })
                    .collect();
                procs.push(Proc {
                    name: format!("reader {}", f.name),
                    kind: ProcKind::Reader,
                    steps,
                    pc: 0,
                    blocked: None,
                    busy: 0,
                });
            }
            if f.shim_sink().is_some() {
                let Endpoint::Core(src) = f.producer else {
                    return Err(Error::Parameter(format!("fifo {} links two shims", f.name)));
                };
                let count = self.produced_count(src);
                let steps = (0..count)
                    .flat_map(|_| {
                        [
                            Step::AcqCons {
                                fifo: fid(i),
                                port: 0,
                                n: 1,
                            },
                            Step::Work {
                                op: Op::Store { inp: fid(i) },
                                cycles: 0,
                            },
                            Step::RelCons {
                                fifo: fid(i),
                                port: 0,
                                n: 1,
                            },
                        ]
                    })
                    .collect();
                procs.push(Proc {
                    name: format!("writer {}", f.name),
                    kind: ProcKind::Writer,
                    steps,
                    pc: 0,
                    blocked: None,
                    busy: 0,
                });
            }
        }
        Ok(procs)
    }

    /// Output rows leaving `core`, counting rows it forwards for others.
    fn produced_count(&self, core: Position) -> usize {
        let own = self.items(core).len();
        let forwarded: usize = self
            .consumed(core, ElementKind::OutputRow)
            .iter()
            .map(|&(i, _)| match self.plan.fifos[i].producer {
                Endpoint::Core(p) => self.produced_count(p),
                Endpoint::Shim { .. } => 0,
            })
            .sum();
        own + forwarded
    }

    fn cycles(&self, role: Role, core: Position) -> u32 {
        let lap_in = self.consumed(core, ElementKind::LapTile);
        let cascade_in = lap_in
            .iter()
            .any(|&(i, _)| self.plan.fifos[i].link == LinkKind::Cascade);
        let cascade_out = self
            .produced(core, ElementKind::LapTile)
            .is_some_and(|i| self.plan.fifos[i].link == LinkKind::Cascade);
        let mut tile = RowTile::new(self.dims.cols).with_cascade(cascade_in, cascade_out);
        if let Work::Elementary(spec) = self.work {
            tile = tile.with_stencil(spec);
        }
        core_kernel_cycles(role, &tile, self.plan.dtype, self.fabric).total as u32
    }

    fn core_program(&self, core: Position, role: Role) -> Result<Vec<Step>> {
        let items = self.items(core);
        let mut steps = Vec::new();
        let cycles = self.cycles(role, core);
        let row_in = || {
            self.need(
                self.consumed(core, ElementKind::Row).first().copied(),
                core,
                "row input",
            )
        };
        let single =
            |v: Vec<(usize, u16)>, what: &str| self.need(v.first().map(|x| fid(x.0)), core, what);
        match role {
            Role::Mono | Role::Lap | Role::Elementary => {
                let (inp, port) = row_in()?;
                let out_kind = if role == Role::Lap {
                    ElementKind::LapTile
                } else {
                    ElementKind::OutputRow
                };
                let out = fid(self.need(self.produced(core, out_kind), core, "output")?);
                let rr = self.row_radius() as u32;
                self.windows(&mut steps, inp, port, rr, &items, |steps, d, r| {
                    steps.push(Step::AcqProd { fifo: out });
                    let (inp, port) = (fid(inp), port);
                    let op = match role {
                        Role::Mono => Op::Mono {
                            inp,
                            port,
                            out,
                            d,
                            r,
                        },
                        Role::Lap => Op::Lap {
                            inp,
                            port,
                            out,
                            d,
                            r,
                        },
                        _ => Op::Elementary {
                            inp,
                            port,
                            out,
                            d,
                            r,
                        },
                    };
                    steps.push(Step::Work { op, cycles });
                    (vec![], vec![Step::RelProd { fifo: out }])
                })?;
            }
            Role::FluxMac | Role::Flux => {
                let (inp, port) = row_in()?;
                let lap = single(self.consumed(core, ElementKind::LapTile), "Laplacian input")?;
                let out_kind = if role == Role::Flux {
                    ElementKind::OutputRow
                } else {
                    ElementKind::FluxTile
                };
                let out = fid(self.need(self.produced(core, out_kind), core, "output")?);
                self.windows(&mut steps, inp, port, 1, &items, |steps, d, r| {
                    steps.push(Step::AcqCons {
                        fifo: lap,
                        port: 0,
                        n: 1,
                    });
                    steps.push(Step::AcqProd { fifo: out });
                    let (inp, port) = (fid(inp), port);
                    let op = if role == Role::Flux {
                        Op::Flux {
                            inp,
                            port,
                            lap,
                            out,
                            d,
                            r,
                        }
                    } else {
                        Op::FluxMac {
                            inp,
                            port,
                            lap,
                            out,
                            d,
                            r,
                        }
                    };
                    steps.push(Step::Work { op, cycles });
                    (
                        vec![Step::RelCons {
                            fifo: lap,
                            port: 0,
                            n: 1,
                        }],
                        vec![Step::RelProd { fifo: out }],
                    )
                })?;
            }
            Role::FluxNonMac | Role::Gather => {
                let ft = single(self.consumed(core, ElementKind::FluxTile), "flux input")?;
                let out =
                    fid(self.need(self.produced(core, ElementKind::OutputRow), core, "output")?);
                // rows of other lanes, keyed by the fifo they arrive on
                let mut sources: Vec<(usize, Vec<(u32, u32)>)> = Vec::new();
                for (i, _) in self.consumed(core, ElementKind::OutputRow) {
                    if let Endpoint::Core(p) = self.plan.fifos[i].producer {
                        sources.push((i, self.items(p)));
                    }
                }
                let mut order: Vec<((u32, u32), Option<usize>)> =
                    items.iter().map(|&x| (x, None)).collect();
                for (i, rows) in &sources {
                    order.extend(rows.iter().map(|&x| (x, Some(*i))));
                }
                order.sort_unstable();
                let copy = gather_copy_cycles(self.dims.cols, self.fabric) as u32;
                for ((d, r), src) in order {
                    let (from, op, c) = match src {
                        None => (ft, Op::FluxNonMac { ft, out, d, r }, cycles),
                        Some(i) => (
                            fid(i),
                            Op::Copy {
                                from: fid(i),
                                out,
                                d,
                                r,
                            },
                            copy,
                        ),
                    };
                    steps.push(Step::AcqCons {
                        fifo: from,
                        port: 0,
                        n: 1,
                    });
                    steps.push(Step::AcqProd { fifo: out });
                    steps.push(Step::Work { op, cycles: c });
                    steps.push(Step::RelCons {
                        fifo: from,
                        port: 0,
                        n: 1,
                    });
                    steps.push(Step::RelProd { fifo: out });
                }
            }
        }
        Ok(steps)
    }

    /// Emits the acquire/release pattern of a consumer that reads windows
    /// of `2·radius + 1` rows from a shim-fed FIFO. `body` pushes the
    /// per-row steps that follow the window acquire and returns the steps
    /// to emit after and after-after the window release.
    fn windows(
        &self,
        steps: &mut Vec<Step>,
        fifo: usize,
        port: u16,
        radius: u32,
        items: &[(u32, u32)],
        mut body: impl FnMut(&mut Vec<Step>, u32, u32) -> (Vec<Step>, Vec<Step>),
    ) -> Result<()> {
        let stream = self.streams.get(&fifo).ok_or_else(|| {
            Error::Parameter(format!(
                "fifo {} is not shim fed",
                self.plan.fifos[fifo].name
            ))
        })?;
        let pos = |d: u32, r: u32| {
            stream
                .binary_search(&(d, r))
                .map_err(|_| Error::Parameter(format!("row {r} of plane {d} is not streamed")))
        };
        let id = fid(fifo);
        let mut cursor = 0usize;
        let mut held = 0usize;
        let skip = |steps: &mut Vec<Step>, from: usize, to: usize| {
            for _ in from..to {
                steps.push(Step::AcqCons {
                    fifo: id,
                    port,
                    n: 1,
                });
                steps.push(Step::RelCons {
                    fifo: id,
                    port,
                    n: 1,
                });
            }
        };
        for (k, &(d, r)) in items.iter().enumerate() {
            let lo = pos(d, r - radius)?;
            let hi = pos(d, r + radius)?;
            if held == 0 && cursor < lo {
                skip(steps, cursor, lo);
                cursor = lo;
            }
            held = hi + 1 - cursor;
            steps.push(Step::AcqCons {
                fifo: id,
                port,
                n: held as u16,
            });
            let (after, last) = body(steps, d, r);
            let next = items.get(k + 1).filter(|&&(nd, _)| nd == d);
            let release = match next {
                Some(&(nd, nr)) => (pos(nd, nr - radius)? - cursor).min(held),
                None => held.min(1),
            };
            if release > 0 {
                steps.push(Step::RelCons {
                    fifo: id,
                    port,
                    n: release as u16,
                });
            }
            steps.extend(after);
            steps.extend(last);
            cursor += release;
            held -= release;
            if next.is_none() && held > 0 {
                steps.push(Step::RelCons {
                    fifo: id,
                    port,
                    n: held as u16,
                });
                cursor += held;
                held = 0;
            }
        }
        skip(steps, cursor, stream.len());
        Ok(())
    }
}

/// Busiest resource's total cycles divided by the output rows, from the
/// same programs and cost model the engine runs. Cores, FIFO links and
/// shim channels each count as one resource.
pub(crate) fn bottleneck_cycles_per_row(
    plan: &MappingPlan,
    fabric: &FabricSpec,
    dims: Dims,
    work: &Work<'_>,
) -> Result<f64> {
    let programs = Programs::new(plan, fabric, dims, work)?;
    let mut worst = 0u64;
    let mut outputs = 0u64;
    let mut per_channel: BTreeMap<(usize, usize, bool), u64> = BTreeMap::new();
    for slot in &plan.slots {
        let p = slot.position;
        let own = programs.items(p).len() as u64;
        let copies = programs.produced_count(p) as u64 - own;
        let cycles = u64::from(programs.cycles(slot.role, p)) * own
            + copies * gather_copy_cycles(dims.cols, fabric);
        worst = worst.max(cycles);
    }
    for (i, f) in plan.fifos.iter().enumerate() {
        let count = match (programs.streams.get(&i), f.producer) {
            (Some(rows), _) => rows.len() as u64,
            (None, Endpoint::Core(p)) => match f.element {
                ElementKind::OutputRow => programs.produced_count(p) as u64,
                _ => programs.items(p).len() as u64,
            },
            (None, Endpoint::Shim { .. }) => 0,
        };
        let via_shim = f.shim_source().or(f.shim_sink());
        let t = transfer_timing(
            fabric,
            f.link,
            f.streams,
            f.element.bits(dims.cols, f.link),
            via_shim.is_some(),
        );
        worst = worst.max(t.duration * count);
        if let Some((s, c)) = via_shim {
            *per_channel
                .entry((s, c, f.shim_sink().is_some()))
                .or_default() += t.duration * count;
        }
        if f.shim_sink().is_some() {
            outputs += count;
        }
    }
    worst = per_channel.values().copied().fold(worst, u64::max);
    if outputs == 0 {
        return Ok(0.0);
    }
    Ok(worst as f64 / outputs as f64)
}
