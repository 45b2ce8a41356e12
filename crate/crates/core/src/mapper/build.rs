use super::{
    validate_plan, Design, ElementKind, InterfaceChoice, LinkSpec, MappingPlan, ObjectFifoSpec,
    Residue, ShimAssignment, ShimDirection, WorkAssignment, PLAN_VERSION,
};
use crate::error::{Error, Result};
use crate::fabric::{Buffer, CoreSlot, Endpoint, FabricSpec, LinkKind, Position, Role};
use crate::grid::DType;
use crate::stencil::StencilSpec;

/// Row width buffers are sized for unless stated otherwise.
pub const DEFAULT_ROW_COLS: usize = 256;

/// Rows one hdiff output row reads.
const HDIFF_WINDOW: usize = 5;
/// Rows of the shared broadcast buffer in a B-block.
const BBLOCK_BUFFER_ROWS: usize = 8;
/// Lanes per B-block in a scale-out.
const SCALE_OUT_LANES: usize = 4;
/// Ping-pong depth of inter-core and output FIFOs.
const PING_PONG: usize = 2;

/// Plan builders for one fabric and row width.
#[derive(Debug, Clone, Copy)]
pub struct Mapper<'a> {
    fabric: &'a FabricSpec,
    row_cols: usize,
}

impl<'a> Mapper<'a> {
    pub fn new(fabric: &'a FabricSpec) -> Self {
        Self {
            fabric,
            row_cols: DEFAULT_ROW_COLS,
        }
    }

    pub fn with_row_cols(mut self, row_cols: usize) -> Self {
        self.row_cols = row_cols;
        self
    }

    fn builder(&self, design: Design, dtype: DType) -> Builder<'a> {
        Builder {
            fabric: self.fabric,
            plan: MappingPlan {
                plan_version: PLAN_VERSION,
                design,
                dtype,
                row_cols: self.row_cols,
                slots: Vec::new(),
                fifos: Vec::new(),
                links: Vec::new(),
                shim_assignments: Vec::new(),
                work_division: Vec::new(),
            },
        }
    }

    fn check_row_cols(&self, min: usize) -> Result<()> {
        if self.row_cols < min {
            return Err(Error::Parameter(format!("row_cols must be at least {min}")));
        }
        Ok(())
    }

    /// One core runs the whole kernel; rows arrive straight from a shim
    /// read channel.
    pub fn single(&self, dtype: DType) -> Result<MappingPlan> {
        self.check_row_cols(5)?;
        let design = match dtype {
            DType::I32 => Design::SingleI32,
            DType::F32 => Design::SingleF32,
        };
        let mut b = self.builder(design, dtype);
        let core = Position::new(0, 0);
        b.slot(core, Role::Mono);
        b.fifo(FifoDraft {
            name: "in".into(),
            element: ElementKind::Row,
            depth: HDIFF_WINDOW,
            double_buffered: true,
            producer: Endpoint::Shim {
                index: 0,
                channel: 0,
            },
            consumers: vec![Endpoint::Core(core)],
            acquire_consume: HDIFF_WINDOW,
            link: LinkKind::ShimRead,
            streams: 1,
        });
        b.output("out", core, (0, 0));
        b.work(vec![core], Residue::ALL, Residue::ALL);
        b.finish()
    }

    /// Laplacian core feeding a flux core over `iface`.
    pub fn dual(&self, iface: InterfaceChoice) -> Result<MappingPlan> {
        self.check_row_cols(5)?;
        let mut b = self.builder(Design::DualI32 { iface }, DType::I32);
        let (lap, flux) = (Position::new(0, 0), Position::new(1, 0));
        b.slot(lap, Role::Lap);
        b.slot(flux, Role::Flux);
        b.broadcast("in", (0, 0), vec![lap, flux], HDIFF_WINDOW, true);
        b.forward("lap", ElementKind::LapTile, lap, flux, iface);
        b.output("out", flux, (0, 0));
        b.work(vec![lap, flux], Residue::ALL, Residue::ALL);
        b.finish()
    }

    /// Laplacian, flux-MAC and flux-select cores in a row.
    pub fn tri(&self) -> Result<MappingPlan> {
        self.check_row_cols(5)?;
        let mut b = self.builder(Design::TriI32, DType::I32);
        let cores = lane_cores(0, 0);
        b.slot(cores[0], Role::Lap);
        b.slot(cores[1], Role::FluxMac);
        b.slot(cores[2], Role::FluxNonMac);
        b.broadcast("in", (0, 0), vec![cores[0], cores[1]], HDIFF_WINDOW, true);
        b.forward(
            "lap",
            ElementKind::LapTile,
            cores[0],
            cores[1],
            InterfaceChoice::Direct,
        );
        b.forward(
            "ft",
            ElementKind::FluxTile,
            cores[1],
            cores[2],
            InterfaceChoice::Direct,
        );
        b.output("out", cores[2], (0, 0));
        b.work(cores.to_vec(), Residue::ALL, Residue::ALL);
        b.finish()
    }

    /// `lanes` tri-core pipelines sharing one broadcast input and one
    /// gather core.
    pub fn bblock(&self, lanes: usize) -> Result<MappingPlan> {
        self.check_row_cols(5)?;
        let mut b = self.builder(Design::BBlock { lanes }, DType::I32);
        add_bblock(&mut b, lanes, BBlockSite::default())?;
        b.finish()
    }

    /// `n_bblocks` four-lane B-blocks, two per shim DMA; block `j` takes
    /// planes `d ≡ j (mod n)`.
    pub fn scale_out(&self, n_bblocks: usize) -> Result<MappingPlan> {
        self.check_row_cols(5)?;
        if n_bblocks == 0 {
            return Err(Error::Parameter("need at least one B-block".into()));
        }
        let capacity = self
            .fabric
            .shim_read_capacity()
            .min(self.fabric.shim_write_capacity());
        if n_bblocks > capacity {
            return Err(Error::Placement(format!(
                "insufficient shim channels: {n_bblocks} B-blocks, {capacity} channels"
            )));
        }
        let mut b = self.builder(Design::ScaleOut { n_bblocks }, DType::I32);
        let per_shim = self.fabric.shim_read_channels;
        let rows_per_block = SCALE_OUT_LANES;
        let blocks_per_column = (self.fabric.array_rows / rows_per_block).max(1);
        for j in 0..n_bblocks {
            let site = BBlockSite {
                x0: 3 * (j / blocks_per_column),
                y0: rows_per_block * (j % blocks_per_column),
                shim: (j / per_shim, j % per_shim),
                prefix: format!("b{j}."),
                planes: Residue::new(n_bblocks, j),
            };
            add_bblock(&mut b, SCALE_OUT_LANES, site)?;
        }
        b.finish()
    }

    /// `n_cores` independent single-core pipelines, each with its own shim
    /// read and write channel. 2D stencils split planes, 1D stencils rows.
    pub fn elementary(
        &self,
        spec: &StencilSpec,
        n_cores: usize,
        dtype: DType,
    ) -> Result<MappingPlan> {
        spec.validate()?;
        self.check_row_cols(2 * spec.col_radius() + 1)?;
        if n_cores == 0 {
            return Err(Error::Parameter("need at least one core".into()));
        }
        let capacity = self
            .fabric
            .shim_read_capacity()
            .min(self.fabric.shim_write_capacity());
        if n_cores > capacity {
            return Err(Error::Placement(format!(
                "insufficient shim channels: {n_cores} cores, {capacity} channels"
            )));
        }
        let design = Design::ElementaryScale {
            stencil: spec.name,
            n_cores,
        };
        let mut b = self.builder(design, dtype);
        let per_shim = self.fabric.shim_read_channels;
        for j in 0..n_cores {
            let core = Position::new(j % self.fabric.array_cols, j / self.fabric.array_cols);
            let shim = (j / per_shim, j % per_shim);
            b.slot(core, Role::Elementary);
            let window = spec.row_extent();
            b.fifo(FifoDraft {
                name: format!("in{j}"),
                element: ElementKind::Row,
                depth: window,
                double_buffered: true,
                producer: Endpoint::Shim {
                    index: shim.0,
                    channel: shim.1,
                },
                consumers: vec![Endpoint::Core(core)],
                acquire_consume: window,
                link: LinkKind::ShimRead,
                streams: 1,
            });
            b.output(&format!("out{j}"), core, shim);
            let (planes, rows) = if spec.dims == 1 {
                (Residue::ALL, Residue::new(n_cores, j))
            } else {
                (Residue::new(n_cores, j), Residue::ALL)
            };
            b.work(vec![core], planes, rows);
        }
        b.finish()
    }

    pub fn design(&self, design: Design, dtype: DType) -> Result<MappingPlan> {
        match design {
            Design::SingleF32 => self.single(DType::F32),
            Design::SingleI32 => self.single(DType::I32),
            Design::DualI32 { iface } => self.dual(iface),
            Design::TriI32 => self.tri(),
            Design::BBlock { lanes } => self.bblock(lanes),
            Design::ScaleOut { n_bblocks } => self.scale_out(n_bblocks),
            Design::ElementaryScale { stencil, n_cores } => {
                self.elementary(&StencilSpec::builtin(stencil), n_cores, dtype)
            }
        }
    }
}

pub fn build_single_plan(dtype: DType, fabric: &FabricSpec) -> Result<MappingPlan> {
    Mapper::new(fabric).single(dtype)
}

pub fn build_dual_plan(iface: InterfaceChoice, fabric: &FabricSpec) -> Result<MappingPlan> {
    Mapper::new(fabric).dual(iface)
}

pub fn build_tri_plan(fabric: &FabricSpec) -> Result<MappingPlan> {
    Mapper::new(fabric).tri()
}

pub fn build_bblock_plan(lanes: usize, fabric: &FabricSpec) -> Result<MappingPlan> {
    Mapper::new(fabric).bblock(lanes)
}

pub fn scale_out_plan(n_bblocks: usize, fabric: &FabricSpec) -> Result<MappingPlan> {
    Mapper::new(fabric).scale_out(n_bblocks)
}

pub fn build_elementary_plan(
    spec: &StencilSpec,
    n_cores: usize,
    dtype: DType,
    fabric: &FabricSpec,
) -> Result<MappingPlan> {
    Mapper::new(fabric).elementary(spec, n_cores, dtype)
}

/// Builds any design; `dtype` only matters for elementary designs.
pub fn build_design(
    design: Design,
    dtype: DType,
    fabric: &FabricSpec,
    row_cols: usize,
) -> Result<MappingPlan> {
    Mapper::new(fabric)
        .with_row_cols(row_cols)
        .design(design, dtype)
}

fn lane_cores(x0: usize, y: usize) -> [Position; 3] {
    [
        Position::new(x0, y),
        Position::new(x0 + 1, y),
        Position::new(x0 + 2, y),
    ]
}

#[derive(Debug, Clone, Default)]
struct BBlockSite {
    x0: usize,
    y0: usize,
    shim: (usize, usize),
    prefix: String,
    planes: Residue,
}

fn add_bblock(b: &mut Builder<'_>, lanes: usize, site: BBlockSite) -> Result<()> {
    if lanes == 0 {
        return Err(Error::Parameter("a B-block needs at least one lane".into()));
    }
    if site.y0 + lanes > b.fabric.array_rows || site.x0 + 3 > b.fabric.array_cols {
        return Err(Error::Placement(format!(
            "{lanes} lanes at ({},{}) do not fit the {}x{} array",
            site.x0, site.y0, b.fabric.array_cols, b.fabric.array_rows
        )));
    }
    let p = &site.prefix;
    let gather_lane = lanes / 2;
    let lanes_cores: Vec<[Position; 3]> = (0..lanes)
        .map(|k| lane_cores(site.x0, site.y0 + k))
        .collect();
    for (k, cores) in lanes_cores.iter().enumerate() {
        b.slot(cores[0], Role::Lap);
        b.slot(cores[1], Role::FluxMac);
        b.slot(
            cores[2],
            if k == gather_lane {
                Role::Gather
            } else {
                Role::FluxNonMac
            },
        );
    }
    let readers = lanes_cores.iter().flat_map(|c| [c[0], c[1]]).collect();
    b.broadcast(
        &format!("{p}in"),
        site.shim,
        readers,
        BBLOCK_BUFFER_ROWS,
        true,
    );
    let gather = lanes_cores[gather_lane][2];
    for (k, cores) in lanes_cores.iter().enumerate() {
        b.forward(
            &format!("{p}lap{k}"),
            ElementKind::LapTile,
            cores[0],
            cores[1],
            InterfaceChoice::Direct,
        );
        b.forward(
            &format!("{p}ft{k}"),
            ElementKind::FluxTile,
            cores[1],
            cores[2],
            InterfaceChoice::Direct,
        );
        if k != gather_lane {
            let iface = if cores[2].adjacent(gather) {
                InterfaceChoice::Direct
            } else {
                InterfaceChoice::Stream
            };
            b.forward_streams(
                &format!("{p}g{k}"),
                ElementKind::OutputRow,
                cores[2],
                gather,
                iface,
                1,
            );
        }
        b.work(cores.to_vec(), site.planes, Residue::new(lanes, k));
    }
    b.output(&format!("{p}out"), gather, site.shim);
    Ok(())
}

struct FifoDraft {
    name: String,
    element: ElementKind,
    depth: usize,
    double_buffered: bool,
    producer: Endpoint,
    consumers: Vec<Endpoint>,
    acquire_consume: usize,
    link: LinkKind,
    streams: u32,
}

struct Builder<'a> {
    fabric: &'a FabricSpec,
    plan: MappingPlan,
}

impl Builder<'_> {
    fn slot(&mut self, p: Position, role: Role) {
        self.plan.slots.push(CoreSlot::new(p, role));
    }

    fn fifo(&mut self, d: FifoDraft) {
        let element_bits = d.element.bits(self.plan.row_cols, d.link);
        self.plan.links.push(LinkSpec {
            fifo: d.name.clone(),
            kind: d.link,
            src: d.producer,
            dsts: d.consumers.clone(),
        });
        if let Endpoint::Shim { index, channel } = d.producer {
            self.plan.shim_assignments.push(ShimAssignment {
                shim: index,
                channel,
                direction: ShimDirection::Read,
                fifo: d.name.clone(),
            });
        }
        for c in &d.consumers {
            if let Endpoint::Shim { index, channel } = c {
                self.plan.shim_assignments.push(ShimAssignment {
                    shim: *index,
                    channel: *channel,
                    direction: ShimDirection::Write,
                    fifo: d.name.clone(),
                });
            }
        }
        self.plan.fifos.push(ObjectFifoSpec {
            name: d.name,
            element: d.element,
            element_bits,
            depth: d.depth,
            double_buffered: d.double_buffered,
            producer: d.producer,
            consumers: d.consumers,
            acquire_consume: d.acquire_consume,
            acquire_produce: 1,
            link: d.link,
            streams: d.streams,
        });
    }

    fn broadcast(
        &mut self,
        name: &str,
        shim: (usize, usize),
        readers: Vec<Position>,
        depth: usize,
        double: bool,
    ) {
        self.fifo(FifoDraft {
            name: name.into(),
            element: ElementKind::Row,
            depth,
            double_buffered: double,
            producer: Endpoint::Shim {
                index: shim.0,
                channel: shim.1,
            },
            consumers: readers.into_iter().map(Endpoint::Core).collect(),
            acquire_consume: HDIFF_WINDOW,
            link: LinkKind::StreamBroadcast,
            streams: 1,
        });
    }

    fn forward(
        &mut self,
        name: &str,
        element: ElementKind,
        from: Position,
        to: Position,
        iface: InterfaceChoice,
    ) {
        let streams = self.fabric.streams_per_direction;
        self.forward_streams(name, element, from, to, iface, streams);
    }

    fn forward_streams(
        &mut self,
        name: &str,
        element: ElementKind,
        from: Position,
        to: Position,
        iface: InterfaceChoice,
        streams: u32,
    ) {
        self.fifo(FifoDraft {
            name: name.into(),
            element,
            depth: PING_PONG,
            double_buffered: false,
            producer: Endpoint::Core(from),
            consumers: vec![Endpoint::Core(to)],
            acquire_consume: 1,
            link: iface.link_kind(),
            streams: if iface == InterfaceChoice::Stream {
                streams
            } else {
                1
            },
        });
    }

    fn output(&mut self, name: &str, core: Position, shim: (usize, usize)) {
        self.fifo(FifoDraft {
            name: name.into(),
            element: ElementKind::OutputRow,
            depth: PING_PONG,
            double_buffered: false,
            producer: Endpoint::Core(core),
            consumers: vec![Endpoint::Shim {
                index: shim.0,
                channel: shim.1,
            }],
            acquire_consume: 1,
            link: LinkKind::ShimWrite,
            streams: 1,
        });
    }

    fn work(&mut self, cores: Vec<Position>, planes: Residue, rows: Residue) {
        self.plan.work_division.push(WorkAssignment {
            cores,
            planes,
            rows,
        });
    }

    fn finish(mut self) -> Result<MappingPlan> {
        assign_resources(&mut self.plan);
        let violations = validate_plan(&self.plan, self.fabric);
        if !violations.is_empty() {
            return Err(Error::Placement(
                violations
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join("; "),
            ));
        }
        Ok(self.plan)
    }
}

/// DMA channels each core needs in its busier direction, derived from the
/// FIFOs. Shim, stream and broadcast endpoints each take one channel;
/// neighbour-memory and cascade links take none.
pub(crate) fn dma_demand(plan: &MappingPlan, core: Position) -> (usize, usize) {
    let (mut inbound, mut outbound) = (0, 0);
    for f in &plan.fifos {
        let uses_dma = matches!(
            f.link,
            LinkKind::ShimRead | LinkKind::ShimWrite | LinkKind::Stream | LinkKind::StreamBroadcast
        );
        if !uses_dma {
            continue;
        }
        if f.producer == Endpoint::Core(core) {
            outbound += 1;
        }
        if f.consumers.contains(&Endpoint::Core(core)) {
            inbound += 1;
        }
    }
    (inbound, outbound)
}

/// Buffers each FIFO occupies on a core: DMA-fed buffers live with the
/// consumer, shared-memory buffers and output buffers with the producer,
/// and cascades hold nothing.
pub(crate) fn fifo_buffers(plan: &MappingPlan, core: Position) -> Vec<Buffer> {
    let mut out = Vec::new();
    for f in &plan.fifos {
        let here = match f.link {
            LinkKind::Cascade => false,
            LinkKind::NeighborMemory | LinkKind::ShimWrite => f.producer == Endpoint::Core(core),
            LinkKind::ShimRead | LinkKind::Stream | LinkKind::StreamBroadcast => {
                f.consumers.contains(&Endpoint::Core(core))
            }
        };
        if here {
            out.push(Buffer {
                name: f.name.clone(),
                bytes: f.element_bytes() * f.depth,
                double_buffered: f.double_buffered,
            });
        }
    }
    out
}

fn assign_resources(plan: &mut MappingPlan) {
    for i in 0..plan.slots.len() {
        let p = plan.slots[i].position;
        let buffers = fifo_buffers(plan, p);
        let (inbound, outbound) = dma_demand(plan, p);
        let slot = &mut plan.slots[i];
        slot.buffers = buffers;
        slot.dma_uses = inbound.max(outbound);
    }
}
