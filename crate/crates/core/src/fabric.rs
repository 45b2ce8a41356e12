//! Parametric description of a tiled vector-core device and the structural
//! checks every placement must pass.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analytic::DatapathSpec;
use crate::error::{Error, Result, Violation, ViolationKind};

pub const FABRIC_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FabricSpec {
    pub array_cols: usize,
    pub array_rows: usize,
    pub data_mem_bytes: usize,
    pub dmas_per_core: usize,
    pub neighbor_mem_bits: u32,
    pub cascade_bits: u32,
    /// Width of one stream; `streams_per_direction` of them are available.
    pub stream_bits: u32,
    pub streams_per_direction: u32,
    pub shim_count: usize,
    pub shim_channel_bits: u32,
    pub shim_read_channels: usize,
    pub shim_write_channels: usize,
    pub clock_ghz: f64,
    pub datapath: DatapathSpec,
    pub srs_latency_cycles: u32,
    pub f32_mac_latency: u32,
    pub f32_penalty: f64,
    /// Fraction of the ideal MAC rate a hand-scheduled kernel sustains.
    pub mac_efficiency: f64,
}

impl Default for FabricSpec {
    fn default() -> Self {
        default_versal_fabric()
    }
}

/// A 400-core array at 1 GHz with 32 KiB per core and 16 shim DMAs.
pub fn default_versal_fabric() -> FabricSpec {
    FabricSpec {
        array_cols: 50,
        array_rows: 8,
        data_mem_bytes: 32 * 1024,
        dmas_per_core: 2,
        neighbor_mem_bits: 256,
        cascade_bits: 384,
        stream_bits: 32,
        streams_per_direction: 2,
        shim_count: 16,
        shim_channel_bits: 256,
        shim_read_channels: 2,
        shim_write_channels: 2,
        clock_ghz: 1.0,
        datapath: DatapathSpec::default(),
        srs_latency_cycles: 4,
        f32_mac_latency: 2,
        f32_penalty: 1.3,
        mac_efficiency: 0.85,
    }
}

impl FabricSpec {
    pub fn core_count(&self) -> usize {
        self.array_cols * self.array_rows
    }

    pub fn shim_read_capacity(&self) -> usize {
        self.shim_count * self.shim_read_channels
    }

    pub fn shim_write_capacity(&self) -> usize {
        self.shim_count * self.shim_write_channels
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("array_cols", self.array_cols),
            ("array_rows", self.array_rows),
            ("data_mem_bytes", self.data_mem_bytes),
            ("dmas_per_core", self.dmas_per_core),
            ("shim_count", self.shim_count),
            ("shim_read_channels", self.shim_read_channels),
            ("shim_write_channels", self.shim_write_channels),
        ];
        let widths = [
            ("neighbor_mem_bits", self.neighbor_mem_bits),
            ("cascade_bits", self.cascade_bits),
            ("stream_bits", self.stream_bits),
            ("streams_per_direction", self.streams_per_direction),
            ("shim_channel_bits", self.shim_channel_bits),
        ];
        let bad = counts
            .iter()
            .filter(|(_, v)| *v == 0)
            .map(|(n, _)| *n)
            .chain(widths.iter().filter(|(_, v)| *v == 0).map(|(n, _)| *n))
            .collect::<Vec<_>>();
        if !bad.is_empty() {
            return Err(Error::Parameter(format!(
                "fabric fields must be positive: {}",
                bad.join(", ")
            )));
        }
        if !(self.clock_ghz > 0.0) || !(self.f32_penalty >= 1.0) {
            return Err(Error::Parameter(
                "clock_ghz must be > 0 and f32_penalty >= 1".into(),
            ));
        }
        if !(self.mac_efficiency > 0.0 && self.mac_efficiency <= 1.0) {
            return Err(Error::Parameter("mac_efficiency must be in (0, 1]".into()));
        }
        self.datapath.validate()
    }

    pub fn to_json(&self) -> String {
        let mut value = serde_json::to_value(self).expect("fabric serializes");
        let obj = value.as_object_mut().unwrap();
        let mut out = serde_json::Map::new();
        out.insert("fabric_version".into(), FABRIC_VERSION.into());
        out.append(obj);
        serde_json::to_string_pretty(&out).unwrap()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut value: serde_json::Value = serde_json::from_str(text)?;
        let obj = value
            .as_object_mut()
            .ok_or_else(|| Error::Format("fabric config must be a JSON object".into()))?;
        match obj.remove("fabric_version").and_then(|v| v.as_u64()) {
            Some(v) if v == FABRIC_VERSION as u64 => {}
            other => {
                return Err(Error::Format(format!(
                    "fabric_version must be {FABRIC_VERSION}, got {other:?}"
                )))
            }
        }
        let spec: FabricSpec = serde_json::from_value(value)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// Core coordinates: column `col`, row `row`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Position {
    pub col: usize,
    pub row: usize,
}

impl Position {
    pub const fn new(col: usize, row: usize) -> Self {
        Self { col, row }
    }

    /// Shares an edge with `other`.
    pub fn adjacent(self, other: Position) -> bool {
        self.col.abs_diff(other.col) + self.row.abs_diff(other.row) == 1
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.col, self.row)
    }
}

/// One end of a link: a core, or one channel of a shim DMA.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    Core(Position),
    Shim { index: usize, channel: usize },
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Core(p) => write!(f, "core{p}"),
            Endpoint::Shim { index, channel } => write!(f, "shim{index}.{channel}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LinkKind {
    NeighborMemory,
    Cascade,
    Stream,
    StreamBroadcast,
    ShimRead,
    ShimWrite,
}

impl LinkKind {
    pub fn needs_adjacency(self) -> bool {
        matches!(self, LinkKind::NeighborMemory | LinkKind::Cascade)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    /// Five Laplacians per output point.
    Lap,
    /// Both flux stages on one core (dual-core design).
    Flux,
    /// Flux differences and limiter products.
    FluxMac,
    /// Limiter selection, divergence and update.
    FluxNonMac,
    /// The whole kernel on one core.
    Mono,
    /// FluxNonMac work plus reordering lane outputs for the shim write.
    Gather,
    Elementary,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Buffer {
    pub name: String,
    pub bytes: usize,
    pub double_buffered: bool,
}

impl Buffer {
    pub fn footprint(&self) -> usize {
        if self.double_buffered {
            2 * self.bytes
        } else {
            self.bytes
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoreSlot {
    pub position: Position,
    pub role: Role,
    pub buffers: Vec<Buffer>,
    pub dma_uses: usize,
}

impl CoreSlot {
    pub fn new(position: Position, role: Role) -> Self {
        Self {
            position,
            role,
            buffers: Vec::new(),
            dma_uses: 0,
        }
    }

    pub fn memory_bytes(&self) -> usize {
        self.buffers.iter().map(Buffer::footprint).sum()
    }
}

pub fn on_grid(fabric: &FabricSpec, p: Position) -> bool {
    p.col < fabric.array_cols && p.row < fabric.array_rows
}

/// Every constraint `slot` violates; empty when it can be placed.
pub fn validate_slot(fabric: &FabricSpec, slot: &CoreSlot) -> Vec<Violation> {
    let mut out = Vec::new();
    if !on_grid(fabric, slot.position) {
        out.push(Violation::new(
            ViolationKind::OffGrid,
            format!(
                "core {} outside {}x{} array",
                slot.position, fabric.array_cols, fabric.array_rows
            ),
        ));
    }
    let bytes = slot.memory_bytes();
    if bytes > fabric.data_mem_bytes {
        out.push(Violation::new(
            ViolationKind::MemoryOverflow,
            format!(
                "core {} needs {bytes} B of {} B",
                slot.position, fabric.data_mem_bytes
            ),
        ));
    }
    if slot.dma_uses > fabric.dmas_per_core {
        out.push(Violation::new(
            ViolationKind::DmaOvercommit,
            format!(
                "core {} uses {} of {} DMAs",
                slot.position, slot.dma_uses, fabric.dmas_per_core
            ),
        ));
    }
    out
}

fn endpoint_on_grid(fabric: &FabricSpec, e: Endpoint, read: bool) -> bool {
    match e {
        Endpoint::Core(p) => on_grid(fabric, p),
        Endpoint::Shim { index, channel } => {
            let channels = if read {
                fabric.shim_read_channels
            } else {
                fabric.shim_write_channels
            };
            index < fabric.shim_count && channel < channels
        }
    }
}

/// Structural checks of one link from `src` to `dsts`.
pub fn validate_link(
    fabric: &FabricSpec,
    kind: LinkKind,
    src: Endpoint,
    dsts: &[Endpoint],
) -> Vec<Violation> {
    let mut out = Vec::new();
    let bad = |detail: String| Violation::new(ViolationKind::BadLinkEndpoint, detail);
    if dsts.is_empty() {
        out.push(Violation::new(
            if kind == LinkKind::StreamBroadcast {
                ViolationKind::EmptyBroadcast
            } else {
                ViolationKind::BadLinkEndpoint
            },
            format!("{kind:?} link from {src} has no destination"),
        ));
        return out;
    }
    let src_is_shim = matches!(src, Endpoint::Shim { .. });
    for e in std::iter::once(&src).chain(dsts) {
        let read = src_is_shim;
        if !endpoint_on_grid(fabric, *e, read) {
            out.push(Violation::new(
                ViolationKind::OffGrid,
                format!("{kind:?} endpoint {e} does not exist"),
            ));
        }
    }
    let dst_shims = dsts
        .iter()
        .filter(|d| matches!(d, Endpoint::Shim { .. }))
        .count();
    match kind {
        LinkKind::ShimRead => {
            if !src_is_shim || dst_shims > 0 || dsts.len() != 1 {
                out.push(bad(format!(
                    "shim read must go from one shim channel to one core, got {src} -> {dsts:?}"
                )));
            }
        }
        LinkKind::ShimWrite => {
            if src_is_shim || dst_shims != 1 || dsts.len() != 1 {
                out.push(bad(format!(
                    "shim write must go from one core to one shim channel, got {src} -> {dsts:?}"
                )));
            }
        }
        LinkKind::Stream | LinkKind::StreamBroadcast => {
            if dst_shims > 0 {
                out.push(bad(format!(
                    "{kind:?} cannot target a shim ({src} -> {dsts:?})"
                )));
            }
            if kind == LinkKind::Stream && dsts.len() != 1 {
                out.push(bad(format!(
                    "point-to-point stream from {src} has {} destinations",
                    dsts.len()
                )));
            }
        }
        LinkKind::NeighborMemory | LinkKind::Cascade => {
            let Endpoint::Core(s) = src else {
                out.push(bad(format!("{kind:?} must start at a core, not {src}")));
                return out;
            };
            if dsts.len() != 1 {
                out.push(bad(format!(
                    "{kind:?} from {src} must have exactly one destination"
                )));
            }
            for d in dsts {
                match d {
                    Endpoint::Core(p) if s.adjacent(*p) => {}
                    _ => out.push(Violation::new(
                        ViolationKind::NotAdjacent,
                        format!("{kind:?} link {src} -> {d}"),
                    )),
                }
            }
        }
    }
    out
}

/// Bits per cycle of one lane of `kind`.
pub fn link_bandwidth_bits(fabric: &FabricSpec, kind: LinkKind) -> u32 {
    match kind {
        LinkKind::NeighborMemory => fabric.neighbor_mem_bits,
        LinkKind::Cascade => fabric.cascade_bits,
        LinkKind::Stream | LinkKind::StreamBroadcast => fabric.stream_bits,
        LinkKind::ShimRead | LinkKind::ShimWrite => fabric.shim_channel_bits,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn core(c: usize, r: usize) -> Endpoint {
        Endpoint::Core(Position::new(c, r))
    }

    #[test]
    fn defaults() {
        let f = default_versal_fabric();
        assert_eq!(f.shim_count, 16);
        assert_eq!(f.data_mem_bytes, 32768);
        assert_eq!(f.datapath.macs_per_cycle, 8);
        assert_eq!(f.core_count(), 400);
        f.validate().unwrap();
    }

    #[test]
    fn slot_checks() {
        let f = default_versal_fabric();
        let mut s = CoreSlot::new(Position::new(0, 0), Role::Mono);
        assert!(validate_slot(&f, &s).is_empty());
        s.buffers.push(Buffer {
            name: "big".into(),
            bytes: 40 * 1024,
            double_buffered: false,
        });
        s.dma_uses = 3;
        let kinds: Vec<_> = validate_slot(&f, &s).iter().map(|v| v.kind).collect();
        assert_eq!(
            kinds,
            vec![ViolationKind::MemoryOverflow, ViolationKind::DmaOvercommit]
        );
        assert_eq!(validate_slot(&f, &s)[0].kind.to_string(), "memory overflow");
        let off = CoreSlot::new(Position::new(50, 0), Role::Lap);
        assert_eq!(validate_slot(&f, &off)[0].kind, ViolationKind::OffGrid);
    }

    #[test]
    fn link_checks() {
        let f = default_versal_fabric();
        assert!(validate_link(&f, LinkKind::Cascade, core(3, 1), &[core(4, 1)]).is_empty());
        let v = validate_link(&f, LinkKind::NeighborMemory, core(0, 0), &[core(5, 5)]);
        assert_eq!(v[0].kind, ViolationKind::NotAdjacent);
        assert_eq!(v[0].kind.to_string(), "not adjacent");
        assert!(!validate_link(&f, LinkKind::Cascade, core(0, 0), &[core(1, 1)]).is_empty());
        let shim = Endpoint::Shim {
            index: 0,
            channel: 0,
        };
        let fan: Vec<_> = (0..8).map(|r| core(0, r)).collect();
        assert!(validate_link(&f, LinkKind::StreamBroadcast, shim, &fan).is_empty());
        assert_eq!(
            validate_link(&f, LinkKind::StreamBroadcast, shim, &[])[0].kind,
            ViolationKind::EmptyBroadcast
        );
        assert!(validate_link(&f, LinkKind::Stream, core(0, 0), &[core(9, 7)]).is_empty());
        let far_shim = Endpoint::Shim {
            index: 16,
            channel: 0,
        };
        assert_eq!(
            validate_link(&f, LinkKind::ShimRead, far_shim, &[core(0, 0)])[0].kind,
            ViolationKind::OffGrid
        );
        assert!(validate_link(&f, LinkKind::ShimWrite, core(0, 0), &[shim]).is_empty());
    }

    #[test]
    fn bandwidths() {
        let f = default_versal_fabric();
        assert_eq!(link_bandwidth_bits(&f, LinkKind::Cascade), 384);
        assert_eq!(link_bandwidth_bits(&f, LinkKind::Stream), 32);
        assert_eq!(link_bandwidth_bits(&f, LinkKind::ShimRead), 256);
        assert_eq!(link_bandwidth_bits(&f, LinkKind::NeighborMemory), 256);
    }

    #[test]
    fn config_round_trip() {
        let mut f = default_versal_fabric();
        f.f32_penalty = 1.2999999999999998;
        f.clock_ghz = 1.25;
        let text = f.to_json();
        assert!(text.contains("\"fabric_version\": 1"));
        let back = FabricSpec::from_json(&text).unwrap();
        assert_eq!(back, f);
        assert_eq!(back.f32_penalty.to_bits(), f.f32_penalty.to_bits());
        assert_eq!(back.to_json(), text);
        assert!(FabricSpec::from_json(
            &text.replace("\"fabric_version\": 1", "\"fabric_version\": 2")
        )
        .is_err());
        assert!(
            FabricSpec::from_json(&text.replace("\"shim_count\": 16", "\"shim_count\": 0"))
                .is_err()
        );
        assert!(FabricSpec::from_json(&text.replace("\"clock_ghz\"", "\"clock\"")).is_err());
    }

    proptest! {
        #[test]
        fn slot_validation_is_monotone(bufs in proptest::collection::vec((0usize..20000, any::<bool>()), 0..5),
                                       extra in 0usize..20000, dma in 0usize..4) {
            let f = default_versal_fabric();
            let mut s = CoreSlot::new(Position::new(1, 1), Role::Lap);
            for (i, (bytes, db)) in bufs.into_iter().enumerate() {
                s.buffers.push(Buffer { name: format!("b{i}"), bytes, double_buffered: db });
            }
            s.dma_uses = dma;
            let before: Vec<_> = validate_slot(&f, &s).into_iter().map(|v| v.kind).collect();
            s.buffers.push(Buffer { name: "extra".into(), bytes: extra, double_buffered: false });
            s.dma_uses += 1;
            let after: Vec<_> = validate_slot(&f, &s).into_iter().map(|v| v.kind).collect();
            for k in before {
                prop_assert!(after.contains(&k));
            }
        }

        #[test]
        fn adjacency_links_need_neighbours(a in (0usize..50, 0usize..8), b in (0usize..50, 0usize..8)) {
            let f = default_versal_fabric();
            let (pa, pb) = (Position::new(a.0, a.1), Position::new(b.0, b.1));
            for kind in [LinkKind::NeighborMemory, LinkKind::Cascade] {
                let ok = validate_link(&f, kind, Endpoint::Core(pa), &[Endpoint::Core(pb)]).is_empty();
                prop_assert_eq!(ok, pa.adjacent(pb));
            }
        }
    }
}
