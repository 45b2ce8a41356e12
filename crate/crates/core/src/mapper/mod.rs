//! Mapping plans: which core does what, and how data moves between them.
//!
//! A plan is independent of the grid it will run on, except for
//! `row_cols`, the widest row its buffers are sized for.

mod build;
mod validate;

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use build::{
    build_bblock_plan, build_design, build_dual_plan, build_elementary_plan, build_single_plan,
    build_tri_plan, scale_out_plan, Mapper, DEFAULT_ROW_COLS,
};
pub use validate::{check_partition, validate_plan};

use crate::error::{Error, Result};
use crate::fabric::{CoreSlot, Endpoint, LinkKind, Position, Role};
use crate::grid::DType;
use crate::stencil::StencilKind;

pub const PLAN_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterfaceChoice {
    /// Shared neighbour memory.
    Direct,
    Stream,
    /// Accumulator-precision cascade.
    Cascade,
}

impl InterfaceChoice {
    pub fn link_kind(self) -> LinkKind {
        match self {
            InterfaceChoice::Direct => LinkKind::NeighborMemory,
            InterfaceChoice::Stream => LinkKind::Stream,
            InterfaceChoice::Cascade => LinkKind::Cascade,
        }
    }

    fn name(self) -> &'static str {
        match self {
            InterfaceChoice::Direct => "direct",
            InterfaceChoice::Stream => "stream",
            InterfaceChoice::Cascade => "cascade",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Design {
    SingleF32,
    SingleI32,
    DualI32 {
        iface: InterfaceChoice,
    },
    TriI32,
    BBlock {
        lanes: usize,
    },
    ScaleOut {
        n_bblocks: usize,
    },
    ElementaryScale {
        stencil: StencilKind,
        n_cores: usize,
    },
}

impl Design {
    /// The designs compared in the single-plane design study, slowest first.
    pub const STUDY: [Design; 6] = [
        Design::SingleF32,
        Design::SingleI32,
        Design::DualI32 {
            iface: InterfaceChoice::Cascade,
        },
        Design::DualI32 {
            iface: InterfaceChoice::Stream,
        },
        Design::DualI32 {
            iface: InterfaceChoice::Direct,
        },
        Design::TriI32,
    ];

    pub fn name(&self) -> String {
        match self {
            Design::SingleF32 => "single_f32".into(),
            Design::SingleI32 => "single_i32".into(),
            Design::DualI32 { iface } => format!("dual_i32_{}", iface.name()),
            Design::TriI32 => "tri_i32_direct".into(),
            Design::BBlock { lanes } => format!("bblock:{lanes}"),
            Design::ScaleOut { n_bblocks } => format!("scaleout:{n_bblocks}"),
            Design::ElementaryScale { stencil, n_cores } => {
                format!("elementary:{stencil}:{n_cores}")
            }
        }
    }

    /// Element type the design's kernels are written for. Elementary
    /// designs accept either.
    pub fn dtype(&self) -> Option<DType> {
        match self {
            Design::SingleF32 => Some(DType::F32),
            Design::ElementaryScale { .. } => None,
            _ => Some(DType::I32),
        }
    }

    pub fn is_hdiff(&self) -> bool {
        !matches!(self, Design::ElementaryScale { .. })
    }
}

impl fmt::Display for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Design {
    type Err = Error;

    /// Accepts the names produced by [`Design::name`].
    fn from_str(s: &str) -> Result<Self> {
        let count = |v: &str| {
            v.parse::<usize>()
                .map_err(|_| Error::Parameter(format!("bad count in design {s:?}")))
        };
        let parts: Vec<&str> = s.split(':').collect();
        Ok(match parts.as_slice() {
            ["single_f32"] => Design::SingleF32,
            ["single_i32"] => Design::SingleI32,
            ["dual_i32_direct"] => Design::DualI32 {
                iface: InterfaceChoice::Direct,
            },
            ["dual_i32_stream"] => Design::DualI32 {
                iface: InterfaceChoice::Stream,
            },
            ["dual_i32_cascade"] => Design::DualI32 {
                iface: InterfaceChoice::Cascade,
            },
            ["tri_i32_direct"] | ["tri_i32"] => Design::TriI32,
            ["bblock", n] => Design::BBlock { lanes: count(n)? },
            ["scaleout", n] => Design::ScaleOut {
                n_bblocks: count(n)?,
            },
            ["elementary", k, n] => Design::ElementaryScale {
                stencil: k.parse()?,
                n_cores: count(n)?,
            },
            _ => return Err(Error::Parameter(format!("unknown design {s:?}"))),
        })
    }
}

/// What one FIFO element holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementKind {
    /// One input grid row.
    Row,
    /// The five Laplacians of every interior point of one output row.
    LapTile,
    /// Four flux candidates and limiter masks per point, plus the centre
    /// input row.
    FluxTile,
    /// One finished output row.
    OutputRow,
}

impl ElementKind {
    /// Size in bits for rows of `cols` 32-bit elements. Laplacians sent
    /// over a cascade keep 48-bit accumulator precision.
    pub fn bits(self, cols: usize, link: LinkKind) -> u64 {
        let c = cols as u64;
        let w = c.saturating_sub(4);
        match self {
            ElementKind::Row | ElementKind::OutputRow => 32 * c,
            ElementKind::LapTile if link == LinkKind::Cascade => 5 * w * 48,
            ElementKind::LapTile => 5 * w * 32,
            ElementKind::FluxTile => 4 * w * 32 + 4 * w + 32 * c,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectFifoSpec {
    pub name: String,
    pub element: ElementKind,
    /// Size of one element at the plan's `row_cols`.
    pub element_bits: u64,
    pub depth: usize,
    /// Ping-pong buffering doubles the number of elements in flight.
    pub double_buffered: bool,
    pub producer: Endpoint,
    pub consumers: Vec<Endpoint>,
    pub acquire_consume: usize,
    pub acquire_produce: usize,
    pub link: LinkKind,
    /// Parallel streams used by stream links.
    pub streams: u32,
}

impl ObjectFifoSpec {
    pub fn capacity(&self) -> usize {
        if self.double_buffered {
            2 * self.depth
        } else {
            self.depth
        }
    }

    pub fn element_bytes(&self) -> usize {
        self.element_bits.div_ceil(8) as usize
    }

    pub fn shim_source(&self) -> Option<(usize, usize)> {
        match self.producer {
            Endpoint::Shim { index, channel } => Some((index, channel)),
            Endpoint::Core(_) => None,
        }
    }

    pub fn shim_sink(&self) -> Option<(usize, usize)> {
        self.consumers.iter().find_map(|c| match c {
            Endpoint::Shim { index, channel } => Some((*index, *channel)),
            Endpoint::Core(_) => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub fifo: String,
    pub kind: LinkKind,
    pub src: Endpoint,
    pub dsts: Vec<Endpoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShimDirection {
    Read,
    Write,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShimAssignment {
    pub shim: usize,
    pub channel: usize,
    pub direction: ShimDirection,
    pub fifo: String,
}

/// Integers `x` with `x mod modulus == residue`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Residue {
    pub modulus: usize,
    pub residue: usize,
}

impl Default for Residue {
    fn default() -> Self {
        Residue::ALL
    }
}

impl Residue {
    pub const ALL: Residue = Residue {
        modulus: 1,
        residue: 0,
    };

    pub fn new(modulus: usize, residue: usize) -> Self {
        Self { modulus, residue }
    }

    pub fn contains(&self, x: usize) -> bool {
        self.modulus > 0 && x % self.modulus == self.residue
    }
}

/// Output rows one pipeline produces. `cores` lists the pipeline in
/// dataflow order; the last core emits the output rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkAssignment {
    pub cores: Vec<Position>,
    pub planes: Residue,
    pub rows: Residue,
}

impl WorkAssignment {
    pub fn worker(&self) -> Position {
        *self.cores.last().expect("pipeline has cores")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingPlan {
    pub plan_version: u32,
    pub design: Design,
    pub dtype: DType,
    pub row_cols: usize,
    pub slots: Vec<CoreSlot>,
    pub fifos: Vec<ObjectFifoSpec>,
    pub links: Vec<LinkSpec>,
    pub shim_assignments: Vec<ShimAssignment>,
    pub work_division: Vec<WorkAssignment>,
}

impl MappingPlan {
    pub fn slot(&self, p: Position) -> Option<&CoreSlot> {
        self.slots.iter().find(|s| s.position == p)
    }

    pub fn fifo(&self, name: &str) -> Option<&ObjectFifoSpec> {
        self.fifos.iter().find(|f| f.name == name)
    }

    pub fn compute_cores(&self) -> usize {
        self.slots.len()
    }

    pub fn cores_with_role(&self, role: Role) -> usize {
        self.slots.iter().filter(|s| s.role == role).count()
    }

    /// Distinct shim DMAs used.
    pub fn shims_used(&self) -> usize {
        let mut shims: Vec<usize> = self.shim_assignments.iter().map(|a| a.shim).collect();
        shims.sort_unstable();
        shims.dedup();
        shims.len()
    }

    pub fn shim_channels(&self, direction: ShimDirection) -> usize {
        self.shim_assignments
            .iter()
            .filter(|a| a.direction == direction)
            .count()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let version = serde_json::from_str::<serde_json::Value>(text)?
            .get("plan_version")
            .and_then(|v| v.as_u64());
        if version != Some(PLAN_VERSION as u64) {
            return Err(Error::Format(format!(
                "plan_version must be {PLAN_VERSION}, got {version:?}"
            )));
        }
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn design_names_round_trip() {
        let mut all = Design::STUDY.to_vec();
        all.extend([
            Design::BBlock { lanes: 4 },
            Design::ScaleOut { n_bblocks: 32 },
            Design::ElementaryScale {
                stencil: StencilKind::Jac2d3pt,
                n_cores: 32,
            },
        ]);
        for d in all {
            assert_eq!(d.name().parse::<Design>().unwrap(), d);
        }
        assert!("quad_i32".parse::<Design>().is_err());
        assert!("bblock:x".parse::<Design>().is_err());
    }

    #[test]
    fn element_sizes() {
        assert_eq!(ElementKind::Row.bits(256, LinkKind::ShimRead), 8192);
        assert_eq!(
            ElementKind::LapTile.bits(256, LinkKind::NeighborMemory),
            5 * 252 * 32
        );
        assert_eq!(
            ElementKind::LapTile.bits(256, LinkKind::Cascade),
            5 * 252 * 48
        );
        assert_eq!(
            ElementKind::FluxTile.bits(12, LinkKind::NeighborMemory),
            4 * 8 * 33 + 12 * 32
        );
    }

    #[test]
    fn residues() {
        let r = Residue::new(4, 1);
        assert!(r.contains(5) && !r.contains(4));
        assert!(Residue::ALL.contains(17));
    }
}
