use std::fmt;

use serde::{Deserialize, Serialize};

/// Result alias used across the crate.
pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("index ({r}, {c}, {d}) outside valid range for {rows}x{cols}x{depth} grid")]
    Index {
        r: usize,
        c: usize,
        d: usize,
        rows: usize,
        cols: usize,
        depth: usize,
    },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("placement error: {0}")]
    Placement(String),
    #[error("invalid plan: {}", join_violations(.0))]
    InvalidPlan(Vec<Violation>),
    #[error("fifo protocol error: {0}")]
    Protocol(String),
    #[error("deadlock at cycle {cycle}: {}", join_blocked(.blocked))]
    Deadlock {
        cycle: u64,
        blocked: Vec<BlockedFifo>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// A single failed structural check. Violations are data, not errors: the
/// validators collect every one they find.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub detail: String,
}

impl Violation {
    pub fn new(kind: ViolationKind, detail: impl Into<String>) -> Self {
        Self {
            kind,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.detail)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    MemoryOverflow,
    DmaOvercommit,
    OffGrid,
    NotAdjacent,
    EmptyBroadcast,
    BadLinkEndpoint,
    StreamWidth,
    FifoDepth,
    FifoEndpoint,
    FifoLink,
    ShimOvercommit,
    WorkOverlap,
    WorkGap,
    DuplicateCore,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ViolationKind::MemoryOverflow => "memory overflow",
            ViolationKind::DmaOvercommit => "dma overcommit",
            ViolationKind::OffGrid => "off grid",
            ViolationKind::NotAdjacent => "not adjacent",
            ViolationKind::EmptyBroadcast => "empty broadcast",
            ViolationKind::BadLinkEndpoint => "bad link endpoint",
            ViolationKind::StreamWidth => "stream width",
            ViolationKind::FifoDepth => "fifo depth",
            ViolationKind::FifoEndpoint => "fifo endpoint",
            ViolationKind::FifoLink => "fifo link",
            ViolationKind::ShimOvercommit => "shim overcommit",
            ViolationKind::WorkOverlap => "work overlap",
            ViolationKind::WorkGap => "work gap",
            ViolationKind::DuplicateCore => "duplicate core",
        };
        f.write_str(s)
    }
}

/// Diagnostic for a FIFO that a blocked process was waiting on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockedFifo {
    pub fifo: String,
    pub waiter: String,
    pub side: String,
    pub held: usize,
    pub requested: usize,
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

fn join_blocked(v: &[BlockedFifo]) -> String {
    v.iter()
        .map(|b| {
            format!(
                "{} waits on {} ({} side, held {}, requested {})",
                b.waiter, b.fifo, b.side, b.held, b.requested
            )
        })
        .collect::<Vec<_>>()
        .join("; ")
}
