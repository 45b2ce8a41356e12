use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fabric::{LinkKind, Position, Role};
use crate::grid::{DType, Dims};
use crate::mapper::ShimDirection;

pub const SIM_REPORT_VERSION: u32 = 1;

/// JSON schema the serialized report conforms to.
pub const SIM_REPORT_SCHEMA: &str = include_str!("../../data/sim_report.schema.json");

/// CSV columns, in order.
pub const CSV_COLUMNS: [&str; 10] = [
    "design",
    "record",
    "name",
    "kind",
    "busy_cycles",
    "idle_cycles",
    "utilization",
    "bytes",
    "transfers",
    "total_cycles",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreReport {
    pub position: Position,
    pub role: Role,
    /// Rows computed or forwarded.
    pub rows: u64,
    pub busy_cycles: u64,
    pub idle_cycles: u64,
    pub utilization: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkReport {
    pub fifo: String,
    pub kind: LinkKind,
    pub bytes: u64,
    pub transfers: u64,
    pub busy_cycles: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShimChannelReport {
    pub shim: usize,
    pub channel: usize,
    pub direction: ShimDirection,
    pub bytes: u64,
    pub busy_cycles: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub report_version: u32,
    pub design: String,
    pub dims: Dims,
    pub dtype: DType,
    pub clock_ghz: f64,
    pub total_cycles: u64,
    /// `total_cycles / clock_ghz`.
    pub wallclock_ns: f64,
    pub cores: Vec<CoreReport>,
    pub links: Vec<LinkReport>,
    pub shim_channels: Vec<ShimChannelReport>,
    pub ops: u64,
    pub gops: f64,
    pub output_checksum: String,
    pub functional_match: bool,
    /// Mean spacing of output rows reaching host memory, first to last.
    pub steady_state_cycles_per_row: Option<f64>,
    pub mac_efficiency: f64,
    pub f32_penalty: f64,
}

impl SimReport {
    pub fn wallclock_ms(&self) -> f64 {
        self.wallclock_ns / 1e6
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: SimReport = serde_json::from_str(text)?;
        if report.report_version != SIM_REPORT_VERSION {
            return Err(Error::Format(format!(
                "report_version must be {SIM_REPORT_VERSION}, got {}",
                report.report_version
            )));
        }
        Ok(report)
    }

    /// One row per core, link and shim channel under [`CSV_COLUMNS`].
    pub fn to_csv(&self) -> String {
        Self::csv_of(std::slice::from_ref(self))
    }

    /// Rows of several reports under one header.
    pub fn csv_of(reports: &[SimReport]) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_COLUMNS).expect("in-memory write");
        for r in reports {
            r.write_csv_rows(&mut w).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii csv")
    }

    fn write_csv_rows(&self, w: &mut csv::Writer<Vec<u8>>) -> csv::Result<()> {
        let total = self.total_cycles.to_string();
        for c in &self.cores {
            w.write_record([
                self.design.as_str(),
                "core",
                &format!("core_{}_{}", c.position.col, c.position.row),
                &format!("{:?}", c.role),
                &c.busy_cycles.to_string(),
                &c.idle_cycles.to_string(),
                &format!("{:.6}", c.utilization),
                "",
                &c.rows.to_string(),
                &total,
            ])?;
        }
        for l in &self.links {
            w.write_record([
                self.design.as_str(),
                "link",
                &l.fifo,
                &format!("{:?}", l.kind),
                &l.busy_cycles.to_string(),
                &self.total_cycles.saturating_sub(l.busy_cycles).to_string(),
                &format!("{:.6}", ratio(l.busy_cycles, self.total_cycles)),
                &l.bytes.to_string(),
                &l.transfers.to_string(),
                &total,
            ])?;
        }
        for s in &self.shim_channels {
            let dir = match s.direction {
                ShimDirection::Read => "read",
                ShimDirection::Write => "write",
            };
            w.write_record([
                self.design.as_str(),
                "shim",
                &format!("shim_{}_{}_{dir}", s.shim, s.channel),
                dir,
                &s.busy_cycles.to_string(),
                &self.total_cycles.saturating_sub(s.busy_cycles).to_string(),
                &format!("{:.6}", ratio(s.busy_cycles, self.total_cycles)),
                &s.bytes.to_string(),
                "",
                &total,
            ])?;
        }
        Ok(())
    }
}

pub(crate) fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}
