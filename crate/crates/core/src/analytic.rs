//! Closed-form cycle bounds for hdiff on a vector core, and roofline helpers.
//!
//! With `N = (R-4)(C-4)D` interior points, `m` MACs per cycle, element width
//! `e` bits and `b` load bits per cycle:
//!
//! ```text
//! lap_comp = 25N / m             lap_mem = 25N·e / b
//! flx_comp = (8N + 12N) / m      flx_mem =  8N·e / b
//! ```
//!
//! The estimators return exact reals; round at the reporting boundary.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Dims;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatapathSpec {
    pub macs_per_cycle: u32,
    pub load_bits_per_cycle: u32,
    pub elem_bits: u32,
    pub nonmac_per_cycle: u32,
}

impl Default for DatapathSpec {
    fn default() -> Self {
        Self {
            macs_per_cycle: 8,
            load_bits_per_cycle: 2 * 256,
            elem_bits: 32,
            nonmac_per_cycle: 8,
        }
    }
}

impl DatapathSpec {
    pub fn validate(&self) -> Result<()> {
        if self.macs_per_cycle == 0
            || self.load_bits_per_cycle == 0
            || self.elem_bits == 0
            || self.nonmac_per_cycle == 0
        {
            return Err(Error::Parameter(format!(
                "datapath fields must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Laplacians evaluated per output point (the point and its four neighbours).
const LAPS_PER_POINT: u64 = 5;
/// Taps per Laplacian.
const LAP_TAPS: u64 = 5;
/// Flux-difference MACs per point: two directions, four faces.
const FLX_MACS: u64 = 2 * 4;
/// Subtract, compare and select per face.
const FLX_OTHERS: u64 = 3 * 4;
/// Loads per point for the flux stage.
const FLX_LOADS: u64 = 2 * 4;

/// Interior point count `(R-4)(C-4)D`. Grids with `R` or `C` equal to 4
/// have none; smaller grids are rejected.
pub fn interior_points(dims: Dims) -> Result<u64> {
    if dims.rows < 4 || dims.cols < 4 || dims.depth < 1 {
        return Err(Error::Parameter(format!(
            "grid {dims} is too small: need R, C >= 4 and D >= 1"
        )));
    }
    Ok(((dims.rows - 4) * (dims.cols - 4) * dims.depth) as u64)
}

fn ratio(num: u64, den: u32) -> f64 {
    num as f64 / den as f64
}

pub fn lap_comp_cycles(dims: Dims, dp: &DatapathSpec) -> Result<f64> {
    dp.validate()?;
    Ok(ratio(
        LAPS_PER_POINT * LAP_TAPS * interior_points(dims)?,
        dp.macs_per_cycle,
    ))
}

pub fn flx_comp_cycles(dims: Dims, dp: &DatapathSpec) -> Result<f64> {
    dp.validate()?;
    let n = interior_points(dims)?;
    Ok(ratio((FLX_MACS + FLX_OTHERS) * n, dp.macs_per_cycle))
}

pub fn hdiff_comp_cycles(dims: Dims, dp: &DatapathSpec) -> Result<f64> {
    Ok(lap_comp_cycles(dims, dp)? + flx_comp_cycles(dims, dp)?)
}

pub fn lap_mem_cycles(dims: Dims, dp: &DatapathSpec) -> Result<f64> {
    dp.validate()?;
    let bits = LAPS_PER_POINT * LAP_TAPS * interior_points(dims)? * dp.elem_bits as u64;
    Ok(ratio(bits, dp.load_bits_per_cycle))
}

pub fn flx_mem_cycles(dims: Dims, dp: &DatapathSpec) -> Result<f64> {
    dp.validate()?;
    let bits = FLX_LOADS * interior_points(dims)? * dp.elem_bits as u64;
    Ok(ratio(bits, dp.load_bits_per_cycle))
}

pub fn hdiff_mem_cycles(dims: Dims, dp: &DatapathSpec) -> Result<f64> {
    Ok(lap_mem_cycles(dims, dp)? + flx_mem_cycles(dims, dp)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bound {
    ComputeBound,
    MemoryBound,
    Balanced,
}

impl std::fmt::Display for Bound {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Bound::ComputeBound => "compute-bound",
            Bound::MemoryBound => "memory-bound",
            Bound::Balanced => "balanced",
        })
    }
}

/// Tolerance around a comp/mem ratio of 1 inside which a group is balanced.
pub const BALANCE_EPSILON: f64 = 0.1;

/// comp/mem ratio, or `None` when both are zero.
pub fn balance_ratio(comp: f64, mem: f64) -> Option<f64> {
    if mem == 0.0 {
        (comp != 0.0).then_some(f64::INFINITY)
    } else {
        Some(comp / mem)
    }
}

pub fn classify(comp: f64, mem: f64) -> Bound {
    match balance_ratio(comp, mem) {
        Some(r) if r > 1.0 + BALANCE_EPSILON => Bound::ComputeBound,
        Some(r) if r < 1.0 - BALANCE_EPSILON => Bound::MemoryBound,
        _ => Bound::Balanced,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupBalance {
    pub bound: Bound,
    /// comp/mem; absent for an empty grid.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Balance {
    pub lap: GroupBalance,
    pub flx: GroupBalance,
    pub hdiff: GroupBalance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticReport {
    pub dims: Dims,
    pub datapath: DatapathSpec,
    pub lap_comp: f64,
    pub flx_comp: f64,
    pub hdiff_comp: f64,
    pub lap_mem: f64,
    pub flx_mem: f64,
    pub hdiff_mem: f64,
    pub balance: Balance,
}

impl AnalyticReport {
    pub fn has_interior(&self) -> bool {
        self.hdiff_comp > 0.0
    }

    pub const CSV_HEADER: &'static str =
        "rows,cols,depth,lap_comp,flx_comp,hdiff_comp,lap_mem,flx_mem,hdiff_mem,lap_bound,flx_bound,hdiff_bound";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.dims.rows,
            self.dims.cols,
            self.dims.depth,
            self.lap_comp,
            self.flx_comp,
            self.hdiff_comp,
            self.lap_mem,
            self.flx_mem,
            self.hdiff_mem,
            self.balance.lap.bound,
            self.balance.flx.bound,
            self.balance.hdiff.bound
        )
    }
}

pub fn analyze(dims: Dims, dp: &DatapathSpec) -> Result<AnalyticReport> {
    let mut report = AnalyticReport {
        dims,
        datapath: *dp,
        lap_comp: lap_comp_cycles(dims, dp)?,
        flx_comp: flx_comp_cycles(dims, dp)?,
        hdiff_comp: 0.0,
        lap_mem: lap_mem_cycles(dims, dp)?,
        flx_mem: flx_mem_cycles(dims, dp)?,
        hdiff_mem: 0.0,
        balance: Balance {
            lap: group(0.0, 0.0),
            flx: group(0.0, 0.0),
            hdiff: group(0.0, 0.0),
        },
    };
    report.hdiff_comp = report.lap_comp + report.flx_comp;
    report.hdiff_mem = report.lap_mem + report.flx_mem;
    report.balance = classify_balance(&report);
    Ok(report)
}

fn group(comp: f64, mem: f64) -> GroupBalance {
    GroupBalance {
        bound: classify(comp, mem),
        ratio: balance_ratio(comp, mem),
    }
}

pub fn classify_balance(report: &AnalyticReport) -> Balance {
    Balance {
        lap: group(report.lap_comp, report.lap_mem),
        flx: group(report.flx_comp, report.flx_mem),
        hdiff: group(report.hdiff_comp, report.hdiff_mem),
    }
}

/// `min(peak, ai · bw)` in GOp/s, with `peak` in GOp/s and `bw` in GB/s.
pub fn roofline_attainable(peak_gops: f64, peak_gbps: f64, ai: f64) -> f64 {
    peak_gops.min(ai * peak_gbps)
}

/// Achieved throughput as a percentage of peak compute.
pub fn percent_of_peak(achieved_gops: f64, peak_gops: f64) -> f64 {
    100.0 * achieved_gops / peak_gops
}

/// Rounds to one decimal, as reported in tables.
pub fn one_decimal(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RooflinePoint {
    pub name: String,
    pub peak_gops: f64,
    pub peak_gbps: f64,
    /// Operations per byte, when known.
    pub arithmetic_intensity: Option<f64>,
    pub achieved_gops: f64,
}

impl RooflinePoint {
    pub fn attainable(&self) -> Option<f64> {
        self.arithmetic_intensity
            .map(|ai| roofline_attainable(self.peak_gops, self.peak_gbps, ai))
    }

    pub fn percent_of_peak(&self) -> f64 {
        percent_of_peak(self.achieved_gops, self.peak_gops)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Platform {
    pub name: String,
    #[serde(default)]
    pub kind: String,
    pub peak_tflops: f64,
    pub peak_gbps: f64,
    pub reported_gops: f64,
    /// Percentage as printed alongside the reported throughput, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub printed_percent: Option<f64>,
}

impl Platform {
    pub fn roofline_point(&self) -> RooflinePoint {
        RooflinePoint {
            name: self.name.clone(),
            peak_gops: self.peak_tflops * 1000.0,
            peak_gbps: self.peak_gbps,
            arithmetic_intensity: None,
            achieved_gops: self.reported_gops,
        }
    }
}

pub const PLATFORM_TABLE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlatformTable {
    pub table_version: u32,
    pub platforms: Vec<Platform>,
}

const BUILTIN_PLATFORMS: &str = include_str!("../data/platforms.json");

impl PlatformTable {
    /// Published hdiff results for seven platforms.
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_PLATFORMS).expect("embedded platform table is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let table: PlatformTable = serde_json::from_str(text)?;
        if table.table_version != PLATFORM_TABLE_VERSION {
            return Err(Error::Format(format!(
                "unsupported platform table version {}",
                table.table_version
            )));
        }
        if table.platforms.is_empty() {
            return Err(Error::Format("platform table is empty".into()));
        }
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(r: usize, c: usize, z: usize) -> Dims {
        Dims::new(r, c, z)
    }

    #[test]
    fn single_point() {
        let dp = DatapathSpec::default();
        assert_eq!(lap_comp_cycles(d(5, 5, 1), &dp).unwrap(), 3.125);
        assert_eq!(flx_comp_cycles(d(5, 5, 1), &dp).unwrap(), 2.5);
        assert_eq!(hdiff_comp_cycles(d(5, 5, 1), &dp).unwrap(), 5.625);
        assert_eq!(lap_mem_cycles(d(5, 5, 1), &dp).unwrap(), 1.5625);
        assert_eq!(hdiff_mem_cycles(d(5, 5, 1), &dp).unwrap(), 2.0625);
    }

    #[test]
    fn unit_mac_rate_gives_raw_counts() {
        let dp = DatapathSpec {
            macs_per_cycle: 1,
            ..Default::default()
        };
        assert_eq!(
            lap_comp_cycles(d(9, 7, 2), &dp).unwrap(),
            (25 * 5 * 3 * 2) as f64
        );
        // flux MAC term alone at 6x6x2 is 2*2*2*2*4 / 8 = 8 cycles on the default datapath
        let n = interior_points(d(6, 6, 2)).unwrap();
        assert_eq!((FLX_MACS * n) as f64 / 8.0, 8.0);
    }

    #[test]
    fn wide_elements_double_memory() {
        let dp64 = DatapathSpec {
            elem_bits: 64,
            ..Default::default()
        };
        let dp = DatapathSpec::default();
        let g = d(20, 30, 3);
        assert_eq!(
            lap_mem_cycles(g, &dp64).unwrap(),
            2.0 * lap_mem_cycles(g, &dp).unwrap()
        );
        assert_eq!(
            flx_mem_cycles(g, &dp64).unwrap(),
            2.0 * flx_mem_cycles(g, &dp).unwrap()
        );
    }

    #[test]
    fn degenerate_and_invalid_dims() {
        let dp = DatapathSpec::default();
        let r = analyze(d(4, 4, 1), &dp).unwrap();
        assert!(!r.has_interior());
        assert_eq!(r.hdiff_mem, 0.0);
        assert_eq!(r.balance.hdiff.bound, Bound::Balanced);
        assert_eq!(r.balance.hdiff.ratio, None);
        assert!(matches!(analyze(d(3, 9, 1), &dp), Err(Error::Parameter(_))));
        assert!(analyze(d(9, 9, 0), &dp).is_err());
        let zero = DatapathSpec {
            macs_per_cycle: 0,
            ..Default::default()
        };
        assert!(analyze(d(9, 9, 1), &zero).is_err());
    }

    #[test]
    fn balance_classification() {
        assert_eq!(classify(10.0, 10.0), Bound::Balanced);
        assert_eq!(classify(10.5, 10.0), Bound::Balanced);
        assert_eq!(classify(12.0, 10.0), Bound::ComputeBound);
        assert_eq!(classify(8.0, 10.0), Bound::MemoryBound);
        assert_eq!(classify(1.0, 0.0), Bound::ComputeBound);
    }

    #[test]
    fn roofline_legs() {
        assert_eq!(roofline_attainable(3100.0, 25.6, 1.0), 25.6);
        assert_eq!(roofline_attainable(3100.0, 25.6, 1e6), 3100.0);
        let ridge = 3100.0 / 25.6;
        assert!((roofline_attainable(3100.0, 25.6, ridge) - 3100.0).abs() < 1e-9);
        assert_eq!(one_decimal(percent_of_peak(485.4, 3600.0)), 13.5);
    }

    #[test]
    fn platform_table_loads() {
        let t = PlatformTable::builtin();
        assert_eq!(t.platforms.len(), 7);
        assert!(PlatformTable::from_json(r#"{"table_version":1,"platforms":[]}"#).is_err());
        assert!(PlatformTable::from_json(r#"{"table_version":2,"platforms":[]}"#).is_err());
        let back = PlatformTable::from_json(&serde_json::to_string(&t).unwrap()).unwrap();
        assert_eq!(back, t);
    }

    proptest! {
        #[test]
        fn additive_and_monotone(r in 5usize..300, c in 5usize..300, z in 1usize..80) {
            let dp = DatapathSpec::default();
            let a = analyze(d(r, c, z), &dp).unwrap();
            prop_assert_eq!(a.hdiff_comp, a.lap_comp + a.flx_comp);
            prop_assert_eq!(a.hdiff_mem, a.lap_mem + a.flx_mem);
            for bigger in [d(r + 1, c, z), d(r, c + 1, z), d(r, c, z + 1)] {
                let b = analyze(bigger, &dp).unwrap();
                prop_assert!(b.hdiff_comp > a.hdiff_comp);
                prop_assert!(b.hdiff_mem > a.hdiff_mem);
                prop_assert!(b.lap_comp > a.lap_comp && b.flx_mem > a.flx_mem);
            }
            let twice = analyze(d(r, c, 2 * z), &dp).unwrap();
            prop_assert_eq!(twice.hdiff_comp, 2.0 * a.hdiff_comp);
            prop_assert_eq!(twice.hdiff_mem, 2.0 * a.hdiff_mem);
        }
    }
}
