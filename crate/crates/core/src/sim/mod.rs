//! Discrete-event simulation of a mapping plan on a fabric.
//!
//! Cores run row-granular programs against object FIFOs; links move real
//! row payloads with bandwidth-derived durations, and shim channels are
//! shared round-robin. The output grid is computed by the simulated cores
//! themselves and compared with the reference kernels.

mod cost;
mod engine;
mod fifo;
mod gather;
pub(crate) mod kernels;
mod report;
mod transfer;

pub use cost::{core_kernel_cycles, gather_copy_cycles, CycleBreakdown, RowTile};
pub use fifo::{code1_replay, Code1Iteration, Code1Trace, ObjectFifo, Side};
pub use gather::{gather_and_order, gather_order, lane_of, LaneRow, ReorderBuffer};
pub use report::{
    CoreReport, LinkReport, ShimChannelReport, SimReport, CSV_COLUMNS, SIM_REPORT_SCHEMA,
    SIM_REPORT_VERSION,
};
pub use transfer::{
    broadcast_transfer, transfer_timing, BroadcastOutcome, ChannelArbiter, Delivery, TransferTiming,
};

use rayon::prelude::*;

use engine::{Engine, ProcKind, Work};
use report::ratio;

use crate::error::{Error, Result};
use crate::fabric::FabricSpec;
use crate::grid::{DType, Grid3};
use crate::io::checksum;
use crate::mapper::{validate_plan, Design, MappingPlan};
use crate::stencil::{
    apply_elementary, check_halo, hdiff_reference, op_count, with_sample, Coefficient, HdiffParams,
    Kernel, StencilSpec,
};

/// What the simulated cores compute.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelParams {
    Hdiff(HdiffParams),
    Elementary(StencilSpec),
}

impl From<HdiffParams> for KernelParams {
    fn from(p: HdiffParams) -> Self {
        KernelParams::Hdiff(p)
    }
}

impl From<StencilSpec> for KernelParams {
    fn from(s: StencilSpec) -> Self {
        KernelParams::Elementary(s)
    }
}

impl KernelParams {
    /// Unit-coefficient hdiff, or the built-in stencil of an elementary
    /// design.
    pub fn for_design(design: &Design, dtype: DType) -> Self {
        match design {
            Design::ElementaryScale { stencil, .. } => {
                KernelParams::Elementary(StencilSpec::builtin(*stencil))
            }
            _ => KernelParams::Hdiff(HdiffParams::unit(dtype)),
        }
    }

    /// The same kernel for `dtype`. Uniform hdiff coefficients carry over
    /// with their fixed-point scaling applied.
    pub fn for_dtype(&self, dtype: DType) -> Result<Self> {
        let KernelParams::Hdiff(p) = self else {
            return Ok(self.clone());
        };
        let coeff = match (&p.coeff, dtype) {
            (Coefficient::I32(c), DType::F32) => {
                Coefficient::F32(*c as f32 / (1u64 << p.srs_shift) as f32)
            }
            (Coefficient::F32(c), DType::I32) if c.fract() == 0.0 => Coefficient::I32(*c as i32),
            (Coefficient::PerCell(g), _) if g.dtype() != dtype => {
                Coefficient::PerCell(g.convert(dtype))
            }
            (Coefficient::F32(_), DType::I32) => {
                return Err(Error::Parameter(
                    "fractional f32 coefficient has no i32 form".into(),
                ))
            }
            (c, _) => c.clone(),
        };
        let srs_shift = if dtype == DType::F32 { 0 } else { p.srs_shift };
        Ok(KernelParams::Hdiff(HdiffParams {
            coeff,
            srs_shift,
            ..p.clone()
        }))
    }

    fn work(&self) -> Work<'_> {
        match self {
            KernelParams::Hdiff(p) => Work::Hdiff(p),
            KernelParams::Elementary(s) => Work::Elementary(s),
        }
    }

    fn reference(&self, grid: &Grid3) -> Result<Grid3> {
        match self {
            KernelParams::Hdiff(p) => hdiff_reference(grid, p),
            KernelParams::Elementary(s) => apply_elementary(s, grid),
        }
    }
}

fn check_inputs(
    plan: &MappingPlan,
    fabric: &FabricSpec,
    grid: &Grid3,
    params: &KernelParams,
) -> Result<()> {
    fabric.validate()?;
    let violations = validate_plan(plan, fabric);
    if !violations.is_empty() {
        return Err(Error::InvalidPlan(violations));
    }
    if grid.dtype() != plan.dtype {
        return Err(Error::Parameter(format!(
            "grid is {} but plan {} computes {}",
            grid.dtype(),
            plan.design,
            plan.dtype
        )));
    }
    let dims = grid.dims();
    if dims.cols > plan.row_cols {
        return Err(Error::Parameter(format!(
            "grid rows have {} columns, plan buffers hold {}",
            dims.cols, plan.row_cols
        )));
    }
    match (params, &plan.design) {
        (KernelParams::Hdiff(p), d) if d.is_hdiff() => {
            check_halo(dims)?;
            p.validate(grid.dtype(), dims)?;
            if p.sweeps != 1 {
                return Err(Error::Parameter(
                    "the simulator runs one sweep; chain simulations for more".into(),
                ));
            }
        }
        (KernelParams::Elementary(s), Design::ElementaryScale { stencil, .. }) => {
            s.validate()?;
            if s.name != *stencil {
                return Err(Error::Parameter(format!(
                    "plan is built for {stencil}, params are {}",
                    s.name
                )));
            }
            if dims.rows < s.row_extent() || dims.cols < 2 * s.col_radius() + 1 {
                return Err(Error::Shape(format!(
                    "{} does not fit a {dims} grid",
                    s.name
                )));
            }
        }
        _ => {
            return Err(Error::Parameter(format!(
                "kernel parameters do not match design {}",
                plan.design
            )))
        }
    }
    Ok(())
}

fn outputs_match(a: &Grid3, b: &Grid3) -> bool {
    match (a.as_i32(), b.as_i32(), a.as_f32(), b.as_f32()) {
        (Some(x), Some(y), _, _) => x == y,
        (_, _, Some(x), Some(y)) => x
            .iter()
            .zip(y)
            .all(|(&p, &q)| p == q || (p - q).abs() as f64 <= 1e-5 * (p.abs().max(q.abs()) as f64)),
        _ => false,
    }
}

/// Runs `plan` on `grid`. Returns the grid the simulated cores produced and
/// the timing report.
pub fn simulate(
    plan: &MappingPlan,
    fabric: &FabricSpec,
    grid: &Grid3,
    params: &KernelParams,
) -> Result<(Grid3, SimReport)> {
    check_inputs(plan, fabric, grid, params)?;
    let dims = grid.dims();
    let work = params.work();
    let run = with_sample!(grid.dtype(), T => {
        let input = grid.as_slice::<T>().expect("dtype checked");
        let r = Engine::<T>::new(plan, fabric, dims, input, &work)?.run()?;
        let output = Grid3::from_vec(dims, r.output)?;
        (output, r.total_cycles, r.procs, r.fifos, r.channels, r.store_times)
    });
    let (output, total, procs, fifos, channels, mut store_times) = run;
    let golden = params.reference(grid)?;
    let cores = procs
        .iter()
        .filter_map(|p| match p.kind {
            ProcKind::Core(i) => Some((i, p)),
            _ => None,
        })
        .map(|(i, p)| CoreReport {
            position: plan.slots[i].position,
            role: plan.slots[i].role,
            rows: p.items,
            busy_cycles: p.busy,
            idle_cycles: total.saturating_sub(p.busy),
            utilization: ratio(p.busy, total),
        })
        .collect();
    let links = plan
        .fifos
        .iter()
        .zip(&fifos)
        .map(|(f, s)| LinkReport {
            fifo: f.name.clone(),
            kind: f.link,
            bytes: s.bytes,
            transfers: s.transfers,
            busy_cycles: s.busy,
        })
        .collect();
    let shim_channels = channels
        .iter()
        .map(|c| ShimChannelReport {
            shim: c.shim,
            channel: c.channel,
            direction: c.direction,
            bytes: c.bytes,
            busy_cycles: c.busy,
        })
        .collect();
    let kernel = match params {
        KernelParams::Hdiff(_) => Kernel::Hdiff,
        KernelParams::Elementary(s) => Kernel::Elementary(s),
    };
    let ops = op_count(dims, kernel).ops;
    store_times.sort_unstable();
    let steady = match store_times.as_slice() {
        [first, .., last] => Some((last - first) as f64 / (store_times.len() - 1) as f64),
        _ => None,
    };
    let wallclock_ns = total as f64 / fabric.clock_ghz;
    let report = SimReport {
        report_version: SIM_REPORT_VERSION,
        design: plan.design.name(),
        dims,
        dtype: grid.dtype(),
        clock_ghz: fabric.clock_ghz,
        total_cycles: total,
        wallclock_ns,
        cores,
        links,
        shim_channels,
        ops,
        gops: if total == 0 {
            0.0
        } else {
            ops as f64 / wallclock_ns
        },
        output_checksum: checksum(&output),
        functional_match: outputs_match(&output, &golden),
        steady_state_cycles_per_row: steady,
        mac_efficiency: fabric.mac_efficiency,
        f32_penalty: fabric.f32_penalty,
    };
    Ok((output, report))
}

/// Simulates every plan on `grid`, in parallel, returning reports in input
/// order. Plans computing a different element type than `grid` run on a
/// converted copy with converted parameters.
pub fn sweep(
    plans: &[MappingPlan],
    fabric: &FabricSpec,
    grid: &Grid3,
    params: &KernelParams,
) -> Result<Vec<SimReport>> {
    plans
        .par_iter()
        .map(|plan| {
            if plan.dtype == grid.dtype() {
                return simulate(plan, fabric, grid, params).map(|(_, r)| r);
            }
            let g = grid.convert(plan.dtype);
            simulate(plan, fabric, &g, &params.for_dtype(plan.dtype)?).map(|(_, r)| r)
        })
        .collect()
}

/// Closed-form steady-state cycles per output row: the busiest core, link
/// or shim channel's total work over the number of output rows, under the
/// same cost model the simulator uses.
pub fn pipeline_bound_per_row(
    plan: &MappingPlan,
    fabric: &FabricSpec,
    grid: &Grid3,
    params: &KernelParams,
) -> Result<f64> {
    check_inputs(plan, fabric, grid, params)?;
    engine::bottleneck_cycles_per_row(plan, fabric, grid.dims(), &params.work())
}
