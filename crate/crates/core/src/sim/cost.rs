//! Per-row cycle costs of each core role.
//!
//! A row tile is one output row of a grid `cols` wide. Work is counted
//! over the `W` computed columns and issued on an 8-lane datapath:
//!
//! * MAC cycles `⌈macs·p / lanes / eff⌉`, non-MAC cycles `⌈ops·p / lanes⌉`,
//!   where `p` is the f32 penalty (1 for i32) and `eff` the MAC efficiency;
//! * each shift-round-saturate adds `srs_latency_cycles`;
//! * local loads overlap compute, so a row costs `max(compute, load)`.

use serde::{Deserialize, Serialize};

use crate::fabric::{FabricSpec, Role};
use crate::grid::DType;
use crate::stencil::StencilSpec;

/// Laplacian MACs per point (five 5-tap Laplacians).
const LAP_MACS: u64 = 25;
const FLUX_MACS: u64 = 8;
const FLUX_OTHERS: u64 = 12;

#[derive(Debug, Clone, Copy, Default)]
pub struct RowTile<'a> {
    pub cols: usize,
    /// Laplacians arrive over a cascade and must be moved to vector
    /// registers before non-MAC use.
    pub cascade_in: bool,
    /// Laplacians leave over a cascade at accumulator precision.
    pub cascade_out: bool,
    /// Required for the elementary role.
    pub stencil: Option<&'a StencilSpec>,
}

impl<'a> RowTile<'a> {
    pub fn new(cols: usize) -> Self {
        Self {
            cols,
            ..Self::default()
        }
    }

    pub fn with_cascade(mut self, cascade_in: bool, cascade_out: bool) -> Self {
        self.cascade_in = cascade_in;
        self.cascade_out = cascade_out;
        self
    }

    pub fn with_stencil(mut self, spec: &'a StencilSpec) -> Self {
        self.stencil = Some(spec);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CycleBreakdown {
    pub macs: u64,
    pub nonmac_ops: u64,
    pub srs_events: u64,
    /// MAC cycles at the ideal issue rate.
    pub mac_cycles: u64,
    pub nonmac_cycles: u64,
    pub srs_cycles: u64,
    pub load_cycles: u64,
    /// MAC cycles derated by the efficiency factor, plus non-MAC and srs.
    pub compute_cycles: u64,
    pub total: u64,
}

/// `⌈x⌉` tolerant of the rounding noise in `n · 1.3`.
fn ceil(x: f64) -> u64 {
    (x - 1e-9).ceil().max(0.0) as u64
}

/// Cycles one core of `role` spends on one output row.
pub fn core_kernel_cycles(
    role: Role,
    tile: &RowTile<'_>,
    dtype: DType,
    fabric: &FabricSpec,
) -> CycleBreakdown {
    let dp = &fabric.datapath;
    let lanes = dp.macs_per_cycle.max(1) as u64;
    let (elem_loads, macs, others, srs) = match role {
        Role::Elementary => {
            let spec = tile.stencil.expect("elementary cost needs a stencil");
            let w = tile.cols.saturating_sub(2 * spec.col_radius()) as u64;
            let taps = spec.taps.len() as u64;
            (taps * w, taps * w, 0, 1)
        }
        _ => {
            let w = tile.cols.saturating_sub(4) as u64;
            let vectors = w.div_ceil(lanes);
            let cascade = if tile.cascade_in { vectors } else { 0 };
            match role {
                Role::Lap => (LAP_MACS * w, LAP_MACS * w, 0, u64::from(!tile.cascade_out)),
                Role::Mono => (
                    (LAP_MACS + FLUX_MACS) * w,
                    (LAP_MACS + FLUX_MACS) * w,
                    FLUX_OTHERS * w,
                    2,
                ),
                Role::Flux => (
                    FLUX_MACS * w,
                    FLUX_MACS * w,
                    FLUX_OTHERS * w,
                    4 * vectors + cascade,
                ),
                Role::FluxMac => (FLUX_MACS * w, FLUX_MACS * w, 0, 1 + cascade),
                Role::FluxNonMac | Role::Gather => (FLUX_MACS * w, 0, FLUX_OTHERS * w, 0),
                Role::Elementary => unreachable!(),
            }
        }
    };
    let (penalty, srs_events) = match dtype {
        DType::I32 => (1.0, srs),
        // the float path has no accumulator narrowing
        DType::F32 => (fabric.f32_penalty, 0),
    };
    let mac_cycles = ceil(macs as f64 * penalty / lanes as f64);
    let derated = ceil(macs as f64 * penalty / lanes as f64 / fabric.mac_efficiency);
    let nonmac_cycles = ceil(others as f64 * penalty / dp.nonmac_per_cycle.max(1) as f64);
    let srs_cycles = srs_events * u64::from(fabric.srs_latency_cycles);
    let load_bits = elem_loads * u64::from(dp.elem_bits);
    let load_cycles = load_bits.div_ceil(u64::from(dp.load_bits_per_cycle.max(1)));
    let compute_cycles = derated + nonmac_cycles + srs_cycles;
    CycleBreakdown {
        macs,
        nonmac_ops: others,
        srs_events,
        mac_cycles,
        nonmac_cycles,
        srs_cycles,
        load_cycles,
        compute_cycles,
        total: compute_cycles.max(load_cycles),
    }
}

/// Cycles the gather core spends moving one finished lane row from its
/// input buffer to the output buffer.
pub fn gather_copy_cycles(cols: usize, fabric: &FabricSpec) -> u64 {
    let bits = cols as u64 * u64::from(fabric.datapath.elem_bits) * 2;
    bits.div_ceil(u64::from(fabric.datapath.load_bits_per_cycle.max(1)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fabric::default_versal_fabric;
    use crate::stencil::StencilKind;

    #[test]
    fn twelve_column_examples() {
        let f = default_versal_fabric();
        let t = RowTile::new(12);
        assert_eq!(
            core_kernel_cycles(Role::Lap, &t, DType::I32, &f).mac_cycles,
            25
        );
        assert_eq!(
            core_kernel_cycles(Role::Lap, &t, DType::F32, &f).mac_cycles,
            33
        );
        assert_eq!(
            core_kernel_cycles(Role::FluxNonMac, &t, DType::I32, &f).nonmac_cycles,
            12
        );
    }

    #[test]
    fn full_width_rows() {
        let f = default_versal_fabric();
        let t = RowTile::new(256);
        let cycles = |role, dtype, tile: &RowTile| core_kernel_cycles(role, tile, dtype, &f).total;
        assert_eq!(cycles(Role::Lap, DType::I32, &t), 927 + 4);
        assert_eq!(cycles(Role::Mono, DType::I32, &t), 1223 + 378 + 8);
        assert_eq!(cycles(Role::Mono, DType::F32, &t), 1590 + 492);
        assert_eq!(cycles(Role::FluxMac, DType::I32, &t), 297 + 4);
        assert_eq!(cycles(Role::FluxNonMac, DType::I32, &t), 378);
        assert_eq!(cycles(Role::Flux, DType::I32, &t), 297 + 378 + 512);
        let cascade = t.with_cascade(true, false);
        assert_eq!(cycles(Role::Flux, DType::I32, &cascade), 297 + 378 + 640);
        assert_eq!(
            cycles(
                Role::Lap,
                DType::I32,
                &RowTile::new(256).with_cascade(false, true)
            ),
            927
        );
        assert_eq!(gather_copy_cycles(256, &f), 32);
    }

    #[test]
    fn elementary_rows() {
        let f = default_versal_fabric();
        let spec = StencilSpec::builtin(StencilKind::Jac2d5pt);
        let c = core_kernel_cycles(
            Role::Elementary,
            &RowTile::new(18).with_stencil(&spec),
            DType::I32,
            &f,
        );
        assert_eq!(c.macs, 80);
        assert_eq!(c.mac_cycles, 10);
        assert_eq!(c.srs_events, 1);
    }

    #[test]
    fn float_penalty_is_near_target() {
        let f = default_versal_fabric();
        let t = RowTile::new(256);
        let i = core_kernel_cycles(Role::Mono, &t, DType::I32, &f).total as f64;
        let x = core_kernel_cycles(Role::Mono, &t, DType::F32, &f).total as f64;
        assert!((1.2..=1.4).contains(&(x / i)));
    }
}
