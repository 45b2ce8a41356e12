//! Modeling and simulation of weather stencils on tiled spatial accelerators.
//!
//! * [`stencil`]: golden hdiff and elementary stencil kernels.
//! * [`analytic`]: closed-form compute/memory cycle model and roofline helpers.
//! * [`fabric`]: parametric device description and placement checks.
//! * [`mapper`]: single/dual/tri-core, B-block and scale-out mapping plans.
//! * [`sim`]: deterministic dataflow simulator for mapping plans.

pub mod analytic;
pub mod error;
pub mod fabric;
pub mod grid;
pub mod io;
pub mod mapper;
pub mod numeric;
pub mod sim;
pub mod stencil;

pub use analytic::{AnalyticReport, DatapathSpec, PlatformTable};
pub use error::{BlockedFifo, Error, Result, Violation, ViolationKind};
pub use fabric::{default_versal_fabric, FabricSpec, LinkKind, Position, Role};
pub use grid::{DType, Dims, Generator, Grid3, GridData, Value};
pub use mapper::{Design, InterfaceChoice, MappingPlan};
pub use numeric::{srs, FixedPointSemantics, Sample};
pub use sim::{simulate, sweep, KernelParams, SimReport};
pub use stencil::{
    apply_elementary, flux_col_at, flux_row_at, hdiff_reference, laplacian_at, laplacian_field,
    op_count, Coefficient, HdiffParams, Kernel, LaplacianField, OpCount, StencilKind, StencilSpec,
};
