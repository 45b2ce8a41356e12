//! Shared fixtures for the criterion benches.

use stencilsim::mapper::{build_design, DEFAULT_ROW_COLS};
use stencilsim::{default_versal_fabric, DType, Dims, Generator, Grid3, MappingPlan};

pub fn random_grid(dtype: DType, rows: usize, cols: usize, depth: usize) -> Grid3 {
    Generator::Random { seed: 42 }.generate(dtype, Dims::new(rows, cols, depth))
}

pub fn plan(design: &str) -> MappingPlan {
    let design: stencilsim::Design = design.parse().expect("known design");
    let dtype = design.dtype().unwrap_or(DType::I32);
    build_design(design, dtype, &default_versal_fabric(), DEFAULT_ROW_COLS)
        .expect("design fits the default fabric")
}
