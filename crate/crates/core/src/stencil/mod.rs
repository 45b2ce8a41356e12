//! Golden, scalar reference kernels.
//!
//! Horizontal diffusion composes a 5-point Laplacian, limited fluxes along
//! both horizontal axes and a divergence update:
//!
//! ```text
//! L(r,c)   = 4ψ(r,c) - ψ(r+1,c) - ψ(r-1,c) - ψ(r,c+1) - ψ(r,c-1)
//! F(r+½,c) = L(r+1,c) - L(r,c)   if (L(r+1,c) - L(r,c)) (ψ(r+1,c) - ψ(r,c)) <= 0, else 0
//! G(r,c+½) = L(r,c+1) - L(r,c)   if (L(r,c+1) - L(r,c)) (ψ(r,c+1) - ψ(r,c)) <= 0, else 0
//! Ψ(r,c)   = ψ(r,c) - C(r,c) (F(r+½,c) - F(r-½,c) + G(r,c+½) - G(r,c-½))
//! ```
//!
//! Only the interior `2..R-2 × 2..C-2` of each plane is updated; the 2-wide
//! halo is copied from the input so sweeps compose.

mod elementary;
mod ops;

pub use elementary::{apply_elementary, StencilKind, StencilSpec, Tap};
pub use ops::{op_count, Kernel, OpCount};

use crate::error::{Error, Result};
use crate::grid::{DType, Dims, Grid3, Value};
use crate::numeric::Sample;

/// Width of the border hdiff leaves untouched.
pub const HDIFF_HALO: usize = 2;

/// Runs `$body` with `$t` bound to the element type of `$dtype`.
macro_rules! with_sample {
    ($dtype:expr, $t:ident => $body:expr) => {
        match $dtype {
            $crate::grid::DType::I32 => {
                type $t = i32;
                $body
            }
            $crate::grid::DType::F32 => {
                type $t = f32;
                $body
            }
        }
    };
}
pub(crate) use with_sample;

/// Diffusion coefficient: one value for the whole grid or one per cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Coefficient {
    I32(i32),
    F32(f32),
    PerCell(Grid3),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HdiffParams {
    pub coeff: Coefficient,
    /// Fractional bits of the fixed-point coefficient. The update is
    /// accumulated as `(ψ << shift) - C·div` and narrowed with
    /// `srs(·, shift)`. Must be 0 for f32.
    pub srs_shift: u32,
    /// Number of successive applications.
    pub sweeps: u32,
    /// When false, fluxes are never limited (the unlimited variant of the
    /// operator, useful for cross-checking).
    pub limiter: bool,
}

impl HdiffParams {
    pub fn i32(coeff: i32) -> Self {
        Self {
            coeff: Coefficient::I32(coeff),
            srs_shift: 0,
            sweeps: 1,
            limiter: true,
        }
    }

    pub fn f32(coeff: f32) -> Self {
        Self {
            coeff: Coefficient::F32(coeff),
            ..Self::i32(0)
        }
    }

    /// Unit coefficient for `dtype`.
    pub fn unit(dtype: DType) -> Self {
        match dtype {
            DType::I32 => Self::i32(1),
            DType::F32 => Self::f32(1.0),
        }
    }

    pub fn with_shift(mut self, shift: u32) -> Self {
        self.srs_shift = shift;
        self
    }

    pub fn with_sweeps(mut self, sweeps: u32) -> Self {
        self.sweeps = sweeps;
        self
    }

    pub fn without_limiter(mut self) -> Self {
        self.limiter = false;
        self
    }

    /// Checks these parameters against a grid of `dtype` and `dims`.
    pub fn validate(&self, dtype: DType, dims: Dims) -> Result<()> {
        if self.sweeps == 0 {
            return Err(Error::Parameter("sweeps must be positive".into()));
        }
        match (&self.coeff, dtype) {
            (Coefficient::I32(_), DType::I32) | (Coefficient::F32(_), DType::F32) => {}
            (Coefficient::PerCell(g), _) => {
                if g.dims() != dims {
                    return Err(Error::Parameter(format!(
                        "coefficient grid is {} but input is {dims}",
                        g.dims()
                    )));
                }
                if g.dtype() != dtype {
                    return Err(Error::Parameter(format!(
                        "coefficient grid is {} but input is {dtype}",
                        g.dtype()
                    )));
                }
            }
            (c, d) => {
                return Err(Error::Parameter(format!(
                    "coefficient {c:?} does not match {d} grid"
                )))
            }
        }
        if dtype == DType::F32 && self.srs_shift != 0 {
            return Err(Error::Parameter("srs_shift must be 0 for f32".into()));
        }
        if self.srs_shift > 62 {
            return Err(Error::Parameter("srs_shift must be at most 62".into()));
        }
        Ok(())
    }

    pub(crate) fn coeff_view<T: Sample>(&self) -> CoeffView<'_, T> {
        match &self.coeff {
            Coefficient::PerCell(g) => CoeffView::PerCell(g.as_slice::<T>().expect("validated")),
            Coefficient::I32(v) => {
                CoeffView::Uniform(as_sample::<T>(Value::Int(*v as i64)).expect("validated"))
            }
            Coefficient::F32(v) => {
                CoeffView::Uniform(as_sample::<T>(Value::Float(*v)).expect("validated"))
            }
        }
    }
}

fn as_sample<T: Sample>(v: Value) -> Option<T> {
    let data = match (v, T::DTYPE) {
        (Value::Int(i), DType::I32) => crate::grid::GridData::I32(vec![i as i32]),
        (Value::Float(f), DType::F32) => crate::grid::GridData::F32(vec![f]),
        _ => return None,
    };
    T::slice(&data).map(|s| s[0])
}

/// Coefficient lookup by flat grid index.
#[derive(Debug, Clone, Copy)]
pub(crate) enum CoeffView<'a, T> {
    Uniform(T),
    PerCell(&'a [T]),
}

impl<T: Copy> CoeffView<'_, T> {
    #[inline]
    pub fn at(&self, idx: usize) -> T {
        match self {
            CoeffView::Uniform(v) => *v,
            CoeffView::PerCell(s) => s[idx],
        }
    }
}

pub(crate) fn check_halo(dims: Dims) -> Result<()> {
    if dims.rows < 2 * HDIFF_HALO + 1 || dims.cols < 2 * HDIFF_HALO + 1 {
        return Err(Error::Shape(format!(
            "hdiff needs at least 5x5 planes for its 2-cell halo, got {dims}"
        )));
    }
    Ok(())
}

/// Discrete Laplacian at `(r, c, d)`; valid for `1 <= r <= R-2`, `1 <= c <= C-2`.
pub fn laplacian_at(grid: &Grid3, r: usize, c: usize, d: usize) -> Result<Value> {
    let dims = grid.dims();
    if r < 1 || r + 2 > dims.rows || c < 1 || c + 2 > dims.cols || d >= dims.depth {
        return Err(grid.index_error(r, c, d));
    }
    Ok(with_sample!(grid.dtype(), T => {
        let s = grid.as_slice::<T>().unwrap();
        acc_value::<T>(lap_point(s, dims, grid.index(r, c, d)))
    }))
}

#[inline]
fn lap_point<T: Sample>(s: &[T], dims: Dims, i: usize) -> T::Acc {
    T::laplacian(s[i], s[i - dims.cols], s[i + dims.cols], s[i - 1], s[i + 1])
}

fn acc_value<T: Sample>(acc: T::Acc) -> Value {
    match T::DTYPE {
        DType::I32 => Value::Int(T::acc_to_f64(acc) as i64),
        DType::F32 => Value::Float(T::acc_to_f64(acc) as f32),
    }
}

/// Laplacian of every point where it is defined; zero elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianField {
    dims: Dims,
    values: LapValues,
}

#[derive(Debug, Clone, PartialEq)]
enum LapValues {
    Int(Vec<i64>),
    Float(Vec<f32>),
}

impl LaplacianField {
    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn get(&self, r: usize, c: usize, d: usize) -> Value {
        let i = d * self.dims.plane_len() + r * self.dims.cols + c;
        match &self.values {
            LapValues::Int(v) => Value::Int(v[i]),
            LapValues::Float(v) => Value::Float(v[i]),
        }
    }

    fn defined(&self, r: usize, c: usize, d: usize) -> bool {
        r >= 1
            && r + 2 <= self.dims.rows
            && c >= 1
            && c + 2 <= self.dims.cols
            && d < self.dims.depth
    }
}

pub fn laplacian_field(grid: &Grid3) -> LaplacianField {
    let dims = grid.dims();
    let values = with_sample!(grid.dtype(), T => {
        let s = grid.as_slice::<T>().unwrap();
        let mut acc = vec![<T as Sample>::Acc::default(); dims.len()];
        for d in 0..dims.depth {
            for r in 1..dims.rows.saturating_sub(1) {
                for c in 1..dims.cols.saturating_sub(1) {
                    let i = grid.index(r, c, d);
                    acc[i] = lap_point(s, dims, i);
                }
            }
        }
        match T::DTYPE {
            DType::I32 => LapValues::Int(acc.iter().map(|&a| T::acc_to_f64(a) as i64).collect()),
            DType::F32 => LapValues::Float(acc.iter().map(|&a| T::acc_to_f64(a) as f32).collect()),
        }
    });
    LaplacianField { dims, values }
}

#[derive(Clone, Copy)]
enum Axis {
    Row,
    Col,
}

fn flux_at(
    grid: &Grid3,
    lap: &LaplacianField,
    r: usize,
    c: usize,
    d: usize,
    axis: Axis,
) -> Result<Value> {
    let (r1, c1) = match axis {
        Axis::Row => (r + 1, c),
        Axis::Col => (r, c + 1),
    };
    if lap.dims != grid.dims() {
        return Err(Error::Shape("Laplacian field does not match grid".into()));
    }
    if !lap.defined(r, c, d) || !lap.defined(r1, c1, d) {
        return Err(grid.index_error(r, c, d));
    }
    let psi0 = grid.get(r, c, d)?;
    let psi1 = grid.get(r1, c1, d)?;
    Ok(match (lap.get(r1, c1, d), lap.get(r, c, d), psi1, psi0) {
        (Value::Int(l1), Value::Int(l0), Value::Int(p1), Value::Int(p0)) => {
            let dl = i32::acc_sub(l1, l0);
            Value::Int(if i32::limiter_passes(dl, p1 - p0) {
                dl
            } else {
                0
            })
        }
        (Value::Float(l1), Value::Float(l0), Value::Float(p1), Value::Float(p0)) => {
            let dl = f32::acc_sub(l1, l0);
            Value::Float(if f32::limiter_passes(dl, f32::sample_sub(p1, p0)) {
                dl
            } else {
                0.0
            })
        }
        _ => {
            return Err(Error::Parameter(
                "Laplacian field dtype does not match grid".into(),
            ))
        }
    })
}

/// Limited flux across the row face `r + ½`.
pub fn flux_row_at(
    grid: &Grid3,
    lap: &LaplacianField,
    r: usize,
    c: usize,
    d: usize,
) -> Result<Value> {
    flux_at(grid, lap, r, c, d, Axis::Row)
}

/// Limited flux across the column face `c + ½`.
pub fn flux_col_at(
    grid: &Grid3,
    lap: &LaplacianField,
    r: usize,
    c: usize,
    d: usize,
) -> Result<Value> {
    flux_at(grid, lap, r, c, d, Axis::Col)
}

/// Horizontal diffusion over every plane, `params.sweeps` times.
pub fn hdiff_reference(grid: &Grid3, params: &HdiffParams) -> Result<Grid3> {
    let dims = grid.dims();
    check_halo(dims)?;
    params.validate(grid.dtype(), dims)?;
    let mut current = grid.clone();
    for _ in 0..params.sweeps {
        current = with_sample!(grid.dtype(), T => {
            let out = hdiff_once::<T>(current.as_slice::<T>().unwrap(), dims, params);
            Grid3::from_vec(dims, out)?
        });
    }
    Ok(current)
}

fn hdiff_once<T: Sample>(src: &[T], dims: Dims, params: &HdiffParams) -> Vec<T> {
    let (rows, cols) = (dims.rows, dims.cols);
    let coeff = params.coeff_view::<T>();
    let limit = |dl: T::Acc, dpsi: T::Acc| {
        if !params.limiter || T::limiter_passes(dl, dpsi) {
            dl
        } else {
            T::Acc::default()
        }
    };
    let mut out = src.to_vec();
    let mut lap = vec![T::Acc::default(); dims.plane_len()];
    for d in 0..dims.depth {
        let base = d * dims.plane_len();
        let plane = &src[base..base + dims.plane_len()];
        for r in 1..rows - 1 {
            for c in 1..cols - 1 {
                lap[r * cols + c] = lap_point(plane, dims, r * cols + c);
            }
        }
        for r in HDIFF_HALO..rows - HDIFF_HALO {
            for c in HDIFF_HALO..cols - HDIFF_HALO {
                let i = r * cols + c;
                let (up, down, left, right) = (i - cols, i + cols, i - 1, i + 1);
                let fp = limit(
                    T::acc_sub(lap[down], lap[i]),
                    T::sample_sub(plane[down], plane[i]),
                );
                let fm = limit(
                    T::acc_sub(lap[i], lap[up]),
                    T::sample_sub(plane[i], plane[up]),
                );
                let gp = limit(
                    T::acc_sub(lap[right], lap[i]),
                    T::sample_sub(plane[right], plane[i]),
                );
                let gm = limit(
                    T::acc_sub(lap[i], lap[left]),
                    T::sample_sub(plane[i], plane[left]),
                );
                let div = T::divergence(fp, fm, gp, gm);
                out[base + i] = T::update(plane[i], coeff.at(base + i), div, params.srs_shift);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Generator;

    fn impulse_7x7() -> Grid3 {
        Generator::Impulse.generate(DType::I32, Dims::new(7, 7, 1))
    }

    #[test]
    fn laplacian_examples() {
        let g = Generator::Constant { value: 7.0 }.generate(DType::I32, Dims::new(6, 6, 2));
        for d in 0..2 {
            for r in 1..5 {
                for c in 1..5 {
                    assert_eq!(laplacian_at(&g, r, c, d).unwrap(), Value::Int(0));
                }
            }
        }
        let g = Generator::RowRamp.generate(DType::F32, Dims::new(6, 6, 1));
        assert_eq!(laplacian_at(&g, 3, 2, 0).unwrap(), Value::Float(0.0));

        let mut g = Grid3::zeros(DType::I32, Dims::new(5, 5, 1));
        g.as_mut_i32().unwrap()[2 * 5 + 2] = 1;
        assert_eq!(laplacian_at(&g, 2, 2, 0).unwrap(), Value::Int(4));
        assert_eq!(laplacian_at(&g, 1, 2, 0).unwrap(), Value::Int(-1));
    }

    #[test]
    fn laplacian_rejects_border_points() {
        let g = impulse_7x7();
        assert!(matches!(
            laplacian_at(&g, 0, 3, 0),
            Err(Error::Index { .. })
        ));
        assert!(matches!(
            laplacian_at(&g, 3, 6, 0),
            Err(Error::Index { .. })
        ));
        assert!(matches!(
            laplacian_at(&g, 3, 3, 1),
            Err(Error::Index { .. })
        ));
    }

    /// Grid whose Laplacian and field differences along the row axis at
    /// (1,1) are chosen by hand.
    fn flux_fixture(dl: i32, dpsi: i32, axis: Axis) -> (Grid3, LaplacianField) {
        // psi = 0 except one perturbed neighbour: moving psi(p1) by x changes
        // L(p0) by -x and L(p1) by 4x, so dl = 5x and dpsi = x.
        // For arbitrary (dl, dpsi) pick a 1D profile instead: psi varies along
        // the axis only, so L = -(second difference) along that axis.
        let dims = Dims::new(6, 6, 1);
        let mut g = Grid3::zeros(DType::I32, dims);
        // Along the axis use values a0..a5 with a2 - a1 = dpsi and
        // L(2) - L(1) = dl where L(k) = 2a_k - a_{k-1} - a_{k+1}.
        // Fix a0 = a1 = 0, a2 = dpsi; L(1) = -dpsi; choose a3 so
        // L(2) = 2dpsi - a3 = dl - dpsi  =>  a3 = 3dpsi - dl.
        let profile = [0, 0, dpsi, 3 * dpsi - dl, 0, 0];
        let s = g.as_mut_i32().unwrap();
        for r in 0..6 {
            for c in 0..6 {
                s[r * 6 + c] = match axis {
                    Axis::Row => profile[r],
                    Axis::Col => profile[c],
                };
            }
        }
        let lap = laplacian_field(&g);
        (g, lap)
    }

    #[test]
    fn flux_limiter_examples() {
        let (g, lap) = flux_fixture(2, 3, Axis::Row);
        assert_eq!(flux_row_at(&g, &lap, 1, 2, 0).unwrap(), Value::Int(0));
        let (g, lap) = flux_fixture(2, -1, Axis::Row);
        assert_eq!(flux_row_at(&g, &lap, 1, 2, 0).unwrap(), Value::Int(2));
        let (g, lap) = flux_fixture(-5, 4, Axis::Col);
        assert_eq!(flux_col_at(&g, &lap, 2, 1, 0).unwrap(), Value::Int(-5));
        let (g, lap) = flux_fixture(1, 1, Axis::Col);
        assert_eq!(flux_col_at(&g, &lap, 2, 1, 0).unwrap(), Value::Int(0));

        let g = Generator::Constant { value: 3.0 }.generate(DType::F32, Dims::new(6, 6, 1));
        let lap = laplacian_field(&g);
        assert_eq!(flux_row_at(&g, &lap, 2, 2, 0).unwrap(), Value::Float(0.0));
        assert_eq!(flux_col_at(&g, &lap, 2, 2, 0).unwrap(), Value::Float(0.0));
    }

    #[test]
    fn flux_needs_both_laplacian_points() {
        let g = impulse_7x7();
        let lap = laplacian_field(&g);
        assert!(flux_row_at(&g, &lap, 5, 3, 0).is_err());
        assert!(flux_col_at(&g, &lap, 3, 5, 0).is_err());
        assert!(flux_row_at(&g, &lap, 4, 3, 0).is_ok());
    }

    #[test]
    fn identity_on_constant_and_ramps() {
        for gen in [
            Generator::Constant { value: -11.0 },
            Generator::RowRamp,
            Generator::ColRamp,
        ] {
            for dtype in [DType::I32, DType::F32] {
                let g = gen.generate(dtype, Dims::new(9, 8, 3));
                let out = hdiff_reference(&g, &HdiffParams::unit(dtype).with_sweeps(3)).unwrap();
                assert_eq!(out, g, "{gen:?} {dtype}");
            }
        }
    }

    #[test]
    fn parameter_errors() {
        let g = impulse_7x7();
        assert!(matches!(
            hdiff_reference(&g, &HdiffParams::f32(1.0)),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            hdiff_reference(&g, &HdiffParams::i32(1).with_sweeps(0)),
            Err(Error::Parameter(_))
        ));
        let f = Generator::Impulse.generate(DType::F32, Dims::new(7, 7, 1));
        assert!(hdiff_reference(&f, &HdiffParams::f32(1.0).with_shift(2)).is_err());
        let small = Grid3::zeros(DType::I32, Dims::new(4, 9, 1));
        assert!(matches!(
            hdiff_reference(&small, &HdiffParams::i32(1)),
            Err(Error::Shape(_))
        ));
        let wrong = HdiffParams {
            coeff: Coefficient::PerCell(Grid3::zeros(DType::I32, Dims::new(7, 7, 2))),
            ..HdiffParams::i32(1)
        };
        assert!(hdiff_reference(&g, &wrong).is_err());
    }

    #[test]
    fn shifted_coefficient_is_fractional() {
        // Unlimited divergence at the impulse centre is -20; a Q1 coefficient
        // of 1 means 0.5.
        let g = impulse_7x7();
        let full = hdiff_reference(&g, &HdiffParams::i32(1).without_limiter()).unwrap();
        let half =
            hdiff_reference(&g, &HdiffParams::i32(1).with_shift(1).without_limiter()).unwrap();
        assert_eq!(full.get(3, 3, 0).unwrap(), Value::Int(21));
        assert_eq!(half.get(3, 3, 0).unwrap(), Value::Int(11));
    }

    #[test]
    fn per_cell_coefficient_matches_uniform() {
        let g = Generator::Random { seed: 5 }.generate(DType::I32, Dims::new(9, 10, 2));
        let cells = Generator::Constant { value: 3.0 }.generate(DType::I32, g.dims());
        let a = hdiff_reference(&g, &HdiffParams::i32(3)).unwrap();
        let b = hdiff_reference(
            &g,
            &HdiffParams {
                coeff: Coefficient::PerCell(cells),
                ..HdiffParams::i32(0)
            },
        )
        .unwrap();
        assert_eq!(a, b);
    }
}
