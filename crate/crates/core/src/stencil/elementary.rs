use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::with_sample;
use crate::error::{Error, Result};
use crate::grid::{Dims, Grid3};
use crate::numeric::Sample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StencilKind {
    Jac1d,
    Jac2d3pt,
    Lap5pt,
    Jac2d5pt,
    Seidel9pt,
}

impl StencilKind {
    pub const ALL: [StencilKind; 5] = [
        StencilKind::Jac1d,
        StencilKind::Jac2d3pt,
        StencilKind::Lap5pt,
        StencilKind::Jac2d5pt,
        StencilKind::Seidel9pt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StencilKind::Jac1d => "jac1d",
            StencilKind::Jac2d3pt => "jac2d3pt",
            StencilKind::Lap5pt => "lap5pt",
            StencilKind::Jac2d5pt => "jac2d5pt",
            StencilKind::Seidel9pt => "seidel9pt",
        }
    }
}

impl fmt::Display for StencilKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StencilKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StencilKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown stencil {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tap {
    pub dr: i32,
    pub dc: i32,
    pub weight: f64,
}

const fn tap(dr: i32, dc: i32, weight: f64) -> Tap {
    Tap { dr, dc, weight }
}

/// A linear stencil: `out(p) = Σ w_i ψ(p + offset_i)`.
///
/// On the integer path weights are quantized to `frac_bits` fractional bits,
/// products accumulate in 64 bits and the sum is narrowed with
/// `srs(acc, frac_bits)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StencilSpec {
    pub name: StencilKind,
    pub taps: Vec<Tap>,
    pub dims: u8,
    pub frac_bits: u32,
}

impl StencilSpec {
    pub fn builtin(kind: StencilKind) -> Self {
        const THIRD: f64 = 1.0 / 3.0;
        const NINTH: f64 = 1.0 / 9.0;
        let (taps, dims, frac_bits) = match kind {
            StencilKind::Jac1d => (
                vec![tap(0, -1, THIRD), tap(0, 0, THIRD), tap(0, 1, THIRD)],
                1,
                16,
            ),
            StencilKind::Jac2d3pt => (
                vec![tap(-1, 0, THIRD), tap(0, 0, THIRD), tap(1, 0, THIRD)],
                2,
                16,
            ),
            StencilKind::Lap5pt => (
                vec![
                    tap(-1, 0, -1.0),
                    tap(0, -1, -1.0),
                    tap(0, 0, 4.0),
                    tap(0, 1, -1.0),
                    tap(1, 0, -1.0),
                ],
                2,
                0,
            ),
            StencilKind::Jac2d5pt => (
                vec![
                    tap(-1, 0, 0.2),
                    tap(0, -1, 0.2),
                    tap(0, 0, 0.2),
                    tap(0, 1, 0.2),
                    tap(1, 0, 0.2),
                ],
                2,
                16,
            ),
            StencilKind::Seidel9pt => (
                (-1..=1)
                    .flat_map(|dr| (-1..=1).map(move |dc| tap(dr, dc, NINTH)))
                    .collect(),
                2,
                16,
            ),
        };
        Self {
            name: kind,
            taps,
            dims,
            frac_bits,
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Ok(Self::builtin(name.parse()?))
    }

    /// Largest `|dr|` over the taps.
    pub fn row_radius(&self) -> usize {
        self.taps
            .iter()
            .map(|t| t.dr.unsigned_abs() as usize)
            .max()
            .unwrap_or(0)
    }

    /// Largest `|dc|` over the taps.
    pub fn col_radius(&self) -> usize {
        self.taps
            .iter()
            .map(|t| t.dc.unsigned_abs() as usize)
            .max()
            .unwrap_or(0)
    }

    /// Number of input rows one output row reads.
    pub fn row_extent(&self) -> usize {
        2 * self.row_radius() + 1
    }

    pub fn weight_sum(&self) -> f64 {
        self.taps.iter().map(|t| t.weight).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.taps.is_empty() {
            return Err(Error::Parameter(format!("{} has no taps", self.name)));
        }
        if self.taps.iter().any(|t| t.dr.abs() > 1 || t.dc.abs() > 1) {
            return Err(Error::Parameter(format!(
                "{} has a tap outside radius 1",
                self.name
            )));
        }
        if self.dims == 1 && self.taps.iter().any(|t| t.dr != 0) {
            return Err(Error::Parameter(format!(
                "1D stencil {} reads other rows",
                self.name
            )));
        }
        if !matches!(self.dims, 1 | 2) || self.frac_bits > 30 {
            return Err(Error::Parameter(format!(
                "bad dims or frac_bits for {}",
                self.name
            )));
        }
        Ok(())
    }

    /// Rows and columns of the computed region for a plane of `dims`.
    pub fn interior(&self, dims: Dims) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let (rr, rc) = (self.row_radius(), self.col_radius());
        (
            rr..dims.rows.saturating_sub(rr).max(rr),
            rc..dims.cols.saturating_sub(rc).max(rc),
        )
    }
}

/// Applies `spec` to every plane. Points whose taps leave the grid keep
/// their input value.
pub fn apply_elementary(spec: &StencilSpec, grid: &Grid3) -> Result<Grid3> {
    spec.validate()?;
    let dims = grid.dims();
    if dims.rows < spec.row_extent() || dims.cols < 2 * spec.col_radius() + 1 {
        return Err(Error::Shape(format!(
            "{} needs at least {}x{} planes, got {dims}",
            spec.name,
            spec.row_extent(),
            2 * spec.col_radius() + 1
        )));
    }
    with_sample!(grid.dtype(), T => {
        let out = elementary_planes::<T>(spec, grid.as_slice::<T>().unwrap(), dims);
        Grid3::from_vec(dims, out)
    })
}

fn elementary_planes<T: Sample>(spec: &StencilSpec, src: &[T], dims: Dims) -> Vec<T> {
    let cols = dims.cols as isize;
    let taps: Vec<(isize, T::Weight)> = spec
        .taps
        .iter()
        .map(|t| {
            (
                t.dr as isize * cols + t.dc as isize,
                T::weight(t.weight, spec.frac_bits),
            )
        })
        .collect();
    let (rows_in, cols_in) = spec.interior(dims);
    let mut out = src.to_vec();
    for d in 0..dims.depth {
        let base = d * dims.plane_len();
        for r in rows_in.clone() {
            for c in cols_in.clone() {
                let i = (base + r * dims.cols + c) as isize;
                let acc = taps.iter().fold(T::Acc::default(), |acc, &(off, w)| {
                    T::mac(acc, w, src[(i + off) as usize])
                });
                out[i as usize] = T::narrow(acc, spec.frac_bits);
            }
        }
    }
    out
}
