//! Dense 3D fields and the reproducible generators used to fill them.

use std::fmt;
use std::str::FromStr;

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Sample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    I32,
    F32,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::I32 => 0,
            DType::F32 => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DType::I32),
            1 => Some(DType::F32),
            _ => None,
        }
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DType::I32 => "i32",
            DType::F32 => "f32",
        })
    }
}

impl FromStr for DType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "i32" => Ok(DType::I32),
            "f32" => Ok(DType::F32),
            other => Err(Error::Parameter(format!("unknown dtype {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GridData {
    I32(Vec<i32>),
    F32(Vec<f32>),
}

impl GridData {
    pub fn len(&self) -> usize {
        match self {
            GridData::I32(v) => v.len(),
            GridData::F32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> DType {
        match self {
            GridData::I32(_) => DType::I32,
            GridData::F32(_) => DType::F32,
        }
    }
}

/// A scalar read out of a grid or produced by a stencil primitive.
///
/// Integer values are carried at accumulator width so intermediate results
/// (Laplacians, fluxes) are never saturated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Int(i64),
    Float(f32),
}

impl Value {
    pub fn as_f64(self) -> f64 {
        match self {
            Value::Int(v) => v as f64,
            Value::Float(v) => v as f64,
        }
    }
}

/// Extents of a grid: rows R, columns C, planes D.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub rows: usize,
    pub cols: usize,
    pub depth: usize,
}

impl Dims {
    pub fn new(rows: usize, cols: usize, depth: usize) -> Self {
        Self { rows, cols, depth }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols * self.depth
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn plane_len(&self) -> usize {
        self.rows * self.cols
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.rows, self.cols, self.depth)
    }
}

impl FromStr for Dims {
    type Err = Error;

    /// Parses `R,C,D` (also accepts `x` as a separator).
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split([',', 'x']).map(str::trim).collect();
        if parts.len() != 3 {
            return Err(Error::Parameter(format!("dims {s:?} must be R,C,D")));
        }
        let mut v = [0usize; 3];
        for (slot, p) in v.iter_mut().zip(&parts) {
            *slot = p
                .parse()
                .map_err(|_| Error::Parameter(format!("bad dimension {p:?} in {s:?}")))?;
        }
        Ok(Dims::new(v[0], v[1], v[2]))
    }
}

/// Dense row-major 3D field: element `(r, c, d)` lives at `d*R*C + r*C + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid3 {
    dims: Dims,
    data: GridData,
}

impl Grid3 {
    pub fn new(dims: Dims, data: GridData) -> Result<Self> {
        if data.len() != dims.len() {
            return Err(Error::Shape(format!(
                "data length {} does not match {dims} = {}",
                data.len(),
                dims.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn from_vec<T: Sample>(dims: Dims, values: Vec<T>) -> Result<Self> {
        Self::new(dims, T::wrap(values))
    }

    pub fn zeros(dtype: DType, dims: Dims) -> Self {
        let data = match dtype {
            DType::I32 => GridData::I32(vec![0; dims.len()]),
            DType::F32 => GridData::F32(vec![0.0; dims.len()]),
        };
        Self { dims, data }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn rows(&self) -> usize {
        self.dims.rows
    }

    pub fn cols(&self) -> usize {
        self.dims.cols
    }

    pub fn depth(&self) -> usize {
        self.dims.depth
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    pub fn data(&self) -> &GridData {
        &self.data
    }

    pub fn into_data(self) -> GridData {
        self.data
    }

    pub fn same_shape(&self, other: &Grid3) -> bool {
        self.dims == other.dims
    }

    #[inline]
    pub fn index(&self, r: usize, c: usize, d: usize) -> usize {
        d * self.dims.rows * self.dims.cols + r * self.dims.cols + c
    }

    /// Coordinates of a flat index.
    pub fn coords(&self, idx: usize) -> (usize, usize, usize) {
        let plane = self.dims.plane_len();
        let d = idx / plane;
        let rem = idx % plane;
        (rem / self.dims.cols, rem % self.dims.cols, d)
    }

    pub fn check_index(&self, r: usize, c: usize, d: usize) -> Result<()> {
        if r < self.dims.rows && c < self.dims.cols && d < self.dims.depth {
            Ok(())
        } else {
            Err(self.index_error(r, c, d))
        }
    }

    pub(crate) fn index_error(&self, r: usize, c: usize, d: usize) -> Error {
        Error::Index {
            r,
            c,
            d,
            rows: self.dims.rows,
            cols: self.dims.cols,
            depth: self.dims.depth,
        }
    }

    pub fn get(&self, r: usize, c: usize, d: usize) -> Result<Value> {
        self.check_index(r, c, d)?;
        let i = self.index(r, c, d);
        Ok(match &self.data {
            GridData::I32(v) => Value::Int(v[i] as i64),
            GridData::F32(v) => Value::Float(v[i]),
        })
    }

    pub fn as_slice<T: Sample>(&self) -> Option<&[T]> {
        T::slice(&self.data)
    }

    pub fn as_i32(&self) -> Option<&[i32]> {
        self.as_slice::<i32>()
    }

    pub fn as_f32(&self) -> Option<&[f32]> {
        self.as_slice::<f32>()
    }

    pub fn as_mut_i32(&mut self) -> Option<&mut [i32]> {
        match &mut self.data {
            GridData::I32(v) => Some(v),
            GridData::F32(_) => None,
        }
    }

    pub fn as_mut_f32(&mut self) -> Option<&mut [f32]> {
        match &mut self.data {
            GridData::F32(v) => Some(v),
            GridData::I32(_) => None,
        }
    }

    /// Row `r` of plane `d` as a slice.
    pub fn row<T: Sample>(&self, r: usize, d: usize) -> Option<&[T]> {
        let start = self.index(r, 0, d);
        self.as_slice::<T>()
            .map(|s| &s[start..start + self.dims.cols])
    }

    /// Copy with elements converted to `dtype`; floats round to the
    /// nearest integer and saturate.
    pub fn convert(&self, dtype: DType) -> Grid3 {
        let data = match (&self.data, dtype) {
            (GridData::I32(v), DType::F32) => GridData::F32(v.iter().map(|&x| x as f32).collect()),
            (GridData::F32(v), DType::I32) => {
                GridData::I32(v.iter().map(|&x| x.round() as i32).collect())
            }
            (d, _) => d.clone(),
        };
        Grid3 {
            dims: self.dims,
            data,
        }
    }

    /// Element values as little-endian 4-byte words, in storage order.
    pub fn le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.dims.len() * 4);
        match &self.data {
            GridData::I32(v) => v
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            GridData::F32(v) => v
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        out
    }
}

/// Reproducible grid content. Every generated grid is a pure function of
/// (generator, seed, dims, dtype).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Generator {
    Constant {
        value: f64,
    },
    /// `psi(r, c, d) = r`.
    RowRamp,
    /// `psi(r, c, d) = c`.
    ColRamp,
    /// 1 at the centre of every plane, 0 elsewhere.
    Impulse,
    /// SplitMix64 stream, see [`random_i32`] and [`random_f32`].
    Random {
        seed: u64,
    },
}

/// Inclusive magnitude bound of generated random integers (2^20), small enough
/// that default hdiff runs never saturate.
pub const RANDOM_I32_BOUND: i64 = 1 << 20;

/// Maps one SplitMix64 output to an integer in `[-2^20, 2^20]`:
/// `(x mod (2^21 + 1)) - 2^20`.
pub fn random_i32(x: u64) -> i32 {
    ((x % (2 * RANDOM_I32_BOUND as u64 + 1)) as i64 - RANDOM_I32_BOUND) as i32
}

/// Maps one SplitMix64 output to a float in `[-1, 1)`: the top 24 bits
/// scaled by `2^-23`, minus one.
pub fn random_f32(x: u64) -> f32 {
    ((x >> 40) as f32) * (1.0 / (1u32 << 23) as f32) - 1.0
}

impl Generator {
    pub fn generate(&self, dtype: DType, dims: Dims) -> Grid3 {
        let n = dims.len();
        let plane = dims.plane_len().max(1);
        let data = match dtype {
            DType::I32 => GridData::I32(self.values(n, plane, dims, |v| v as i32, random_i32)),
            DType::F32 => GridData::F32(self.values(n, plane, dims, |v| v as f32, random_f32)),
        };
        Grid3 { dims, data }
    }

    fn values<T: Copy>(
        &self,
        n: usize,
        plane: usize,
        dims: Dims,
        from_f64: impl Fn(f64) -> T,
        from_bits: impl Fn(u64) -> T,
    ) -> Vec<T> {
        match *self {
            Generator::Constant { value } => vec![from_f64(value); n],
            Generator::RowRamp => (0..n)
                .map(|i| from_f64(((i % plane) / dims.cols) as f64))
                .collect(),
            Generator::ColRamp => (0..n).map(|i| from_f64((i % dims.cols) as f64)).collect(),
            Generator::Impulse => {
                let centre = (dims.rows / 2) * dims.cols + dims.cols / 2;
                (0..n)
                    .map(|i| from_f64(if i % plane == centre { 1.0 } else { 0.0 }))
                    .collect()
            }
            Generator::Random { seed } => {
                let mut rng = SplitMix64::seed_from_u64(seed);
                (0..n).map(|_| from_bits(rng.next_u64())).collect()
            }
        }
    }
}

impl FromStr for Generator {
    type Err = Error;

    /// `constant[:value]`, `ramp` / `row-ramp`, `col-ramp`, `impulse`,
    /// `random[:seed]`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let parse_arg = |default: f64| -> Result<f64> {
            arg.map_or(Ok(default), |a| {
                a.parse::<f64>()
                    .map_err(|_| Error::Parameter(format!("bad generator argument {a:?}")))
            })
        };
        match name {
            "constant" => Ok(Generator::Constant {
                value: parse_arg(7.0)?,
            }),
            "ramp" | "row-ramp" => Ok(Generator::RowRamp),
            "col-ramp" => Ok(Generator::ColRamp),
            "impulse" => Ok(Generator::Impulse),
            "random" => Ok(Generator::Random {
                seed: arg
                    .map(|a| a.parse::<u64>())
                    .transpose()
                    .map_err(|_| Error::Parameter(format!("bad seed in {s:?}")))?
                    .unwrap_or(0),
            }),
            other => Err(Error::Parameter(format!("unknown generator {other:?}"))),
        }
    }
}
