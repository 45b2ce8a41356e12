//! Element types and fixed-point semantics shared by every kernel.
//!
//! The 32-bit integer path accumulates in 64 bits (128 bits for products
//! that can exceed that) and narrows once, at the final store, with
//! shift-round-saturate. The 32-bit float path evaluates in `f32` with a
//! fixed operation order so that every implementation of a kernel that
//! follows the same order is bitwise reproducible.

use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use crate::grid::{DType, GridData};

/// Widths and policies of the fixed-point datapath.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedPointSemantics {
    pub accumulate_width: u32,
    pub output_width: u32,
    pub rounding: Rounding,
    pub overflow: Overflow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rounding {
    HalfAwayFromZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Overflow {
    Saturate,
}

impl Default for FixedPointSemantics {
    fn default() -> Self {
        Self {
            accumulate_width: 64,
            output_width: 32,
            rounding: Rounding::HalfAwayFromZero,
            overflow: Overflow::Saturate,
        }
    }
}

/// Clamp to the signed 32-bit range.
pub fn saturate32(x: i128) -> i32 {
    x.clamp(i32::MIN as i128, i32::MAX as i128) as i32
}

/// Shift-round-saturate of a 64-bit accumulator.
///
/// `srs(acc, s) = saturate32(round(acc / 2^s))`, rounding half away from zero.
pub fn srs(acc: i64, shift: u32) -> i32 {
    srs_wide(acc as i128, shift)
}

/// [`srs`] on a 128-bit accumulator. Shifts of 127 or more round everything
/// to zero.
pub fn srs_wide(acc: i128, shift: u32) -> i32 {
    if shift == 0 {
        return saturate32(acc);
    }
    if shift >= 127 {
        return 0;
    }
    let half = 1i128 << (shift - 1);
    let mag = acc.unsigned_abs();
    // mag + half cannot overflow u128 for shift <= 126
    let q = ((mag + half as u128) >> shift) as i128;
    saturate32(if acc < 0 { -q } else { q })
}

/// Arithmetic a grid element type provides to the stencil kernels.
pub trait Sample: Copy + PartialEq + Debug + Default + Send + Sync + 'static {
    /// Accumulator type: `i64` for the fixed-point path, `f32` for float.
    type Acc: Copy + PartialEq + Debug + Default + Send + Sync + 'static;
    /// Tap weight in the datapath's native form.
    type Weight: Copy + Debug + Send + Sync + 'static;

    const DTYPE: DType;

    fn slice(data: &GridData) -> Option<&[Self]>;
    fn wrap(values: Vec<Self>) -> GridData;

    /// `4*center - up - down - left - right`.
    fn laplacian(center: Self, up: Self, down: Self, left: Self, right: Self) -> Self::Acc;
    /// `a - b` on accumulators.
    fn acc_sub(a: Self::Acc, b: Self::Acc) -> Self::Acc;
    /// `a - b` on samples, widened.
    fn sample_sub(a: Self, b: Self) -> Self::Acc;
    /// True when `dl * dpsi <= 0`, evaluated without overflow.
    fn limiter_passes(dl: Self::Acc, dpsi: Self::Acc) -> bool;
    /// `(fp - fm) + (gp - gm)`.
    fn divergence(fp: Self::Acc, fm: Self::Acc, gp: Self::Acc, gm: Self::Acc) -> Self::Acc;
    /// `psi - coeff * div`, narrowed to the sample type.
    fn update(psi: Self, coeff: Self, div: Self::Acc, shift: u32) -> Self;

    fn weight(w: f64, frac_bits: u32) -> Self::Weight;
    fn mac(acc: Self::Acc, w: Self::Weight, x: Self) -> Self::Acc;
    fn narrow(acc: Self::Acc, frac_bits: u32) -> Self;

    fn acc_to_f64(acc: Self::Acc) -> f64;
    fn to_f64(self) -> f64;
}

impl Sample for i32 {
    type Acc = i64;
    type Weight = i64;

    const DTYPE: DType = DType::I32;

    fn slice(data: &GridData) -> Option<&[Self]> {
        match data {
            GridData::I32(v) => Some(v),
            GridData::F32(_) => None,
        }
    }

    fn wrap(values: Vec<Self>) -> GridData {
        GridData::I32(values)
    }

    #[inline]
    fn laplacian(center: i32, up: i32, down: i32, left: i32, right: i32) -> i64 {
        4 * center as i64 - up as i64 - down as i64 - left as i64 - right as i64
    }

    #[inline]
    fn acc_sub(a: i64, b: i64) -> i64 {
        a - b
    }

    #[inline]
    fn sample_sub(a: i32, b: i32) -> i64 {
        a as i64 - b as i64
    }

    #[inline]
    fn limiter_passes(dl: i64, dpsi: i64) -> bool {
        (dl as i128) * (dpsi as i128) <= 0
    }

    #[inline]
    fn divergence(fp: i64, fm: i64, gp: i64, gm: i64) -> i64 {
        (fp - fm) + (gp - gm)
    }

    #[inline]
    fn update(psi: i32, coeff: i32, div: i64, shift: u32) -> i32 {
        let acc = ((psi as i128) << shift) - (coeff as i128) * (div as i128);
        srs_wide(acc, shift)
    }

    fn weight(w: f64, frac_bits: u32) -> i64 {
        (w * (1u64 << frac_bits) as f64).round() as i64
    }

    #[inline]
    fn mac(acc: i64, w: i64, x: i32) -> i64 {
        acc + w * x as i64
    }

    #[inline]
    fn narrow(acc: i64, frac_bits: u32) -> i32 {
        srs(acc, frac_bits)
    }

    fn acc_to_f64(acc: i64) -> f64 {
        acc as f64
    }

    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Sample for f32 {
    type Acc = f32;
    type Weight = f32;

    const DTYPE: DType = DType::F32;

    fn slice(data: &GridData) -> Option<&[Self]> {
        match data {
            GridData::F32(v) => Some(v),
            GridData::I32(_) => None,
        }
    }

    fn wrap(values: Vec<Self>) -> GridData {
        GridData::F32(values)
    }

    #[inline]
    fn laplacian(center: f32, up: f32, down: f32, left: f32, right: f32) -> f32 {
        4.0 * center - up - down - left - right
    }

    #[inline]
    fn acc_sub(a: f32, b: f32) -> f32 {
        a - b
    }

    #[inline]
    fn sample_sub(a: f32, b: f32) -> f32 {
        a - b
    }

    #[inline]
    fn limiter_passes(dl: f32, dpsi: f32) -> bool {
        (dl as f64) * (dpsi as f64) <= 0.0
    }

    #[inline]
    fn divergence(fp: f32, fm: f32, gp: f32, gm: f32) -> f32 {
        (fp - fm) + (gp - gm)
    }

    #[inline]
    fn update(psi: f32, coeff: f32, div: f32, _shift: u32) -> f32 {
        psi - coeff * div
    }

    fn weight(w: f64, _frac_bits: u32) -> f32 {
        w as f32
    }

    #[inline]
    fn mac(acc: f32, w: f32, x: f32) -> f32 {
        acc + w * x
    }

    #[inline]
    fn narrow(acc: f32, _frac_bits: u32) -> f32 {
        acc
    }

    fn acc_to_f64(acc: f32) -> f64 {
        acc as f64
    }

    fn to_f64(self) -> f64 {
        self as f64
    }
}
