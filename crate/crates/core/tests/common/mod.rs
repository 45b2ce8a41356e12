//! Straight-loop scalar oracles written without the library's numeric
//! helpers, plus small fixtures shared by the integration tests.

#![allow(dead_code)]

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use stencilsim::{DType, Dims, Generator, Grid3, StencilKind};

pub fn rng(seed: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

pub fn uniform(rng: &mut Xoshiro256PlusPlus, lo: usize, hi: usize) -> usize {
    lo + (rng.next_u64() % (hi - lo + 1) as u64) as usize
}

/// Random grid with every extent drawn from `lo..=hi`.
pub fn random_grid(rng: &mut Xoshiro256PlusPlus, dtype: DType, lo: usize, hi: usize) -> Grid3 {
    let dims = Dims::new(
        uniform(rng, lo, hi),
        uniform(rng, lo, hi),
        uniform(rng, lo, hi),
    );
    Generator::Random {
        seed: rng.next_u64(),
    }
    .generate(dtype, dims)
}

fn round_shift(acc: i128, shift: u32) -> i64 {
    let v = if shift == 0 {
        acc
    } else {
        let d = 1i128 << shift;
        let q = acc.abs() / d;
        let rem = acc.abs() % d;
        let q = if 2 * rem >= d { q + 1 } else { q };
        if acc < 0 {
            -q
        } else {
            q
        }
    };
    v.clamp(i32::MIN as i128, i32::MAX as i128) as i64
}

fn opposite_or_zero<T: PartialOrd + Default>(a: T, b: T) -> bool {
    let z = T::default();
    a == z || b == z || ((a < z) != (b < z))
}

/// hdiff on an i32 grid with a uniform coefficient `c` carrying `shift`
/// fractional bits.
pub fn hdiff_i32(grid: &[i32], dims: Dims, c: i32, shift: u32, limiter: bool) -> Vec<i32> {
    let (nr, nc) = (dims.rows, dims.cols);
    let mut out = grid.to_vec();
    for d in 0..dims.depth {
        let at = |r: usize, col: usize| grid[d * nr * nc + r * nc + col] as i64;
        let lap = |r: usize, col: usize| {
            4 * at(r, col) - at(r - 1, col) - at(r + 1, col) - at(r, col - 1) - at(r, col + 1)
        };
        let flux = |r0: usize, c0: usize, r1: usize, c1: usize| {
            let dl = lap(r1, c1) - lap(r0, c0);
            let dp = at(r1, c1) - at(r0, c0);
            if !limiter || opposite_or_zero(dl, dp) {
                dl
            } else {
                0
            }
        };
        for r in 2..nr - 2 {
            for col in 2..nc - 2 {
                let fp = flux(r, col, r + 1, col);
                let fm = flux(r - 1, col, r, col);
                let gp = flux(r, col, r, col + 1);
                let gm = flux(r, col - 1, r, col);
                let div = (fp - fm) + (gp - gm);
                let acc = ((at(r, col) as i128) << shift) - c as i128 * div as i128;
                out[d * nr * nc + r * nc + col] = round_shift(acc, shift) as i32;
            }
        }
    }
    out
}

/// hdiff on an f32 grid, evaluated in f32.
pub fn hdiff_f32(grid: &[f32], dims: Dims, c: f32, limiter: bool) -> Vec<f32> {
    let (nr, nc) = (dims.rows, dims.cols);
    let mut out = grid.to_vec();
    for d in 0..dims.depth {
        let at = |r: usize, col: usize| grid[d * nr * nc + r * nc + col];
        let lap = |r: usize, col: usize| {
            4.0 * at(r, col) - at(r - 1, col) - at(r + 1, col) - at(r, col - 1) - at(r, col + 1)
        };
        let flux = |r0: usize, c0: usize, r1: usize, c1: usize| {
            let dl = lap(r1, c1) - lap(r0, c0);
            let dp = at(r1, c1) - at(r0, c0);
            if !limiter || opposite_or_zero(dl, dp) {
                dl
            } else {
                0.0
            }
        };
        for r in 2..nr - 2 {
            for col in 2..nc - 2 {
                let div = (flux(r, col, r + 1, col) - flux(r - 1, col, r, col))
                    + (flux(r, col, r, col + 1) - flux(r, col - 1, r, col));
                out[d * nr * nc + r * nc + col] = at(r, col) - c * div;
            }
        }
    }
    out
}

/// Neighbourhood weights of the built-in stencils as a 3×3 row-major
/// table, their fractional bits, and whether they read other rows.
pub fn stencil_table(kind: StencilKind) -> ([[f64; 3]; 3], u32, bool) {
    let t = 1.0 / 3.0;
    let n = 1.0 / 9.0;
    match kind {
        StencilKind::Jac1d => ([[0.0; 3], [t, t, t], [0.0; 3]], 16, false),
        StencilKind::Jac2d3pt => ([[0.0, t, 0.0], [0.0, t, 0.0], [0.0, t, 0.0]], 16, true),
        StencilKind::Lap5pt => (
            [[0.0, -1.0, 0.0], [-1.0, 4.0, -1.0], [0.0, -1.0, 0.0]],
            0,
            true,
        ),
        StencilKind::Jac2d5pt => (
            [[0.0, 0.2, 0.0], [0.2, 0.2, 0.2], [0.0, 0.2, 0.0]],
            16,
            true,
        ),
        StencilKind::Seidel9pt => ([[n; 3]; 3], 16, true),
    }
}

fn stencil_extent(w: &[[f64; 3]; 3], rows: bool) -> (usize, usize) {
    let col = usize::from(w.iter().any(|row| row[0] != 0.0 || row[2] != 0.0));
    (usize::from(rows), col)
}

pub fn elementary_i32(kind: StencilKind, grid: &[i32], dims: Dims) -> Vec<i32> {
    let (w, frac, rows) = stencil_table(kind);
    let (rr, rc) = stencil_extent(&w, rows);
    let q: Vec<Vec<i64>> = w
        .iter()
        .map(|row| {
            row.iter()
                .map(|&x| (x * (1u64 << frac) as f64).round() as i64)
                .collect()
        })
        .collect();
    let (nr, nc) = (dims.rows, dims.cols);
    let mut out = grid.to_vec();
    for d in 0..dims.depth {
        for r in rr..nr - rr {
            for c in rc..nc - rc {
                let mut acc: i128 = 0;
                for (i, row) in q.iter().enumerate() {
                    for (j, &wt) in row.iter().enumerate() {
                        if wt != 0 {
                            let (y, x) = (r + i - 1, c + j - 1);
                            acc += wt as i128 * grid[d * nr * nc + y * nc + x] as i128;
                        }
                    }
                }
                out[d * nr * nc + r * nc + c] = round_shift(acc, frac) as i32;
            }
        }
    }
    out
}

pub fn elementary_f32(kind: StencilKind, grid: &[f32], dims: Dims) -> Vec<f32> {
    let (w, _, rows) = stencil_table(kind);
    let (rr, rc) = stencil_extent(&w, rows);
    let (nr, nc) = (dims.rows, dims.cols);
    let mut out = grid.to_vec();
    for d in 0..dims.depth {
        for r in rr..nr - rr {
            for c in rc..nc - rc {
                let mut acc = 0.0f32;
                for (i, row) in w.iter().enumerate() {
                    for (j, &wt) in row.iter().enumerate() {
                        if wt != 0.0 {
                            acc += wt as f32 * grid[d * nr * nc + (r + i - 1) * nc + (c + j - 1)];
                        }
                    }
                }
                out[d * nr * nc + r * nc + c] = acc;
            }
        }
    }
    out
}

pub fn close_f32(a: &[f32], b: &[f32], rel: f64) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(&x, &y)| {
            let (x, y) = (x as f64, y as f64);
            x == y || (x - y).abs() <= rel * x.abs().max(y.abs())
        })
}

/// Runs `f` over 100 random grids of each element type and returns the
/// number of mismatches.
pub fn oracle_mismatches(seed: u64, mut f: impl FnMut(&Grid3) -> bool) -> usize {
    let mut r = rng(seed);
    let mut bad = 0;
    for dtype in [DType::I32, DType::F32] {
        for _ in 0..100 {
            let g = random_grid(&mut r, dtype, 5, 32);
            if !f(&g) {
                bad += 1;
            }
        }
    }
    bad
}

/// Criterion-style check of the golden kernels against the oracles.
pub fn golden_matches_oracle(seed: u64) -> Vec<(String, usize)> {
    use stencilsim::{apply_elementary, hdiff_reference, HdiffParams, StencilSpec};
    let mut results = Vec::new();
    let hdiff = oracle_mismatches(seed, |g| match g.dtype() {
        DType::I32 => {
            let got = hdiff_reference(g, &HdiffParams::i32(1)).unwrap();
            got.as_i32().unwrap() == hdiff_i32(g.as_i32().unwrap(), g.dims(), 1, 0, true).as_slice()
        }
        DType::F32 => {
            let got = hdiff_reference(g, &HdiffParams::f32(1.0)).unwrap();
            close_f32(
                got.as_f32().unwrap(),
                &hdiff_f32(g.as_f32().unwrap(), g.dims(), 1.0, true),
                1e-5,
            )
        }
    });
    results.push(("hdiff".to_string(), hdiff));
    for kind in StencilKind::ALL {
        let spec = StencilSpec::builtin(kind);
        let bad = oracle_mismatches(seed ^ kind as u64, |g| {
            let got = apply_elementary(&spec, g).unwrap();
            match g.dtype() {
                DType::I32 => {
                    got.as_i32().unwrap()
                        == elementary_i32(kind, g.as_i32().unwrap(), g.dims()).as_slice()
                }
                DType::F32 => close_f32(
                    got.as_f32().unwrap(),
                    &elementary_f32(kind, g.as_f32().unwrap(), g.dims()),
                    1e-5,
                ),
            }
        });
        results.push((kind.to_string(), bad));
    }
    results
}
