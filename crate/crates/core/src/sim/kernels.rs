//! Row-at-a-time kernels the simulated cores run. Each performs the same
//! operations in the same order as the whole-grid reference, so results
//! match bit for bit.

use crate::numeric::Sample;
use crate::stencil::{CoeffView, HDIFF_HALO};

/// Laplacians of one output row's interior points, stored as five blocks
/// of `W`: centre, up, down, left, right.
pub fn lap_tile<T: Sample>(rows: [&[T]; 5]) -> Vec<T::Acc> {
    let cols = rows[0].len();
    let w = cols - 2 * HDIFF_HALO;
    let lap = |k: usize, c: usize| {
        T::laplacian(
            rows[k][c],
            rows[k - 1][c],
            rows[k + 1][c],
            rows[k][c - 1],
            rows[k][c + 1],
        )
    };
    let mut out = Vec::with_capacity(5 * w);
    let interior = HDIFF_HALO..cols - HDIFF_HALO;
    out.extend(interior.clone().map(|c| lap(2, c)));
    out.extend(interior.clone().map(|c| lap(1, c)));
    out.extend(interior.clone().map(|c| lap(3, c)));
    out.extend(interior.clone().map(|c| lap(2, c - 1)));
    out.extend(interior.map(|c| lap(2, c + 1)));
    out
}

/// Flux candidates `[fp, fm, gp, gm]` (four blocks of `W`) and whether the
/// limiter lets each through. `psi` holds rows `r-1..=r+1`.
pub fn flux_candidates<T: Sample>(lap: &[T::Acc], psi: [&[T]; 3]) -> (Vec<T::Acc>, Vec<bool>) {
    let cols = psi[0].len();
    let w = cols - 2 * HDIFF_HALO;
    let block = |b: usize, j: usize| lap[b * w + j];
    let mut cand = vec![T::Acc::default(); 4 * w];
    let mut mask = vec![false; 4 * w];
    for j in 0..w {
        let c = j + HDIFF_HALO;
        let (lc, lu, ld, ll, lr) = (
            block(0, j),
            block(1, j),
            block(2, j),
            block(3, j),
            block(4, j),
        );
        let pairs = [
            (T::acc_sub(ld, lc), T::sample_sub(psi[2][c], psi[1][c])),
            (T::acc_sub(lc, lu), T::sample_sub(psi[1][c], psi[0][c])),
            (T::acc_sub(lr, lc), T::sample_sub(psi[1][c + 1], psi[1][c])),
            (T::acc_sub(lc, ll), T::sample_sub(psi[1][c], psi[1][c - 1])),
        ];
        for (b, (dl, dpsi)) in pairs.into_iter().enumerate() {
            cand[b * w + j] = dl;
            mask[b * w + j] = T::limiter_passes(dl, dpsi);
        }
    }
    (cand, mask)
}

/// Selects the limited fluxes and applies the update to one row.
/// `row_base` is the flat grid index of the row's first element.
pub fn flux_update<T: Sample>(
    cand: &[T::Acc],
    mask: &[bool],
    psi: &[T],
    coeff: &CoeffView<'_, T>,
    row_base: usize,
    shift: u32,
    limiter: bool,
) -> Vec<T> {
    let cols = psi.len();
    let w = cols - 2 * HDIFF_HALO;
    let pick = |b: usize, j: usize| {
        if !limiter || mask[b * w + j] {
            cand[b * w + j]
        } else {
            T::Acc::default()
        }
    };
    let mut out = psi.to_vec();
    for j in 0..w {
        let c = j + HDIFF_HALO;
        let div = T::divergence(pick(0, j), pick(1, j), pick(2, j), pick(3, j));
        out[c] = T::update(psi[c], coeff.at(row_base + c), div, shift);
    }
    out
}

/// One elementary stencil row. `window` holds the input rows the taps
/// reach, centre row at index `row_radius`; `taps` are
/// `(dr, dc, weight)`.
pub fn elementary_row<T: Sample>(
    window: &[&[T]],
    row_radius: usize,
    col_radius: usize,
    taps: &[(i32, i32, T::Weight)],
    frac_bits: u32,
) -> Vec<T> {
    let centre = window[row_radius];
    let cols = centre.len();
    let mut out = centre.to_vec();
    for (c, o) in out
        .iter_mut()
        .enumerate()
        .take(cols - col_radius)
        .skip(col_radius)
    {
        let acc = taps.iter().fold(T::Acc::default(), |acc, &(dr, dc, w)| {
            let row = window[(row_radius as i32 + dr) as usize];
            T::mac(acc, w, row[(c as i32 + dc) as usize])
        });
        *o = T::narrow(acc, frac_bits);
    }
    out
}
