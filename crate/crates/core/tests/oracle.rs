mod common;

use common::*;
use rand_core::RngCore;
use stencilsim::{hdiff_reference, Coefficient, DType, Dims, Generator, Grid3, HdiffParams};

#[test]
fn golden_kernels_agree_with_straight_loops() {
    for (name, bad) in golden_matches_oracle(7) {
        assert_eq!(bad, 0, "{name}: {bad} of 200 grids differ");
    }
}

#[test]
fn scaled_coefficients_agree() {
    let mut r = rng(99);
    for _ in 0..60 {
        let g = random_grid(&mut r, DType::I32, 5, 20);
        let c = (r.next_u64() % 33) as i32 - 16;
        let shift = (r.next_u64() % 12) as u32;
        let limiter = !r.next_u64().is_multiple_of(4);
        let mut p = HdiffParams::i32(c).with_shift(shift);
        if !limiter {
            p = p.without_limiter();
        }
        let got = hdiff_reference(&g, &p).unwrap();
        assert_eq!(
            got.as_i32().unwrap(),
            hdiff_i32(g.as_i32().unwrap(), g.dims(), c, shift, limiter).as_slice(),
            "c={c} shift={shift} dims={}",
            g.dims()
        );
    }
    for _ in 0..60 {
        let g = random_grid(&mut r, DType::F32, 5, 20);
        let c = (r.next_u64() % 1000) as f32 / 4000.0;
        let got = hdiff_reference(&g, &HdiffParams::f32(c)).unwrap();
        assert!(close_f32(
            got.as_f32().unwrap(),
            &hdiff_f32(g.as_f32().unwrap(), g.dims(), c, true),
            1e-5
        ));
    }
}

#[test]
fn per_cell_coefficient_matches_uniform_when_constant() {
    let dims = Dims::new(12, 9, 3);
    let g = Generator::Random { seed: 3 }.generate(DType::I32, dims);
    let field = Grid3::from_vec(dims, vec![3i32; dims.len()]).unwrap();
    let per_cell = HdiffParams {
        coeff: Coefficient::PerCell(field),
        ..HdiffParams::i32(0).with_shift(2)
    };
    assert_eq!(
        hdiff_reference(&g, &per_cell).unwrap(),
        hdiff_reference(&g, &HdiffParams::i32(3).with_shift(2)).unwrap()
    );
}

#[test]
fn extreme_values_saturate_like_the_oracle() {
    let dims = Dims::new(7, 7, 1);
    let mut r = rng(5);
    for _ in 0..50 {
        let v: Vec<i32> = (0..dims.len())
            .map(|_| match r.next_u64() % 3 {
                0 => i32::MAX,
                1 => i32::MIN,
                _ => r.next_u64() as i32,
            })
            .collect();
        let g = Grid3::from_vec(dims, v).unwrap();
        let got = hdiff_reference(&g, &HdiffParams::i32(1)).unwrap();
        assert_eq!(
            got.as_i32().unwrap(),
            hdiff_i32(g.as_i32().unwrap(), dims, 1, 0, true).as_slice()
        );
    }
}
