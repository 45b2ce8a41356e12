mod common;

use proptest::prelude::*;
use stencilsim::mapper::{build_design, validate_plan, ShimDirection, DEFAULT_ROW_COLS};
use stencilsim::*;

fn dims() -> impl Strategy<Value = Dims> {
    (5usize..40, 5usize..40, 1usize..4).prop_map(|(r, c, d)| Dims::new(r, c, d))
}

fn dtype() -> impl Strategy<Value = DType> {
    prop_oneof![Just(DType::I32), Just(DType::F32)]
}

/// Every design the builders accept on the default fabric.
fn all_designs() -> Vec<Design> {
    let mut v: Vec<Design> = Design::STUDY.to_vec();
    v.extend((1..=5).map(|lanes| Design::BBlock { lanes }));
    v.extend((1..=32).map(|n_bblocks| Design::ScaleOut { n_bblocks }));
    for stencil in StencilKind::ALL {
        v.extend((1..=32).map(|n_cores| Design::ElementaryScale { stencil, n_cores }));
    }
    v
}

proptest! {
    #[test]
    fn constant_planes_are_fixed_points(d in dims(), t in dtype(), v in -1000i32..1000) {
        let g = Generator::Constant { value: v as f64 }.generate(t, d);
        prop_assert_eq!(hdiff_reference(&g, &HdiffParams::unit(t).with_sweeps(2)).unwrap(), g);
    }

    #[test]
    fn affine_planes_are_fixed_points(d in dims(), a in -50i32..50, b in -50i32..50, k in -1000i32..1000) {
        let v: Vec<i32> = (0..d.len())
            .map(|i| {
                let r = (i % d.plane_len()) / d.cols;
                let c = i % d.cols;
                a * r as i32 + b * c as i32 + k
            })
            .collect();
        let g = Grid3::from_vec(d, v).unwrap();
        prop_assert_eq!(&hdiff_reference(&g, &HdiffParams::i32(3)).unwrap(), &g);
        for ramp in [Generator::RowRamp, Generator::ColRamp] {
            let g = ramp.generate(DType::F32, d);
            prop_assert_eq!(hdiff_reference(&g, &HdiffParams::f32(0.7)).unwrap(), g);
        }
    }

    #[test]
    fn halo_is_preserved(d in dims(), t in dtype(), seed in any::<u64>(), sweeps in 1u32..3) {
        let g = Generator::Random { seed }.generate(t, d);
        let out = hdiff_reference(&g, &HdiffParams::unit(t).with_sweeps(sweeps)).unwrap();
        for z in 0..d.depth {
            for r in 0..d.rows {
                for c in 0..d.cols {
                    if r < 2 || c < 2 || r >= d.rows - 2 || c >= d.cols - 2 {
                        prop_assert_eq!(out.get(r, c, z).unwrap(), g.get(r, c, z).unwrap());
                    }
                }
            }
        }
    }

    #[test]
    fn limited_fluxes_oppose_the_gradient(d in dims(), t in dtype(), seed in any::<u64>()) {
        let g = Generator::Random { seed }.generate(t, d);
        let lap = laplacian_field(&g);
        for r in 1..d.rows - 2 {
            for c in 1..d.cols - 2 {
                let pairs = [
                    (flux_row_at(&g, &lap, r, c, 0).unwrap(), (r + 1, c)),
                    (flux_col_at(&g, &lap, r, c, 0).unwrap(), (r, c + 1)),
                ];
                for (f, (r1, c1)) in pairs {
                    let f = f.as_f64();
                    let dpsi = g.get(r1, c1, 0).unwrap().as_f64() - g.get(r, c, 0).unwrap().as_f64();
                    let dl = lap.get(r1, c1, 0).as_f64() - lap.get(r, c, 0).as_f64();
                    prop_assert!(f * dpsi <= 0.0);
                    prop_assert!(f == 0.0 || (f - dl).abs() <= 1e-6 * dl.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn srs_algebra(x in -(1i64 << 40)..(1i64 << 40), s in 0u32..20, k in any::<i32>()) {
        prop_assert_eq!(srs((k as i64) << s, s), k);
        prop_assert_eq!(srs(x, 0), x.clamp(i32::MIN as i64, i32::MAX as i64) as i32);
        if x.abs() < (1i64 << 50) {
            let y = srs(x, s) as i64;
            prop_assert!(y == i32::MAX as i64 || y == i32::MIN as i64 || (y * (1i64 << s) - x).abs() * 2 <= 1i64 << s);
            prop_assert!(srs(-x, s) as i64 == -y || y == i32::MIN as i64 || y == i32::MAX as i64);
            prop_assert!(srs(x + 1, s) >= srs(x, s));
        }
    }

    #[test]
    fn simulation_matches_golden(d in (5usize..20, 5usize..24, 1usize..4), seed in any::<u64>(), pick in 0usize..10) {
        let names = ["single_f32", "single_i32", "dual_i32_direct", "dual_i32_stream", "dual_i32_cascade",
                     "tri_i32_direct", "bblock:4", "bblock:3", "scaleout:2", "scaleout:3"];
        let design: Design = names[pick].parse().unwrap();
        let t = design.dtype().unwrap();
        let f = default_versal_fabric();
        let p = build_design(design, t, &f, DEFAULT_ROW_COLS).unwrap();
        let g = Generator::Random { seed }.generate(t, Dims::new(d.0, d.1, d.2));
        let params = KernelParams::for_design(&design, t);
        let (_, a) = simulate(&p, &f, &g, &params).unwrap();
        let (_, b) = simulate(&p, &f, &g, &params).unwrap();
        prop_assert!(a.functional_match);
        prop_assert_eq!(a.to_json(), b.to_json());
    }
}

#[test]
fn builders_produce_valid_deterministic_plans() {
    let f = default_versal_fabric();
    for design in all_designs() {
        let dtypes: &[DType] = match design.dtype() {
            Some(t) => &[t][..],
            None => &[DType::I32, DType::F32],
        };
        for &t in dtypes {
            let p = build_design(design, t, &f, DEFAULT_ROW_COLS).unwrap();
            let v = validate_plan(&p, &f);
            assert!(v.is_empty(), "{design}: {v:?}");
            assert_eq!(build_design(design, t, &f, DEFAULT_ROW_COLS).unwrap(), p);
            assert_eq!(MappingPlan::from_json(&p.to_json()).unwrap(), p);
            if let Design::ScaleOut { n_bblocks } = design {
                assert_eq!(p.compute_cores(), 12 * n_bblocks);
                assert_eq!(p.shims_used(), n_bblocks.div_ceil(2));
                assert_eq!(p.shim_channels(ShimDirection::Read), n_bblocks);
            }
        }
    }
    assert!(build_design(
        Design::ScaleOut { n_bblocks: 33 },
        DType::I32,
        &f,
        DEFAULT_ROW_COLS
    )
    .is_err());
    for lanes in 6..=9 {
        let err =
            build_design(Design::BBlock { lanes }, DType::I32, &f, DEFAULT_ROW_COLS).unwrap_err();
        assert!(matches!(err, Error::Placement(_)), "{lanes} lanes: {err}");
    }
}

#[test]
fn work_partitions_cover_each_interior_row_once() {
    let f = default_versal_fabric();
    let d = Dims::new(37, 9, 70);
    for design in all_designs().into_iter().filter(Design::is_hdiff) {
        let p = build_design(design, DType::I32, &f, DEFAULT_ROW_COLS).unwrap();
        for z in 0..d.depth {
            for r in 2..d.rows - 2 {
                let owners = p
                    .work_division
                    .iter()
                    .filter(|w| w.planes.contains(z) && w.rows.contains(r))
                    .count();
                assert_eq!(owners, 1, "{design}: plane {z} row {r}");
            }
        }
    }
}
