use std::path::Path;
use std::process::{Command, Output};

use stencilsim::io::read_sprt;
use stencilsim::{hdiff_reference, DType, Dims, Generator, HdiffParams, SimReport};

fn stencilsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stencilsim"))
        .args(args)
        .env_remove("STENCILSIM_FABRIC")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn golden_writes_the_reference_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g.sprt");
    let o = stencilsim(&[
        "golden",
        "--gen",
        "random",
        "--seed",
        "42",
        "--dims",
        "20,24,3",
        "-o",
        p(&out),
    ]);
    assert_eq!(code(&o), 0);
    let grid = Generator::Random { seed: 42 }.generate(DType::I32, Dims::new(20, 24, 3));
    let expect = hdiff_reference(&grid, &HdiffParams::i32(1)).unwrap();
    assert_eq!(read_sprt(&out).unwrap(), expect);
    assert!(stdout(&o).starts_with(&stencilsim::io::checksum(&expect)));

    let again = stencilsim(&[
        "golden", "--gen", "random", "--seed", "42", "--dims", "20,24,3",
    ]);
    assert_eq!(stdout(&again), stdout(&o));
}

#[test]
fn golden_reads_its_own_output() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.sprt");
    let b = dir.path().join("b.sprt");
    let gen = stencilsim(&[
        "golden",
        "--kernel",
        "jac2d5pt",
        "--gen",
        "ramp",
        "--dims",
        "9,9,2",
        "--dtype",
        "f32",
        "-o",
        p(&a),
    ]);
    assert_eq!(code(&gen), 0);
    assert_eq!(
        code(&stencilsim(&[
            "golden",
            "--input",
            p(&a),
            "--coeff",
            "0.25",
            "-o",
            p(&b)
        ])),
        0
    );
    assert_eq!(read_sprt(&b).unwrap().dtype(), DType::F32);
}

#[test]
fn usage_and_io_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.sprt");
    assert_eq!(code(&stencilsim(&["golden", "--input", p(&missing)])), 2);
    assert_eq!(
        code(&stencilsim(&[
            "golden", "--gen", "random", "--dims", "8,8,1"
        ])),
        2
    );
    assert_eq!(
        code(&stencilsim(&[
            "simulate", "--design", "nosuch", "--gen", "random", "--seed", "1"
        ])),
        2
    );
    assert_eq!(code(&stencilsim(&["analyze", "--dims", "x"])), 2);
    assert_eq!(code(&stencilsim(&["frobnicate"])), 2);
    let empty = dir.path().join("empty.json");
    std::fs::write(&empty, "").unwrap();
    assert_eq!(
        code(&stencilsim(&["roofline", "--platforms", p(&empty)])),
        2
    );
    std::fs::write(&empty, r#"{"table_version":1,"platforms":[]}"#).unwrap();
    assert_eq!(
        code(&stencilsim(&["roofline", "--platforms", p(&empty)])),
        2
    );
}

#[test]
fn analyze_prints_the_reference_counts() {
    let o = stencilsim(&["analyze", "--format", "csv"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let row = text.lines().nth(1).unwrap();
    assert!(
        row.starts_with("256,256,64,12700800,10160640,22861440,6350400,2032128,8382528"),
        "{row}"
    );

    let tiny = stencilsim(&["analyze", "--dims", "4,4,1"]);
    assert_eq!(code(&tiny), 0);
    assert!(String::from_utf8_lossy(&tiny.stderr).contains("no interior points"));
}

#[test]
fn simulate_reports_and_round_trips_the_plan() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.json");
    let plan = dir.path().join("plan.json");
    let grid = dir.path().join("out.sprt");
    let args = ["--gen", "random", "--seed", "3", "--dims", "16,32,2"];
    let mut first = vec![
        "simulate",
        "--design",
        "bblock:2",
        "-o",
        p(&report),
        "--write-plan",
        p(&plan),
        "--output-grid",
        p(&grid),
    ];
    first.extend(args);
    assert_eq!(code(&stencilsim(&first)), 0);
    let r = SimReport::from_json(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!(r.functional_match);
    assert_eq!(r.design, "bblock:2");

    let mut second = vec!["simulate", "--plan", p(&plan)];
    second.extend(args);
    let o = stencilsim(&second);
    assert_eq!(code(&o), 0);
    assert_eq!(SimReport::from_json(&stdout(&o)).unwrap(), r);

    let src = Generator::Random { seed: 3 }.generate(DType::I32, Dims::new(16, 32, 2));
    assert_eq!(
        read_sprt(&grid).unwrap(),
        hdiff_reference(&src, &HdiffParams::i32(1)).unwrap()
    );
}

#[test]
fn fabric_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("fabric.json");
    std::fs::write(&bad, "{").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_stencilsim"))
        .args(["analyze"])
        .env("STENCILSIM_FABRIC", &bad)
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    let fabric = dir.path().join("good.json");
    std::fs::write(&fabric, stencilsim::default_versal_fabric().to_json()).unwrap();
    let o = stencilsim(&["--fabric", p(&fabric), "analyze"]);
    assert_eq!(code(&o), 0);
}

#[test]
fn sweep_bblocks_emits_speedups_in_order() {
    let o = stencilsim(&[
        "sweep",
        "--bblocks",
        "1,2,4",
        "--gen",
        "random",
        "--seed",
        "1",
        "--dims",
        "16,64,4",
    ]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let rows: Vec<Vec<String>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    assert_eq!(text.lines().next().unwrap(), "n,cycles,speedup");
    assert_eq!(
        rows.iter().map(|r| r[0].as_str()).collect::<Vec<_>>(),
        ["1", "2", "4"]
    );
    assert_eq!(rows[0][2], "1.0000");
    let speedups: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(speedups.windows(2).all(|w| w[1] > w[0]), "{speedups:?}");
}

#[test]
fn sweep_designs_keeps_argument_order() {
    let o = stencilsim(&[
        "sweep",
        "--designs",
        "tri_i32_direct,single_i32",
        "--gen",
        "random",
        "--seed",
        "1",
        "--dims",
        "10,16,1",
        "--format",
        "json",
    ]);
    assert_eq!(code(&o), 0);
    let v: Vec<serde_json::Value> = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v[0]["design"], "tri_i32_direct");
    assert_eq!(v[1]["design"], "single_i32");
}

#[test]
fn roofline_lists_platforms_and_simulated_rows() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.json");
    let sim = stencilsim(&[
        "simulate",
        "--design",
        "tri_i32_direct",
        "--gen",
        "random",
        "--seed",
        "2",
        "--dims",
        "12,32,1",
        "-o",
        p(&report),
    ]);
    assert_eq!(code(&sim), 0);
    let o = stencilsim(&["roofline", "--report", p(&report), "--format", "json"]);
    assert_eq!(code(&o), 0);
    let rows: Vec<serde_json::Value> = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(rows.len(), 8);
    assert_eq!(rows[7]["kind"], "simulated");
    assert_eq!(rows[7]["peak_gops"], 3100.0);
}

#[test]
fn compare_distinguishes_equal_and_divergent_grids() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.sprt");
    let b = dir.path().join("b.sprt");
    let c = dir.path().join("c.sprt");
    let run = |dims: &str, coeff: &str, out: &Path| {
        let args = [
            "golden",
            "--gen",
            "random",
            "--seed",
            "9",
            "--dims",
            dims,
            "--coeff",
            coeff,
            "-o",
            p(out),
        ];
        assert_eq!(code(&stencilsim(&args)), 0);
    };
    run("10,10,2", "1", &a);
    run("10,10,2", "2", &b);
    run("10,10,3", "1", &c);

    assert_eq!(code(&stencilsim(&["compare", p(&a), p(&a)])), 0);
    let o = stencilsim(&["compare", p(&a), p(&b)]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("r=2, c="), "{}", stdout(&o));
    assert_eq!(code(&stencilsim(&["compare", p(&a), p(&c)])), 2);
}

#[test]
fn compare_tolerance_is_relative() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.sprt");
    let b = dir.path().join("b.sprt");
    let dims = Dims::new(6, 6, 1);
    let g = Generator::Constant { value: 100.0 }.generate(DType::F32, dims);
    let mut h = g.clone();
    h.as_mut_f32().unwrap()[7] = 100.5;
    stencilsim::io::write_sprt(&a, &g).unwrap();
    stencilsim::io::write_sprt(&b, &h).unwrap();
    assert_eq!(code(&stencilsim(&["compare", p(&a), p(&b)])), 1);
    assert_eq!(
        code(&stencilsim(&[
            "compare",
            p(&a),
            p(&b),
            "--tolerance",
            "0.001"
        ])),
        1
    );
    assert_eq!(
        code(&stencilsim(&[
            "compare",
            p(&a),
            p(&b),
            "--tolerance",
            "0.01"
        ])),
        0
    );
}
