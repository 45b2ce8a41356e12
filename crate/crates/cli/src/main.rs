//! `stencilsim` command-line front end.
//!
//! Exit codes: 0 success, 1 semantic mismatch (comparison or functional
//! failure), 2 usage or I/O error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use stencilsim::analytic::{
    analyze, one_decimal, percent_of_peak, roofline_attainable, AnalyticReport, DatapathSpec,
};
use stencilsim::io::{checksum, parse_csv_planes, read_sprt, write_sprt};
use stencilsim::mapper::{build_design, DEFAULT_ROW_COLS};
use stencilsim::sim::simulate;
use stencilsim::*;

const EXIT_MISMATCH: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(
    name = "stencilsim",
    version,
    about = "Stencil kernels, cycle models and dataflow simulation"
)]
struct Cli {
    /// Fabric description (JSON); the built-in 400-core device when absent.
    #[arg(long, global = true, env = "STENCILSIM_FABRIC")]
    fabric: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a golden kernel on a grid.
    Golden(GoldenArgs),
    /// Closed-form compute and memory cycles for hdiff.
    Analyze(AnalyzeArgs),
    /// Simulate one mapping plan.
    Simulate(SimulateArgs),
    /// Simulate several designs, or a range of B-block counts.
    Sweep(SweepArgs),
    /// Roofline table of the published platforms plus simulated results.
    Roofline(RooflineArgs),
    /// Compare two grid files.
    Compare(CompareArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct GridArgs {
    /// Input grid (.sprt, or .csv planes read with --dtype).
    #[arg(long, conflicts_with = "gen")]
    input: Option<PathBuf>,
    /// Generator: constant[:v], ramp, col-ramp, impulse, random[:seed].
    #[arg(long)]
    gen: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Value of a constant grid.
    #[arg(long)]
    value: Option<f64>,
    #[arg(long, default_value = "256,256,64")]
    dims: Dims,
    #[arg(long, default_value = "i32")]
    dtype: DType,
}

#[derive(Args)]
struct HdiffArgs {
    /// Uniform diffusion coefficient.
    #[arg(long, allow_hyphen_values = true)]
    coeff: Option<f64>,
    /// Fractional bits of an i32 coefficient.
    #[arg(long, default_value_t = 0)]
    shift: u32,
    #[arg(long, default_value_t = 1)]
    sweeps: u32,
    #[arg(long)]
    no_limiter: bool,
}

#[derive(Args)]
struct GoldenArgs {
    /// hdiff or an elementary stencil name.
    #[arg(long, default_value = "hdiff")]
    kernel: String,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    hdiff: HdiffArgs,
    /// Output grid (SPRT).
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long, default_value = "256,256,64")]
    dims: Dims,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[arg(long)]
    macs_per_cycle: Option<u32>,
    #[arg(long)]
    load_bits_per_cycle: Option<u32>,
    #[arg(long)]
    elem_bits: Option<u32>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Design name, e.g. tri_i32_direct, bblock:4, scaleout:8, elementary:jac2d3pt:4.
    #[arg(long, conflicts_with = "plan", required_unless_present = "plan")]
    design: Option<String>,
    /// Mapping plan JSON file.
    #[arg(long)]
    plan: Option<PathBuf>,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    hdiff: HdiffArgs,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Report destination; stdout when absent.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Write the simulated output grid (SPRT).
    #[arg(long)]
    output_grid: Option<PathBuf>,
    /// Write the plan that was simulated (JSON).
    #[arg(long)]
    write_plan: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Comma-separated design names.
    #[arg(
        long,
        value_delimiter = ',',
        conflicts_with = "bblocks",
        required_unless_present = "bblocks"
    )]
    designs: Vec<String>,
    /// Comma-separated B-block counts; emits n, cycles, speedup.
    #[arg(long, value_delimiter = ',')]
    bblocks: Vec<usize>,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    hdiff: HdiffArgs,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct RooflineArgs {
    /// Platform table JSON; the built-in table when absent.
    #[arg(long)]
    platforms: Option<PathBuf>,
    /// Simulation reports (JSON) to add as rows.
    #[arg(long)]
    report: Vec<PathBuf>,
    /// Peak of the simulated device in TFLOPS; defaults to the table's aie row.
    #[arg(long)]
    peak_tflops: Option<f64>,
    /// Peak external bandwidth of the simulated device in GB/s.
    #[arg(long)]
    peak_gbps: Option<f64>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args)]
struct CompareArgs {
    a: PathBuf,
    b: PathBuf,
    /// Relative tolerance; 0 compares bitwise.
    #[arg(long, default_value_t = 0.0)]
    tolerance: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    let fabric = match &cli.fabric {
        Some(p) => {
            FabricSpec::load(p).with_context(|| format!("loading fabric {}", p.display()))?
        }
        None => default_versal_fabric(),
    };
    match cli.command {
        Command::Golden(a) => golden(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Simulate(a) => cmd_simulate(a, &fabric),
        Command::Sweep(a) => cmd_sweep(a, &fabric),
        Command::Roofline(a) => roofline(a),
        Command::Compare(a) => compare(a),
    }
}

fn load_grid(path: &Path, dtype: DType) -> Result<Grid3> {
    let grid = if path.extension().is_some_and(|e| e == "csv") {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        parse_csv_planes(&text, dtype)?
    } else {
        read_sprt(path).with_context(|| format!("reading {}", path.display()))?
    };
    Ok(grid)
}

impl GridArgs {
    fn grid(&self) -> Result<Grid3> {
        if let Some(path) = &self.input {
            return load_grid(path, self.dtype);
        }
        let spec = self
            .gen
            .as_deref()
            .ok_or_else(|| anyhow!("give --input or --gen"))?;
        let gen = match spec.parse::<Generator>()? {
            Generator::Random { .. } if !spec.contains(':') => Generator::Random {
                seed: self
                    .seed
                    .ok_or_else(|| anyhow!("random grids need --seed"))?,
            },
            Generator::Constant { value } => Generator::Constant {
                value: self.value.unwrap_or(value),
            },
            g => g,
        };
        Ok(gen.generate(self.dtype, self.dims))
    }
}

impl HdiffArgs {
    fn params(&self, dtype: DType) -> Result<HdiffParams> {
        let mut p = match (dtype, self.coeff) {
            (_, None) => HdiffParams::unit(dtype),
            (DType::I32, Some(c)) => {
                if c.fract() != 0.0 {
                    bail!("i32 coefficients are integers; use --shift for fractional bits");
                }
                HdiffParams::i32(c as i32)
            }
            (DType::F32, Some(c)) => HdiffParams::f32(c as f32),
        };
        p = p.with_shift(self.shift).with_sweeps(self.sweeps);
        if self.no_limiter {
            p = p.without_limiter();
        }
        Ok(p)
    }

    fn kernel(&self, design: &Design, dtype: DType) -> Result<KernelParams> {
        Ok(match design {
            Design::ElementaryScale { .. } => KernelParams::for_design(design, dtype),
            _ => self.params(dtype)?.into(),
        })
    }
}

fn emit(text: &str, output: Option<&Path>) -> Result<()> {
    match output {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            if !text.ends_with('\n') {
                println!();
            }
            Ok(())
        }
    }
}

fn golden(a: GoldenArgs) -> Result<u8> {
    let grid = a.grid.grid()?;
    let out = if a.kernel == "hdiff" {
        hdiff_reference(&grid, &a.hdiff.params(grid.dtype())?)?
    } else {
        apply_elementary(&StencilSpec::from_name(&a.kernel)?, &grid)?
    };
    if let Some(path) = &a.output {
        write_sprt(path, &out).with_context(|| format!("writing {}", path.display()))?;
    }
    println!(
        "{}  {} {} {}",
        checksum(&out),
        a.kernel,
        out.dims(),
        out.dtype()
    );
    Ok(0)
}

fn cmd_analyze(a: AnalyzeArgs) -> Result<u8> {
    let mut dp = DatapathSpec::default();
    if let Some(m) = a.macs_per_cycle {
        dp.macs_per_cycle = m;
    }
    if let Some(b) = a.load_bits_per_cycle {
        dp.load_bits_per_cycle = b;
    }
    if let Some(e) = a.elem_bits {
        dp.elem_bits = e;
    }
    let report: AnalyticReport = analyze(a.dims, &dp)?;
    if !report.has_interior() {
        eprintln!("warning: no interior points in a {} grid", a.dims);
    }
    let text = match a.format {
        Format::Json => serde_json::to_string_pretty(&report)?,
        Format::Csv => format!("{}\n{}\n", AnalyticReport::CSV_HEADER, report.csv_row()),
    };
    emit(&text, None)?;
    Ok(0)
}

fn load_plan(
    design: Option<&str>,
    plan: Option<&Path>,
    dtype: DType,
    fabric: &FabricSpec,
) -> Result<MappingPlan> {
    if let Some(path) = plan {
        return MappingPlan::load(path).with_context(|| format!("loading plan {}", path.display()));
    }
    let design: Design = design.expect("clap requires a design").parse()?;
    let dtype = design.dtype().unwrap_or(dtype);
    Ok(build_design(design, dtype, fabric, DEFAULT_ROW_COLS)?)
}

fn cmd_simulate(a: SimulateArgs, fabric: &FabricSpec) -> Result<u8> {
    let plan = load_plan(a.design.as_deref(), a.plan.as_deref(), a.grid.dtype, fabric)?;
    if let Some(path) = &a.write_plan {
        fs::write(path, plan.to_json()).with_context(|| format!("writing {}", path.display()))?;
    }
    let mut grid = a.grid.grid()?;
    if grid.dtype() != plan.dtype {
        if a.grid.input.is_some() {
            bail!(
                "grid is {} but {} computes {}",
                grid.dtype(),
                plan.design,
                plan.dtype
            );
        }
        grid = grid.convert(plan.dtype);
    }
    let params = a.hdiff.kernel(&plan.design, plan.dtype)?;
    let (out, report) = simulate(&plan, fabric, &grid, &params)?;
    if let Some(path) = &a.output_grid {
        write_sprt(path, &out).with_context(|| format!("writing {}", path.display()))?;
    }
    let text = match a.format {
        Format::Json => report.to_json(),
        Format::Csv => report.to_csv(),
    };
    emit(&text, a.output.as_deref())?;
    if !report.functional_match {
        eprintln!(
            "{}: simulated output differs from the golden kernel",
            report.design
        );
        return Ok(EXIT_MISMATCH);
    }
    Ok(0)
}

fn cmd_sweep(a: SweepArgs, fabric: &FabricSpec) -> Result<u8> {
    let names: Vec<String> = if a.bblocks.is_empty() {
        a.designs.clone()
    } else {
        a.bblocks.iter().map(|n| format!("scaleout:{n}")).collect()
    };
    let plans = names
        .iter()
        .map(|n| load_plan(Some(n), None, a.grid.dtype, fabric))
        .collect::<Result<Vec<_>>>()?;
    let grid = a.grid.grid()?;
    let params = match plans.first().map(|p| p.design) {
        Some(d @ Design::ElementaryScale { .. }) => KernelParams::for_design(&d, grid.dtype()),
        _ => a.hdiff.params(grid.dtype())?.into(),
    };
    let reports = sweep(&plans, fabric, &grid, &params)?;
    let text = if !a.bblocks.is_empty() {
        let base = a
            .bblocks
            .iter()
            .zip(&reports)
            .find(|(&n, _)| n == 1)
            .or_else(|| a.bblocks.iter().zip(&reports).next())
            .map(|(_, r)| r.total_cycles as f64)
            .unwrap_or(0.0);
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["n", "cycles", "speedup"])?;
        for (n, r) in a.bblocks.iter().zip(&reports) {
            w.write_record([
                n.to_string(),
                r.total_cycles.to_string(),
                format!("{:.4}", base / r.total_cycles as f64),
            ])?;
        }
        String::from_utf8(w.into_inner()?)?
    } else {
        match a.format {
            Format::Json => serde_json::to_string_pretty(&reports)?,
            Format::Csv => SimReport::csv_of(&reports),
        }
    };
    emit(&text, a.output.as_deref())?;
    let failed: Vec<&str> = reports
        .iter()
        .filter(|r| !r.functional_match)
        .map(|r| r.design.as_str())
        .collect();
    if !failed.is_empty() {
        eprintln!("functional mismatch: {}", failed.join(", "));
        return Ok(EXIT_MISMATCH);
    }
    Ok(0)
}

#[derive(serde::Serialize)]
struct RooflineRow {
    name: String,
    kind: String,
    peak_gops: f64,
    peak_gbps: f64,
    achieved_gops: f64,
    attainable_gops: Option<f64>,
    percent_of_peak: f64,
    printed_percent: Option<f64>,
}

fn roofline(a: RooflineArgs) -> Result<u8> {
    let table = match &a.platforms {
        Some(p) => {
            PlatformTable::load(p).with_context(|| format!("loading platforms {}", p.display()))?
        }
        None => PlatformTable::builtin(),
    };
    let mut rows: Vec<RooflineRow> = table
        .platforms
        .iter()
        .map(|p| {
            let pt = p.roofline_point();
            RooflineRow {
                name: p.name.clone(),
                kind: p.kind.clone(),
                peak_gops: pt.peak_gops,
                peak_gbps: pt.peak_gbps,
                achieved_gops: pt.achieved_gops,
                attainable_gops: pt.attainable(),
                percent_of_peak: one_decimal(pt.percent_of_peak()),
                printed_percent: p.printed_percent,
            }
        })
        .collect();
    let device = table.platforms.iter().find(|p| p.kind == "aie");
    for path in &a.report {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let r = SimReport::from_json(&text)?;
        let peak_gops = a
            .peak_tflops
            .or(device.map(|d| d.peak_tflops))
            .ok_or_else(|| anyhow!("no aie platform in the table; give --peak-tflops"))?
            * 1000.0;
        let peak_gbps = a
            .peak_gbps
            .or(device.map(|d| d.peak_gbps))
            .unwrap_or(f64::NAN);
        let bytes: u64 = r.shim_channels.iter().map(|c| c.bytes).sum();
        let ai = (bytes > 0).then(|| r.ops as f64 / bytes as f64);
        rows.push(RooflineRow {
            name: format!("simulated {}", r.design),
            kind: "simulated".into(),
            peak_gops,
            peak_gbps,
            achieved_gops: r.gops,
            attainable_gops: ai.map(|ai| roofline_attainable(peak_gops, peak_gbps, ai)),
            percent_of_peak: one_decimal(percent_of_peak(r.gops, peak_gops)),
            printed_percent: None,
        });
    }
    let text = match a.format {
        Format::Json => serde_json::to_string_pretty(&rows)?,
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for row in &rows {
                w.serialize(row)?;
            }
            String::from_utf8(w.into_inner()?)?
        }
    };
    emit(&text, None)?;
    Ok(0)
}

fn compare(a: CompareArgs) -> Result<u8> {
    let x = read_sprt(&a.a).with_context(|| format!("reading {}", a.a.display()))?;
    let y = read_sprt(&a.b).with_context(|| format!("reading {}", a.b.display()))?;
    if x.dims() != y.dims() || x.dtype() != y.dtype() {
        bail!(
            "shape mismatch: {} {} vs {} {}",
            x.dims(),
            x.dtype(),
            y.dims(),
            y.dtype()
        );
    }
    let values = |g: &Grid3| -> Vec<f64> {
        match (g.as_i32(), g.as_f32()) {
            (Some(v), _) => v.iter().map(|&e| e as f64).collect(),
            (_, Some(v)) => v.iter().map(|&e| e as f64).collect(),
            _ => unreachable!("grids hold i32 or f32"),
        }
    };
    let bitwise = a.tolerance == 0.0;
    let same = |i: usize, p: f64, q: f64| {
        if bitwise {
            match (x.as_f32(), y.as_f32()) {
                (Some(u), Some(v)) => u[i].to_bits() == v[i].to_bits(),
                _ => p == q,
            }
        } else {
            p == q || (p - q).abs() <= a.tolerance * p.abs().max(q.abs())
        }
    };
    let (u, v) = (values(&x), values(&y));
    let mut first = None;
    let (mut max_abs, mut max_rel) = (0.0f64, 0.0f64);
    for (i, (&p, &q)) in u.iter().zip(&v).enumerate() {
        let abs = (p - q).abs();
        max_abs = max_abs.max(abs);
        if abs > 0.0 {
            max_rel = max_rel.max(abs / p.abs().max(q.abs()));
        }
        if first.is_none() && !same(i, p, q) {
            first = Some(i);
        }
    }
    match first {
        None => {
            println!(
                "equal: {} elements, max abs error {max_abs}, max rel error {max_rel}",
                u.len()
            );
            Ok(0)
        }
        Some(i) => {
            let (r, c, d) = x.coords(i);
            println!(
                "differ at index {i} (r={r}, c={c}, d={d}): {} vs {}; max abs error {max_abs}, max rel error {max_rel}",
                u[i], v[i]
            );
            Ok(EXIT_MISMATCH)
        }
    }
}
