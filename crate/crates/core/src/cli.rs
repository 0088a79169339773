//! Command-line front end: `simulate`, `fuse`, `eval`, `gradcheck`, `bench`.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::bench::{bench_solver_config, run_bench, BenchConfig};
use crate::degradation::{
    default_kernel_sigma, default_spectral_response, make_blur_kernel, simulate_observations, Boundary,
    ExposureCase, GammaParams, SpatialOperator, SpectralResponse, DEFAULT_EXPOSURE_EPS, DEFAULT_KERNEL_SIZE,
    DEFAULT_RATIO,
};
use crate::error::{Error, Result};
use crate::gradcheck::{run_gradcheck, DEFAULT_INSTANCES, GRADCHECK_TOL};
use crate::init::{init_fused, init_naive, InitKind, DEFAULT_RIDGE};
use crate::io::{export_false_color, import_band_pngs, read_cube, write_cube, write_history_csv};
use crate::metrics::{consistency_loss, LossReference, LossWeights, MetricReport, REPORT_CSV_HEADER};
use crate::solver::{ExposureField, FusionProblem, SolverConfig, SolverState};
use crate::synthetic::synthetic_scene;
use crate::tensor::{mode1_fold, mode1_unfold, CubeDims, HsiCube};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Parser, Debug)]
#[command(name = "hsifuse", version, about = "Exposure-aware hyperspectral/multispectral fusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Degrade a reference cube into an HSI/MSI pair.
    Simulate(SimulateArgs),
    /// Fuse an HSI/MSI pair.
    Fuse(FuseArgs),
    /// Score an estimate against a reference.
    Eval(EvalArgs),
    /// Finite-difference check of the analytic gradients.
    Gradcheck(GradcheckArgs),
    /// Run the synthetic end-to-end benchmark.
    Bench(BenchArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum CaseArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    Custom,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum InitArg {
    Naive,
    Fused,
    Oracle,
}

#[derive(Args, Debug)]
struct GammaArgs {
    #[arg(long, value_enum, default_value = "1")]
    case: CaseArg,
    #[arg(long, requires = "gamma_hsi")]
    alpha_hsi: Option<f64>,
    #[arg(long, requires = "alpha_hsi")]
    gamma_hsi: Option<f64>,
    #[arg(long, requires = "gamma_msi")]
    alpha_msi: Option<f64>,
    #[arg(long, requires = "alpha_msi")]
    gamma_msi: Option<f64>,
}

impl GammaArgs {
    fn resolve(&self) -> std::result::Result<(GammaParams, GammaParams), String> {
        let explicit = [self.alpha_hsi, self.alpha_msi].iter().any(Option::is_some);
        match self.case {
            CaseArg::One | CaseArg::Two if explicit => {
                Err("--alpha-*/--gamma-* are only allowed with --case custom".into())
            }
            CaseArg::One => Ok(ExposureCase::Case1.params()),
            CaseArg::Two => Ok(ExposureCase::Case2.params()),
            CaseArg::Custom => match (self.alpha_hsi, self.gamma_hsi, self.alpha_msi, self.gamma_msi) {
                (Some(a1), Some(g1), Some(a2), Some(g2)) => Ok((GammaParams { alpha: a1, gamma: g1 }, GammaParams { alpha: a2, gamma: g2 })),
                _ => Err("--case custom needs --alpha-hsi, --gamma-hsi, --alpha-msi and --gamma-msi".into()),
            },
        }
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Reference cube (HSICUBE1 file, or a directory of per-band PNGs).
    /// Without it a synthetic scene is generated from --seed.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Glob for band images when --input is a directory.
    #[arg(long, default_value = "*.png")]
    pattern: String,
    #[arg(long, required = true)]
    out_dir: PathBuf,
    #[command(flatten)]
    gamma: GammaArgs,
    /// Spectral response CSV (C_MSI rows of C values); defaults to a synthetic RGB response.
    #[arg(long)]
    response: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Band count of the synthetic scene, or the expected count of an imported stack.
    #[arg(long)]
    bands: Option<usize>,
    /// Side length of the synthetic scene.
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long, default_value_t = DEFAULT_RATIO)]
    ratio: usize,
    #[arg(long, default_value_t = DEFAULT_KERNEL_SIZE)]
    kernel_size: usize,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value_t = Boundary::Symmetric)]
    boundary: Boundary,
}

#[derive(Args, Debug)]
struct FuseArgs {
    /// Simulation manifest; supplies X, Y, the operators and the ground truth for --init oracle.
    #[arg(long, conflicts_with_all = ["input", "msi"])]
    manifest: Option<PathBuf>,
    /// LR-HSI cube.
    #[arg(long, requires = "msi")]
    input: Option<PathBuf>,
    /// HR-MSI cube.
    #[arg(long, requires = "input")]
    msi: Option<PathBuf>,
    /// Solver configuration JSON; missing fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "fused")]
    init: InitArg,
    #[arg(long, default_value_t = DEFAULT_RIDGE)]
    ridge: f64,
    #[arg(long)]
    response: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_KERNEL_SIZE)]
    kernel_size: usize,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value_t = Boundary::Symmetric)]
    boundary: Boundary,
    #[arg(long, required = true)]
    out_dir: PathBuf,
    /// Also write a false-color PNG of Z from these bands, e.g. 30,15,10.
    #[arg(long, value_delimiter = ',')]
    preview: Option<Vec<usize>>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Estimated cube.
    #[arg(long)]
    input: PathBuf,
    /// Reference cube; defaults to the manifest's reference.
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Resolution ratio for ERGAS; defaults to the manifest's, else 4.
    #[arg(long)]
    ratio: Option<usize>,
    /// Exposure fields of the estimate; with a manifest they enable the consistency loss.
    #[arg(long, requires_all = ["l2", "manifest"])]
    l1: Option<PathBuf>,
    #[arg(long, requires_all = ["l1", "manifest"])]
    l2: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_INSTANCES)]
    instances: usize,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 31)]
    bands: usize,
    #[arg(long, default_value_t = 32)]
    size: usize,
    #[arg(long, value_enum, default_value = "1")]
    case: CaseArg,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "naive")]
    init: InitArg,
}

/// Everything `simulate` wrote, with paths relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationManifest {
    pub source: String,
    pub seed: u64,
    pub case: String,
    pub gamma_hsi: GammaParams,
    pub gamma_msi: GammaParams,
    pub bands: usize,
    pub width: usize,
    pub height: usize,
    pub msi_channels: usize,
    pub ratio: usize,
    pub kernel_size: usize,
    pub sigma: f64,
    pub boundary: Boundary,
    pub exposure_eps: f64,
    pub reference: String,
    pub x: String,
    pub y: String,
    pub zx: String,
    pub zy: String,
    pub l1_true: String,
    pub l2_true: String,
    pub response: String,
}

impl SimulationManifest {
    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Self = serde_json::from_str(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((m, base))
    }

    pub fn operator(&self) -> Result<SpatialOperator> {
        let k = make_blur_kernel(self.kernel_size, self.sigma)?;
        SpatialOperator::new(k, self.ratio, (self.width, self.height), self.boundary)
    }
}

fn usage(msg: impl Into<String>) -> Result<()> {
    Err(Error::Usage(msg.into()))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn load_reference(input: &Path, pattern: &str) -> Result<HsiCube> {
    if input.is_dir() {
        import_band_pngs(input, pattern)
    } else {
        read_cube(input)
    }
}

fn run_simulate(a: SimulateArgs) -> Result<()> {
    let (g_hsi, g_msi) = a.gamma.resolve().map_err(Error::Usage)?;
    let (z, source) = match &a.input {
        Some(path) => {
            let z = load_reference(path, &a.pattern)?;
            if let Some(b) = a.bands {
                if b != z.bands() {
                    return Err(Error::mismatch("imported band count", b, z.bands()));
                }
            }
            (z, path.display().to_string())
        }
        None => (synthetic_scene(a.bands.unwrap_or(31), a.size, a.size, a.seed)?, "synthetic".to_string()),
    };
    let dims = z.dims();
    let sigma = a.sigma.unwrap_or_else(default_kernel_sigma);
    let op = SpatialOperator::new(make_blur_kernel(a.kernel_size, sigma)?, a.ratio, (dims.width, dims.height), a.boundary)?;
    let p = match &a.response {
        Some(path) => SpectralResponse::from_csv(path)?,
        None => default_spectral_response(dims.bands)?,
    };
    let sim = simulate_observations(&z, g_hsi, g_msi, &op, &p, DEFAULT_EXPOSURE_EPS)?;

    ensure_dir(&a.out_dir)?;
    let manifest = SimulationManifest {
        source,
        seed: a.seed,
        case: match a.gamma.case {
            CaseArg::One => "1",
            CaseArg::Two => "2",
            CaseArg::Custom => "custom",
        }
        .into(),
        gamma_hsi: g_hsi,
        gamma_msi: g_msi,
        bands: dims.bands,
        width: dims.width,
        height: dims.height,
        msi_channels: p.channels(),
        ratio: a.ratio,
        kernel_size: a.kernel_size,
        sigma,
        boundary: a.boundary,
        exposure_eps: DEFAULT_EXPOSURE_EPS,
        reference: "z_ref.hsic".into(),
        x: "x.hsic".into(),
        y: "y.hsic".into(),
        zx: "zx_ref.hsic".into(),
        zy: "zy_ref.hsic".into(),
        l1_true: "l1_true.hsic".into(),
        l2_true: "l2_true.hsic".into(),
        response: "response.csv".into(),
    };
    let out = |name: &str| a.out_dir.join(name);
    write_cube(out(&manifest.reference), &sim.z_ref)?;
    write_cube(out(&manifest.x), &sim.x_obs)?;
    write_cube(out(&manifest.y), &sim.y_obs)?;
    write_cube(out(&manifest.zx), &sim.zx_ref)?;
    write_cube(out(&manifest.zy), &sim.zy_ref)?;
    write_cube(out(&manifest.l1_true), &mode1_fold(sim.l1_true.as_matrix(), dims)?)?;
    write_cube(out(&manifest.l2_true), &mode1_fold(sim.l2_true.as_matrix(), dims)?)?;
    p.to_csv(out(&manifest.response))?;
    let path = out(MANIFEST_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    println!("x {}  y {}  -> {}", sim.x_obs.dims(), sim.y_obs.dims(), a.out_dir.display());
    Ok(())
}

/// Ratio `K` such that `Y` is `K` times larger than `X` along both axes.
fn infer_ratio(x: CubeDims, y: CubeDims) -> Result<usize> {
    let mismatch = || Error::mismatch("X/Y pixel ratio", format!("Y = K·X on both axes for X {x}"), y.to_string());
    if y.width % x.width != 0 || y.height % x.height != 0 {
        return Err(mismatch());
    }
    let (kw, kh) = (y.width / x.width, y.height / x.height);
    if kw != kh {
        return Err(mismatch());
    }
    Ok(kw)
}

fn load_solver_config(path: Option<&PathBuf>, fallback: SolverConfig) -> Result<SolverConfig> {
    let cfg = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text)?
        }
        None => fallback,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn run_fuse(a: FuseArgs) -> Result<()> {
    if a.preview.as_ref().is_some_and(|b| b.len() != 3) {
        return usage("--preview takes exactly three band indices, e.g. 30,15,10");
    }
    let cfg = load_solver_config(a.config.as_ref(), SolverConfig::default())?;
    let mut truth = None;
    let (x, y, op, p) = if let Some(mpath) = &a.manifest {
        let (m, base) = SimulationManifest::load(mpath)?;
        let x = read_cube(base.join(&m.x))?;
        let y = read_cube(base.join(&m.y))?;
        let p = SpectralResponse::from_csv(base.join(&m.response))?;
        if matches!(a.init, InitArg::Oracle) {
            truth = Some((base.clone(), m.clone()));
        }
        (x, y, m.operator()?, p)
    } else {
        let (Some(xp), Some(yp)) = (&a.input, &a.msi) else {
            return usage("fuse needs --manifest or both --input and --msi");
        };
        if matches!(a.init, InitArg::Oracle) {
            return usage("--init oracle needs --manifest");
        }
        let x = read_cube(xp)?;
        let y = read_cube(yp)?;
        let ratio = infer_ratio(x.dims(), y.dims())?;
        let k = make_blur_kernel(a.kernel_size, a.sigma.unwrap_or_else(default_kernel_sigma))?;
        let op = SpatialOperator::new(k, ratio, (y.width(), y.height()), a.boundary)?;
        let p = match &a.response {
            Some(path) => SpectralResponse::from_csv(path)?,
            None => default_spectral_response(x.bands())?,
        };
        (x, y, op, p)
    };
    let dims = CubeDims::new(x.bands(), y.width(), y.height());
    let problem = FusionProblem::new(mode1_unfold(&x), mode1_unfold(&y), op, p)?;

    let (l1, l2, z) = match a.init {
        InitArg::Naive => init_naive(problem.x(), problem.y(), problem.operator(), problem.response())?,
        InitArg::Fused => init_fused(problem.x(), problem.y(), problem.operator(), problem.response(), a.ridge)?,
        InitArg::Oracle => {
            let (base, m) = truth.expect("manifest loaded for oracle init");
            let l1 = ExposureField::new(mode1_unfold(&read_cube(base.join(&m.l1_true))?));
            let l2 = ExposureField::new(mode1_unfold(&read_cube(base.join(&m.l2_true))?));
            (l1, l2, mode1_unfold(&read_cube(base.join(&m.reference))?))
        }
    };
    let state = problem.solve(&cfg, SolverState::new(l1, l2, z))?;

    ensure_dir(&a.out_dir)?;
    let z_cube = mode1_fold(&state.z, dims)?;
    write_cube(a.out_dir.join("z.hsic"), &z_cube)?;
    write_cube(a.out_dir.join("l1.hsic"), &mode1_fold(state.l1.as_matrix(), dims)?)?;
    write_cube(a.out_dir.join("l2.hsic"), &mode1_fold(state.l2.as_matrix(), dims)?)?;
    write_history_csv(a.out_dir.join("history.csv"), &state.objective_history)?;
    if let Some(b) = &a.preview {
        export_false_color(&z_cube, (b[0], b[1], b[2]), a.out_dir.join("z_false_color.png"))?;
    }
    let h = &state.objective_history;
    println!(
        "objective {:.9e} -> {:.9e} after {} iterations",
        h[0],
        h[h.len() - 1],
        state.t
    );
    Ok(())
}

fn run_eval(a: EvalArgs) -> Result<()> {
    let manifest = a.manifest.as_ref().map(|p| SimulationManifest::load(p)).transpose()?;
    let est = read_cube(&a.input)?;
    let reference = match (&a.reference, &manifest) {
        (Some(r), _) => read_cube(r)?,
        (None, Some((m, base))) => read_cube(base.join(&m.reference))?,
        (None, None) => return usage("eval needs --reference or --manifest"),
    };
    let ratio = a.ratio.or(manifest.as_ref().map(|(m, _)| m.ratio)).unwrap_or(DEFAULT_RATIO);
    let mut report = MetricReport::compute(&reference, &est, ratio)?;

    if let (Some(l1p), Some(l2p), Some((m, base))) = (&a.l1, &a.l2, &manifest) {
        let load = |name: &str| -> Result<_> { Ok(mode1_unfold(&read_cube(base.join(name))?)) };
        let (zr, zx, zy, x, y) = (load(&m.reference)?, load(&m.zx)?, load(&m.zy)?, load(&m.x)?, load(&m.y)?);
        let p = SpectralResponse::from_csv(base.join(&m.response))?;
        let l1 = ExposureField::new(mode1_unfold(&read_cube(l1p)?));
        let l2 = ExposureField::new(mode1_unfold(&read_cube(l2p)?));
        let refs = LossReference {
            z: &zr,
            zx: &zx,
            zy: &zy,
            x: &x,
            y: &y,
        };
        report.loss = Some(consistency_loss(
            &mode1_unfold(&est),
            &l1,
            &l2,
            refs,
            &m.operator()?,
            &p,
            LossWeights::default(),
        )?);
    }

    if let Some(dir) = &a.out_dir {
        ensure_dir(dir)?;
        report.write_csv(dir.join("metrics.csv"))?;
        report.write_json(dir.join("metrics.json"))?;
    }
    println!("{REPORT_CSV_HEADER}\n{}", report.csv_row());
    Ok(())
}

fn run_gradcheck_cmd(a: GradcheckArgs) -> Result<()> {
    let r = run_gradcheck(a.seed, a.instances)?;
    println!("instances {}", r.instances);
    println!("max_rel_l1 {:.6e}", r.max_rel_l1);
    println!("max_rel_l2 {:.6e}", r.max_rel_l2);
    println!("max_rel_z {:.6e}", r.max_rel_z);
    println!("{}", if r.passes(GRADCHECK_TOL) { "PASS" } else { "FAIL" });
    r.ensure(GRADCHECK_TOL)
}

fn run_bench_cmd(a: BenchArgs) -> Result<()> {
    let case = match a.case {
        CaseArg::One => ExposureCase::Case1,
        CaseArg::Two => ExposureCase::Case2,
        CaseArg::Custom => return usage("bench supports --case 1 or 2"),
    };
    let mut cfg = BenchConfig {
        seed: a.seed,
        bands: a.bands,
        size: a.size,
        case,
        solver: load_solver_config(a.config.as_ref(), bench_solver_config())?,
        ..BenchConfig::default()
    };
    cfg.init.kind = match a.init {
        InitArg::Naive => InitKind::NaiveOnes,
        InitArg::Fused => InitKind::default(),
        InitArg::Oracle => InitKind::Oracle,
    };
    let start = Instant::now();
    let r = run_bench(&cfg)?;
    print!("{}", r.render_table());
    eprintln!("elapsed {:.3}s", start.elapsed().as_secs_f64());
    Ok(())
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => run_simulate(a),
        Command::Fuse(a) => run_fuse(a),
        Command::Eval(a) => run_eval(a),
        Command::Gradcheck(a) => run_gradcheck_cmd(a),
        Command::Bench(a) => run_bench_cmd(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Usage(_) => 1,
                e if e.is_numerical() => 3,
                _ => 2,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_inference() {
        assert_eq!(infer_ratio(CubeDims::new(3, 4, 5), CubeDims::new(3, 16, 20)).unwrap(), 4);
        assert!(infer_ratio(CubeDims::new(3, 4, 5), CubeDims::new(3, 16, 10)).is_err());
        assert!(infer_ratio(CubeDims::new(3, 4, 5), CubeDims::new(3, 17, 20)).is_err());
    }

    #[test]
    fn gamma_resolution() {
        let parse = |args: &[&str]| {
            let mut v = vec!["hsifuse", "simulate", "--out-dir", "o"];
            v.extend_from_slice(args);
            match Cli::try_parse_from(v).unwrap().command {
                Command::Simulate(s) => s.gamma.resolve(),
                _ => unreachable!(),
            }
        };
        assert_eq!(parse(&[]).unwrap(), ExposureCase::Case1.params());
        assert_eq!(parse(&["--case", "2"]).unwrap(), ExposureCase::Case2.params());
        assert!(parse(&["--case", "custom"]).is_err());
        let g = parse(&[
            "--case", "custom", "--alpha-hsi", "0.4", "--gamma-hsi", "1.1", "--alpha-msi", "1.0", "--gamma-msi", "0.9",
        ])
        .unwrap();
        assert_eq!(g.0, GammaParams { alpha: 0.4, gamma: 1.1 });
        assert!(parse(&["--alpha-hsi", "0.4", "--gamma-hsi", "1.1"]).is_err());
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(cli_main(["hsifuse"]), 1);
        assert_eq!(cli_main(["hsifuse", "frobnicate"]), 1);
        assert_eq!(cli_main(["hsifuse", "simulate", "--case", "3", "--out-dir", "x"]), 1);
        assert_eq!(cli_main(["hsifuse", "--help"]), 0);
    }
}
