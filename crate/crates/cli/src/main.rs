use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use jetnormal::estimate::{estimate_cloud, AlignMode, EstimateConfig, WeightKind};
use jetnormal::io::{read_normals, read_xyz, write_error_ply, write_normals, write_xyz, HEATMAP_MAX_DEG};
use jetnormal::jet::JetCoefficients;
use jetnormal::lab::{
    angle_error, compare_pipelines, convergence_study_seeded, generate_cloud, normal_convergence_study_seeded,
    AnalyticSurface, Condition, Density, MetricsReport, Pipeline, SampleSpec,
};

#[derive(Parser)]
#[command(name = "jetnormal", version, about = "Point cloud normals by weighted jet fitting")]
struct Cli {
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate one normal per point of an .xyz file.
    Estimate(EstimateArgs),
    /// Measure the convergence rate of fitted coefficients or normals.
    Convergence(ConvergenceArgs),
    /// Compare normal estimators on synthetic patches.
    Bench(BenchArgs),
    /// Write a synthetic cloud and its true normals.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Neighbors per patch, including the point itself [default: 256]
    #[arg(long)]
    k: Option<usize>,
    /// Jet order [default: 3]
    #[arg(long)]
    order: Option<usize>,
    /// [default: uniform]
    #[arg(long, value_enum)]
    weights: Option<WeightArg>,
    /// [default: z-iterate]
    #[arg(long, value_enum)]
    align: Option<AlignArg>,
    /// Alignment tolerance in degrees [default: 0.5]
    #[arg(long)]
    tol_deg: Option<f64>,
    /// Alignment fit budget [default: 5]
    #[arg(long)]
    max_iters: Option<usize>,
    /// True normals, for error statistics and the heatmap.
    #[arg(long)]
    gt: Option<PathBuf>,
    /// PLY file colored by angle error.
    #[arg(long, requires = "gt")]
    heatmap: Option<PathBuf>,
    /// Error mapped to pure red [default: 60]
    #[arg(long)]
    heatmap_max_deg: Option<f64>,
    /// `key = value` file with defaults for the options above.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightArg {
    Uniform,
    Gaussian,
    Irls,
}

impl From<WeightArg> for WeightKind {
    fn from(w: WeightArg) -> Self {
        match w {
            WeightArg::Uniform => WeightKind::Uniform,
            WeightArg::Gaussian => WeightKind::Gaussian,
            WeightArg::Irls => WeightKind::Irls,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AlignArg {
    None,
    Pca,
    ZIterate,
}

impl From<AlignArg> for AlignMode {
    fn from(a: AlignArg) -> Self {
        match a {
            AlignArg::None => AlignMode::None,
            AlignArg::Pca => AlignMode::Pca,
            AlignArg::ZIterate => AlignMode::ZIterate,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SurfaceArg {
    Plane,
    Sphere,
    /// sin(x) cos(y) around a generic point.
    MongeTrig,
    /// sin(x) cos(y) around its crest, where the normal is +z.
    Crest,
    /// A fixed cubic height function.
    MongePoly,
}

#[derive(Args)]
struct SurfaceParams {
    /// Plane slope along x.
    #[arg(long, default_value_t = 0.3)]
    gx: f64,
    /// Plane slope along y.
    #[arg(long, default_value_t = -0.2)]
    gy: f64,
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
}

fn surface(kind: SurfaceArg, o: &SurfaceParams) -> AnalyticSurface {
    match kind {
        SurfaceArg::Plane => AnalyticSurface::Plane { gx: o.gx, gy: o.gy },
        SurfaceArg::Sphere => AnalyticSurface::Sphere { radius: o.radius },
        SurfaceArg::MongeTrig => AnalyticSurface::sin_cos(),
        SurfaceArg::Crest => AnalyticSurface::sin_cos_crest(),
        SurfaceArg::MongePoly => {
            let c = vec![0.0, 0.1, -0.2, 0.6, -0.3, 0.4, 0.5, -0.2, 0.3, 0.1];
            AnalyticSurface::monge_poly(JetCoefficients::new(3, c).expect("10 cubic coefficients"))
                .expect("zero constant term")
        }
    }
}

#[derive(Args)]
struct ConvergenceArgs {
    #[arg(long, value_enum, default_value = "monge-trig")]
    surface: SurfaceArg,
    #[command(flatten)]
    params: SurfaceParams,
    #[arg(long, default_value_t = 2)]
    order: usize,
    /// Coefficient degree to track, ignored with --normal.
    #[arg(long, default_value_t = 1)]
    degree: usize,
    /// Track the normal angle error instead of coefficients.
    #[arg(long)]
    normal: bool,
    #[arg(long, value_delimiter = ',', default_value = "0.4,0.2,0.1,0.05")]
    h: Vec<f64>,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV report path.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum, value_delimiter = ',', default_value = "sphere,monge-trig,crest")]
    surfaces: Vec<SurfaceArg>,
    #[command(flatten)]
    params: SurfaceParams,
    /// Noise std levels as fractions of the patch bounding-box diagonal.
    #[arg(long, value_delimiter = ',', default_value = "0,0.00125,0.006,0.012")]
    noise: Vec<f64>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "uniform")]
    densities: Vec<DensityArg>,
    #[arg(long, default_value_t = 0.2)]
    h: f64,
    #[arg(long, default_value_t = 64)]
    n_points: usize,
    #[arg(long, default_value_t = 30.0)]
    tilt_deg: f64,
    #[arg(long, default_value_t = 3)]
    order: usize,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV report path.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DensityArg {
    Uniform,
    Gradient,
    Striped,
}

impl From<DensityArg> for Density {
    fn from(d: DensityArg) -> Self {
        match d {
            DensityArg::Uniform => Density::Uniform,
            DensityArg::Gradient => Density::Gradient,
            DensityArg::Striped => Density::Striped,
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum, default_value = "plane")]
    surface: SurfaceArg,
    #[command(flatten)]
    params: SurfaceParams,
    #[arg(long, default_value_t = 5000)]
    n: usize,
    /// Half width of the sampled square in the parameter plane.
    #[arg(long, default_value_t = 0.5)]
    extent: f64,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Point file (.xyz).
    #[arg(long)]
    output: PathBuf,
    /// True normal file (.normals).
    #[arg(long)]
    normals: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Io(String),
}

impl Failure {
    fn io(path: &Path, e: jetnormal::Error) -> Self {
        Failure::Io(format!("{}: {e}", path.display()))
    }
}

impl From<jetnormal::Error> for Failure {
    fn from(e: jetnormal::Error) -> Self {
        match e {
            jetnormal::Error::Io(_) | jetnormal::Error::MalformedLine { .. } => Failure::Io(e.to_string()),
            e => Failure::Usage(e.to_string()),
        }
    }
}

type CliResult = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let res = match cli.command {
        Command::Estimate(a) => estimate(a),
        Command::Convergence(a) => convergence(a),
        Command::Bench(a) => bench(a),
        Command::Generate(a) => generate(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Io(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

fn read_config(path: &Path) -> std::result::Result<BTreeMap<String, String>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let (k, v) = t
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("{}:{}: expected key = value", path.display(), i + 1)))?;
        map.insert(k.trim().replace('-', "_"), v.trim().to_string());
    }
    Ok(map)
}

fn config_value<T: ValueFromStr>(cfg: &mut BTreeMap<String, String>, key: &str) -> std::result::Result<Option<T>, Failure> {
    cfg.remove(key)
        .map(|v| T::from_config(&v).ok_or_else(|| Failure::Usage(format!("config: bad value {v:?} for {key}"))))
        .transpose()
}

trait ValueFromStr: Sized {
    fn from_config(s: &str) -> Option<Self>;
}

impl ValueFromStr for usize {
    fn from_config(s: &str) -> Option<Self> {
        s.parse().ok()
    }
}

impl ValueFromStr for f64 {
    fn from_config(s: &str) -> Option<Self> {
        s.parse().ok()
    }
}

impl ValueFromStr for WeightArg {
    fn from_config(s: &str) -> Option<Self> {
        <WeightArg as ValueEnum>::from_str(s, true).ok()
    }
}

impl ValueFromStr for AlignArg {
    fn from_config(s: &str) -> Option<Self> {
        <AlignArg as ValueEnum>::from_str(s, true).ok()
    }
}

fn estimate(a: EstimateArgs) -> CliResult {
    let mut cfg = match &a.config {
        Some(p) => read_config(p)?,
        None => BTreeMap::new(),
    };
    let k = a.k.or(config_value(&mut cfg, "k")?).unwrap_or(256);
    let defaults = EstimateConfig::default();
    let opts = EstimateConfig {
        order: a.order.or(config_value(&mut cfg, "order")?).unwrap_or(defaults.order),
        weights: a.weights.or(config_value(&mut cfg, "weights")?).map_or(defaults.weights, Into::into),
        align: a.align.or(config_value(&mut cfg, "align")?).map_or(defaults.align, Into::into),
        tol_deg: a.tol_deg.or(config_value(&mut cfg, "tol_deg")?).unwrap_or(defaults.tol_deg),
        max_iters: a.max_iters.or(config_value(&mut cfg, "max_iters")?).unwrap_or(defaults.max_iters),
    };
    let max_deg = a.heatmap_max_deg.or(config_value(&mut cfg, "heatmap_max_deg")?).unwrap_or(HEATMAP_MAX_DEG);
    if let Some(key) = cfg.keys().next() {
        return Err(Failure::Usage(format!("config: unknown key {key:?}")));
    }
    if !(opts.tol_deg > 0.0) || opts.max_iters == 0 {
        return Err(Failure::Usage("tol-deg must be > 0 and max-iters >= 1".into()));
    }

    let cloud = read_xyz(&a.input).map_err(|e| Failure::io(&a.input, e))?;
    let gt = match &a.gt {
        Some(p) => {
            let gt = read_normals(p).map_err(|e| Failure::io(p, e))?;
            if gt.len() != cloud.len() {
                return Err(Failure::Usage(format!(
                    "{} has {} normals for {} points",
                    p.display(),
                    gt.len(),
                    cloud.len()
                )));
            }
            Some(gt)
        }
        None => None,
    };
    let out = estimate_cloud(&cloud, k, &opts)?;
    write_normals(&a.output, &out.normals).map_err(|e| Failure::io(&a.output, e))?;
    if !out.fallbacks.is_empty() {
        eprintln!("{} of {} points fell back to the PCA normal", out.fallbacks.len(), cloud.len());
    }
    if let Some(gt) = gt {
        let errors: Vec<f64> = out.normals.iter().zip(&gt).map(|(n, g)| angle_error(n, g)).collect();
        print_metrics(&MetricsReport::from_errors(&errors)?);
        if let Some(path) = &a.heatmap {
            write_error_ply(path, &cloud, &errors, max_deg).map_err(|e| Failure::io(path, e))?;
        }
    }
    Ok(())
}

fn print_metrics(m: &MetricsReport) {
    println!("rmse_deg {:.6}", m.rmse_deg);
    for (a, v) in &m.pgp {
        println!("pgp{a} {v:.4}");
    }
    println!("auc {:.4}", m.auc);
}

fn write_report(path: &Option<PathBuf>, csv: &str) -> CliResult {
    if let Some(p) = path {
        fs::write(p, csv).map_err(|e| Failure::Io(format!("{}: {e}", p.display())))?;
    }
    Ok(())
}

fn convergence(a: ConvergenceArgs) -> CliResult {
    let s = surface(a.surface, &a.params);
    let report = if a.normal {
        normal_convergence_study_seeded(&s, a.order, &a.h, a.trials, a.seed)
    } else {
        convergence_study_seeded(&s, a.order, a.degree, &a.h, a.trials, a.seed)
    };
    match report {
        Ok(r) => {
            print!("{}", r.summary());
            write_report(&a.output, &r.to_csv())
        }
        Err(jetnormal::Error::ExactFit) => {
            println!("exact fit: every error is below 1e-12, no slope");
            Ok(())
        }
        Err(e) => Err(e.into()),
    }
}

fn bench(a: BenchArgs) -> CliResult {
    let surfaces: Vec<AnalyticSurface> = a.surfaces.iter().map(|&k| surface(k, &a.params)).collect();
    let mut conditions = Vec::new();
    for &noise in &a.noise {
        for &d in &a.densities {
            let density: Density = d.into();
            conditions.push(Condition {
                name: format!("noise{noise}-{}", density.name()),
                spec: SampleSpec {
                    h: a.h,
                    n_points: a.n_points,
                    noise_sigma_rel: noise,
                    density,
                    tilt_deg: a.tilt_deg,
                    seed: a.seed,
                },
            });
        }
    }
    let table = compare_pipelines(&surfaces, &conditions, &Pipeline::standard_set(), a.trials, a.order)?;
    print!("{}", table.to_text());
    write_report(&a.output, &table.to_csv())
}

fn generate(a: GenerateArgs) -> CliResult {
    let (cloud, normals) = generate_cloud(&surface(a.surface, &a.params), a.n, a.extent, a.noise, a.seed)?;
    write_xyz(&a.output, cloud.points()).map_err(|e| Failure::io(&a.output, e))?;
    if let Some(p) = &a.normals {
        write_normals(p, &normals).map_err(|e| Failure::io(p, e))?;
    }
    Ok(())
}
