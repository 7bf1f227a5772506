use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use posegraph_core::pipeline::{
    matcher_benchmark, ordering_benchmark, run_pipeline, sweep_heuristic, write_sweep_csv, Dataset,
    FileFormat, PairMethod, PipelineConfig, SweepConfig, TraversalMode,
};
use posegraph_core::scene::{generate, Layout, SceneConfig};

#[derive(Parser)]
#[command(name = "posegraph", version, about = "Initial pose-graph construction for global structure-from-motion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic scene as a dataset directory.
    Generate {
        #[command(flatten)]
        scene: SceneArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "binary")]
        format: FileFormat,
    },
    /// Build the pose-graph of a dataset directory or a generated scene.
    Build {
        /// Dataset directory; a scene is generated when omitted.
        #[arg(long)]
        input: Option<PathBuf>,
        #[command(flatten)]
        scene: SceneArgs,
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep the walk heuristic over a grid of lambda and depth.
    Sweep {
        #[command(flatten)]
        scene: SceneArgs,
        #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1")]
        lambdas: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
        depths: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Matcher work counts and PROSAC iteration counts.
    Bench {
        #[arg(long, default_value_t = 8000)]
        keypoints: usize,
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        #[arg(long, default_value_t = 0.3)]
        inlier_ratio: f64,
    },
}

#[derive(Args, Clone)]
struct SceneArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 30)]
    cameras: usize,
    #[arg(long, default_value_t = 5500)]
    points: usize,
    #[arg(long, default_value_t = 1.0)]
    noise_px: f64,
    #[arg(long, default_value_t = 0.2)]
    outlier_fraction: f64,
    #[arg(long, default_value_t = 64)]
    descriptor_dim: usize,
    /// Camera arc in degrees; a full ring when omitted.
    #[arg(long)]
    arc_span: Option<f64>,
}

impl SceneArgs {
    fn config(&self) -> SceneConfig {
        SceneConfig {
            seed: self.seed,
            n_cameras: self.cameras,
            n_points: self.points,
            noise_px: self.noise_px,
            outlier_fraction: self.outlier_fraction,
            descriptor_dim: self.descriptor_dim,
            layout: self.arc_span.map_or(Layout::Ring, |span_deg| Layout::Arc { span_deg }),
            ..SceneConfig::default()
        }
    }
}

#[derive(Args)]
struct PipelineArgs {
    /// Key-value configuration file, applied before the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long)]
    bin_count: Option<usize>,
    #[arg(long)]
    min_similarity: Option<f64>,
    #[arg(long)]
    min_inliers: Option<usize>,
    #[arg(long)]
    ransac_max_iterations: Option<usize>,
    #[arg(long)]
    inlier_threshold_px: Option<f64>,
    #[arg(long)]
    snn_base: Option<f64>,
    #[arg(long, env = "POSEGRAPH_THREADS")]
    threads: Option<usize>,
    #[arg(long)]
    traversal: Option<TraversalMode>,
    #[arg(long)]
    no_epipolar_hashing: bool,
    #[arg(long)]
    no_adaptive_ranking: bool,
    #[arg(long)]
    spanning_tree_only: bool,
    #[arg(long)]
    pipeline_seed: Option<u64>,
    /// Write zero for every time so that reports are reproducible.
    #[arg(long)]
    no_timing: bool,
}

impl PipelineArgs {
    fn config(&self) -> Result<PipelineConfig, String> {
        let mut c = PipelineConfig {
            thread_count: std::thread::available_parallelism().map_or(1, |n| n.get()),
            ..PipelineConfig::default()
        };
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            c.apply_text(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        }
        macro_rules! set {
            ($($field:ident <- $opt:expr),* $(,)?) => { $(if let Some(v) = $opt { c.$field = v; })* };
        }
        set!(
            lambda <- self.lambda,
            max_depth <- self.max_depth,
            bin_count <- self.bin_count,
            min_similarity <- self.min_similarity,
            min_inliers <- self.min_inliers,
            ransac_max_iterations <- self.ransac_max_iterations,
            inlier_threshold_px <- self.inlier_threshold_px,
            snn_base <- self.snn_base,
            thread_count <- self.threads,
            traversal <- self.traversal,
            seed <- self.pipeline_seed,
        );
        c.enable_epipolar_hashing &= !self.no_epipolar_hashing;
        c.enable_adaptive_ranking &= !self.no_adaptive_ranking;
        c.spanning_tree_only |= self.spanning_tree_only;
        c.record_timing &= !self.no_timing;
        c.validate().map_err(|e| e.to_string())?;
        Ok(c)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, String> {
    File::create(path).map(BufWriter::new).map_err(|e| format!("{}: {e}", path.display()))
}

fn build(input: Option<&Path>, scene: &SceneArgs, args: &PipelineArgs, out: &Path) -> Result<(), String> {
    let cfg = args.config()?;
    let ds = match input {
        Some(dir) => Dataset::load_dir(dir).map_err(|e| e.to_string())?,
        None => Dataset::from_scene(&generate(&scene.config()).map_err(|e| e.to_string())?),
    };
    fs::create_dir_all(out).map_err(|e| format!("{}: {e}", out.display()))?;
    let result = run_pipeline(&ds, &cfg).map_err(|e| e.to_string())?;
    result.write_dir(out).map_err(|e| e.to_string())?;
    let io = |e: std::io::Error| e.to_string();
    let mut f = create(&out.join("similarity.csv"))?;
    ds.similarity.write_csv(&mut f).map_err(io)?;
    f.flush().map_err(io)?;
    let mut f = create(&out.join("config.txt"))?;
    f.write_all(cfg.to_text().as_bytes()).map_err(io)?;
    f.flush().map_err(io)?;
    let r = &result.report;
    println!(
        "pairs={} walk={} ransac_fallback={} skipped={} walk_success_rate={:.3} edges={} tracks={}",
        r.records.len(),
        r.count(PairMethod::Walk),
        r.count(PairMethod::RansacFallback),
        r.count(PairMethod::Skipped),
        r.walk_success_rate(),
        result.graph.edge_count(),
        result.tracks.track_count()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Generate { scene, out, format } => {
            let s = generate(&scene.config()).map_err(|e| e.to_string())?;
            Dataset::from_scene(&s).write_dir(&out, format).map_err(|e| e.to_string())?;
            println!("wrote {} views to {}", s.view_count(), out.display());
            Ok(())
        }
        Command::Build { input, scene, pipeline, out } => build(input.as_deref(), &scene, &pipeline, &out),
        Command::Sweep { scene, lambdas, depths, out } => {
            let s = generate(&scene.config()).map_err(|e| e.to_string())?;
            let cfg = SweepConfig { lambdas, depths, seed: scene.seed, ..SweepConfig::default() };
            let rows = sweep_heuristic(&s, &s.similarity(), &cfg);
            match out {
                Some(path) => {
                    let mut f = create(&path)?;
                    write_sweep_csv(&rows, &mut f).and_then(|_| f.flush()).map_err(|e| e.to_string())
                }
                None => write_sweep_csv(&rows, std::io::stdout().lock()).map_err(|e| e.to_string()),
            }
        }
        Command::Bench { keypoints, seeds, inlier_ratio } => {
            println!("kind,seed,keypoints,guided_descriptor_evals,full_descriptor_evals,guided_time_s,full_time_s");
            let m = matcher_benchmark(keypoints, 0);
            println!(
                "matcher,0,{}x{},{},{},{:.6},{:.6}",
                m.keypoints.0, m.keypoints.1, m.guided.descriptor_evaluations, m.brute.descriptor_evaluations, m.guided_time_s, m.brute_time_s
            );
            println!("kind,seed,inlier_ratio,adaptive_iterations,uniform_iterations");
            for seed in 0..seeds {
                let o = ordering_benchmark(seed, inlier_ratio);
                println!("ordering,{seed},{:.3},{},{}", o.inlier_ratio, o.adaptive_iterations, o.uniform_iterations);
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
