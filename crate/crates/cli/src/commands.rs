//! Subcommand implementations: scene synthesis, unmixing, evaluation.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use ndarray::Array2;

use unmix::io::{
    load_band_mask, load_cube, load_matrix_csv, load_spectral_library, matrix_digest,
    save_matrix_csv, save_report, save_result, write_trace_csv, LibraryFormat, SpectralLibrary,
};
use unmix::synthgen::EXPERIMENT1_MATERIALS;
use unmix::{
    demo_library, generate_scene, initialize, residual_fro, run_unmix, score, score_endmembers,
    AbundanceMatrix, EndmemberMatrix, InitMethod, InitSpec, ObservationMatrix, SceneSpec,
    SigmaPolicy, SolverConfig, UnmixError, Variant,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Nmf,
    SparseNmf,
    Gnmf,
    SparseGnmf,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Variant {
        match v {
            VariantArg::Nmf => Variant::Nmf,
            VariantArg::SparseNmf => Variant::SparseNmf,
            VariantArg::Gnmf => Variant::Gnmf,
            VariantArg::SparseGnmf => Variant::SparseGnmf,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    Random,
    Vca,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LibraryFormatArg {
    Csv,
    UsgsAscii,
}

/// Solver hyperparameters shared by `unmix` and `sweep`. Defaults are
/// the reference values.
#[derive(Debug, Clone, Args)]
pub struct SolverFlags {
    /// Initial sparsity weight.
    #[arg(long, default_value_t = 0.05)]
    pub lambda0: f64,
    /// Sparsity annealing time constant (iterations).
    #[arg(long, default_value_t = 25.0)]
    pub tau: f64,
    /// Graph regularization weight.
    #[arg(long, default_value_t = 0.1)]
    pub mu: f64,
    /// Sum-to-one augmentation weight.
    #[arg(long, default_value_t = 15.0)]
    pub delta: f64,
    /// Residual stopping value.
    #[arg(long, default_value_t = 0.5e-3)]
    pub threshold: f64,
    /// Interpret --threshold against the relative residual ||X-AS||/||X||.
    #[arg(long)]
    pub relative_threshold: bool,
    /// Iteration cap.
    #[arg(long, default_value_t = 3000)]
    pub max_iter: usize,
    /// Neighbors per pixel in the affinity graph.
    #[arg(long, default_value_t = 5)]
    pub knn_k: usize,
    /// Heat-kernel bandwidth: "median" or a positive number.
    #[arg(long, default_value = "median")]
    pub sigma: String,
    /// Numerical floor for denominators.
    #[arg(long, default_value_t = 1e-12)]
    pub epsilon: f64,
    /// Seed for initialization (and any stochastic policy).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl SolverFlags {
    pub fn to_config(&self, variant: Variant) -> anyhow::Result<SolverConfig> {
        let sigma_policy = parse_sigma(&self.sigma)?;
        let cfg = SolverConfig {
            variant,
            lambda0: self.lambda0,
            tau: self.tau,
            mu: self.mu,
            delta: self.delta,
            threshold: self.threshold,
            relative_threshold: self.relative_threshold,
            max_iter: self.max_iter,
            knn_k: self.knn_k,
            sigma_policy,
            epsilon: self.epsilon,
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn parse_sigma(text: &str) -> anyhow::Result<SigmaPolicy> {
    if text.eq_ignore_ascii_case("median") || text.eq_ignore_ascii_case("median-heuristic") {
        return Ok(SigmaPolicy::MedianHeuristic);
    }
    let v: f64 = text
        .parse()
        .with_context(|| format!("--sigma must be \"median\" or a number, got {text:?}"))?;
    if !(v > 0.0) {
        bail!("--sigma must be positive, got {v}");
    }
    Ok(SigmaPolicy::Fixed(v))
}

/// "none" or a dB value.
pub fn parse_snr(text: &str) -> anyhow::Result<Option<f64>> {
    if text.eq_ignore_ascii_case("none") {
        return Ok(None);
    }
    let v: f64 = text
        .parse()
        .with_context(|| format!("--snr must be \"none\" or a dB value, got {text:?}"))?;
    Ok(Some(v))
}

pub fn load_library_arg(
    library: Option<&Path>,
    format: LibraryFormatArg,
) -> anyhow::Result<SpectralLibrary> {
    match library {
        None => Ok(demo_library()),
        Some(path) => {
            let fmt = match format {
                LibraryFormatArg::Csv => LibraryFormat::Csv,
                LibraryFormatArg::UsgsAscii => LibraryFormat::UsgsAscii,
            };
            Ok(load_spectral_library(path, fmt)
                .with_context(|| format!("loading library {}", path.display()))?)
        }
    }
}

fn parse_name_list(text: &str) -> Vec<String> {
    text.split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

/// `synth`: generate a synthetic scene and write its ground truth.
#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Spectral library file; the built-in demo library when omitted.
    #[arg(long)]
    pub library: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub library_format: LibraryFormatArg,
    /// Comma-separated signature names; the six reference materials
    /// when omitted.
    #[arg(long)]
    pub endmembers: Option<String>,
    /// Grid rows.
    #[arg(long, default_value_t = 64)]
    pub rows: usize,
    /// Grid cols.
    #[arg(long, default_value_t = 64)]
    pub cols: usize,
    /// Pure-block edge length.
    #[arg(long, default_value_t = 8)]
    pub block: usize,
    /// Low-pass kernel edge length (odd).
    #[arg(long, default_value_t = 9)]
    pub lpf: usize,
    /// Abundance cap above which pixels are replaced by the uniform mix.
    #[arg(long, default_value_t = 0.8)]
    pub purity_cap: f64,
    /// Target SNR in dB, or "none" for a noise-free scene.
    #[arg(long, default_value = "25")]
    pub snr: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

pub fn cmd_synth(args: &SynthArgs) -> anyhow::Result<()> {
    let library = load_library_arg(args.library.as_deref(), args.library_format)?;
    let endmember_ids = match &args.endmembers {
        Some(list) => parse_name_list(list),
        None => EXPERIMENT1_MATERIALS.iter().map(|s| s.to_string()).collect(),
    };
    let spec = SceneSpec {
        grid: (args.rows, args.cols),
        block: args.block,
        lpf: args.lpf,
        endmember_ids,
        snr_db: parse_snr(&args.snr)?,
        purity_cap: args.purity_cap,
        seed: args.seed,
    };
    let scene = generate_scene(&library, &spec)?;

    fs::create_dir_all(&args.out_dir)?;
    save_matrix_csv(scene.x.data(), &args.out_dir.join("X.csv"))?;
    save_matrix_csv(scene.a_true.data(), &args.out_dir.join("A_true.csv"))?;
    save_matrix_csv(scene.s_true.data(), &args.out_dir.join("S_true.csv"))?;

    let manifest = format!(
        "rows = {}\ncols = {}\nblock = {}\nlpf = {}\nendmembers = {}\nsnr_db = {}\npurity_cap = {}\nseed = {}\nachieved_snr_db = {}\nbands = {}\ndigest_x = {}\n",
        spec.grid.0,
        spec.grid.1,
        spec.block,
        spec.lpf,
        spec.endmember_ids.join(","),
        spec.snr_db.map_or("none".to_string(), |v| v.to_string()),
        spec.purity_cap,
        spec.seed,
        scene.achieved_snr_db,
        scene.x.num_bands(),
        matrix_digest(scene.x.data()),
    );
    fs::write(args.out_dir.join("scene_manifest.txt"), manifest)?;

    println!(
        "scene: {} bands x {} pixels, P = {}, achieved SNR = {}",
        scene.x.num_bands(),
        scene.x.num_pixels(),
        scene.a_true.num_endmembers(),
        scene.achieved_snr_db
    );
    Ok(())
}

/// `unmix`: factor an observation into endmembers and abundances.
#[derive(Debug, Clone, Args)]
pub struct UnmixArgs {
    /// Observation matrix as CSV (bands x pixels).
    #[arg(long, conflicts_with_all = ["cube_header", "cube_data"])]
    pub input: Option<PathBuf>,
    /// Raw cube header (key = value text).
    #[arg(long, requires = "cube_data")]
    pub cube_header: Option<PathBuf>,
    /// Raw cube payload.
    #[arg(long, requires = "cube_header")]
    pub cube_data: Option<PathBuf>,
    /// File of 0-based band indices to drop when loading a cube.
    #[arg(long)]
    pub band_mask: Option<PathBuf>,
    /// Number of endmembers to extract.
    #[arg(long)]
    pub p: usize,
    #[arg(long, value_enum, default_value = "sparse-gnmf")]
    pub variant: VariantArg,
    #[arg(long, value_enum, default_value = "vca")]
    pub init: InitArg,
    #[command(flatten)]
    pub solver: SolverFlags,
    #[arg(long)]
    pub out_dir: PathBuf,
}

pub fn load_observation(args: &UnmixArgs) -> anyhow::Result<ObservationMatrix> {
    match (&args.input, &args.cube_header, &args.cube_data) {
        (Some(path), None, None) => {
            let m = load_matrix_csv(path)?;
            Ok(ObservationMatrix::from_data(m)?)
        }
        (None, Some(header), Some(data)) => {
            let mask = match &args.band_mask {
                Some(p) => Some(load_band_mask(p)?),
                None => None,
            };
            Ok(load_cube(header, data, mask.as_deref())?)
        }
        _ => bail!("provide either --input or --cube-header with --cube-data"),
    }
}

pub fn cmd_unmix(args: &UnmixArgs) -> anyhow::Result<()> {
    let x = load_observation(args)?;
    let cfg = args.solver.to_config(args.variant.into())?;
    let init_spec = InitSpec {
        method: match args.init {
            InitArg::Random => InitMethod::Random,
            InitArg::Vca => InitMethod::VcaFcls,
        },
        seed: cfg.seed,
        delta: cfg.delta,
    };
    let init = initialize(&x, args.p, &init_spec)?;
    let digest = matrix_digest(x.data());
    let init_label = match args.init {
        InitArg::Random => "random",
        InitArg::Vca => "vca",
    };

    match run_unmix(&x, &cfg, init) {
        Ok(result) => {
            save_result(&result, None, &cfg, init_label, &digest, &args.out_dir)?;
            println!(
                "{} finished: {} iterations, stop = {}, final residual = {:.6e}",
                cfg.variant,
                result.iterations(),
                result.stop_reason,
                result.final_residual()
            );
            Ok(())
        }
        Err(UnmixError::Diverged { iteration, trace }) => {
            fs::create_dir_all(&args.out_dir)?;
            let mut file = fs::File::create(args.out_dir.join("trace.csv"))?;
            write_trace_csv(&trace, &mut file)?;
            bail!("solver diverged at iteration {iteration}; partial trace written");
        }
        Err(e) => Err(e.into()),
    }
}

/// `eval`: score an estimate against ground truth.
#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub true_a: PathBuf,
    #[arg(long)]
    pub est_a: PathBuf,
    #[arg(long, requires = "est_s")]
    pub true_s: Option<PathBuf>,
    #[arg(long, requires = "true_s")]
    pub est_s: Option<PathBuf>,
    /// Report destination.
    #[arg(long, default_value = "report.txt")]
    pub out: PathBuf,
}

fn load_endmembers(path: &Path) -> anyhow::Result<EndmemberMatrix> {
    Ok(EndmemberMatrix::new(load_matrix_csv(path)?)
        .with_context(|| format!("loading endmembers from {}", path.display()))?)
}

fn load_abundances(path: &Path) -> anyhow::Result<AbundanceMatrix> {
    Ok(AbundanceMatrix::from_raw(load_matrix_csv(path)?)
        .with_context(|| format!("loading abundances from {}", path.display()))?)
}

pub fn cmd_eval(args: &EvalArgs) -> anyhow::Result<()> {
    let a_true = load_endmembers(&args.true_a)?;
    let a_est = load_endmembers(&args.est_a)?;
    match (&args.true_s, &args.est_s) {
        (Some(ts), Some(es)) => {
            let s_true = load_abundances(ts)?;
            let s_est = load_abundances(es)?;
            let report = score(&a_true, &a_est, &s_true, &s_est)?;
            save_report(&report, &args.out)?;
            println!("rms_sad = {:.6e}", report.rms_sad);
            println!("rms_aad = {:.6e}", report.rms_aad);
        }
        (None, None) => {
            let summary = score_endmembers(&a_true, &a_est)?;
            let perm = summary
                .permutation
                .iter()
                .map(|p| p.to_string())
                .collect::<Vec<_>>()
                .join(",");
            let sads = summary
                .per_endmember_sad
                .iter()
                .map(|v| format!("{v:e}"))
                .collect::<Vec<_>>()
                .join(",");
            fs::write(
                &args.out,
                format!(
                    "rms_sad = {:e}\npermutation = {perm}\nper_endmember_sad = {sads}\n",
                    summary.rms_sad
                ),
            )?;
            println!("rms_sad = {:.6e}", summary.rms_sad);
        }
        _ => bail!("--true-s and --est-s must be given together"),
    }
    Ok(())
}

/// Convenience for tests: residual of a stored truth triple.
pub fn stored_truth_residual(dir: &Path) -> anyhow::Result<f64> {
    let x = ObservationMatrix::from_data(load_matrix_csv(&dir.join("X.csv"))?)?;
    let a = EndmemberMatrix::new(load_matrix_csv(&dir.join("A_true.csv"))?)?;
    let s = AbundanceMatrix::from_raw(load_matrix_csv(&dir.join("S_true.csv"))?)?;
    Ok(residual_fro(&x, &a, &s)?)
}

/// Loads a stored scene's observation with its truth matrices.
pub fn load_stored_scene(
    dir: &Path,
) -> anyhow::Result<(ObservationMatrix, EndmemberMatrix, Array2<f64>)> {
    let x = ObservationMatrix::from_data(load_matrix_csv(&dir.join("X.csv"))?)?;
    let a = EndmemberMatrix::new(load_matrix_csv(&dir.join("A_true.csv"))?)?;
    let s = load_matrix_csv(&dir.join("S_true.csv"))?;
    Ok((x, a, s))
}
