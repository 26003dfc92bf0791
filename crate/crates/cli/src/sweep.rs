//! Monte Carlo SNR sweep: for each (SNR, run) a fresh scene is
//! generated with a run-specific seed, every requested method unmixes
//! the same scene from the same VCA+FCLS starting point, and the
//! scores land in a long-format CSV plus a per-(SNR, method) summary.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use clap::Args;
use rayon::prelude::*;

use unmix::io::SpectralLibrary;
use unmix::synthgen::{derive_seed, EXPERIMENT1_MATERIALS};
use unmix::{
    generate_scene, initialize, run_unmix, score, InitMethod, InitSpec, SceneSpec, SolverConfig,
    Variant,
};

use crate::commands::{load_library_arg, LibraryFormatArg, SolverFlags};

/// Methods a sweep can compare. `VcaBaseline` scores the VCA+FCLS
/// initialization directly, without any factorization iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariant {
    VcaBaseline,
    Nmf,
    SparseNmf,
    Gnmf,
    SparseGnmf,
}

impl SweepVariant {
    pub fn parse_list(text: &str) -> anyhow::Result<Vec<SweepVariant>> {
        let mut out = Vec::new();
        for token in text.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let v = match token.to_ascii_lowercase().as_str() {
                "vca" | "vca-baseline" => SweepVariant::VcaBaseline,
                "nmf" => SweepVariant::Nmf,
                "sparse-nmf" => SweepVariant::SparseNmf,
                "gnmf" => SweepVariant::Gnmf,
                "sparse-gnmf" => SweepVariant::SparseGnmf,
                other => bail!("unknown sweep variant {other:?}"),
            };
            if !out.contains(&v) {
                out.push(v);
            }
        }
        if out.is_empty() {
            bail!("no sweep variants given");
        }
        Ok(out)
    }

    fn solver_variant(self) -> Option<Variant> {
        match self {
            SweepVariant::VcaBaseline => None,
            SweepVariant::Nmf => Some(Variant::Nmf),
            SweepVariant::SparseNmf => Some(Variant::SparseNmf),
            SweepVariant::Gnmf => Some(Variant::Gnmf),
            SweepVariant::SparseGnmf => Some(Variant::SparseGnmf),
        }
    }
}

impl fmt::Display for SweepVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            SweepVariant::VcaBaseline => "VCA-baseline",
            SweepVariant::Nmf => "NMF",
            SweepVariant::SparseNmf => "SparseNMF",
            SweepVariant::Gnmf => "GNMF",
            SweepVariant::SparseGnmf => "SparseGNMF",
        };
        f.write_str(name)
    }
}

/// Full sweep description; per-run seeds derive deterministically from
/// `master_seed`.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub snr_list: Vec<f64>,
    pub runs: usize,
    pub variants: Vec<SweepVariant>,
    pub base_config: SolverConfig,
    pub base_scene: SceneSpec,
    pub master_seed: u64,
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub snr_db: f64,
    pub variant: SweepVariant,
    pub run: usize,
    pub rms_sad: f64,
    pub rms_aad: f64,
    pub iterations: usize,
    pub seconds: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SweepSummaryRow {
    pub snr_db: f64,
    pub variant: SweepVariant,
    pub mean_rms_sad: f64,
    pub std_rms_sad: f64,
    pub mean_rms_aad: f64,
    pub std_rms_aad: f64,
    pub runs_ok: usize,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub summary: Vec<SweepSummaryRow>,
}

impl SweepOutcome {
    pub fn summary_for(&self, snr_db: f64, variant: SweepVariant) -> Option<&SweepSummaryRow> {
        self.summary
            .iter()
            .find(|s| s.snr_db == snr_db && s.variant == variant)
    }
}

/// Runs the whole sweep; scene units execute in a worker pool and the
/// result rows are sorted by key, so output is order-independent.
pub fn run_sweep(library: &SpectralLibrary, spec: &SweepSpec) -> anyhow::Result<SweepOutcome> {
    if spec.runs == 0 {
        bail!("sweep needs at least one run");
    }
    if spec.snr_list.is_empty() || spec.variants.is_empty() {
        bail!("sweep needs at least one SNR and one variant");
    }
    spec.base_scene.validate()?;
    spec.base_config.validate()?;

    let units: Vec<(usize, usize)> = (0..spec.snr_list.len())
        .flat_map(|si| (0..spec.runs).map(move |run| (si, run)))
        .collect();

    let mut rows: Vec<SweepRow> = units
        .par_iter()
        .flat_map(|&(si, run)| run_unit(library, spec, si, run))
        .collect();
    rows.sort_by(|a, b| {
        a.snr_db
            .partial_cmp(&b.snr_db)
            .unwrap()
            .then(a.variant.to_string().cmp(&b.variant.to_string()))
            .then(a.run.cmp(&b.run))
    });

    let mut summary = Vec::new();
    for &snr in &spec.snr_list {
        for &variant in &spec.variants {
            let ok: Vec<&SweepRow> = rows
                .iter()
                .filter(|r| r.snr_db == snr && r.variant == variant && r.error.is_none())
                .collect();
            let stats = |pick: fn(&SweepRow) -> f64| -> (f64, f64) {
                if ok.is_empty() {
                    return (f64::NAN, f64::NAN);
                }
                let n = ok.len() as f64;
                let mean = ok.iter().map(|r| pick(r)).sum::<f64>() / n;
                let var = if ok.len() > 1 {
                    ok.iter().map(|r| (pick(r) - mean).powi(2)).sum::<f64>() / (n - 1.0)
                } else {
                    0.0
                };
                (mean, var.sqrt())
            };
            let (mean_rms_sad, std_rms_sad) = stats(|r| r.rms_sad);
            let (mean_rms_aad, std_rms_aad) = stats(|r| r.rms_aad);
            summary.push(SweepSummaryRow {
                snr_db: snr,
                variant,
                mean_rms_sad,
                std_rms_sad,
                mean_rms_aad,
                std_rms_aad,
                runs_ok: ok.len(),
            });
        }
    }
    summary.sort_by(|a, b| {
        a.snr_db
            .partial_cmp(&b.snr_db)
            .unwrap()
            .then(a.variant.to_string().cmp(&b.variant.to_string()))
    });

    Ok(SweepOutcome { rows, summary })
}

fn error_rows(spec: &SweepSpec, si: usize, run: usize, message: &str) -> Vec<SweepRow> {
    spec.variants
        .iter()
        .map(|&variant| SweepRow {
            snr_db: spec.snr_list[si],
            variant,
            run,
            rms_sad: f64::NAN,
            rms_aad: f64::NAN,
            iterations: 0,
            seconds: 0.0,
            error: Some(message.to_string()),
        })
        .collect()
}

/// One scene unit: generate, initialize once, run every variant.
fn run_unit(library: &SpectralLibrary, spec: &SweepSpec, si: usize, run: usize) -> Vec<SweepRow> {
    let snr = spec.snr_list[si];
    let stream = ((si as u64) << 32 | run as u64) << 2;
    let mut scene_spec = spec.base_scene.clone();
    scene_spec.snr_db = Some(snr);
    scene_spec.seed = derive_seed(spec.master_seed, stream);

    let scene = match generate_scene(library, &scene_spec) {
        Ok(s) => s,
        Err(e) => return error_rows(spec, si, run, &format!("scene generation: {e}")),
    };

    let init_seed = derive_seed(spec.master_seed, stream | 1);
    let init_spec = InitSpec {
        method: InitMethod::VcaFcls,
        seed: init_seed,
        delta: spec.base_config.delta,
    };
    let p = scene_spec.num_endmembers();
    let (a0, s0) = match initialize(&scene.x, p, &init_spec) {
        Ok(pair) => pair,
        Err(e) => return error_rows(spec, si, run, &format!("initialization: {e}")),
    };

    let mut rows = Vec::with_capacity(spec.variants.len());
    for &variant in &spec.variants {
        let start = Instant::now();
        let outcome = match variant.solver_variant() {
            None => Ok((a0.clone(), s0.clone(), 0usize)),
            Some(solver_variant) => {
                let cfg = SolverConfig {
                    variant: solver_variant,
                    seed: init_seed,
                    ..spec.base_config.clone()
                };
                run_unmix(&scene.x, &cfg, (a0.clone(), s0.clone())).map(|r| {
                    let iterations = r.iterations();
                    (r.endmembers, r.abundances, iterations)
                })
            }
        };
        let row = match outcome {
            Err(e) => SweepRow {
                snr_db: snr,
                variant,
                run,
                rms_sad: f64::NAN,
                rms_aad: f64::NAN,
                iterations: 0,
                seconds: start.elapsed().as_secs_f64(),
                error: Some(format!("solver: {e}")),
            },
            Ok((a_est, s_est, iterations)) => {
                match score(&scene.a_true, &a_est, &scene.s_true, &s_est) {
                    Ok(report) => SweepRow {
                        snr_db: snr,
                        variant,
                        run,
                        rms_sad: report.rms_sad,
                        rms_aad: report.rms_aad,
                        iterations,
                        seconds: start.elapsed().as_secs_f64(),
                        error: None,
                    },
                    Err(e) => SweepRow {
                        snr_db: snr,
                        variant,
                        run,
                        rms_sad: f64::NAN,
                        rms_aad: f64::NAN,
                        iterations,
                        seconds: start.elapsed().as_secs_f64(),
                        error: Some(format!("scoring: {e}")),
                    },
                }
            }
        };
        rows.push(row);
    }
    rows
}

/// Writes `runs.csv` (long format) and `summary.csv`; returns their paths.
pub fn write_sweep_csv(outcome: &SweepOutcome, dir: &Path) -> anyhow::Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir)?;
    let fmt_metric = |v: f64| {
        if v.is_nan() {
            String::new()
        } else {
            format!("{v:e}")
        }
    };

    let mut runs_text = String::from("snr_db,variant,run,rms_sad,rms_aad,iterations,seconds,error\n");
    for r in &outcome.rows {
        let error = r
            .error
            .as_deref()
            .unwrap_or("")
            .replace(',', ";")
            .replace('\n', " ");
        runs_text.push_str(&format!(
            "{},{},{},{},{},{},{:.3},{}\n",
            r.snr_db,
            r.variant,
            r.run,
            fmt_metric(r.rms_sad),
            fmt_metric(r.rms_aad),
            r.iterations,
            r.seconds,
            error
        ));
    }
    let runs_path = dir.join("runs.csv");
    fs::write(&runs_path, runs_text)?;

    let mut summary_text =
        String::from("snr_db,variant,mean_rms_sad,std_rms_sad,mean_rms_aad,std_rms_aad,runs_ok\n");
    for s in &outcome.summary {
        summary_text.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            s.snr_db,
            s.variant,
            fmt_metric(s.mean_rms_sad),
            fmt_metric(s.std_rms_sad),
            fmt_metric(s.mean_rms_aad),
            fmt_metric(s.std_rms_aad),
            s.runs_ok
        ));
    }
    let summary_path = dir.join("summary.csv");
    fs::write(&summary_path, summary_text)?;
    Ok((runs_path, summary_path))
}

/// `sweep`: Monte Carlo comparison across SNR levels.
#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    /// Comma-separated SNR levels in dB.
    #[arg(long, default_value = "15,20,25,30,35,40")]
    pub snr_list: String,
    /// Monte Carlo runs per SNR.
    #[arg(long, default_value_t = 20)]
    pub runs: usize,
    /// Comma-separated methods: vca, nmf, sparse-nmf, gnmf, sparse-gnmf.
    #[arg(long, default_value = "vca,sparse-nmf,sparse-gnmf")]
    pub variants: String,
    /// Spectral library file; built-in demo library when omitted.
    #[arg(long)]
    pub library: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub library_format: LibraryFormatArg,
    /// Comma-separated signature names.
    #[arg(long)]
    pub endmembers: Option<String>,
    #[arg(long, default_value_t = 64)]
    pub rows: usize,
    #[arg(long, default_value_t = 64)]
    pub cols: usize,
    #[arg(long, default_value_t = 8)]
    pub block: usize,
    #[arg(long, default_value_t = 9)]
    pub lpf: usize,
    #[arg(long, default_value_t = 0.8)]
    pub purity_cap: f64,
    #[command(flatten)]
    pub solver: SolverFlags,
    #[arg(long)]
    pub out_dir: PathBuf,
}

pub fn cmd_sweep(args: &SweepArgs) -> anyhow::Result<()> {
    let library = load_library_arg(args.library.as_deref(), args.library_format)?;
    let endmember_ids: Vec<String> = match &args.endmembers {
        Some(list) => list
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect(),
        None => EXPERIMENT1_MATERIALS.iter().map(|s| s.to_string()).collect(),
    };
    let snr_list: Vec<f64> = args
        .snr_list
        .split(',')
        .map(|t| t.trim().parse::<f64>().context("bad --snr-list entry"))
        .collect::<anyhow::Result<_>>()?;
    let variants = SweepVariant::parse_list(&args.variants)?;
    // The per-run variant overrides this placeholder.
    let base_config = args.solver.to_config(Variant::SparseGnmf)?;
    let base_scene = SceneSpec {
        grid: (args.rows, args.cols),
        block: args.block,
        lpf: args.lpf,
        endmember_ids,
        snr_db: None,
        purity_cap: args.purity_cap,
        seed: 0,
    };
    let spec = SweepSpec {
        snr_list,
        runs: args.runs,
        variants,
        base_config,
        base_scene,
        master_seed: args.solver.seed,
    };

    let outcome = run_sweep(&library, &spec)?;
    let (runs_path, summary_path) = write_sweep_csv(&outcome, &args.out_dir)?;
    for s in &outcome.summary {
        println!(
            "snr {:>5} dB  {:<13} mean rms_sad = {:.5}  mean rms_aad = {:.5}  ({} ok)",
            s.snr_db, s.variant.to_string(), s.mean_rms_sad, s.mean_rms_aad, s.runs_ok
        );
    }
    println!("rows: {}", runs_path.display());
    println!("summary: {}", summary_path.display());
    Ok(())
}
