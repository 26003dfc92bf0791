// Scratch harness for sizing the acceptance thresholds; not part of the
// shipped interface.

use std::time::Instant;

use unmix::synthgen::{derive_seed, EXPERIMENT1_MATERIALS};
use unmix::{
    demo_library, generate_scene, init_random, initialize, run_unmix, score, InitMethod, InitSpec,
    SceneSpec, SolverConfig, Variant,
};

fn main() {
    let which = std::env::args().nth(1).unwrap_or_else(|| "c1".into());
    match which.as_str() {
        "c1" => probe_fixed_point(),
        "c7" => probe_convergence(),
        "c6" => probe_ordering(),
        "paired" => probe_paired(),
        _ => eprintln!("unknown probe"),
    }
}

fn probe_fixed_point() {
    let lib = demo_library();
    let wl: Vec<f64> = (0..50).map(|b| 0.4 + 2.1 * b as f64 / 49.0).collect();
    let lib50 = lib.resample_nearest(&wl).unwrap();
    let mut spec = SceneSpec::new(
        EXPERIMENT1_MATERIALS[..4]
            .iter()
            .map(|s| s.to_string())
            .collect(),
    );
    spec.grid = (16, 16);
    spec.seed = 11;
    let scene = generate_scene(&lib50, &spec).unwrap();
    println!("scene {}x{}", scene.x.num_bands(), scene.x.num_pixels());

    for (label, lambda0, mu) in [
        ("defaults (l0=0.05, mu=0.1)", 0.05, 0.1),
        ("lambda0=0, mu=0.1", 0.0, 0.1),
        ("lambda0=0.05, mu=0", 0.05, 0.0),
        ("lambda0=0, mu=0", 0.0, 0.0),
    ] {
        let cfg = SolverConfig {
            variant: Variant::SparseGnmf,
            lambda0,
            mu,
            threshold: 0.0,
            max_iter: 50,
            ..Default::default()
        };
        let t0 = Instant::now();
        let result = run_unmix(
            &scene.x,
            &cfg,
            (scene.a_true.clone(), scene.s_true.clone()),
        )
        .unwrap();
        let report = score(
            &scene.a_true,
            &result.endmembers,
            &scene.s_true,
            &result.abundances,
        )
        .unwrap();
        println!(
            "{label:30} rms_sad = {:.3e}  rms_aad = {:.3e}  residual = {:.3e}  ({:.2}s)",
            report.rms_sad,
            report.rms_aad,
            result.final_residual(),
            t0.elapsed().as_secs_f64()
        );
    }
}

fn probe_convergence() {
    let lib = demo_library();
    let mut spec = SceneSpec::new(EXPERIMENT1_MATERIALS.iter().map(|s| s.to_string()).collect());
    spec.snr_db = Some(25.0);
    spec.seed = 3;
    let scene = generate_scene(&lib, &spec).unwrap();
    let cfg = SolverConfig {
        variant: Variant::SparseGnmf,
        threshold: 0.5e-3,
        max_iter: 500,
        ..Default::default()
    };
    let (a0, s0) = init_random(scene.x.num_bands(), 6, scene.x.num_pixels(), 7).unwrap();
    let t0 = Instant::now();
    let result = run_unmix(&scene.x, &cfg, (a0, s0)).unwrap();
    let elapsed = t0.elapsed().as_secs_f64();
    let trace = &result.trace;
    let total_pairs = trace.len() - 1;
    let nonincreasing = trace
        .windows(2)
        .filter(|w| w[1].residual_fro <= w[0].residual_fro * (1.0 + 1e-12))
        .count();
    println!(
        "iters = {}, time = {elapsed:.1}s ({:.1} ms/iter)",
        trace.len(),
        1000.0 * elapsed / trace.len() as f64
    );
    println!(
        "first residual = {:.4e}, final = {:.4e}, ratio = {:.4}",
        trace[0].residual_fro,
        trace.last().unwrap().residual_fro,
        trace.last().unwrap().residual_fro / trace[0].residual_fro
    );
    println!(
        "non-increasing pairs: {nonincreasing}/{total_pairs} = {:.4}",
        nonincreasing as f64 / total_pairs as f64
    );
    // Also VCA init for comparison.
    let init_spec = InitSpec {
        method: InitMethod::VcaFcls,
        seed: 13,
        delta: 15.0,
    };
    let init = initialize(&scene.x, 6, &init_spec).unwrap();
    let result2 = run_unmix(&scene.x, &cfg, init).unwrap();
    let t2 = &result2.trace;
    println!(
        "vca-init: first = {:.4e}, final = {:.4e}, ratio = {:.4}",
        t2[0].residual_fro,
        t2.last().unwrap().residual_fro,
        t2.last().unwrap().residual_fro / t2[0].residual_fro
    );
}

fn probe_ordering() {
    let lib = demo_library();
    let base = SceneSpec::new(EXPERIMENT1_MATERIALS.iter().map(|s| s.to_string()).collect());
    let master = 1u64;
    for snr in [15.0, 25.0, 35.0] {
        let mut sums = [(0.0f64, 0.0f64); 3]; // vca, sparse-nmf, sparse-gnmf
        let runs = 3;
        for run in 0..runs {
            let stream = ((snr as u64) << 32 | run as u64) << 2;
            let mut spec = base.clone();
            spec.snr_db = Some(snr);
            spec.seed = derive_seed(master, stream);
            let scene = generate_scene(&lib, &spec).unwrap();
            let init_spec = InitSpec {
                method: InitMethod::VcaFcls,
                seed: derive_seed(master, stream | 1),
                delta: 15.0,
            };
            let t0 = Instant::now();
            let (a0, s0) = initialize(&scene.x, 6, &init_spec).unwrap();
            let init_time = t0.elapsed().as_secs_f64();

            let vca_report = score(&scene.a_true, &a0, &scene.s_true, &s0).unwrap();
            sums[0].0 += vca_report.rms_sad;
            sums[0].1 += vca_report.rms_aad;

            for (slot, variant) in [(1, Variant::SparseNmf), (2, Variant::SparseGnmf)] {
                let cfg = SolverConfig {
                    variant,
                    threshold: 0.5e-3,
                    max_iter: 500,
                    ..Default::default()
                };
                let t1 = Instant::now();
                let result = run_unmix(&scene.x, &cfg, (a0.clone(), s0.clone())).unwrap();
                let solve_time = t1.elapsed().as_secs_f64();
                let report = score(
                    &scene.a_true,
                    &result.endmembers,
                    &scene.s_true,
                    &result.abundances,
                )
                .unwrap();
                sums[slot].0 += report.rms_sad;
                sums[slot].1 += report.rms_aad;
                if run == 0 {
                    println!(
                        "  snr {snr}: {variant} took {solve_time:.1}s ({} iters), init {init_time:.1}s",
                        result.iterations()
                    );
                }
            }
        }
        let n = runs as f64;
        println!(
            "snr {snr:>4}: vca sad={:.4} aad={:.4} | s-nmf sad={:.4} aad={:.4} | s-gnmf sad={:.4} aad={:.4}",
            sums[0].0 / n, sums[0].1 / n, sums[1].0 / n, sums[1].1 / n, sums[2].0 / n, sums[2].1 / n
        );
    }
}

// Paired-difference probe: same scene, same init, SparseNMF vs
// SparseGNMF under candidate graph defaults.
fn probe_paired() {
    use unmix::SigmaPolicy;
    let lib = demo_library();
    let base = SceneSpec::new(EXPERIMENT1_MATERIALS.iter().map(|s| s.to_string()).collect());
    let master = 42u64;
    let runs = 8usize;
    for (label, k, sigma) in [
        ("k=5 median", 5usize, SigmaPolicy::MedianHeuristic),
        ("k=10 median", 10, SigmaPolicy::MedianHeuristic),
        ("k=5 sigma=1e9", 5, SigmaPolicy::Fixed(1e9)),
    ] {
        for snr in [15.0, 25.0] {
            let mut dsad = Vec::new();
            let mut daad = Vec::new();
            for run in 0..runs {
                let stream = (((snr as u64) << 8 | run as u64) << 2) | 2;
                let mut spec = base.clone();
                spec.snr_db = Some(snr);
                spec.seed = derive_seed(master, stream);
                let scene = generate_scene(&lib, &spec).unwrap();
                let init_spec = InitSpec {
                    method: InitMethod::VcaFcls,
                    seed: derive_seed(master, stream | 1),
                    delta: 15.0,
                };
                let (a0, s0) = initialize(&scene.x, 6, &init_spec).unwrap();
                let mut results = Vec::new();
                for variant in [Variant::SparseNmf, Variant::SparseGnmf] {
                    let cfg = SolverConfig {
                        variant,
                        threshold: 0.5e-3,
                        max_iter: 500,
                        knn_k: k,
                        sigma_policy: sigma,
                        ..Default::default()
                    };
                    let r = run_unmix(&scene.x, &cfg, (a0.clone(), s0.clone())).unwrap();
                    let rep = score(&scene.a_true, &r.endmembers, &scene.s_true, &r.abundances)
                        .unwrap();
                    results.push((rep.rms_sad, rep.rms_aad));
                }
                dsad.push(results[0].0 - results[1].0); // positive = gnmf better
                daad.push(results[0].1 - results[1].1);
            }
            let mean = |v: &Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
            let sd = |v: &Vec<f64>, m: f64| {
                (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
            };
            let (ms, ma) = (mean(&dsad), mean(&daad));
            println!(
                "{label:>15} snr {snr:>4}: d_sad = {ms:+.5} (sd {:.5}), d_aad = {ma:+.5} (sd {:.5})  [positive = gnmf wins]",
                sd(&dsad, ms), sd(&daad, ma)
            );
        }
    }
}
