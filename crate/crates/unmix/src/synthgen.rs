//! Synthetic scene generation.
//!
//! A scene starts as a grid of pure single-material blocks, is mixed by
//! a spatial low-pass filter over the abundance planes, has remaining
//! near-pure pixels replaced by the uniform mixture, and finally gets
//! zero-mean Gaussian noise calibrated to a target SNR. Ground truth is
//! retained so estimates can be scored exactly.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, UnmixError};
use crate::io::SpectralLibrary;
use crate::model::{synthesize_lmm, AbundanceMatrix, EndmemberMatrix, ObservationMatrix};

/// Scene layout and noise parameters.
#[derive(Debug, Clone)]
pub struct SceneSpec {
    /// Spatial grid (rows, cols); pixels are indexed row-major.
    pub grid: (usize, usize),
    /// Edge length of the pure blocks; must divide both grid sides.
    pub block: usize,
    /// Low-pass kernel edge length; odd.
    pub lpf: usize,
    /// Library signature names, one per endmember.
    pub endmember_ids: Vec<String>,
    /// Target SNR in dB; `None` for a noise-free scene.
    pub snr_db: Option<f64>,
    /// Pixels whose max abundance exceeds this are replaced by the
    /// uniform mixture.
    pub purity_cap: f64,
    pub seed: u64,
}

impl SceneSpec {
    /// Reference layout: 64x64 grid, 8x8 blocks, 9x9 filter, purity cap 0.8.
    pub fn new(endmember_ids: Vec<String>) -> Self {
        Self {
            grid: (64, 64),
            block: 8,
            lpf: 9,
            endmember_ids,
            snr_db: None,
            purity_cap: 0.8,
            seed: 0,
        }
    }

    pub fn num_endmembers(&self) -> usize {
        self.endmember_ids.len()
    }

    pub fn num_pixels(&self) -> usize {
        self.grid.0 * self.grid.1
    }

    pub fn validate(&self) -> Result<()> {
        let (rows, cols) = self.grid;
        if rows == 0 || cols == 0 {
            return Err(UnmixError::Parameter("grid sides must be positive".into()));
        }
        if self.block == 0 || rows % self.block != 0 || cols % self.block != 0 {
            return Err(UnmixError::Parameter(format!(
                "block {} must divide grid {}x{}",
                self.block, rows, cols
            )));
        }
        if self.lpf % 2 == 0 || self.lpf == 0 {
            return Err(UnmixError::Parameter(format!(
                "lpf kernel edge {} must be odd and >= 1",
                self.lpf
            )));
        }
        let p = self.num_endmembers();
        if p < 2 {
            return Err(UnmixError::Parameter(
                "a scene needs at least 2 endmembers".into(),
            ));
        }
        let blocks = (rows / self.block) * (cols / self.block);
        if p > blocks {
            return Err(UnmixError::Parameter(format!(
                "{p} endmembers cannot all appear in {blocks} blocks"
            )));
        }
        if !(self.purity_cap > 0.0 && self.purity_cap <= 1.0) {
            return Err(UnmixError::Parameter(format!(
                "purity cap {} must lie in (0, 1]",
                self.purity_cap
            )));
        }
        Ok(())
    }
}

/// A generated scene with its ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub x: ObservationMatrix,
    pub a_true: EndmemberMatrix,
    pub s_true: AbundanceMatrix,
    pub spec: SceneSpec,
    /// Empirical SNR of the realized noise; infinite when noise-free.
    pub achieved_snr_db: f64,
}

/// Splitmix-style stream derivation so one master seed can drive
/// several independent generators.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Assigns one endmember per block uniformly at random and expands to
/// one-hot abundance columns. Assignments leaving any endmember unused
/// are rejected and redrawn so every material can be scored.
pub fn generate_block_abundances(spec: &SceneSpec) -> Result<AbundanceMatrix> {
    spec.validate()?;
    let (rows, cols) = spec.grid;
    let p = spec.num_endmembers();
    let blocks_r = rows / spec.block;
    let blocks_c = cols / spec.block;
    let num_blocks = blocks_r * blocks_c;

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, 1));
    let mut assignment = vec![0usize; num_blocks];
    let mut attempts = 0;
    loop {
        for slot in assignment.iter_mut() {
            *slot = rng.gen_range(0..p);
        }
        let mut used = vec![false; p];
        for &m in &assignment {
            used[m] = true;
        }
        if used.iter().all(|&u| u) {
            break;
        }
        attempts += 1;
        if attempts > 10_000 {
            return Err(UnmixError::DegenerateData(
                "could not draw a block assignment covering all endmembers".into(),
            ));
        }
    }

    let mut s = Array2::zeros((p, rows * cols));
    for r in 0..rows {
        for c in 0..cols {
            let block_idx = (r / spec.block) * blocks_c + (c / spec.block);
            s[[assignment[block_idx], r * cols + c]] = 1.0;
        }
    }
    AbundanceMatrix::new(s)
}

/// Mirror index with edge duplication: -1 -> 0, n -> n-1.
fn mirror(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

/// Convolves each abundance plane with the uniform `lpf x lpf` kernel
/// under symmetric boundary padding, then replaces any pixel whose max
/// abundance exceeds the purity cap with the uniform mixture. Column
/// sums are preserved, so the output still satisfies both constraints.
pub fn apply_lowpass(s: &AbundanceMatrix, spec: &SceneSpec) -> Result<AbundanceMatrix> {
    spec.validate()?;
    let (rows, cols) = spec.grid;
    let p = spec.num_endmembers();
    if s.num_pixels() != rows * cols || s.num_endmembers() != p {
        return Err(UnmixError::Shape(format!(
            "abundances are {}x{}, spec wants {}x{}",
            s.num_endmembers(),
            s.num_pixels(),
            p,
            rows * cols
        )));
    }
    let half = (spec.lpf / 2) as isize;
    let scale = 1.0 / (spec.lpf * spec.lpf) as f64;

    let mut out = Array2::zeros((p, rows * cols));
    let mut plane = Array2::zeros((rows, cols));
    let mut pass1 = Array2::zeros((rows, cols));
    for q in 0..p {
        for r in 0..rows {
            for c in 0..cols {
                plane[[r, c]] = s.data()[[q, r * cols + c]];
            }
        }
        // Horizontal then vertical unnormalized sums; scale once at the end.
        for r in 0..rows {
            for c in 0..cols {
                let mut acc = 0.0;
                for d in -half..=half {
                    acc += plane[[r, mirror(c as isize + d, cols)]];
                }
                pass1[[r, c]] = acc;
            }
        }
        for r in 0..rows {
            for c in 0..cols {
                let mut acc = 0.0;
                for d in -half..=half {
                    acc += pass1[[mirror(r as isize + d, rows), c]];
                }
                out[[q, r * cols + c]] = acc * scale;
            }
        }
    }

    // No pure pixels: replace anything above the cap with the uniform mix.
    let uniform = 1.0 / p as f64;
    for i in 0..rows * cols {
        let max = (0..p).map(|q| out[[q, i]]).fold(0.0f64, f64::max);
        if max > spec.purity_cap {
            for q in 0..p {
                out[[q, i]] = uniform;
            }
        }
    }
    AbundanceMatrix::new(out)
}

/// Adds i.i.d. zero-mean Gaussian noise with variance
/// `mean(X^2) * 10^(-snr_db/10)`, clamping negatives to zero, and
/// reports the empirical SNR of the drawn noise. `None` disables noise.
pub fn add_noise_snr(
    x: &ObservationMatrix,
    snr_db: Option<f64>,
    seed: u64,
) -> Result<(ObservationMatrix, f64)> {
    let Some(snr) = snr_db else {
        return Ok((x.clone(), f64::INFINITY));
    };
    if !snr.is_finite() {
        return Err(UnmixError::Parameter(format!(
            "snr_db must be finite, got {snr}"
        )));
    }
    let data = x.data();
    let signal_power = data.iter().map(|v| v * v).sum::<f64>() / data.len() as f64;
    let noise_var = signal_power * 10f64.powf(-snr / 10.0);
    let sigma = noise_var.sqrt();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Array2::from_shape_fn(data.dim(), |_| sigma * rng.sample::<f64, _>(StandardNormal));
    let noise_power = noise.iter().map(|v| v * v).sum::<f64>() / noise.len() as f64;
    let achieved = 10.0 * (signal_power / noise_power).log10();

    let mut noisy = ObservationMatrix::from_data(data + &noise)?;
    if let Some((r, c)) = x.spatial_dims() {
        noisy = noisy.with_spatial_dims(r, c)?;
    }
    Ok((noisy, achieved))
}

/// Full generation pipeline: block abundances, low-pass mixing, the
/// linear forward model, then SNR-calibrated noise.
pub fn generate_scene(library: &SpectralLibrary, spec: &SceneSpec) -> Result<SyntheticScene> {
    spec.validate()?;
    let a_true = library.select(&spec.endmember_ids)?;
    let blocks = generate_block_abundances(spec)?;
    let s_true = apply_lowpass(&blocks, spec)?;
    let clean = synthesize_lmm(&a_true, &s_true, None)?
        .with_spatial_dims(spec.grid.0, spec.grid.1)?;
    let (x, achieved_snr_db) = add_noise_snr(&clean, spec.snr_db, derive_seed(spec.seed, 2))?;
    Ok(SyntheticScene {
        x,
        a_true,
        s_true,
        spec: spec.clone(),
        achieved_snr_db,
    })
}

/// Materials for the first benchmark scene (spectrally diverse).
pub const EXPERIMENT1_MATERIALS: [&str; 6] = [
    "Alunite",
    "Buddingtonite",
    "Calcite",
    "Chalcedony",
    "Dumortierite",
    "Nontronite",
];

/// Materials for the second benchmark scene (deliberately similar
/// signatures).
pub const EXPERIMENT2_MATERIALS: [&str; 8] = [
    "Kaolinite",
    "Gibbsite",
    "Lepidolite",
    "Montmorillonite",
    "Muscovite",
    "Goethite",
    "Hematite",
    "Limonite",
];

fn gaussian(w: f64, center: f64, width: f64) -> f64 {
    let d = (w - center) / width;
    (-0.5 * d * d).exp()
}

/// Built-in 224-band reflectance library over 0.4-2.5 um with fourteen
/// smooth mineral-like signatures: six spectrally diverse curves and
/// eight that share a continuum and differ only in small absorption
/// features.
pub fn demo_library() -> SpectralLibrary {
    let bands = 224;
    let wavelengths: Vec<f64> = (0..bands)
        .map(|b| 0.4 + 2.1 * b as f64 / (bands - 1) as f64)
        .collect();

    // (name, base, slope, features as (center, width, depth); positive
    // depth is an absorption dip, negative a reflectance bump)
    type Feature = (f64, f64, f64);
    let curves: Vec<(&str, f64, f64, Vec<Feature>)> = vec![
        // Diverse group: strongly contrasting continua and deep
        // features, like bright/dark end cases of real mineral sets.
        ("Alunite", 0.85, -0.05, vec![(1.45, 0.08, 0.25), (2.17, 0.05, 0.30), (0.95, 0.10, 0.10)]),
        ("Buddingtonite", 0.25, 0.55, vec![(2.12, 0.07, 0.20), (1.20, 0.15, -0.10)]),
        ("Calcite", 0.90, -0.55, vec![(2.34, 0.06, 0.25), (1.88, 0.09, 0.10)]),
        ("Chalcedony", 0.15, 0.10, vec![(0.65, 0.08, -0.30), (1.91, 0.10, 0.12)]),
        ("Dumortierite", 0.55, -0.35, vec![(0.58, 0.07, 0.25), (2.20, 0.15, 0.20), (1.10, 0.20, -0.25)]),
        ("Nontronite", 0.45, 0.30, vec![(0.95, 0.08, 0.30), (2.29, 0.06, 0.25), (1.60, 0.30, -0.15)]),
        // Similar group: common continuum, small distinct dips.
        ("Kaolinite", 0.60, 0.08, vec![(2.21, 0.04, 0.10), (1.40, 0.05, 0.05)]),
        ("Gibbsite", 0.60, 0.08, vec![(2.27, 0.04, 0.11), (1.55, 0.05, 0.04)]),
        ("Lepidolite", 0.60, 0.08, vec![(2.19, 0.05, 0.08), (1.41, 0.06, 0.06)]),
        ("Montmorillonite", 0.60, 0.08, vec![(2.21, 0.05, 0.12), (1.91, 0.05, 0.05)]),
        ("Muscovite", 0.60, 0.08, vec![(2.20, 0.04, 0.09), (2.35, 0.04, 0.06)]),
        ("Goethite", 0.58, 0.09, vec![(0.92, 0.08, 0.10), (2.21, 0.05, 0.06)]),
        ("Hematite", 0.58, 0.09, vec![(0.87, 0.07, 0.12), (2.23, 0.05, 0.05)]),
        ("Limonite", 0.58, 0.09, vec![(0.95, 0.09, 0.09), (2.24, 0.06, 0.07)]),
    ];

    let mut names = Vec::with_capacity(curves.len());
    let mut signatures = Array2::zeros((bands, curves.len()));
    for (m, (name, base, slope, features)) in curves.iter().enumerate() {
        names.push((*name).to_string());
        for (b, &w) in wavelengths.iter().enumerate() {
            let t = (w - 0.4) / 2.1;
            let mut v = base + slope * t;
            for &(center, width, depth) in features {
                v -= depth * gaussian(w, center, width);
            }
            signatures[[b, m]] = v.clamp(0.02, 0.98);
        }
    }

    SpectralLibrary::new(names, Array1::from(wavelengths), signatures)
        .expect("built-in library is well formed")
}
