//! Loading and persistence: spectral libraries, raw hyperspectral
//! cubes, CSV matrices, and run artifacts.
//!
//! All numeric text output uses shortest round-trip formatting so saved
//! artifacts can be diffed and reloaded losslessly. CSV files are
//! UTF-8 with LF newlines and `.` decimals. Cube headers are flat
//! `key = value` text; payloads are raw binary described by the header.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use ndarray::{Array1, Array2};
use sha2::{Digest, Sha256};

use crate::error::{Result, UnmixError};
use crate::metrics::EvaluationReport;
use crate::model::{EndmemberMatrix, ObservationMatrix};
use crate::solver::{SolverConfig, TraceRecord, UnmixResult};

/// USGS-style deleted-channel marker; anything at or below this is
/// treated as missing and repaired by interpolation.
pub const SENTINEL_THRESHOLD: f64 = -1e30;

/// A named set of reference signatures on a common wavelength grid.
#[derive(Debug, Clone)]
pub struct SpectralLibrary {
    names: Vec<String>,
    wavelengths: Array1<f64>,
    signatures: Array2<f64>,
}

impl SpectralLibrary {
    pub fn new(names: Vec<String>, wavelengths: Array1<f64>, signatures: Array2<f64>) -> Result<Self> {
        if signatures.nrows() != wavelengths.len() {
            return Err(UnmixError::Shape(format!(
                "{} wavelengths for {} signature rows",
                wavelengths.len(),
                signatures.nrows()
            )));
        }
        if signatures.ncols() != names.len() {
            return Err(UnmixError::Shape(format!(
                "{} names for {} signatures",
                names.len(),
                signatures.ncols()
            )));
        }
        if names.is_empty() || wavelengths.is_empty() {
            return Err(UnmixError::Shape("library must be at least 1x1".into()));
        }
        for w in wavelengths.windows(2) {
            if !(w[1] > w[0]) {
                return Err(UnmixError::DegenerateData(
                    "wavelengths must be strictly increasing".into(),
                ));
            }
        }
        if signatures.iter().any(|v| !v.is_finite()) {
            return Err(UnmixError::DegenerateData(
                "library signatures must be finite; repair sentinels before construction".into(),
            ));
        }
        Ok(Self {
            names,
            wavelengths,
            signatures,
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn wavelengths(&self) -> &Array1<f64> {
        &self.wavelengths
    }

    pub fn signatures(&self) -> &Array2<f64> {
        &self.signatures
    }

    pub fn num_bands(&self) -> usize {
        self.signatures.nrows()
    }

    pub fn num_signatures(&self) -> usize {
        self.signatures.ncols()
    }

    pub fn signature_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Extracts the named signatures, in order, as an endmember matrix.
    pub fn select(&self, ids: &[String]) -> Result<EndmemberMatrix> {
        let mut a = Array2::zeros((self.num_bands(), ids.len()));
        for (col, id) in ids.iter().enumerate() {
            let idx = self.signature_index(id).ok_or_else(|| {
                UnmixError::Parameter(format!("unknown endmember id {id:?} in library"))
            })?;
            a.column_mut(col).assign(&self.signatures.column(idx));
        }
        EndmemberMatrix::new(a)?.with_labels(ids.to_vec())
    }

    /// Resamples every signature onto the target wavelength grid by
    /// nearest wavelength. Opt-in: band-count mismatches are otherwise
    /// an explicit error at comparison time.
    pub fn resample_nearest(&self, target: &[f64]) -> Result<SpectralLibrary> {
        if target.is_empty() {
            return Err(UnmixError::Parameter("empty target wavelength grid".into()));
        }
        let mut out = Array2::zeros((target.len(), self.num_signatures()));
        for (row, &t) in target.iter().enumerate() {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (i, &w) in self.wavelengths.iter().enumerate() {
                let d = (w - t).abs();
                if d < best_d {
                    best_d = d;
                    best = i;
                }
            }
            out.row_mut(row).assign(&self.signatures.row(best));
        }
        SpectralLibrary::new(
            self.names.clone(),
            Array1::from(target.to_vec()),
            out,
        )
    }
}

/// Supported on-disk library encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LibraryFormat {
    /// Directory of per-signature text files: header lines, then one
    /// reflectance per line. An optional `wavelengths.txt` supplies the
    /// grid; band indices are used otherwise.
    UsgsAscii,
    /// Single CSV: header row of names, first column wavelength.
    Csv,
}

pub fn load_spectral_library(path: &Path, format: LibraryFormat) -> Result<SpectralLibrary> {
    match format {
        LibraryFormat::Csv => load_library_csv(path),
        LibraryFormat::UsgsAscii => load_library_usgs_dir(path),
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> UnmixError {
    UnmixError::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn load_library_csv(path: &Path) -> Result<SpectralLibrary> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty library file"))?;
    let mut cells = header.split(',');
    cells.next(); // wavelength column label
    let names: Vec<String> = cells.map(|c| c.trim().to_string()).collect();
    if names.is_empty() {
        return Err(parse_err(path, 1, "header row names no signatures"));
    }

    let mut wavelengths = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != names.len() + 1 {
            return Err(parse_err(
                path,
                idx + 1,
                format!("expected {} cells, found {}", names.len() + 1, cells.len()),
            ));
        }
        let mut parsed = Vec::with_capacity(cells.len());
        for cell in &cells {
            let v: f64 = cell.trim().parse().map_err(|_| {
                parse_err(path, idx + 1, format!("cannot parse {:?} as a number", cell))
            })?;
            parsed.push(v);
        }
        wavelengths.push(parsed[0]);
        rows.push(parsed[1..].to_vec());
    }
    if rows.is_empty() {
        return Err(parse_err(path, 2, "no data rows"));
    }
    let mut signatures = Array2::zeros((rows.len(), names.len()));
    for (r, row) in rows.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            signatures[[r, c]] = v;
        }
    }
    for mut col in signatures.columns_mut() {
        let mut buf: Vec<f64> = col.to_vec();
        repair_sentinels(&mut buf, path)?;
        for (dst, src) in col.iter_mut().zip(buf) {
            *dst = src;
        }
    }
    SpectralLibrary::new(names, Array1::from(wavelengths), signatures)
}

pub fn save_spectral_library_csv(lib: &SpectralLibrary, path: &Path) -> Result<()> {
    let mut out = String::from("wavelength");
    for name in lib.names() {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (b, &w) in lib.wavelengths().iter().enumerate() {
        out.push_str(&format!("{w:e}"));
        for m in 0..lib.num_signatures() {
            out.push_str(&format!(",{:e}", lib.signatures()[[b, m]]));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Replaces deleted-channel sentinels by linear interpolation from the
/// nearest valid channels (nearest value at the edges).
fn repair_sentinels(values: &mut [f64], path: &Path) -> Result<()> {
    let valid: Vec<usize> = values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > SENTINEL_THRESHOLD)
        .map(|(i, _)| i)
        .collect();
    if valid.is_empty() {
        return Err(UnmixError::DegenerateData(format!(
            "signature in {} has only sentinel values",
            path.display()
        )));
    }
    if valid.len() == values.len() {
        return Ok(());
    }
    for i in 0..values.len() {
        if values[i] > SENTINEL_THRESHOLD {
            continue;
        }
        let below = valid.iter().rev().find(|&&j| j < i);
        let above = valid.iter().find(|&&j| j > i);
        values[i] = match (below, above) {
            (Some(&lo), Some(&hi)) => {
                let t = (i - lo) as f64 / (hi - lo) as f64;
                values[lo] + t * (values[hi] - values[lo])
            }
            (Some(&lo), None) => values[lo],
            (None, Some(&hi)) => values[hi],
            (None, None) => unreachable!(),
        };
    }
    Ok(())
}

fn load_library_usgs_dir(dir: &Path) -> Result<SpectralLibrary> {
    if !dir.is_dir() {
        return Err(UnmixError::Format {
            path: dir.display().to_string(),
            message: "usgs_ascii library path must be a directory".into(),
        });
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|e| e == "txt").unwrap_or(false))
        .collect();
    files.sort();

    let wavelengths_path = dir.join("wavelengths.txt");
    let mut names = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for file in &files {
        if *file == wavelengths_path {
            continue;
        }
        let (name, values) = read_signature_file(file)?;
        names.push(name);
        columns.push(values);
    }
    if columns.is_empty() {
        return Err(UnmixError::Format {
            path: dir.display().to_string(),
            message: "no signature files (*.txt) found".into(),
        });
    }
    let bands = columns[0].len();
    for (i, col) in columns.iter().enumerate() {
        if col.len() != bands {
            return Err(UnmixError::Format {
                path: dir.display().to_string(),
                message: format!(
                    "signature {:?} has {} channels, expected {bands}",
                    names[i],
                    col.len()
                ),
            });
        }
    }

    let wavelengths = if wavelengths_path.exists() {
        let (_, values) = read_signature_file(&wavelengths_path)?;
        if values.len() != bands {
            return Err(UnmixError::Format {
                path: wavelengths_path.display().to_string(),
                message: format!("{} wavelengths for {bands} channels", values.len()),
            });
        }
        Array1::from(values)
    } else {
        Array1::from_iter((0..bands).map(|b| b as f64))
    };

    let mut signatures = Array2::zeros((bands, columns.len()));
    for (c, col) in columns.iter().enumerate() {
        for (r, &v) in col.iter().enumerate() {
            signatures[[r, c]] = v;
        }
    }
    SpectralLibrary::new(names, wavelengths, signatures)
}

/// One signature per file: leading non-numeric header lines (the first
/// is the name; the file stem otherwise), then one value per line.
fn read_signature_file(path: &Path) -> Result<(String, Vec<f64>)> {
    let text = fs::read_to_string(path)?;
    let mut name: Option<String> = None;
    let mut values = Vec::new();
    let mut in_data = false;
    for (idx, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        match trimmed.parse::<f64>() {
            Ok(v) => {
                in_data = true;
                values.push(v);
            }
            Err(_) if !in_data => {
                if name.is_none() {
                    name = Some(trimmed.to_string());
                }
            }
            Err(_) => {
                return Err(parse_err(
                    path,
                    idx + 1,
                    format!("cannot parse {trimmed:?} as a number"),
                ));
            }
        }
    }
    if values.is_empty() {
        return Err(parse_err(path, 1, "no numeric channels found"));
    }
    repair_sentinels(&mut values, path)?;
    let name = name.unwrap_or_else(|| {
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "unnamed".into())
    });
    Ok((name, values))
}

/// Byte layout of a raw cube payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interleave {
    Bsq,
    Bil,
    Bip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CubeDataType {
    U8,
    I16,
    I32,
    F32,
    F64,
    U16,
}

impl CubeDataType {
    pub fn element_size(self) -> usize {
        match self {
            CubeDataType::U8 => 1,
            CubeDataType::I16 | CubeDataType::U16 => 2,
            CubeDataType::I32 | CubeDataType::F32 => 4,
            CubeDataType::F64 => 8,
        }
    }

    /// ENVI numeric type code.
    pub fn code(self) -> u8 {
        match self {
            CubeDataType::U8 => 1,
            CubeDataType::I16 => 2,
            CubeDataType::I32 => 3,
            CubeDataType::F32 => 4,
            CubeDataType::F64 => 5,
            CubeDataType::U16 => 12,
        }
    }

    fn from_token(tok: &str) -> Option<Self> {
        match tok.trim().to_ascii_lowercase().as_str() {
            "1" | "u8" => Some(CubeDataType::U8),
            "2" | "i16" => Some(CubeDataType::I16),
            "3" | "i32" => Some(CubeDataType::I32),
            "4" | "f32" => Some(CubeDataType::F32),
            "5" | "f64" => Some(CubeDataType::F64),
            "12" | "u16" => Some(CubeDataType::U16),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ByteOrder {
    Little,
    Big,
}

/// Raw cube metadata, `key = value` text on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CubeHeader {
    pub samples: usize,
    pub lines: usize,
    pub bands: usize,
    pub interleave: Interleave,
    pub data_type: CubeDataType,
    pub byte_order: ByteOrder,
}

impl CubeHeader {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut samples = None;
        let mut lines_count = None;
        let mut bands = None;
        let mut interleave = None;
        let mut data_type = None;
        let mut byte_order = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.eq_ignore_ascii_case("envi") || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                continue;
            };
            let key = key.trim().to_ascii_lowercase().replace(' ', "_");
            let value = value.trim();
            let bad = |msg: String| parse_err(origin, idx + 1, msg);
            match key.as_str() {
                "samples" => {
                    samples = Some(value.parse().map_err(|_| bad(format!("bad samples {value:?}")))?)
                }
                "lines" => {
                    lines_count = Some(value.parse().map_err(|_| bad(format!("bad lines {value:?}")))?)
                }
                "bands" => {
                    bands = Some(value.parse().map_err(|_| bad(format!("bad bands {value:?}")))?)
                }
                "interleave" => {
                    interleave = Some(match value.to_ascii_lowercase().as_str() {
                        "bsq" => Interleave::Bsq,
                        "bil" => Interleave::Bil,
                        "bip" => Interleave::Bip,
                        other => return Err(bad(format!("unknown interleave {other:?}"))),
                    })
                }
                "data_type" => {
                    data_type = Some(
                        CubeDataType::from_token(value)
                            .ok_or_else(|| bad(format!("unknown data type {value:?}")))?,
                    )
                }
                "byte_order" => {
                    byte_order = Some(match value.to_ascii_lowercase().as_str() {
                        "0" | "little" => ByteOrder::Little,
                        "1" | "big" => ByteOrder::Big,
                        other => return Err(bad(format!("unknown byte order {other:?}"))),
                    })
                }
                _ => {}
            }
        }
        let missing = |what: &str| UnmixError::Format {
            path: origin.display().to_string(),
            message: format!("missing header key {what:?}"),
        };
        Ok(CubeHeader {
            samples: samples.ok_or_else(|| missing("samples"))?,
            lines: lines_count.ok_or_else(|| missing("lines"))?,
            bands: bands.ok_or_else(|| missing("bands"))?,
            interleave: interleave.ok_or_else(|| missing("interleave"))?,
            data_type: data_type.ok_or_else(|| missing("data_type"))?,
            byte_order: byte_order.ok_or_else(|| missing("byte_order"))?,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let interleave = match self.interleave {
            Interleave::Bsq => "bsq",
            Interleave::Bil => "bil",
            Interleave::Bip => "bip",
        };
        let byte_order = match self.byte_order {
            ByteOrder::Little => 0,
            ByteOrder::Big => 1,
        };
        let text = format!(
            "samples = {}\nlines = {}\nbands = {}\ninterleave = {}\ndata_type = {}\nbyte_order = {}\n",
            self.samples,
            self.lines,
            self.bands,
            interleave,
            self.data_type.code(),
            byte_order
        );
        fs::write(path, text)?;
        Ok(())
    }

    pub fn num_elements(&self) -> usize {
        self.samples * self.lines * self.bands
    }
}

/// Reads an interleaved binary cube into band-major columns-as-pixels
/// layout, dropping the 0-based band indices listed in `band_mask`.
/// The spatial dimensions `(lines, samples)` are recorded on the result.
pub fn load_cube(
    header_path: &Path,
    data_path: &Path,
    band_mask: Option<&[usize]>,
) -> Result<ObservationMatrix> {
    let header = CubeHeader::read(header_path)?;
    let payload = fs::read(data_path)?;
    let expected = header.num_elements() * header.data_type.element_size();
    if payload.len() != expected {
        return Err(UnmixError::Format {
            path: data_path.display().to_string(),
            message: format!(
                "payload is {} bytes, header implies {expected} ({}x{}x{} {:?})",
                payload.len(),
                header.samples,
                header.lines,
                header.bands,
                header.data_type
            ),
        });
    }

    let values = decode_elements(&payload, header.data_type, header.byte_order);

    let mut drop = vec![false; header.bands];
    if let Some(mask) = band_mask {
        for &b in mask {
            if b >= header.bands {
                return Err(UnmixError::Parameter(format!(
                    "band mask index {b} out of range for {} bands",
                    header.bands
                )));
            }
            drop[b] = true;
        }
    }
    let kept: Vec<usize> = (0..header.bands).filter(|&b| !drop[b]).collect();
    if kept.is_empty() {
        return Err(UnmixError::Parameter("band mask removes every band".into()));
    }

    let (samples, lines, bands) = (header.samples, header.lines, header.bands);
    let n = samples * lines;
    let mut x = Array2::zeros((kept.len(), n));
    for (row, &b) in kept.iter().enumerate() {
        for line in 0..lines {
            for sample in 0..samples {
                let flat = match header.interleave {
                    Interleave::Bsq => b * n + line * samples + sample,
                    Interleave::Bil => line * (bands * samples) + b * samples + sample,
                    Interleave::Bip => (line * samples + sample) * bands + b,
                };
                x[[row, line * samples + sample]] = values[flat];
            }
        }
    }
    ObservationMatrix::from_data(x)?.with_spatial_dims(lines, samples)
}

fn decode_elements(payload: &[u8], dtype: CubeDataType, order: ByteOrder) -> Vec<f64> {
    let size = dtype.element_size();
    payload
        .chunks_exact(size)
        .map(|chunk| {
            let mut buf = [0u8; 8];
            buf[..size].copy_from_slice(chunk);
            match (dtype, order) {
                (CubeDataType::U8, _) => chunk[0] as f64,
                (CubeDataType::I16, ByteOrder::Little) => {
                    i16::from_le_bytes([chunk[0], chunk[1]]) as f64
                }
                (CubeDataType::I16, ByteOrder::Big) => {
                    i16::from_be_bytes([chunk[0], chunk[1]]) as f64
                }
                (CubeDataType::U16, ByteOrder::Little) => {
                    u16::from_le_bytes([chunk[0], chunk[1]]) as f64
                }
                (CubeDataType::U16, ByteOrder::Big) => {
                    u16::from_be_bytes([chunk[0], chunk[1]]) as f64
                }
                (CubeDataType::I32, ByteOrder::Little) => {
                    i32::from_le_bytes(chunk.try_into().unwrap()) as f64
                }
                (CubeDataType::I32, ByteOrder::Big) => {
                    i32::from_be_bytes(chunk.try_into().unwrap()) as f64
                }
                (CubeDataType::F32, ByteOrder::Little) => {
                    f32::from_le_bytes(chunk.try_into().unwrap()) as f64
                }
                (CubeDataType::F32, ByteOrder::Big) => {
                    f32::from_be_bytes(chunk.try_into().unwrap()) as f64
                }
                (CubeDataType::F64, ByteOrder::Little) => f64::from_le_bytes(buf),
                (CubeDataType::F64, ByteOrder::Big) => {
                    f64::from_be_bytes(chunk.try_into().unwrap())
                }
            }
        })
        .collect()
}

/// Band indices to drop, one per line; `#` starts a comment.
pub fn load_band_mask(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path)?;
    let mut mask = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let b: usize = line
            .parse()
            .map_err(|_| parse_err(path, idx + 1, format!("bad band index {line:?}")))?;
        mask.push(b);
    }
    mask.sort_unstable();
    mask.dedup();
    Ok(mask)
}

/// Writes a dense matrix as plain CSV, one row per line, shortest
/// round-trip float formatting.
pub fn save_matrix_csv(m: &Array2<f64>, path: &Path) -> Result<()> {
    let mut out = String::new();
    for row in m.rows() {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&format!("{v:e}"));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    let text = fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for cell in line.split(',') {
            let v: f64 = cell.trim().parse().map_err(|_| {
                parse_err(path, idx + 1, format!("cannot parse {cell:?} as a number"))
            })?;
            row.push(v);
        }
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(parse_err(
                    path,
                    idx + 1,
                    format!(
                        "ragged row {}: {} cells, expected {}",
                        rows.len() + 1,
                        row.len(),
                        first.len()
                    ),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(UnmixError::Format {
            path: path.display().to_string(),
            message: "matrix file has no rows".into(),
        });
    }
    let mut m = Array2::zeros((rows.len(), rows[0].len()));
    for (r, row) in rows.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            m[[r, c]] = v;
        }
    }
    Ok(m)
}

/// Per-iteration convergence data: `t,lambda,residual_fro,fit,sparsity,graph_term`.
pub fn write_trace_csv<W: Write>(trace: &[TraceRecord], mut out: W) -> Result<()> {
    writeln!(out, "t,lambda,residual_fro,fit,sparsity,graph_term")?;
    for rec in trace {
        writeln!(
            out,
            "{},{:e},{:e},{:e},{:e},{:e}",
            rec.iteration, rec.lambda, rec.residual_fro, rec.fit, rec.sparsity, rec.graph_term
        )?;
    }
    Ok(())
}

/// Flat key-value serialization of an evaluation report.
pub fn save_report(report: &EvaluationReport, path: &Path) -> Result<()> {
    let join = |values: &[f64]| {
        values
            .iter()
            .map(|v| format!("{v:e}"))
            .collect::<Vec<_>>()
            .join(",")
    };
    let perm = report
        .permutation
        .iter()
        .map(|p| p.to_string())
        .collect::<Vec<_>>()
        .join(",");
    let text = format!(
        "rms_sad = {:e}\nrms_aad = {:e}\npermutation = {}\nper_endmember_sad = {}\nexcluded_pixels = {}\n",
        report.rms_sad,
        report.rms_aad,
        perm,
        join(&report.per_endmember_sad),
        report.excluded_pixels
    );
    fs::write(path, text)?;
    Ok(())
}

/// SHA-256 digest of a matrix (dimensions plus little-endian payload),
/// used to pin run inputs in manifests.
pub fn matrix_digest(m: &Array2<f64>) -> String {
    let mut hasher = Sha256::new();
    hasher.update((m.nrows() as u64).to_le_bytes());
    hasher.update((m.ncols() as u64).to_le_bytes());
    for v in m.iter() {
        hasher.update(v.to_le_bytes());
    }
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(7 + digest.len() * 2);
    hex.push_str("sha256:");
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}

/// Writes `A.csv`, `S.csv`, `trace.csv`, the optional evaluation
/// report, and a `manifest.txt` capturing the full solver
/// configuration, seed, and input digest. Returns the manifest path.
pub fn save_result(
    result: &UnmixResult,
    report: Option<&EvaluationReport>,
    cfg: &SolverConfig,
    init_method: &str,
    input_digest: &str,
    dir: &Path,
) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    save_matrix_csv(result.endmembers.data(), &dir.join("A.csv"))?;
    save_matrix_csv(result.abundances.data(), &dir.join("S.csv"))?;
    let mut trace_file = fs::File::create(dir.join("trace.csv"))?;
    write_trace_csv(&result.trace, &mut trace_file)?;
    if let Some(rep) = report {
        save_report(rep, &dir.join("report.txt"))?;
    }

    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let manifest = format!(
        "timestamp_unix = {timestamp}\n\
         variant = {}\n\
         lambda0 = {}\n\
         tau = {}\n\
         mu = {}\n\
         delta = {}\n\
         threshold = {}\n\
         relative_threshold = {}\n\
         max_iter = {}\n\
         knn_k = {}\n\
         sigma_policy = {}\n\
         epsilon = {}\n\
         seed = {}\n\
         init_method = {init_method}\n\
         input_digest_x = {input_digest}\n\
         iterations = {}\n\
         stop_reason = {}\n\
         final_residual = {:e}\n",
        cfg.variant,
        cfg.lambda0,
        cfg.tau,
        cfg.mu,
        cfg.delta,
        cfg.threshold,
        cfg.relative_threshold,
        cfg.max_iter,
        cfg.knn_k,
        cfg.sigma_policy,
        cfg.epsilon,
        cfg.seed,
        result.iterations(),
        result.stop_reason,
        result.final_residual()
    );
    let manifest_path = dir.join("manifest.txt");
    fs::write(&manifest_path, manifest)?;
    Ok(manifest_path)
}
