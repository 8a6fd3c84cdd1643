//! File formats: raw array containers with a JSON header, ASCII pattern and
//! sparse-weight files, 8-bit PGM maps and CSV tables.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use num_complex::{Complex, Complex64};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridShape, SamplingPattern};
use crate::models::{CoilMaps, SensitivitySet, SupportMask};
use crate::weighting::{SparseEntry, SparseWeight, WeightFunction};

pub const ARRAY_FORMAT: &str = "kdd-array v1";
pub const PATTERN_MAGIC: &str = "kdd-pattern";
pub const SPARSE_MAGIC: &str = "kdd-sparse-w";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    Float32,
    Float64,
    Complex64,
    Complex128,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::Float32 => 4,
            Dtype::Float64 | Dtype::Complex64 => 8,
            Dtype::Complex128 => 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayHeader {
    #[serde(default = "default_format")]
    pub format: String,
    pub dims: Vec<usize>,
    pub dtype: Dtype,
    pub order: String,
    #[serde(default)]
    pub labels: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, serde_json::Value>,
}

fn default_format() -> String {
    ARRAY_FORMAT.to_string()
}

impl ArrayHeader {
    pub fn new(dims: &[usize], dtype: Dtype, labels: &[&str]) -> Self {
        ArrayHeader {
            format: default_format(),
            dims: dims.to_vec(),
            dtype,
            order: "row-major".into(),
            labels: labels.iter().map(|s| s.to_string()).collect(),
            meta: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArrayData {
    Float32(Vec<f32>),
    Float64(Vec<f64>),
    Complex64(Vec<Complex<f32>>),
    Complex128(Vec<Complex64>),
}

impl ArrayData {
    pub fn dtype(&self) -> Dtype {
        match self {
            ArrayData::Float32(_) => Dtype::Float32,
            ArrayData::Float64(_) => Dtype::Float64,
            ArrayData::Complex64(_) => Dtype::Complex64,
            ArrayData::Complex128(_) => Dtype::Complex128,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ArrayData::Float32(v) => v.len(),
            ArrayData::Float64(v) => v.len(),
            ArrayData::Complex64(v) => v.len(),
            ArrayData::Complex128(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_complex(&self) -> Vec<Complex64> {
        match self {
            ArrayData::Float32(v) => v.iter().map(|&x| Complex64::new(x as f64, 0.0)).collect(),
            ArrayData::Float64(v) => v.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
            ArrayData::Complex64(v) => v.iter().map(|x| Complex64::new(x.re as f64, x.im as f64)).collect(),
            ArrayData::Complex128(v) => v.clone(),
        }
    }

    /// Real payload; complex data must have zero imaginary parts.
    pub fn to_real(&self) -> Result<Vec<f64>> {
        match self {
            ArrayData::Float32(v) => Ok(v.iter().map(|&x| x as f64).collect()),
            ArrayData::Float64(v) => Ok(v.clone()),
            _ => {
                let c = self.to_complex();
                if c.iter().any(|v| v.im != 0.0) {
                    return Err(Error::Format("expected a real-valued array".into()));
                }
                Ok(c.iter().map(|v| v.re).collect())
            }
        }
    }

    fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.len() * self.dtype().size());
        match self {
            ArrayData::Float32(v) => v.iter().for_each(|x| out.extend(x.to_le_bytes())),
            ArrayData::Float64(v) => v.iter().for_each(|x| out.extend(x.to_le_bytes())),
            ArrayData::Complex64(v) => v.iter().for_each(|x| {
                out.extend(x.re.to_le_bytes());
                out.extend(x.im.to_le_bytes());
            }),
            ArrayData::Complex128(v) => v.iter().for_each(|x| {
                out.extend(x.re.to_le_bytes());
                out.extend(x.im.to_le_bytes());
            }),
        }
        out
    }

    fn from_bytes(dtype: Dtype, bytes: &[u8]) -> Self {
        let f32s = || bytes.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap()));
        let f64s = || bytes.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap()));
        match dtype {
            Dtype::Float32 => ArrayData::Float32(f32s().collect()),
            Dtype::Float64 => ArrayData::Float64(f64s().collect()),
            Dtype::Complex64 => {
                let v: Vec<f32> = f32s().collect();
                ArrayData::Complex64(v.chunks_exact(2).map(|p| Complex::new(p[0], p[1])).collect())
            }
            Dtype::Complex128 => {
                let v: Vec<f64> = f64s().collect();
                ArrayData::Complex128(v.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect())
            }
        }
    }
}

/// `<stem>.json` and `<stem>.raw` for a container stem; a trailing `.json`
/// or `.raw` on the given path is ignored.
pub fn container_paths(path: &Path) -> (PathBuf, PathBuf) {
    let stem = match path.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("raw") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let mut json = stem.clone().into_os_string();
    json.push(".json");
    let mut raw = stem.into_os_string();
    raw.push(".raw");
    (PathBuf::from(json), PathBuf::from(raw))
}

pub fn write_array(path: &Path, header: &ArrayHeader, data: &ArrayData) -> Result<()> {
    if header.dtype != data.dtype() {
        return Err(Error::Format(format!(
            "header dtype {:?} does not match payload {:?}",
            header.dtype,
            data.dtype()
        )));
    }
    if header.len() != data.len() {
        return Err(Error::mismatch(header.len(), data.len()));
    }
    let (json, raw) = container_paths(path);
    fs::write(&json, serde_json::to_string_pretty(header)?)?;
    fs::write(&raw, data.to_bytes())?;
    Ok(())
}

pub fn read_array(path: &Path) -> Result<(ArrayHeader, ArrayData)> {
    let (json, raw) = container_paths(path);
    let header: ArrayHeader = serde_json::from_str(&fs::read_to_string(&json)?)?;
    if header.format != ARRAY_FORMAT {
        return Err(Error::Format(format!("unsupported container format {:?}", header.format)));
    }
    if header.order != "row-major" {
        return Err(Error::Format(format!("unsupported order {:?}", header.order)));
    }
    if !header.labels.is_empty() && header.labels.len() != header.dims.len() {
        return Err(Error::Format("labels do not match dims".into()));
    }
    let bytes = fs::read(&raw)?;
    let want = header.len() * header.dtype.size();
    if bytes.len() != want {
        return Err(Error::Format(format!(
            "{} holds {} bytes, header implies {want}",
            raw.display(),
            bytes.len()
        )));
    }
    let data = ArrayData::from_bytes(header.dtype, &bytes);
    Ok((header, data))
}

fn spatial_labels(n: usize, readout: Option<usize>) -> Vec<String> {
    (0..n)
        .map(|i| if Some(i) == readout { "readout".to_string() } else { format!("r{i}") })
        .collect()
}

fn with_labels(dims: &[usize], dtype: Dtype, labels: Vec<String>) -> ArrayHeader {
    let mut h = ArrayHeader::new(dims, dtype, &[]);
    h.labels = labels;
    h
}

/// Sensitivities as `complex128` over `(t, l, c, spatial...)`.
pub fn write_sensitivities(path: &Path, sens: &SensitivitySet) -> Result<()> {
    let mut dims = vec![sens.frames(), sens.coeffs(), sens.coils()];
    dims.extend(sens.spatial_dims());
    let mut labels = vec!["t".to_string(), "l".into(), "c".into()];
    labels.extend(spatial_labels(sens.spatial_dims().len(), sens.readout_axis()));
    let header = with_labels(&dims, Dtype::Complex128, labels);
    write_array(path, &header, &ArrayData::Complex128(sens.values().to_vec()))
}

pub fn read_sensitivities(path: &Path) -> Result<SensitivitySet> {
    let (header, data) = read_array(path)?;
    if header.dims.len() < 4 {
        return Err(Error::Format("sensitivities need (t, l, c, spatial...) axes".into()));
    }
    let readout = header.labels.iter().skip(3).position(|l| l == "readout");
    SensitivitySet::new(
        &header.dims[3..],
        readout,
        header.dims[0],
        header.dims[1],
        header.dims[2],
        data.to_complex(),
    )
}

/// Coil maps as `complex128` over `(c, spatial...)`.
pub fn write_coils(path: &Path, coils: &CoilMaps) -> Result<()> {
    let mut dims = vec![coils.coils()];
    dims.extend(coils.dims());
    let mut labels = vec!["c".to_string()];
    labels.extend(spatial_labels(coils.dims().len(), None));
    let header = with_labels(&dims, Dtype::Complex128, labels);
    write_array(path, &header, &ArrayData::Complex128(coils.values().to_vec()))
}

pub fn read_coils(path: &Path) -> Result<CoilMaps> {
    let (header, data) = read_array(path)?;
    if header.dims.len() < 2 {
        return Err(Error::Format("coil maps need (c, spatial...) axes".into()));
    }
    CoilMaps::new(&header.dims[1..], header.dims[0], data.to_complex())
}

/// Masks as `float32` 0/1 over the spatial grid.
pub fn write_mask(path: &Path, mask: &SupportMask) -> Result<()> {
    let labels = spatial_labels(mask.dims().len(), None);
    let header = with_labels(mask.dims(), Dtype::Float32, labels);
    let data = mask.values().iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
    write_array(path, &header, &ArrayData::Float32(data))
}

pub fn read_mask(path: &Path) -> Result<SupportMask> {
    let (header, data) = read_array(path)?;
    let values = data.to_real()?.iter().map(|&v| v != 0.0).collect();
    SupportMask::new(&header.dims, values)
}

/// Weighting functions as `float64` over `(t, t', Δk...)`; the readout axis
/// and collapse flag are kept in the header.
pub fn write_weight(path: &Path, w: &WeightFunction) -> Result<()> {
    let mut dims = vec![w.frames(), w.frames()];
    dims.extend(w.dims());
    let mut labels = vec!["t".to_string(), "t2".into()];
    labels.extend(
        (0..w.dims().len())
            .map(|i| if Some(i) == w.readout_axis() { "dk-readout".to_string() } else { format!("dk{i}") }),
    );
    let mut header = with_labels(&dims, Dtype::Float64, labels);
    header.meta.insert("collapsed".into(), w.is_collapsed().into());
    write_array(path, &header, &ArrayData::Float64(w.values().to_vec()))
}

pub fn read_weight(path: &Path) -> Result<WeightFunction> {
    let (header, data) = read_array(path)?;
    if header.dims.len() < 3 || header.dims[0] != header.dims[1] {
        return Err(Error::Format("weights need (t, t', Δk...) axes".into()));
    }
    let readout = header.labels.iter().skip(2).position(|l| l == "dk-readout");
    WeightFunction::from_values(&header.dims[2..], readout, header.dims[0], data.to_real()?)
}

fn pattern_dims(shape: &GridShape) -> (usize, usize) {
    (shape.ny(), shape.nz())
}

/// `kdd-pattern v1 <Ny> <Nz> <T>` followed by `ky kz t count` per nonzero
/// cell, sorted by `(ky, kz, t)`. A one-dimensional grid has `Nz = 1`.
pub fn pattern_to_string(pattern: &SamplingPattern) -> String {
    let shape = pattern.shape();
    let (ny, nz) = pattern_dims(shape);
    let mut out = format!("{PATTERN_MAGIC} v1 {ny} {nz} {}\n", shape.frames());
    for k in 0..shape.len() {
        let (ky, kz) = shape.coords(k);
        for t in 0..shape.frames() {
            let c = pattern.count(k, t);
            if c > 0 {
                out.push_str(&format!("{ky} {kz} {t} {c}\n"));
            }
        }
    }
    out
}

fn parse_fields<const N: usize>(line: &str, lineno: usize) -> Result<[u64; N]> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != N {
        return Err(Error::Format(format!(
            "line {lineno}: expected {N} fields, found {}",
            fields.len()
        )));
    }
    let mut out = [0u64; N];
    for (o, f) in out.iter_mut().zip(fields) {
        *o = f
            .parse()
            .map_err(|_| Error::Format(format!("line {lineno}: bad integer {f:?}")))?;
    }
    Ok(out)
}

fn parse_header(line: Option<&str>, magic: &str, fields: usize) -> Result<Vec<usize>> {
    let line = line.ok_or_else(|| Error::Format("empty file".into()))?;
    let parts: Vec<&str> = line.split_whitespace().collect();
    if parts.len() != fields + 2 || parts[0] != magic || parts[1] != "v1" {
        return Err(Error::Format(format!(
            "expected header `{magic} v1` with {fields} sizes, found {line:?}"
        )));
    }
    parts[2..]
        .iter()
        .map(|p| p.parse().map_err(|_| Error::Format(format!("bad header value {p:?}"))))
        .collect()
}

fn shape_from(ny: usize, nz: usize, frames: usize) -> Result<GridShape> {
    if nz == 1 {
        GridShape::new(&[ny], frames)
    } else {
        GridShape::new(&[ny, nz], frames)
    }
}

pub fn pattern_from_str(text: &str) -> Result<SamplingPattern> {
    let mut lines = text.lines();
    let h = parse_header(lines.next(), PATTERN_MAGIC, 3)?;
    let shape = shape_from(h[0], h[1], h[2])?;
    let n = shape.len();
    let mut counts = vec![0u32; shape.cells()];
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let [ky, kz, t, c] = parse_fields::<4>(line, i + 2)?;
        let (ky, kz, t) = (ky as usize, kz as usize, t as usize);
        if ky >= h[0] || kz >= h[1] || t >= h[2] || c == 0 || c > u32::MAX as u64 {
            return Err(Error::Format(format!("line {}: entry out of range", i + 2)));
        }
        let cell = &mut counts[t * n + shape.index(ky, kz)];
        if *cell != 0 {
            return Err(Error::Format(format!("line {}: duplicate cell", i + 2)));
        }
        *cell = c as u32;
    }
    SamplingPattern::from_counts(shape, counts)
}

pub fn write_pattern(path: &Path, pattern: &SamplingPattern) -> Result<()> {
    fs::write(path, pattern_to_string(pattern))?;
    Ok(())
}

pub fn read_pattern(path: &Path) -> Result<SamplingPattern> {
    pattern_from_str(&fs::read_to_string(path)?)
}

/// `kdd-sparse-w v1 <Ny> <Nz> <T> <count>` followed by `dky dkz t t' value`
/// lines; values use Rust's shortest round-trip formatting.
pub fn write_sparse_weight(path: &Path, w: &SparseWeight) -> Result<()> {
    let shape = w.shape();
    let (ny, nz) = pattern_dims(shape);
    let mut out = format!(
        "{SPARSE_MAGIC} v1 {ny} {nz} {} {}\n",
        shape.frames(),
        w.support_len()
    );
    for e in w.entries() {
        let (dy, dz) = shape.coords(e.dk);
        out.push_str(&format!("{dy} {dz} {} {} {:?}\n", e.t, e.t2, e.value));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_sparse_weight(path: &Path) -> Result<SparseWeight> {
    let file = BufReader::new(fs::File::open(path)?);
    let mut lines = file.lines();
    let first = lines.next().transpose()?;
    let h = parse_header(first.as_deref(), SPARSE_MAGIC, 4)?;
    let shape = shape_from(h[0], h[1], h[2])?;
    let mut entries = Vec::with_capacity(h[3]);
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (ints, value) = line
            .rsplit_once(' ')
            .ok_or_else(|| Error::Format(format!("line {}: missing value", i + 2)))?;
        let [dy, dz, t, t2] = parse_fields::<4>(ints, i + 2)?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("line {}: bad value", i + 2)))?;
        if dy as usize >= h[0] || dz as usize >= h[1] {
            return Err(Error::Format(format!("line {}: offset out of range", i + 2)));
        }
        entries.push(SparseEntry {
            dk: shape.index(dy as usize, dz as usize),
            t: t as usize,
            t2: t2 as usize,
            value,
        });
    }
    if entries.len() != h[3] {
        return Err(Error::Format(format!(
            "header promises {} entries, found {}",
            h[3],
            entries.len()
        )));
    }
    SparseWeight::new(shape, entries)
}

/// Display window of an emitted map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapWindow {
    pub window: [f64; 2],
    pub min: f64,
    pub max: f64,
    pub rounding: String,
}

/// 8-bit gray level of `v` under a linear window, rounding half up.
pub fn gray_level(v: f64, lo: f64, hi: f64) -> u8 {
    let x = if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };
    let x = if x.is_nan() { 0.0 } else { x.clamp(0.0, 1.0) };
    (x * 255.0 + 0.5).floor() as u8
}

/// Writes a binary PGM (P5) of a 2D row-major array and a `<path>.json`
/// sidecar with the window and the data range. Without a window the data
/// range is used.
pub fn emit_map(values: &[f64], dims: &[usize], window: Option<[f64; 2]>, path: &Path) -> Result<MapWindow> {
    if dims.len() != 2 {
        return Err(Error::InvalidShape(format!("maps must be 2D, got {dims:?}")));
    }
    if values.len() != dims[0] * dims[1] {
        return Err(Error::mismatch(dims[0] * dims[1], values.len()));
    }
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let [lo, hi] = window.unwrap_or([min, max]);
    let mut file = fs::File::create(path)?;
    write!(file, "P5\n{} {}\n255\n", dims[1], dims[0])?;
    let pixels: Vec<u8> = values.iter().map(|&v| gray_level(v, lo, hi)).collect();
    file.write_all(&pixels)?;
    let info = MapWindow {
        window: [lo, hi],
        min,
        max,
        rounding: "round-half-up".into(),
    };
    let mut sidecar = path.as_os_str().to_owned();
    sidecar.push(".json");
    fs::write(PathBuf::from(sidecar), serde_json::to_string_pretty(&info)?)?;
    Ok(info)
}

/// Reads a binary 8-bit PGM as `(height, width, pixels)`.
pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = fs::read(path)?;
    let mut fields = Vec::new();
    let mut i = 0;
    while fields.len() < 4 {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err(Error::Format("truncated PGM header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..i]).to_string());
    }
    i += 1;
    if fields[0] != "P5" || fields[3] != "255" {
        return Err(Error::Format("only 8-bit binary PGM is supported".into()));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| Error::Format(format!("bad PGM size {s:?}")));
    let (w, h) = (parse(&fields[1])?, parse(&fields[2])?);
    let pixels = bytes.get(i..i + w * h).ok_or_else(|| Error::Format("truncated PGM".into()))?;
    Ok((h, w, pixels.to_vec()))
}

/// RFC 4180 CSV with a header row.
pub fn emit_csv<S: AsRef<str>>(path: &Path, header: &[&str], rows: &[Vec<S>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|s| s.as_ref()))?;
    }
    w.flush()?;
    Ok(())
}
