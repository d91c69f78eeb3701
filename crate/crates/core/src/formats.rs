//! Binary file formats for features, alignments and trained models.
//!
//! - "MCEP": cepstrogram (header + float32 frames, row-major)
//! - "ALGN": aligned pair rows + JSON provenance sidecar
//! - "GMMV": GMM model (float64 weights / means / Cholesky factors / GV)
//! - "DNNV": DNN model (layer sizes, float32 parameters, normalization stats)
//!
//! Model files carry a JSON trailer with the training-set descriptor and the
//! feature configuration so `convert` can refuse mismatched inputs.

use crate::align::{AlignedPairSet, UttProvenance};
use crate::dnn::{DnnModel, Mlp};
use crate::error::{Error, Result};
use crate::gmm::GmmModel;
use crate::spectral::{AnalysisConfig, Cepstrogram};
use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

/// Schema versions, printed by `--version`.
pub const MCEP_VERSION: u32 = 1;
pub const ALGN_VERSION: u32 = 1;
pub const GMMV_VERSION: u32 = 1;
pub const DNNV_VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f32s(out: &mut Vec<u8>, vals: impl Iterator<Item = f64>) {
    for v in vals {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

fn put_f64s(out: &mut Vec<u8>, vals: impl Iterator<Item = f64>) {
    for v in vals {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8], what: &'static str) -> Self {
        Reader { buf, at: 0, what }
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.at + n > self.buf.len() {
            return Err(Error::Decode(format!("{}: truncated file", self.what)));
        }
        let s = &self.buf[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }
    fn magic(&mut self, expect: &[u8; 4]) -> Result<()> {
        let got = self.take(4)?;
        if got != expect {
            return Err(Error::UnsupportedFormat(format!(
                "{}: bad magic {:?}",
                self.what, got
            )));
        }
        Ok(())
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn version(&mut self, expect: u32) -> Result<()> {
        let v = self.u32()?;
        if v != expect {
            return Err(Error::UnsupportedFormat(format!(
                "{}: unsupported version {}",
                self.what, v
            )));
        }
        Ok(())
    }
    fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(4 * n)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(8 * n)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// Training descriptor + feature config trailer shared by model files.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelTrailer {
    trained_on: String,
    config: AnalysisConfig,
}

fn put_trailer(out: &mut Vec<u8>, trained_on: &str, config: &AnalysisConfig) -> Result<()> {
    let json = serde_json::to_vec(&ModelTrailer {
        trained_on: trained_on.to_string(),
        config: config.clone(),
    })
    .map_err(|e| Error::Internal(e.to_string()))?;
    put_u32(out, json.len() as u32);
    out.extend_from_slice(&json);
    Ok(())
}

fn read_trailer(r: &mut Reader) -> Result<ModelTrailer> {
    let len = r.u32()? as usize;
    let raw = r.take(len)?;
    serde_json::from_slice(raw).map_err(|e| Error::Decode(format!("model trailer: {}", e)))
}

// ---------------------------------------------------------------- MCEP

/// Write a cepstrogram. Header fields: version, T, order, hop, sample_rate.
pub fn write_mcep(c: &Cepstrogram, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(b"MCEP");
    put_u32(&mut out, MCEP_VERSION);
    put_u32(&mut out, c.num_frames() as u32);
    put_u32(&mut out, c.config.order as u32);
    put_u32(&mut out, c.config.hop as u32);
    put_u32(&mut out, c.config.sample_rate);
    for i in 0..c.num_frames() {
        put_f32s(&mut out, c.frames.row(i).iter().cloned());
    }
    write_atomic(path, &out)
}

/// Read a cepstrogram. Frame length, FFT size and warp factor are toolkit
/// constants and come from `AnalysisConfig::default()`.
pub fn read_mcep(path: &Path) -> Result<Cepstrogram> {
    let buf = std::fs::read(path)?;
    let mut r = Reader::new(&buf, "MCEP");
    r.magic(b"MCEP")?;
    r.version(MCEP_VERSION)?;
    let t = r.u32()? as usize;
    let order = r.u32()? as usize;
    let hop = r.u32()? as usize;
    let sample_rate = r.u32()?;
    let vals = r.f32s(t * order)?;
    let frames = DMatrix::from_row_slice(t, order, &vals);
    Ok(Cepstrogram {
        frames,
        config: AnalysisConfig {
            order,
            hop,
            sample_rate,
            ..AnalysisConfig::default()
        },
    })
}

// ---------------------------------------------------------------- ALGN

/// Write aligned pair rows plus a `<path>.json` provenance sidecar.
pub fn write_algn(p: &AlignedPairSet, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(b"ALGN");
    put_u32(&mut out, ALGN_VERSION);
    put_u32(&mut out, p.rows.nrows() as u32);
    put_u32(&mut out, p.rows.ncols() as u32);
    for i in 0..p.rows.nrows() {
        put_f32s(&mut out, p.rows.row(i).iter().cloned());
    }
    write_atomic(path, &out)?;
    #[derive(Serialize)]
    struct Sidecar<'a> {
        order: usize,
        utterances: &'a [UttProvenance],
    }
    let json = serde_json::to_vec_pretty(&Sidecar {
        order: p.order,
        utterances: &p.provenance,
    })
    .map_err(|e| Error::Internal(e.to_string()))?;
    write_atomic(&sidecar_path(path), &json)
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    std::path::PathBuf::from(s)
}

/// Read aligned pair rows and their provenance sidecar.
pub fn read_algn(path: &Path) -> Result<AlignedPairSet> {
    let buf = std::fs::read(path)?;
    let mut r = Reader::new(&buf, "ALGN");
    r.magic(b"ALGN")?;
    r.version(ALGN_VERSION)?;
    let n = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let vals = r.f32s(n * cols)?;
    let rows = DMatrix::from_row_slice(n, cols, &vals);

    #[derive(Deserialize)]
    struct Sidecar {
        order: usize,
        utterances: Vec<UttProvenance>,
    }
    let side: Sidecar = serde_json::from_slice(&std::fs::read(sidecar_path(path))?)
        .map_err(|e| Error::Decode(format!("ALGN sidecar: {}", e)))?;
    if side.order * 2 != cols {
        return Err(Error::Decode(
            "ALGN: sidecar order disagrees with columns".into(),
        ));
    }
    let total: usize = side.utterances.iter().map(|u| u.pairs.len()).sum();
    if total != n {
        return Err(Error::Decode(
            "ALGN: provenance rows disagree with data".into(),
        ));
    }
    Ok(AlignedPairSet {
        rows,
        provenance: side.utterances,
        order: side.order,
    })
}

// ---------------------------------------------------------------- GMMV

/// Write a GMM model: weights, means, covariance Cholesky factors, GV mean.
pub fn write_gmmv(m: &GmmModel, path: &Path) -> Result<()> {
    let k = m.weights.len();
    let dim = m.means.ncols();
    let mut out = Vec::new();
    out.extend_from_slice(b"GMMV");
    put_u32(&mut out, GMMV_VERSION);
    put_u32(&mut out, k as u32);
    put_u32(&mut out, dim as u32);
    put_f64s(&mut out, m.weights.iter().cloned());
    for c in 0..k {
        put_f64s(&mut out, m.means.row(c).iter().cloned());
    }
    for c in 0..k {
        let chol = Cholesky::new(m.covariances[c].clone())
            .ok_or_else(|| Error::Internal("covariance not positive definite".into()))?;
        let l = chol.l();
        for i in 0..dim {
            put_f64s(&mut out, (0..=i).map(|j| l[(i, j)]));
        }
    }
    put_f64s(&mut out, m.gv_mean.iter().cloned());
    put_trailer(&mut out, &m.trained_on, &m.config)?;
    write_atomic(path, &out)
}

/// Read a GMM model, reconstructing covariances from their factors.
pub fn read_gmmv(path: &Path) -> Result<GmmModel> {
    let buf = std::fs::read(path)?;
    let mut r = Reader::new(&buf, "GMMV");
    r.magic(b"GMMV")?;
    r.version(GMMV_VERSION)?;
    let k = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let weights = DVector::from_vec(r.f64s(k)?);
    let mut means = DMatrix::zeros(k, dim);
    for c in 0..k {
        let row = r.f64s(dim)?;
        for j in 0..dim {
            means[(c, j)] = row[j];
        }
    }
    let mut covariances = Vec::with_capacity(k);
    for _ in 0..k {
        let mut l = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            let row = r.f64s(i + 1)?;
            for j in 0..=i {
                l[(i, j)] = row[j];
            }
        }
        covariances.push(&l * l.transpose());
    }
    let static_dim = dim / 4;
    let gv_mean = DVector::from_vec(r.f64s(static_dim)?);
    let trailer = read_trailer(&mut r)?;
    Ok(GmmModel {
        weights,
        means,
        covariances,
        gv_mean,
        static_dim,
        trained_on: trailer.trained_on,
        config: trailer.config,
    })
}

// ---------------------------------------------------------------- DNNV

/// Write a DNN model: layer sizes, parameters, normalization statistics.
pub fn write_dnnv(m: &DnnModel, path: &Path) -> Result<()> {
    let mut sizes: Vec<usize> = vec![m.mlp.weights[0].ncols()];
    for w in &m.mlp.weights {
        sizes.push(w.nrows());
    }
    let mut out = Vec::new();
    out.extend_from_slice(b"DNNV");
    put_u32(&mut out, DNNV_VERSION);
    put_u32(&mut out, sizes.len() as u32);
    for s in &sizes {
        put_u32(&mut out, *s as u32);
    }
    for (w, b) in m.mlp.weights.iter().zip(&m.mlp.biases) {
        for i in 0..w.nrows() {
            put_f32s(&mut out, w.row(i).iter().cloned());
        }
        put_f32s(&mut out, b.iter().cloned());
    }
    put_f32s(&mut out, m.in_mean.iter().cloned());
    put_f32s(&mut out, m.in_std.iter().cloned());
    put_f32s(&mut out, m.out_mean.iter().cloned());
    put_f32s(&mut out, m.out_std.iter().cloned());
    put_trailer(&mut out, &m.trained_on, &m.config)?;
    write_atomic(path, &out)
}

/// Read a DNN model.
pub fn read_dnnv(path: &Path) -> Result<DnnModel> {
    let buf = std::fs::read(path)?;
    let mut r = Reader::new(&buf, "DNNV");
    r.magic(b"DNNV")?;
    r.version(DNNV_VERSION)?;
    let n_sizes = r.u32()? as usize;
    if n_sizes < 2 {
        return Err(Error::Decode("DNNV: need at least two layer sizes".into()));
    }
    let mut sizes = Vec::with_capacity(n_sizes);
    for _ in 0..n_sizes {
        sizes.push(r.u32()? as usize);
    }
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for l in 0..n_sizes - 1 {
        let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
        let w = r.f32s(fan_in * fan_out)?;
        weights.push(DMatrix::from_row_slice(fan_out, fan_in, &w));
        biases.push(DVector::from_vec(r.f32s(fan_out)?));
    }
    let d_in = sizes[0];
    let d_out = *sizes.last().unwrap();
    let in_mean = DVector::from_vec(r.f32s(d_in)?);
    let in_std = DVector::from_vec(r.f32s(d_in)?);
    let out_mean = DVector::from_vec(r.f32s(d_out)?);
    let out_std = DVector::from_vec(r.f32s(d_out)?);
    let trailer = read_trailer(&mut r)?;
    Ok(DnnModel {
        mlp: Mlp { weights, biases },
        in_mean,
        in_std,
        out_mean,
        out_std,
        trained_on: trailer.trained_on,
        config: trailer.config,
    })
}

// ---------------------------------------------------------------- dispatch

/// A trained conversion model of either kind.
pub enum ModelFile {
    Gmm(GmmModel),
    Dnn(DnnModel),
}

impl ModelFile {
    pub fn trained_on(&self) -> &str {
        match self {
            ModelFile::Gmm(m) => &m.trained_on,
            ModelFile::Dnn(m) => &m.trained_on,
        }
    }
    pub fn config(&self) -> &AnalysisConfig {
        match self {
            ModelFile::Gmm(m) => &m.config,
            ModelFile::Dnn(m) => &m.config,
        }
    }
}

/// Sniff the magic and load whichever model the file contains.
pub fn load_model(path: &Path) -> Result<ModelFile> {
    let mut magic = [0u8; 4];
    let mut f = std::fs::File::open(path)?;
    f.read_exact(&mut magic)
        .map_err(|_| Error::Decode("model file shorter than its magic".into()))?;
    match &magic {
        b"GMMV" => Ok(ModelFile::Gmm(read_gmmv(path)?)),
        b"DNNV" => Ok(ModelFile::Dnn(read_dnnv(path)?)),
        other => Err(Error::UnsupportedFormat(format!(
            "not a model file (magic {:?})",
            other
        ))),
    }
}

/// Write via a temp file + rename so readers never see a partial file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp~");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}
