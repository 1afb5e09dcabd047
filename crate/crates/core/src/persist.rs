//! Model files: a JSON header followed by a little-endian `f64` blob.
//!
//! ```text
//! offset  size  content
//! 0       8     magic "C1DMODEL"
//! 8       4     format version, u32 LE (currently 1)
//! 12      8     header length H in bytes, u64 LE
//! 20      H     UTF-8 JSON header
//! 20+H    8·N   every tensor's data in header order, f64 LE
//! ```
//!
//! The header has the fields `kind`, `tensors` (a list of `{name, shape}`)
//! and `metadata` (kind-specific). `N` is the total element count.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::autoencoder::{AutoencoderConfig, TrainedAutoencoder};
use crate::dataset::{ChannelStats, TargetMode};
use crate::error::{Error, Result};
use crate::forecaster::{ForecastModelBundle, Forecaster, LstmParameters};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"C1DMODEL";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header<M> {
    kind: String,
    tensors: Vec<TensorEntry>,
    metadata: M,
}

pub fn write_model<W: Write, M: Serialize>(
    mut out: W,
    kind: &str,
    metadata: &M,
    tensors: &[(String, &Tensor)],
) -> Result<()> {
    let header = Header {
        kind: kind.to_string(),
        tensors: tensors
            .iter()
            .map(|(n, t)| TensorEntry {
                name: n.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
        metadata,
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Format(format!("header encoding: {e}")))?;
    let mut buf = Vec::with_capacity(20 + json.len() + 8 * tensors.iter().map(|(_, t)| t.len()).sum::<usize>());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for (_, t) in tensors {
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.write_all(&buf).map_err(|e| Error::Format(format!("model write failed: {e}")))
}

/// Returns the metadata and the named tensors of a file of the expected `kind`.
pub fn read_model<R: Read, M: DeserializeOwned>(mut input: R, kind: &str) -> Result<(M, Vec<(String, Tensor)>)> {
    let mut bytes = Vec::new();
    input
        .read_to_end(&mut bytes)
        .map_err(|e| Error::Format(format!("model read failed: {e}")))?;
    let bad = |m: &str| Error::Format(m.to_string());
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(bad("not a model file (bad magic)"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Format(format!("unsupported model format version {version}")));
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(20..).ok_or_else(|| bad("truncated header"))?;
    if body.len() < hlen {
        return Err(bad("truncated header"));
    }
    let header: Header<M> =
        serde_json::from_slice(&body[..hlen]).map_err(|e| Error::Format(format!("model header: {e}")))?;
    if header.kind != kind {
        return Err(Error::Format(format!("expected a {kind} file, found {}", header.kind)));
    }
    let blob = &body[hlen..];
    let total: usize = header.tensors.iter().map(|t| t.shape.iter().product::<usize>()).sum();
    if blob.len() != 8 * total {
        return Err(Error::Format(format!(
            "parameter blob holds {} bytes, header describes {}",
            blob.len(),
            8 * total
        )));
    }
    let mut values = blob.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for entry in header.tensors {
        let n = entry.shape.iter().product();
        let data: Vec<f64> = values.by_ref().take(n).collect();
        tensors.push((entry.name, Tensor::new(entry.shape, data)?));
    }
    Ok((header.metadata, tensors))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct AutoencoderMeta {
    config: AutoencoderConfig,
    loss_history: Vec<f64>,
}

pub const AUTOENCODER_KIND: &str = "autoencoder";
pub const BUNDLE_KIND: &str = "forecast_bundle";

fn ae_tensors(ae: &TrainedAutoencoder) -> Vec<(String, &Tensor)> {
    ae.architecture()
        .param_names()
        .map(|n| format!("autoencoder.{n}"))
        .zip(&ae.params)
        .collect()
}

pub fn write_autoencoder<W: Write>(out: W, ae: &TrainedAutoencoder) -> Result<()> {
    let meta = AutoencoderMeta {
        config: ae.config.clone(),
        loss_history: ae.loss_history.clone(),
    };
    write_model(out, AUTOENCODER_KIND, &meta, &ae_tensors(ae))
}

pub fn read_autoencoder<R: Read>(input: R) -> Result<TrainedAutoencoder> {
    let (meta, tensors): (AutoencoderMeta, _) = read_model(input, AUTOENCODER_KIND)?;
    TrainedAutoencoder::from_parts(meta.config, tensors.into_iter().map(|(_, t)| t).collect(), meta.loss_history)
}

/// Bundle metadata plus caller-supplied run details (year, dates, channel names, ...).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleMeta<E> {
    pub autoencoder_config: AutoencoderConfig,
    pub autoencoder_loss_history: Vec<f64>,
    pub input_size: usize,
    pub hidden: usize,
    pub mode: TargetMode,
    pub normalization: Vec<ChannelStats>,
    pub target_stats: ChannelStats,
    pub clip_threshold: f64,
    pub extra: E,
}

pub fn write_bundle<W: Write, E: Serialize + Clone>(out: W, bundle: &ForecastModelBundle, extra: &E) -> Result<()> {
    let meta = BundleMeta {
        autoencoder_config: bundle.autoencoder.config.clone(),
        autoencoder_loss_history: bundle.autoencoder.loss_history.clone(),
        input_size: bundle.forecaster.lstm.input_size,
        hidden: bundle.forecaster.lstm.hidden,
        mode: bundle.mode,
        normalization: bundle.normalization.clone(),
        target_stats: bundle.target_stats,
        clip_threshold: bundle.clip_threshold,
        extra: extra.clone(),
    };
    let mut tensors = ae_tensors(&bundle.autoencoder);
    let names = ["w_g", "w_i", "w_f", "w_o", "b_g", "b_i", "b_f", "b_o", "head_w", "head_b"];
    tensors.extend(names.iter().map(|n| format!("forecaster.{n}")).zip(bundle.forecaster.tensors()));
    write_model(out, BUNDLE_KIND, &meta, &tensors)
}

pub fn read_bundle<R: Read, E: DeserializeOwned>(input: R) -> Result<(ForecastModelBundle, E)> {
    let (meta, tensors): (BundleMeta<E>, _) = read_model(input, BUNDLE_KIND)?;
    let mut tensors: Vec<Tensor> = tensors.into_iter().map(|(_, t)| t).collect();
    if tensors.len() < 10 {
        return Err(Error::Format("bundle is missing forecaster tensors".into()));
    }
    let f: Vec<Tensor> = tensors.split_off(tensors.len() - 10);
    let autoencoder = TrainedAutoencoder::from_parts(meta.autoencoder_config, tensors, meta.autoencoder_loss_history)?;
    let mut it = f.into_iter();
    let mut next = || it.next().expect("ten tensors");
    let lstm = LstmParameters {
        input_size: meta.input_size,
        hidden: meta.hidden,
        weights: [next(), next(), next(), next()],
        biases: [next(), next(), next(), next()],
    };
    let forecaster = Forecaster {
        lstm,
        head_weight: next(),
        head_bias: next(),
    };
    let bundle = ForecastModelBundle {
        autoencoder,
        forecaster,
        mode: meta.mode,
        normalization: meta.normalization,
        target_stats: meta.target_stats,
        clip_threshold: meta.clip_threshold,
    };
    bundle.validate().map_err(|e| Error::Format(format!("inconsistent bundle: {e}")))?;
    Ok((bundle, meta.extra))
}

pub fn save_bundle<E: Serialize + Clone>(path: &Path, bundle: &ForecastModelBundle, extra: &E) -> Result<()> {
    let mut buf = Vec::new();
    write_bundle(&mut buf, bundle, extra)?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_bundle<E: DeserializeOwned>(path: &Path) -> Result<(ForecastModelBundle, E)> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_bundle(std::io::BufReader::new(f))
}
