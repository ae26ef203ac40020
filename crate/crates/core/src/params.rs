//! Binary parameter container.
//!
//! Layout (all little-endian):
//!
//! ```text
//! magic "MBWRNNPF" | version u32 | gru u32 | affine u32 | bands u32
//! | rate u32 | conditioning u32 | tensor_count u32
//! tensor := dtype u8 | name_len u32 | name utf-8 | rank u32 | dims u32 x rank
//!         | payload
//! payload(f32)  := f32 x prod(dims)
//! payload(int8) := i8 x prod(dims) | f32 per-row scales x dims[0]
//! ```
//!
//! Float models store every tensor as f32; quantized models store weight
//! matrices as int8 with per-row scales while biases stay f32.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::mat::Matrix;
use crate::quant::QuantizedTensor;
use crate::wavernn::{FloatModel, MbWaveRnnConfig, PathParams, QuantizedModel};

pub const MAGIC: &[u8; 8] = b"MBWRNNPF";
pub const VERSION: u32 = 1;

const DTYPE_F32: u8 = 0;
const DTYPE_I8: u8 = 1;
const MAX_ELEMENTS: u64 = 1 << 30;

/// A parameter file holds either a float or an int8-quantized model.
#[derive(Debug, Clone)]
pub enum LoadedModel {
    Float(FloatModel<f32>),
    Quantized(QuantizedModel<f32>),
}

impl LoadedModel {
    pub fn config(&self) -> &MbWaveRnnConfig {
        match self {
            LoadedModel::Float(m) => m.config(),
            LoadedModel::Quantized(m) => m.config(),
        }
    }

    pub fn arithmetic(&self) -> &'static str {
        match self {
            LoadedModel::Float(_) => "float",
            LoadedModel::Quantized(_) => "int8",
        }
    }
}

fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_tensor_header(
    w: &mut impl Write,
    dtype: u8,
    name: &str,
    dims: &[u32],
) -> Result<()> {
    w.write_all(&[dtype])?;
    write_u32(w, name.len() as u32)?;
    w.write_all(name.as_bytes())?;
    write_u32(w, dims.len() as u32)?;
    for &d in dims {
        write_u32(w, d)?;
    }
    Ok(())
}

fn write_f32_matrix(w: &mut impl Write, name: &str, m: &Matrix<f32>) -> Result<()> {
    write_tensor_header(w, DTYPE_F32, name, &[m.rows() as u32, m.cols() as u32])?;
    for v in m.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn write_f32_vector(w: &mut impl Write, name: &str, v: &[f32]) -> Result<()> {
    write_tensor_header(w, DTYPE_F32, name, &[v.len() as u32])?;
    for x in v {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn write_i8_matrix(w: &mut impl Write, name: &str, t: &QuantizedTensor<f32>) -> Result<()> {
    write_tensor_header(w, DTYPE_I8, name, &[t.rows() as u32, t.cols() as u32])?;
    let bytes: Vec<u8> = t.data().iter().map(|&v| v as u8).collect();
    w.write_all(&bytes)?;
    for s in t.scales() {
        w.write_all(&s.to_le_bytes())?;
    }
    Ok(())
}

fn tensor_count(config: &MbWaveRnnConfig) -> u32 {
    // Per path: input, recurrent, gate_bias, affine, affine_bias + 2 per head.
    2 * (5 + 2 * config.num_bands as u32)
}

fn write_header(w: &mut impl Write, config: &MbWaveRnnConfig) -> Result<()> {
    w.write_all(MAGIC)?;
    write_u32(w, VERSION)?;
    write_u32(w, config.gru_size as u32)?;
    write_u32(w, config.affine_size as u32)?;
    write_u32(w, config.num_bands as u32)?;
    write_u32(w, config.sample_rate)?;
    write_u32(w, config.conditioning_dim as u32)?;
    write_u32(w, tensor_count(config))?;
    Ok(())
}

pub fn save_float(w: &mut impl Write, model: &FloatModel<f32>) -> Result<()> {
    write_header(w, model.config())?;
    for (prefix, path) in [("coarse", &model.coarse), ("fine", &model.fine)] {
        write_f32_matrix(w, &format!("{prefix}.input"), &path.input)?;
        write_f32_matrix(w, &format!("{prefix}.recurrent"), &path.recurrent)?;
        write_f32_vector(w, &format!("{prefix}.gate_bias"), &path.gate_bias)?;
        write_f32_matrix(w, &format!("{prefix}.affine"), &path.affine)?;
        write_f32_vector(w, &format!("{prefix}.affine_bias"), &path.affine_bias)?;
        for (k, head) in path.heads.iter().enumerate() {
            write_f32_matrix(w, &format!("{prefix}.head{k}.weight"), head)?;
            write_f32_vector(w, &format!("{prefix}.head{k}.bias"), &path.head_bias[k])?;
        }
    }
    Ok(())
}

pub fn save_quantized(w: &mut impl Write, model: &QuantizedModel<f32>) -> Result<()> {
    write_header(w, model.config())?;
    for (prefix, path) in [("coarse", &model.coarse), ("fine", &model.fine)] {
        write_i8_matrix(w, &format!("{prefix}.input"), &path.input)?;
        write_i8_matrix(w, &format!("{prefix}.recurrent"), &path.recurrent)?;
        write_f32_vector(w, &format!("{prefix}.gate_bias"), &path.gate_bias)?;
        write_i8_matrix(w, &format!("{prefix}.affine"), &path.affine)?;
        write_f32_vector(w, &format!("{prefix}.affine_bias"), &path.affine_bias)?;
        for (k, head) in path.heads.iter().enumerate() {
            write_i8_matrix(w, &format!("{prefix}.head{k}.weight"), head)?;
            write_f32_vector(w, &format!("{prefix}.head{k}.bias"), &path.head_bias[k])?;
        }
    }
    Ok(())
}

pub fn save_file(path: impl AsRef<Path>, model: &LoadedModel) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    match model {
        LoadedModel::Float(m) => save_float(&mut w, m)?,
        LoadedModel::Quantized(m) => save_quantized(&mut w, m)?,
    }
    w.flush()?;
    Ok(())
}

enum TensorData {
    F32(Vec<f32>),
    I8 { data: Vec<i8>, scales: Vec<f32> },
}

struct Tensor {
    dims: Vec<u32>,
    data: TensorData,
}

struct Reader<'a, R: Read> {
    inner: &'a mut R,
}

impl<'a, R: Read> Reader<'a, R> {
    fn u32(&mut self) -> Result<u32> {
        let mut buf = [0u8; 4];
        self.inner.read_exact(&mut buf)?;
        Ok(u32::from_le_bytes(buf))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let mut bytes = vec![0u8; n * 4];
        self.inner.read_exact(&mut bytes)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    fn tensor(&mut self) -> Result<(String, Tensor)> {
        let mut dtype = [0u8; 1];
        self.inner.read_exact(&mut dtype)?;
        let name_len = self.u32()? as usize;
        if name_len > 1024 {
            return Err(Error::ParamsFormat(format!("tensor name length {name_len}")));
        }
        let mut name_bytes = vec![0u8; name_len];
        self.inner.read_exact(&mut name_bytes)?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| Error::ParamsFormat("tensor name is not UTF-8".into()))?;
        let rank = self.u32()? as usize;
        if rank == 0 || rank > 2 {
            return Err(Error::ParamsFormat(format!("tensor '{name}': rank {rank}")));
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(self.u32()?);
        }
        let elements: u64 = dims.iter().map(|&d| d as u64).product();
        if elements == 0 || elements > MAX_ELEMENTS {
            return Err(Error::ParamsFormat(format!(
                "tensor '{name}': implausible element count {elements}"
            )));
        }
        let data = match dtype[0] {
            DTYPE_F32 => TensorData::F32(self.f32s(elements as usize)?),
            DTYPE_I8 => {
                if rank != 2 {
                    return Err(Error::ParamsFormat(format!(
                        "tensor '{name}': int8 tensors must be matrices"
                    )));
                }
                let mut raw = vec![0u8; elements as usize];
                self.inner.read_exact(&mut raw)?;
                let data = raw.iter().map(|&b| b as i8).collect();
                let scales = self.f32s(dims[0] as usize)?;
                TensorData::I8 { data, scales }
            }
            other => {
                return Err(Error::ParamsFormat(format!(
                    "tensor '{name}': unknown dtype {other}"
                )))
            }
        };
        Ok((name, Tensor { dims, data }))
    }
}

struct TensorSet {
    tensors: std::collections::HashMap<String, Tensor>,
}

impl TensorSet {
    fn take(&mut self, name: &str) -> Result<Tensor> {
        self.tensors
            .remove(name)
            .ok_or_else(|| Error::ParamsFormat(format!("missing tensor '{name}'")))
    }

    fn f32_matrix(&mut self, name: &str) -> Result<Matrix<f32>> {
        let t = self.take(name)?;
        match (t.dims.len(), t.data) {
            (2, TensorData::F32(data)) => {
                Matrix::from_vec(t.dims[0] as usize, t.dims[1] as usize, data)
            }
            _ => Err(Error::ParamsFormat(format!("tensor '{name}' is not an f32 matrix"))),
        }
    }

    fn f32_vector(&mut self, name: &str) -> Result<Vec<f32>> {
        let t = self.take(name)?;
        match (t.dims.len(), t.data) {
            (1, TensorData::F32(data)) => Ok(data),
            _ => Err(Error::ParamsFormat(format!("tensor '{name}' is not an f32 vector"))),
        }
    }

    fn i8_matrix(&mut self, name: &str) -> Result<QuantizedTensor<f32>> {
        let t = self.take(name)?;
        match (t.dims.len(), t.data) {
            (2, TensorData::I8 { data, scales }) => {
                QuantizedTensor::from_parts(t.dims[0] as usize, t.dims[1] as usize, data, scales)
            }
            _ => Err(Error::ParamsFormat(format!("tensor '{name}' is not an int8 matrix"))),
        }
    }

    fn matrix_dtype(&self, name: &str) -> Result<u8> {
        match self.tensors.get(name) {
            Some(t) => Ok(match t.data {
                TensorData::F32(_) => DTYPE_F32,
                TensorData::I8 { .. } => DTYPE_I8,
            }),
            None => Err(Error::ParamsFormat(format!("missing tensor '{name}'"))),
        }
    }
}

pub fn load(r: &mut impl Read) -> Result<LoadedModel> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::ParamsFormat("bad magic (not a parameter file)".into()));
    }
    let mut reader = Reader { inner: r };
    let version = reader.u32()?;
    if version != VERSION {
        return Err(Error::ParamsFormat(format!(
            "unsupported version {version} (expected {VERSION})"
        )));
    }
    let config = MbWaveRnnConfig {
        gru_size: reader.u32()? as usize,
        affine_size: reader.u32()? as usize,
        num_bands: reader.u32()? as usize,
        sample_rate: reader.u32()?,
        conditioning_dim: reader.u32()? as usize,
    };
    config.validate()?;
    let count = reader.u32()?;
    if count != tensor_count(&config) {
        return Err(Error::ParamsFormat(format!(
            "tensor count {count} does not match configuration (expected {})",
            tensor_count(&config)
        )));
    }
    let mut tensors = std::collections::HashMap::new();
    for _ in 0..count {
        let (name, tensor) = reader.tensor()?;
        if tensors.insert(name.clone(), tensor).is_some() {
            return Err(Error::ParamsFormat(format!("duplicate tensor '{name}'")));
        }
    }
    let mut set = TensorSet { tensors };

    let quantized = match set.matrix_dtype("coarse.input")? {
        DTYPE_I8 => true,
        _ => false,
    };

    if quantized {
        let mut path = |prefix: &str| -> Result<PathParams<f32, QuantizedTensor<f32>>> {
            Ok(PathParams {
                input: set.i8_matrix(&format!("{prefix}.input"))?,
                recurrent: set.i8_matrix(&format!("{prefix}.recurrent"))?,
                gate_bias: set.f32_vector(&format!("{prefix}.gate_bias"))?,
                affine: set.i8_matrix(&format!("{prefix}.affine"))?,
                affine_bias: set.f32_vector(&format!("{prefix}.affine_bias"))?,
                heads: (0..config.num_bands)
                    .map(|k| set.i8_matrix(&format!("{prefix}.head{k}.weight")))
                    .collect::<Result<_>>()?,
                head_bias: (0..config.num_bands)
                    .map(|k| set.f32_vector(&format!("{prefix}.head{k}.bias")))
                    .collect::<Result<_>>()?,
            })
        };
        let coarse = path("coarse")?;
        let fine = path("fine")?;
        Ok(LoadedModel::Quantized(QuantizedModel::from_parts(
            config, coarse, fine,
        )?))
    } else {
        let mut path = |prefix: &str| -> Result<PathParams<f32, Matrix<f32>>> {
            Ok(PathParams {
                input: set.f32_matrix(&format!("{prefix}.input"))?,
                recurrent: set.f32_matrix(&format!("{prefix}.recurrent"))?,
                gate_bias: set.f32_vector(&format!("{prefix}.gate_bias"))?,
                affine: set.f32_matrix(&format!("{prefix}.affine"))?,
                affine_bias: set.f32_vector(&format!("{prefix}.affine_bias"))?,
                heads: (0..config.num_bands)
                    .map(|k| set.f32_matrix(&format!("{prefix}.head{k}.weight")))
                    .collect::<Result<_>>()?,
                head_bias: (0..config.num_bands)
                    .map(|k| set.f32_vector(&format!("{prefix}.head{k}.bias")))
                    .collect::<Result<_>>()?,
            })
        };
        let coarse = path("coarse")?;
        let fine = path("fine")?;
        Ok(LoadedModel::Float(FloatModel::from_parts(
            config, coarse, fine,
        )?))
    }
}

pub fn load_file(path: impl AsRef<Path>) -> Result<LoadedModel> {
    let mut r = BufReader::new(File::open(path)?);
    load(&mut r)
}

/// Writes a seeded random float model; the reproducible starting point for
/// benchmarks when no trained weights are at hand.
pub fn write_random_file(
    path: impl AsRef<Path>,
    config: MbWaveRnnConfig,
    seed: u64,
) -> Result<()> {
    let model = FloatModel::<f32>::random(config, seed)?;
    save_file(path, &LoadedModel::Float(model))
}
