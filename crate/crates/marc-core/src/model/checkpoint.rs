//! Flat binary checkpoints for the toy models.
//!
//! Layout, all integers little-endian u32:
//!
//! ```text
//! magic "MARC" | version | kind | meta_count, meta...
//! tensor_count | per tensor: rank, dims...
//! payload: little-endian f32 values, tensors concatenated in order
//! ```
//!
//! Meta words are the constructor arguments (text: vocab, embed_dim,
//! channels, hidden, classes; image: height, width, channels, classes).
//! Values are stored as f32 regardless of the in-memory scalar type;
//! [`ToyModel::quantize_to_f32`] rounds a model onto that grid so that
//! save/load is exactly idempotent.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::dataset::Sample;
use crate::model::image::ToyImageModel;
use crate::model::text::ToyTextModel;
use crate::model::train::Trainable;
use crate::model::Model;
use crate::num::Real;
use crate::tensor::FeatureTensor;

const MAGIC: &[u8; 4] = b"MARC";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Text,
    Image,
}

impl ModelKind {
    fn code(self) -> u32 {
        match self {
            ModelKind::Text => 0,
            ModelKind::Image => 1,
        }
    }

    fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(ModelKind::Text),
            1 => Ok(ModelKind::Image),
            other => Err(Error::MalformedData(format!("unknown model kind {other}"))),
        }
    }
}

/// Either toy classifier behind one type, so checkpoints and the CLI can
/// stay agnostic.
#[derive(Debug, Clone, PartialEq)]
pub enum ToyModel<T> {
    Text(ToyTextModel<T>),
    Image(ToyImageModel<T>),
}

impl<T: Real> ToyModel<T> {
    pub fn kind(&self) -> ModelKind {
        match self {
            ToyModel::Text(_) => ModelKind::Text,
            ToyModel::Image(_) => ModelKind::Image,
        }
    }

    pub fn as_text(&self) -> Option<&ToyTextModel<T>> {
        match self {
            ToyModel::Text(m) => Some(m),
            ToyModel::Image(_) => None,
        }
    }

    pub fn as_image(&self) -> Option<&ToyImageModel<T>> {
        match self {
            ToyModel::Image(m) => Some(m),
            ToyModel::Text(_) => None,
        }
    }

    /// Round every parameter to its nearest f32; afterwards a checkpoint
    /// round-trip reproduces the model bit-for-bit.
    pub fn quantize_to_f32(&mut self) {
        let flat: Vec<T> = self
            .params_flat()
            .into_iter()
            .map(|p| T::of(p.as_f64() as f32 as f64))
            .collect();
        self.set_params_flat(&flat).expect("same length");
    }

    fn meta(&self) -> Vec<u32> {
        match self {
            ToyModel::Text(m) => vec![
                m.vocab as u32,
                m.embed_dim as u32,
                m.channels as u32,
                m.hidden as u32,
                m.classes as u32,
            ],
            ToyModel::Image(m) => vec![
                m.height as u32,
                m.width as u32,
                m.channels as u32,
                m.classes as u32,
            ],
        }
    }

    fn tensor_shapes(&self) -> Vec<Vec<u32>> {
        match self {
            ToyModel::Text(m) => vec![
                vec![m.vocab as u32, m.embed_dim as u32],
                vec![m.channels as u32, 3, m.embed_dim as u32],
                vec![m.channels as u32],
                vec![m.hidden as u32, m.channels as u32],
                vec![m.hidden as u32],
                vec![m.classes as u32, m.hidden as u32],
                vec![m.classes as u32],
            ],
            ToyModel::Image(m) => {
                let pooled = (m.channels * (m.height / 2) * (m.width / 2)) as u32;
                vec![
                    vec![m.channels as u32, 3, 3],
                    vec![m.channels as u32],
                    vec![m.classes as u32, pooled],
                    vec![m.classes as u32],
                ]
            }
        }
    }
}

impl<T: Real> Model<T> for ToyModel<T> {
    fn feature_dim(&self) -> usize {
        match self {
            ToyModel::Text(m) => m.feature_dim(),
            ToyModel::Image(m) => m.feature_dim(),
        }
    }

    fn num_classes(&self) -> usize {
        match self {
            ToyModel::Text(m) => m.num_classes(),
            ToyModel::Image(m) => m.num_classes(),
        }
    }

    fn forward(&self, input: &FeatureTensor<T>) -> Result<Vec<T>> {
        match self {
            ToyModel::Text(m) => m.forward(input),
            ToyModel::Image(m) => m.forward(input),
        }
    }

    fn vjp(&self, input: &FeatureTensor<T>, cotangent: &[T]) -> Result<FeatureTensor<T>> {
        match self {
            ToyModel::Text(m) => m.vjp(input, cotangent),
            ToyModel::Image(m) => m.vjp(input, cotangent),
        }
    }
}

impl<T: Real> Trainable<T> for ToyModel<T> {
    fn n_params(&self) -> usize {
        match self {
            ToyModel::Text(m) => m.n_params(),
            ToyModel::Image(m) => m.n_params(),
        }
    }

    fn params_flat(&self) -> Vec<T> {
        match self {
            ToyModel::Text(m) => m.params_flat(),
            ToyModel::Image(m) => m.params_flat(),
        }
    }

    fn set_params_flat(&mut self, flat: &[T]) -> Result<()> {
        match self {
            ToyModel::Text(m) => m.set_params_flat(flat),
            ToyModel::Image(m) => m.set_params_flat(flat),
        }
    }

    fn input_from_sample(&self, sample: &Sample) -> Result<FeatureTensor<T>> {
        match self {
            ToyModel::Text(m) => m.input_from_sample(sample),
            ToyModel::Image(m) => m.input_from_sample(sample),
        }
    }

    fn loss_and_param_grads(&self, sample: &Sample) -> Result<(T, Vec<T>)> {
        match self {
            ToyModel::Text(m) => m.loss_and_param_grads(sample),
            ToyModel::Image(m) => m.loss_and_param_grads(sample),
        }
    }
}

fn push_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

pub fn save_checkpoint<T: Real>(model: &ToyModel<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    push_u32(&mut buf, VERSION);
    push_u32(&mut buf, model.kind().code());
    let meta = model.meta();
    push_u32(&mut buf, meta.len() as u32);
    for m in meta {
        push_u32(&mut buf, m);
    }
    let shapes = model.tensor_shapes();
    push_u32(&mut buf, shapes.len() as u32);
    for shape in &shapes {
        push_u32(&mut buf, shape.len() as u32);
        for &d in shape {
            push_u32(&mut buf, d);
        }
    }
    for p in model.params_flat() {
        buf.extend_from_slice(&(p.as_f64() as f32).to_le_bytes());
    }
    fs::write(path, buf)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::MalformedData("checkpoint truncated".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32(&mut self) -> Result<f32> {
        let b = self.take(4)?;
        Ok(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn load_checkpoint<T: Real>(path: impl AsRef<Path>) -> Result<ToyModel<T>> {
    let bytes = fs::read(path)?;
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
    };
    if r.take(4)? != MAGIC {
        return Err(Error::MalformedData("bad checkpoint magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::MalformedData(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let kind = ModelKind::from_code(r.u32()?)?;
    let meta_count = r.u32()? as usize;
    let mut meta = Vec::with_capacity(meta_count);
    for _ in 0..meta_count {
        meta.push(r.u32()? as usize);
    }

    let mut model = match kind {
        ModelKind::Text => {
            if meta.len() != 5 {
                return Err(Error::MalformedData("text checkpoint needs 5 meta words".into()));
            }
            ToyModel::Text(ToyTextModel::new(meta[0], meta[1], meta[2], meta[3], meta[4], 0)?)
        }
        ModelKind::Image => {
            if meta.len() != 4 {
                return Err(Error::MalformedData("image checkpoint needs 4 meta words".into()));
            }
            ToyModel::Image(ToyImageModel::new(meta[0], meta[1], meta[2], meta[3], 0)?)
        }
    };

    let tensor_count = r.u32()? as usize;
    let expected_shapes = model.tensor_shapes();
    if tensor_count != expected_shapes.len() {
        return Err(Error::MalformedData(format!(
            "expected {} tensors, checkpoint lists {tensor_count}",
            expected_shapes.len()
        )));
    }
    let mut total = 0usize;
    for expected in &expected_shapes {
        let rank = r.u32()? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32()?);
        }
        if &dims != expected {
            return Err(Error::MalformedData(format!(
                "tensor shape {dims:?} does not match model layout {expected:?}"
            )));
        }
        total += dims.iter().product::<u32>() as usize;
    }
    if total != model.n_params() {
        return Err(Error::MalformedData("shape table is inconsistent".into()));
    }
    let mut flat = Vec::with_capacity(total);
    for _ in 0..total {
        flat.push(T::of(r.f32()? as f64));
    }
    if r.pos != bytes.len() {
        return Err(Error::MalformedData("trailing bytes after payload".into()));
    }
    if let ToyModel::Text(m) = &model {
        // the PAD row invariant must hold in the file itself
        let ed = m.embed_dim();
        if flat[..ed].iter().any(|&v| v != T::zero()) {
            return Err(Error::MalformedData(
                "checkpoint PAD embedding row is not zero".into(),
            ));
        }
    }
    model.set_params_flat(&flat)?;
    Ok(model)
}
