//! Binary checkpoint format.
//!
//! Layout: the magic `GQEC1`, a little-endian `u64` header length, a JSON
//! header, then every tensor as little-endian `f32` in header order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use tanner_core::ExtendedTannerGraph;
use tanner_tensor::Tensor;

use crate::config::ModelConfig;
use crate::error::NeuralError;
use crate::model::GraphQec;

pub const MAGIC: &[u8; 5] = b"GQEC1";

type R<T> = Result<T, NeuralError>;

/// Where the training data stream stood when the checkpoint was taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub step: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into the payload, in `f32` elements.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    fingerprint: String,
    step: u64,
    rng: RngState,
    tensors: Vec<TensorEntry>,
}

/// A model snapshot detached from its graph.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub config: ModelConfig,
    pub fingerprint: String,
    pub step: u64,
    pub rng: RngState,
    pub tensors: Vec<TensorEntry>,
    pub payload: Vec<f32>,
}

impl ModelCheckpoint {
    pub fn capture(model: &GraphQec, step: u64, seed: u64) -> Self {
        let params = model.params();
        let mut tensors = Vec::with_capacity(params.len());
        let mut payload = Vec::with_capacity(params.total());
        for id in params.ids() {
            let t = params.get(id);
            tensors.push(TensorEntry { name: params.name(id).to_string(), shape: t.shape().to_vec(), offset: payload.len() });
            payload.extend(t.data().iter().map(|&x| x as f32));
        }
        Self {
            config: model.config().clone(),
            fingerprint: model.graph().fingerprint.clone(),
            step,
            rng: RngState { seed, step },
            tensors,
            payload,
        }
    }

    pub fn write<W: Write>(&self, w: &mut W) -> R<()> {
        let header = Header {
            config: self.config.clone(),
            fingerprint: self.fingerprint.clone(),
            step: self.step,
            rng: self.rng,
            tensors: self.tensors.clone(),
        };
        let json = serde_json::to_vec(&header)?;
        w.write_all(MAGIC)?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        let mut buf = Vec::with_capacity(4 * self.payload.len());
        for x in &self.payload {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> R<Vec<u8>> {
        let mut out = Vec::new();
        self.write(&mut out)?;
        Ok(out)
    }

    pub fn read<Rd: Read>(r: &mut Rd) -> R<Self> {
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(NeuralError::Checkpoint("bad magic".into()));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let len = u64::from_le_bytes(len) as usize;
        let mut json = vec![0u8; len];
        r.read_exact(&mut json)?;
        let header: Header = serde_json::from_slice(&json)?;
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if rest.len() % 4 != 0 {
            return Err(NeuralError::Checkpoint("payload is not a whole number of f32".into()));
        }
        let payload: Vec<f32> = rest.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        let mut expected = 0;
        for t in &header.tensors {
            if t.offset != expected {
                return Err(NeuralError::Checkpoint(format!("tensor {} at offset {}, expected {expected}", t.name, t.offset)));
            }
            expected += t.shape.iter().product::<usize>();
        }
        if expected != payload.len() {
            return Err(NeuralError::Checkpoint(format!("payload holds {} values, header describes {expected}", payload.len())));
        }
        Ok(Self {
            config: header.config,
            fingerprint: header.fingerprint,
            step: header.step,
            rng: header.rng,
            tensors: header.tensors,
            payload,
        })
    }

    pub fn from_bytes(mut bytes: &[u8]) -> R<Self> {
        Self::read(&mut bytes)
    }

    pub fn save(&self, path: &Path) -> R<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> R<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Rebuilds the model on `graph`, which must match the saved fingerprint.
    pub fn into_model(&self, graph: &ExtendedTannerGraph) -> R<GraphQec> {
        let found = graph.fingerprint();
        if found != self.fingerprint {
            return Err(NeuralError::Fingerprint { expected: self.fingerprint.clone(), found });
        }
        let mut model = GraphQec::new(self.config.clone(), graph, 0)?;
        let params = model.params_mut();
        if params.len() != self.tensors.len() {
            return Err(NeuralError::Checkpoint(format!(
                "checkpoint has {} tensors, model has {}",
                self.tensors.len(),
                params.len()
            )));
        }
        for (id, entry) in params.ids().collect::<Vec<_>>().into_iter().zip(&self.tensors) {
            if params.name(id) != entry.name || params.get(id).shape() != entry.shape.as_slice() {
                return Err(NeuralError::Checkpoint(format!(
                    "tensor {} {:?} does not match model tensor {} {:?}",
                    entry.name,
                    entry.shape,
                    params.name(id),
                    params.get(id).shape()
                )));
            }
            let n: usize = entry.shape.iter().product();
            let data = self.payload[entry.offset..entry.offset + n].iter().map(|&x| x as f64).collect();
            params.set(id, Tensor::new(&entry.shape, data)?);
        }
        Ok(model)
    }
}
