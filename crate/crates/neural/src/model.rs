use std::rc::Rc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tanner_core::{ExtendedTannerGraph, SyndromeBatch};
use tanner_tensor::{Activation, Adjacency, Tape, Tensor, Var};

use crate::config::ModelConfig;
use crate::error::NeuralError;
use crate::layers::{stack_forward, GdnLayer, Linear, SequenceKernel, TransformerLayer, INIT_STD};
use crate::params::{Bound, Init, ParamId, ParamStore};

type R<T> = Result<T, NeuralError>;

/// How the temporal layers see the cycle sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    /// One cycle at a time with a fixed-size state.
    Recurrent,
    /// All cycles at once.
    Parallel,
}

impl DecodeMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "recurrent" => Some(Self::Recurrent),
            "parallel" => Some(Self::Parallel),
            _ => None,
        }
    }
}

/// The pieces of an [`ExtendedTannerGraph`] the network consumes.
#[derive(Debug, Clone)]
pub struct GraphShape {
    pub num_data: usize,
    pub num_checks: usize,
    pub num_logicals: usize,
    /// Checks adjacent to each data qubit.
    pub data_adj: Adjacency,
    /// Data qubits in each logical representative.
    pub logical_adj: Adjacency,
    pub fingerprint: String,
}

impl GraphShape {
    pub fn of(graph: &ExtendedTannerGraph) -> Self {
        Self {
            num_data: graph.num_data,
            num_checks: graph.num_checks(),
            num_logicals: graph.num_logicals(),
            data_adj: Rc::new(graph.data_to_checks()),
            logical_adj: Rc::new(graph.logical_edges.clone()),
            fingerprint: graph.fingerprint(),
        }
    }
}

#[derive(Debug, Clone)]
struct Encoder {
    embed: ParamId,
    pe_check: ParamId,
    pe_data: ParamId,
    check: Vec<TransformerLayer>,
    data: Vec<TransformerLayer>,
    fuse: Vec<TransformerLayer>,
    norm: ParamId,
    proj: Linear,
}

#[derive(Debug, Clone)]
struct DecoderLayer {
    gdn: GdnLayer,
    spatial: TransformerLayer,
}

#[derive(Debug, Clone)]
struct Mixer {
    w1: Linear,
    w2: Linear,
    b: ParamId,
}

#[derive(Debug, Clone)]
struct Readout {
    proj: Linear,
    stack: Vec<TransformerLayer>,
    norm: ParamId,
    head: Linear,
}

/// Recurrent decoding state for a batch of shots.
#[derive(Debug, Clone)]
pub struct DecoderState {
    shots: usize,
    /// Per decoder layer: `shots * num_data * heads * dh * dh` values.
    pub layers: Vec<Vec<f64>>,
    /// Decoder output of the latest cycle, `[shots, num_data, decoder_dim]`.
    pub last: Option<Tensor>,
    pub cycles: usize,
}

/// Encoder, temporal decoder, final-cycle mixer and parity readout bound to
/// one Tanner graph.
#[derive(Clone)]
pub struct GraphQec {
    config: ModelConfig,
    graph: GraphShape,
    params: ParamStore,
    encoder: Encoder,
    decoder: Vec<DecoderLayer>,
    mixer: Mixer,
    readout: Readout,
}

/// Per-shot logical flip probabilities and hard decisions.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub shots: usize,
    pub num_logicals: usize,
    /// `shots x k`
    pub probabilities: Vec<f64>,
    /// `shots x k`; a bit is set iff its probability exceeds 0.5.
    pub bits: Vec<u8>,
}

impl GraphQec {
    pub fn new(config: ModelConfig, graph: &ExtendedTannerGraph, seed: u64) -> R<Self> {
        Self::with_shape(config, GraphShape::of(graph), seed)
    }

    pub fn with_shape(config: ModelConfig, graph: GraphShape, seed: u64) -> R<Self> {
        config.validate()?;
        if graph.num_logicals == 0 {
            return Err(NeuralError::NoLogicals);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut st = ParamStore::new();
        let (e, d, r, h, eps) = (
            config.encoder_dim,
            config.decoder_dim,
            config.readout_dim,
            config.num_heads,
            config.norm_eps,
        );
        let tn = Init::TruncNormal(INIT_STD);
        let stack = |st: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, layers: usize, dim: usize| {
            (0..layers)
                .map(|i| TransformerLayer::new(st, rng, &format!("{name}.{i}"), dim, config.ffn_dim(dim), h, eps))
                .collect::<Vec<_>>()
        };
        let encoder = Encoder {
            embed: st.add("encoder.embed".into(), &[2, e], tn, &mut rng),
            pe_check: st.add("encoder.pe_check".into(), &[graph.num_checks, e], tn, &mut rng),
            pe_data: st.add("encoder.pe_data".into(), &[graph.num_data, e], tn, &mut rng),
            check: stack(&mut st, &mut rng, "encoder.check", config.num_encoder_layers, e),
            data: stack(&mut st, &mut rng, "encoder.data", config.num_encoder_layers, e),
            fuse: stack(&mut st, &mut rng, "encoder.fuse", config.num_encoder_layers, e),
            norm: st.add("encoder.norm".into(), &[e], Init::Ones, &mut rng),
            proj: Linear::new(&mut st, &mut rng, "encoder.proj", e, d, true),
        };
        let decoder = (0..config.num_decoder_layers)
            .map(|i| DecoderLayer {
                gdn: GdnLayer::new(&mut st, &mut rng, &format!("decoder.{i}.gdn"), d, h, eps),
                spatial: TransformerLayer::new(&mut st, &mut rng, &format!("decoder.{i}.attn"), d, config.ffn_dim(d), h, eps),
            })
            .collect();
        let mixer = Mixer {
            w1: Linear::new(&mut st, &mut rng, "mix.w1", d, d, false),
            w2: Linear::new(&mut st, &mut rng, "mix.w2", d, d, false),
            b: st.add("mix.b".into(), &[d], Init::Zeros, &mut rng),
        };
        let readout = Readout {
            proj: Linear::new(&mut st, &mut rng, "readout.proj", d, r, true),
            stack: stack(&mut st, &mut rng, "readout.layers", config.num_readout_layers, r),
            norm: st.add("readout.norm".into(), &[r], Init::Ones, &mut rng),
            head: Linear::new(&mut st, &mut rng, "readout.head", r, 1, true),
        };
        Ok(Self { config, graph, params: st, encoder, decoder, mixer, readout })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn graph(&self) -> &GraphShape {
        &self.graph
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Zeroes the output projection so every probability is exactly 0.5.
    pub fn zero_head(&mut self) {
        for id in [Some(self.readout.head.weight()), self.readout.head.bias()].into_iter().flatten() {
            let shape = self.params.get(id).shape().to_vec();
            self.params.set(id, Tensor::zeros(&shape));
        }
    }

    /// Mixer parameters `(W1, W2, b)`, for inspection and tests.
    pub fn mixer_params(&self) -> (ParamId, ParamId, ParamId) {
        (self.mixer.w1.weight(), self.mixer.w2.weight(), self.mixer.b)
    }

    /// Encodes `slices` syndrome slices (`slices * num_checks` bits) into
    /// `[slices, num_data, decoder_dim]` features. Each slice is independent.
    pub fn encode(&self, p: &Bound, bits: &[u8], slices: usize) -> R<Var> {
        let enc = &self.encoder;
        let (x, v) = self.embed_slices(p, bits, slices)?;
        let x_out = stack_forward(&enc.check, p, x.add(p.var(enc.pe_check))?)?;
        let v_out = stack_forward(&enc.data, p, v.add(p.var(enc.pe_data))?)?;
        let out = v_out.add(&x_out.scatter_product(&self.graph.data_adj, Activation::Identity)?)?;
        let fused = stack_forward(&enc.fuse, p, out)?;
        enc.proj.apply(p, &fused.rmsnorm(p.var(enc.norm), self.config.norm_eps)?)
    }

    /// Check embeddings `[slices, num_checks, encoder_dim]` and the initial
    /// data features: for each data qubit, the product of `tanh` over its
    /// checks.
    pub fn embed_slices(&self, p: &Bound, bits: &[u8], slices: usize) -> R<(Var, Var)> {
        let ns = self.graph.num_checks;
        if bits.len() != slices * ns {
            return Err(NeuralError::Mismatch(format!(
                "{} syndrome bits for {slices} slices of {ns} checks",
                bits.len()
            )));
        }
        let idx: Vec<usize> = bits.iter().map(|&b| usize::from(b != 0)).collect();
        let x = p.var(self.encoder.embed).embedding(&idx, &[slices, ns])?;
        let v = x.scatter_product(&self.graph.data_adj, Activation::Tanh)?;
        Ok((x, v))
    }

    fn decode_all(&self, p: &Bound, x: Var, shots: usize, cycles: usize, kernel: SequenceKernel) -> R<Var> {
        let (n, d) = (self.graph.num_data, self.config.decoder_dim);
        // x: [shots * cycles, n, d] in (shot, cycle) order
        let mut x = x;
        for layer in &self.decoder {
            let seq = x
                .reshape(&[shots, cycles, n, d])?
                .permute(&[0, 2, 1, 3])?
                .reshape(&[shots * n, cycles, d])?;
            let seq = layer.gdn.forward_sequence(p, &seq, kernel)?;
            let spatial = seq
                .reshape(&[shots, n, cycles, d])?
                .permute(&[0, 2, 1, 3])?
                .reshape(&[shots * cycles, n, d])?;
            x = layer.spatial.forward(p, &spatial)?;
        }
        Ok(x)
    }

    /// Decoder output for every cycle, `[shots * cycles, num_data, decoder_dim]`.
    pub fn decode_sequence(&self, p: &Bound, encoded: &Var, shots: usize, cycles: usize, mode: DecodeMode) -> R<Var> {
        match mode {
            DecodeMode::Parallel => {
                let kernel = if encoded.tape().grad_enabled() {
                    SequenceKernel::Scan
                } else {
                    SequenceKernel::Closed
                };
                self.decode_all(p, encoded.clone(), shots, cycles, kernel)
            }
            DecodeMode::Recurrent => {
                let (n, d) = (self.graph.num_data, self.config.decoder_dim);
                let x = encoded.reshape(&[shots, cycles, n, d])?;
                let mut state = self.initial_state(shots);
                let mut outs = Vec::with_capacity(cycles);
                for t in 0..cycles {
                    let slice = x.slice(1, t, t + 1)?.reshape(&[shots, n, d])?;
                    outs.push(self.step(p, &slice, &mut state)?);
                }
                let refs: Vec<&Var> = outs.iter().collect();
                Ok(Var::concat(&refs, 1)?.reshape(&[shots * cycles, n, d])?)
            }
        }
    }

    pub fn initial_state(&self, shots: usize) -> DecoderState {
        let n = self.graph.num_data;
        DecoderState {
            shots,
            layers: self.decoder.iter().map(|l| vec![0.0; shots * n * l.gdn.state_len()]).collect(),
            last: None,
            cycles: 0,
        }
    }

    /// Advances the recurrent decoder by one cycle. `encoded` is
    /// `[shots, num_data, decoder_dim]`; returns the same shape.
    pub fn step(&self, p: &Bound, encoded: &Var, state: &mut DecoderState) -> R<Var> {
        let (n, d) = (self.graph.num_data, self.config.decoder_dim);
        let shots = state.shots;
        if encoded.shape() != [shots, n, d] {
            return Err(NeuralError::Mismatch(format!(
                "cycle features {:?} for state of {shots} shots",
                encoded.shape()
            )));
        }
        let mut x = encoded.clone();
        for (layer, s) in self.decoder.iter().zip(&mut state.layers) {
            let flat = x.reshape(&[shots * n, d])?;
            let y = layer.gdn.step(p, &flat, s)?.reshape(&[shots, n, d])?;
            x = layer.spatial.forward(p, &y)?;
        }
        state.last = Some(x.value().clone());
        state.cycles += 1;
        Ok(x)
    }

    /// `sigma = tanh(W1 v_prev + W2 v_last + b)`, `v = sigma v_prev + (1 - sigma) v_last`.
    pub fn mix_final(&self, p: &Bound, v_prev: &Var, v_last: &Var) -> R<Var> {
        if v_prev.shape() != v_last.shape() {
            return Err(NeuralError::Mismatch(format!(
                "mix_final inputs {:?} and {:?}",
                v_prev.shape(),
                v_last.shape()
            )));
        }
        let m = &self.mixer;
        let sigma = m
            .w1
            .apply(p, v_prev)?
            .add(&m.w2.apply(p, v_last)?)?
            .add(p.var(m.b))?
            .tanh()?;
        Ok(v_last.add(&sigma.mul(&v_prev.sub(v_last)?)?)?)
    }

    /// Readout features before the output head, `[slices, k, readout_dim]`:
    /// per logical, the product over its data qubits of `tanh(stack(v))`.
    pub fn logical_features(&self, p: &Bound, v: &Var) -> R<Var> {
        let x = self.readout_stack(p, v)?;
        Ok(x.scatter_product(&self.graph.logical_adj, Activation::Tanh)?)
    }

    /// Per-data-qubit readout features `[slices, num_data, readout_dim]`.
    pub fn readout_stack(&self, p: &Bound, v: &Var) -> R<Var> {
        let ro = &self.readout;
        stack_forward(&ro.stack, p, ro.proj.apply(p, v)?)
    }

    /// Per-logical flip probabilities, `[slices, k]`.
    pub fn readout(&self, p: &Bound, v: &Var) -> R<Var> {
        let slices = v.shape()[0];
        let l = self.logical_features(p, v)?;
        let l = l.rmsnorm(p.var(self.readout.norm), self.config.norm_eps)?;
        Ok(self
            .readout
            .head
            .apply(p, &l)?
            .sigmoid()?
            .reshape(&[slices, self.graph.num_logicals])?)
    }

    fn check_batch(&self, batch: &SyndromeBatch) -> R<()> {
        if batch.checks != self.graph.num_checks || batch.num_logicals != self.graph.num_logicals {
            return Err(NeuralError::Mismatch(format!(
                "batch has {} checks and {} logicals, graph has {} and {}",
                batch.checks, batch.num_logicals, self.graph.num_checks, self.graph.num_logicals
            )));
        }
        if batch.readout_checks != batch.checks {
            return Err(NeuralError::Mismatch("batch lacks readout syndromes".into()));
        }
        if batch.cycles == 0 {
            return Err(NeuralError::Mismatch("batch has no cycles".into()));
        }
        Ok(())
    }

    /// Per-cycle probabilities from pseudo readouts, `[shots * cycles, k]`
    /// in (shot, cycle) order. Cycle `t` mixes the decoder output at `t`
    /// with the encoded pseudo readout forked after `t`; the last pseudo
    /// readout is the real one.
    pub fn per_cycle_probabilities(&self, p: &Bound, batch: &SyndromeBatch) -> R<Var> {
        self.check_batch(batch)?;
        let pseudo = batch
            .pseudo
            .as_ref()
            .ok_or_else(|| NeuralError::Mismatch("training needs pseudo readouts".into()))?;
        let (b, t) = (batch.shots, batch.cycles);
        let mut bits = batch.syndrome.clone();
        bits.extend_from_slice(&pseudo.readout);
        let enc = self.encode(p, &bits, 2 * b * t)?;
        let cycles = enc.slice(0, 0, b * t)?;
        let readouts = enc.slice(0, b * t, 2 * b * t)?;
        let dec = self.decode_sequence(p, &cycles, b, t, DecodeMode::Parallel)?;
        let mixed = self.mix_final(p, &dec, &readouts)?;
        self.readout(p, &mixed)
    }

    /// Mean binary cross-entropy over cycles and logicals (weighted per
    /// cycle when `cycle_weights` is given).
    pub fn loss(&self, p: &Bound, batch: &SyndromeBatch, cycle_weights: Option<&[f64]>) -> R<Var> {
        let probs = self.per_cycle_probabilities(p, batch)?;
        let pseudo = batch.pseudo.as_ref().expect("checked above");
        let (b, t, k) = (batch.shots, batch.cycles, batch.num_logicals);
        let labels = Tensor::new(&[b * t, k], pseudo.labels.iter().map(|&x| f64::from(x)).collect())?;
        let weights = match cycle_weights {
            Some(w) if w.len() == t => Some(Tensor::from_fn(&[b * t, k], |i| w[(i / k) % t])),
            Some(w) => {
                return Err(NeuralError::Mismatch(format!("{} cycle weights for {t} cycles", w.len())));
            }
            None => None,
        };
        Ok(probs.weighted_bce(&labels, weights.as_ref())?)
    }

    /// Final-readout probabilities for every shot.
    pub fn predict(&self, batch: &SyndromeBatch, mode: DecodeMode) -> R<Predictions> {
        self.check_batch(batch)?;
        let tape = Tape::no_grad();
        let p = self.params.bind(&tape);
        let (b, t, ns) = (batch.shots, batch.cycles, batch.checks);
        let (n, d) = (self.graph.num_data, self.config.decoder_dim);
        let last = match mode {
            DecodeMode::Parallel => {
                let enc = self.encode(&p, &batch.syndrome, b * t)?;
                let dec = self.decode_sequence(&p, &enc, b, t, mode)?;
                dec.reshape(&[b, t, n, d])?.slice(1, t - 1, t)?.reshape(&[b, n, d])?
            }
            DecodeMode::Recurrent => {
                let mut state = self.initial_state(b);
                let mut cycle = vec![0u8; b * ns];
                let mut out = None;
                for ti in 0..t {
                    for s in 0..b {
                        cycle[s * ns..][..ns].copy_from_slice(batch.cycle(s, ti));
                    }
                    let enc = self.encode(&p, &cycle, b)?;
                    out = Some(self.step(&p, &enc, &mut state)?);
                }
                out.expect("at least one cycle")
            }
        };
        let readout = self.encode(&p, &batch.readout, b)?;
        let probs = self.readout(&p, &self.mix_final(&p, &last, &readout)?)?;
        let probabilities = probs.value().data().to_vec();
        let bits = probabilities.iter().map(|&x| u8::from(x > 0.5)).collect();
        Ok(Predictions {
            shots: b,
            num_logicals: self.graph.num_logicals,
            probabilities,
            bits,
        })
    }

    /// [`GraphQec::predict`] over a large batch in chunks of `chunk` shots.
    pub fn predict_chunked(&self, batch: &SyndromeBatch, mode: DecodeMode, chunk: usize) -> R<Predictions> {
        let chunk = chunk.max(1);
        let mut all = Predictions {
            shots: 0,
            num_logicals: self.graph.num_logicals,
            probabilities: Vec::new(),
            bits: Vec::new(),
        };
        for start in (0..batch.shots).step_by(chunk) {
            let idx: Vec<usize> = (start..(start + chunk).min(batch.shots)).collect();
            let part = self.predict(&batch.select(&idx), mode)?;
            all.shots += part.shots;
            all.probabilities.extend(part.probabilities);
            all.bits.extend(part.bits);
        }
        Ok(all)
    }
}
