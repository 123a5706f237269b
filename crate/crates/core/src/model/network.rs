use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{layer_name, uniform, DecoderLayer, EncoderLayer, Linear};
use super::{spatial_encoding, FramePrediction, ModelConfig, TrackQuery};
use crate::bbox::BoundingBox;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::numerics::{Graph, ParamId, ParamStore, Tensor, Var};

#[derive(Debug, Clone)]
struct Layout {
    backbone: Linear,
    temporal: ParamId,
    object_queries: ParamId,
    encoder: Vec<EncoderLayer>,
    decoder: Vec<DecoderLayer>,
    box_head: [Linear; 3],
    class_head: Linear,
}

/// Graph handles for one decoded frame.
#[derive(Debug, Clone)]
pub struct PredictionVars {
    /// `[N × d_model]` output of the last decoder layer.
    pub embeddings: Var,
    /// `[N × 4]` sigmoid-bounded `(cx, cy, w, h)`.
    pub boxes: Var,
    /// `[N × (n_classes + 1)]` softmax rows, background last.
    pub class_probs: Var,
    /// Head outputs of earlier decoder layers when auxiliary supervision is
    /// enabled, as `(boxes, class_probs)`.
    pub aux: Vec<(Var, Var)>,
    pub n_object: usize,
}

impl PredictionVars {
    pub fn to_prediction(&self, g: &Graph) -> FramePrediction {
        let boxes = g.value(self.boxes).chunks(4).map(BoundingBox::from_slice).collect();
        FramePrediction {
            embeddings: g.tensor(self.embeddings),
            boxes,
            class_probs: g.tensor(self.class_probs),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Model {
    cfg: ModelConfig,
    params: ParamStore,
    layout: Layout,
}

impl Model {
    /// Builds a model with weights drawn from a ChaCha8 stream seeded
    /// with `seed`.
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rng = &mut rng;
        let d = cfg.d_model;
        let mut store = ParamStore::default();
        let p2 = cfg.patch_size * cfg.patch_size;
        let backbone = Linear::register(&mut store, "backbone", p2, d, rng);
        let temporal = store.add("temporal", uniform(rng, &[2, d], 0.5));
        let object_queries = store.add("object_queries", uniform(rng, &[cfg.n_object_queries, d], 1.7));
        let encoder = (0..cfg.n_enc_layers)
            .map(|i| EncoderLayer::register(&mut store, &layer_name("enc", i), d, cfg.n_heads, cfg.ffn_dim, rng))
            .collect();
        let decoder = (0..cfg.n_dec_layers)
            .map(|i| DecoderLayer::register(&mut store, &layer_name("dec", i), d, cfg.n_heads, cfg.ffn_dim, rng))
            .collect();
        let box_head = [
            Linear::register(&mut store, "head.box.0", d, d, rng),
            Linear::register(&mut store, "head.box.1", d, d, rng),
            Linear::register(&mut store, "head.box.2", d, 4, rng),
        ];
        let class_head = Linear::register(&mut store, "head.cls", d, cfg.n_classes + 1, rng);
        Ok(Self {
            cfg,
            params: store,
            layout: Layout {
                backbone,
                temporal,
                object_queries,
                encoder,
                decoder,
                box_head,
                class_head,
            },
        })
    }

    /// Rebuilds a model from stored parameters. Every parameter the
    /// configuration expects must be present with the expected shape.
    pub fn from_params(cfg: ModelConfig, params: &ParamStore) -> Result<Self> {
        let mut model = Self::new(cfg, 0)?;
        if params.len() != model.params.len() {
            return Err(Error::Input(alloc::format!(
                "expected {} parameters, found {}",
                model.params.len(),
                params.len()
            )));
        }
        for id in model.params.ids().collect::<Vec<_>>() {
            let name = model.params.name(id);
            let src = params
                .find(name)
                .map(|i| params.get(i))
                .ok_or_else(|| Error::Input(alloc::format!("missing parameter {name}")))?;
            if src.shape() != model.params.get(id).shape() {
                return Err(Error::Input(alloc::format!(
                    "parameter {name} has shape {:?}, expected {:?}",
                    src.shape(),
                    model.params.get(id).shape()
                )));
            }
            *model.params.get_mut(id) = src.clone();
        }
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn temporal_id(&self) -> ParamId {
        self.layout.temporal
    }

    /// Embeds both frames into `2·(H/p)·(W/p)` tokens (previous frame
    /// first), adds spatial and temporal encodings and runs the encoder.
    pub fn encode(&self, g: &mut Graph, prev: &Image, curr: &Image) -> Result<Var> {
        if prev.width() != curr.width() || prev.height() != curr.height() {
            return Err(Error::Config("frames must share spatial dimensions".into()));
        }
        let p = self.cfg.patch_size;
        let pp = prev.patches(p)?;
        let pc = curr.patches(p)?;
        let per_frame = pp.rows();
        let (gh, gw) = (prev.height() / p, prev.width() / p);

        let a = g.constant(&pp);
        let b = g.constant(&pc);
        let stacked = g.concat_rows(&[a, b])?;
        let x = self.layout.backbone.forward(g, &self.params, stacked)?;

        let pe = spatial_encoding(gh, gw, self.cfg.d_model);
        let mut pe2 = pe.values().to_vec();
        pe2.extend_from_slice(pe.values());
        let pe2 = g.constant(&Tensor::matrix(2 * per_frame, self.cfg.d_model, pe2)?);
        let temporal = g.param(&self.params, self.layout.temporal);
        let frame_of: Vec<usize> = (0..2 * per_frame).map(|i| i / per_frame).collect();
        let te = g.gather_rows(temporal, &frame_of)?;
        let x = g.add(x, pe2)?;
        let mut x = g.add(x, te)?;
        for layer in &self.layout.encoder {
            x = layer.forward(g, &self.params, x)?;
        }
        Ok(x)
    }

    /// Decodes object queries jointly with optional `[N_track × d_model]`
    /// track queries against `memory`.
    pub fn decode(&self, g: &mut Graph, memory: Var, track_queries: Option<Var>) -> Result<PredictionVars> {
        let d = self.cfg.d_model;
        if g.shape(memory).len() != 2 || g.shape(memory)[1] != d {
            return Err(Error::shape("decode", "memory must be [tokens x d_model]"));
        }
        let obj = g.param(&self.params, self.layout.object_queries);
        let pos = match track_queries {
            Some(t) => {
                if g.shape(t).len() != 2 || g.shape(t)[1] != d {
                    return Err(Error::shape("decode", "track queries must be [N_track x d_model]"));
                }
                g.concat_rows(&[obj, t])?
            }
            None => obj,
        };
        let mut tgt = pos;
        let mut aux = Vec::new();
        let last = self.layout.decoder.len() - 1;
        for (i, layer) in self.layout.decoder.iter().enumerate() {
            tgt = layer.forward(g, &self.params, tgt, pos, memory)?;
            if self.cfg.aux_loss && i < last {
                aux.push(self.heads(g, tgt)?);
            }
        }
        let (boxes, class_probs) = self.heads(g, tgt)?;
        Ok(PredictionVars {
            embeddings: tgt,
            boxes,
            class_probs,
            aux,
            n_object: self.cfg.n_object_queries,
        })
    }

    fn heads(&self, g: &mut Graph, x: Var) -> Result<(Var, Var)> {
        let [h0, h1, h2] = &self.layout.box_head;
        let b = h0.forward(g, &self.params, x)?;
        let b = g.relu(b)?;
        let b = h1.forward(g, &self.params, b)?;
        let b = g.relu(b)?;
        let b = h2.forward(g, &self.params, b)?;
        let boxes = g.sigmoid(b)?;
        let logits = self.layout.class_head.forward(g, &self.params, x)?;
        let probs = g.softmax(logits, 1)?;
        Ok((boxes, probs))
    }

    /// Inference-only forward pass over one frame pair.
    pub fn predict(&self, prev: &Image, curr: &Image, track_queries: &[TrackQuery]) -> Result<FramePrediction> {
        let mut g = Graph::no_grad();
        let memory = self.encode(&mut g, prev, curr)?;
        let tq = track_query_var(&mut g, track_queries, self.cfg.d_model)?;
        let vars = self.decode(&mut g, memory, tq)?;
        Ok(vars.to_prediction(&g))
    }
}

/// Records track query embeddings as a constant `[N_track × d]` matrix.
pub(crate) fn track_query_var(g: &mut Graph, queries: &[TrackQuery], d: usize) -> Result<Option<Var>> {
    if queries.is_empty() {
        return Ok(None);
    }
    let mut flat = Vec::with_capacity(queries.len() * d);
    for q in queries {
        if q.embedding.len() != d {
            return Err(Error::shape("track query", alloc::format!("embedding width {} != {}", q.embedding.len(), d)));
        }
        flat.extend_from_slice(&q.embedding);
    }
    Ok(Some(g.constant(&Tensor::matrix(queries.len(), d, flat)?)))
}
