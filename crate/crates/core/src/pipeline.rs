//! Configuration files and the glue from files on disk to model inputs.

use std::path::Path;

use log::debug;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dataset::{make_qa_sentences, QaInstance};
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::features::{FeatureStore, VideoFeatures};
use crate::gradcheck::{compare_piecewise, GradCheckReport};
use crate::graph::{Graph, Var};
use crate::model::{
    build_loss, build_scores, init_params, Example, ModelConfig, ModelKind, NUM_CANDIDATES,
};
use crate::params::{Bound, ParamStore};
use crate::synth::SynthData;
use crate::tensor::Tensor;
use crate::train::{AdamPreset, TrainConfig};

/// Frames per video after sampling unless configured otherwise.
pub const DEFAULT_FRAMES: usize = 16;

/// Starting points a config file can refine.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Full-size model with the published optimization settings.
    #[default]
    Paper,
    /// Tiny dimensions for synthetic tasks and tests.
    Toy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Preset,
    /// Frames per video after sampling.
    pub frames: usize,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::Paper => Self {
                preset,
                frames: DEFAULT_FRAMES,
                train: TrainConfig {
                    adam_preset: AdamPreset::Paper,
                    ..TrainConfig::default()
                },
            },
            Preset::Toy => Self {
                preset,
                frames: 8,
                train: TrainConfig {
                    batch_size: 32,
                    max_epochs: 30,
                    model: ModelConfig::toy(),
                    ..TrainConfig::default()
                },
            },
        }
    }

    /// Reads a JSON object whose keys override the named `preset`.
    pub fn from_json(text: &str) -> Result<Self> {
        let user: Value = serde_json::from_str(text)?;
        if !user.is_object() {
            return Err(Error::Config("config must be a JSON object".into()));
        }
        let preset: Preset = match user.get("preset") {
            Some(p) => serde_json::from_value(p.clone())
                .map_err(|e| Error::Config(format!("unknown preset {p}: {e}")))?,
            None => Preset::default(),
        };
        let mut merged = serde_json::to_value(Self::preset(preset))?;
        merge(&mut merged, user);
        let cfg: Self = serde_json::from_value(merged).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&crate::io::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 {
            return Err(Error::Config("frames must be at least 1".into()));
        }
        self.train.validate()
    }
}

/// Overwrites `base` with `over`, recursing into objects.
fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Seed from the environment when no flag gave one.
pub fn env_seed() -> Option<u64> {
    std::env::var("FWQA_SEED").ok()?.trim().parse().ok()
}

/// Model input for one instance.
pub fn prepare_example(
    inst: &QaInstance,
    video: &VideoFeatures,
    table: &EmbeddingTable,
    frames: usize,
) -> Result<Example> {
    inst.validate()?;
    let sentences = make_qa_sentences(&inst.question, &inst.candidates)
        .iter()
        .map(|tokens| table.embed_tokens(tokens))
        .collect::<Result<Vec<Tensor>>>()?;
    Ok(Example {
        video: video.sampled(frames)?,
        sentences,
        gt_index: inst.gt_index,
    })
}

/// Model inputs for `instances`, reading features from `store`.
pub fn prepare_examples(
    instances: &[QaInstance],
    store: &mut FeatureStore,
    table: &EmbeddingTable,
    frames: usize,
) -> Result<Vec<Example>> {
    instances
        .iter()
        .map(|inst| prepare_example(inst, store.get(&inst.video_id)?, table, frames))
        .collect()
}

/// Model inputs straight from generated data, without touching disk.
pub fn synth_examples(data: &SynthData, frames: usize) -> Result<Vec<Example>> {
    data.instances
        .iter()
        .zip(&data.features)
        .map(|(inst, f)| prepare_example(inst, f, &data.embeddings, frames))
        .collect()
}

/// Checks the dimensions of the data against the model.
pub fn check_dims(examples: &[Example], model: &ModelConfig) -> Result<()> {
    for ex in examples {
        if ex.video.cols() != model.encoder.d_v {
            return Err(Error::Config(format!(
                "features have {} dimensions but the model expects {}",
                ex.video.cols(),
                model.encoder.d_v
            )));
        }
        if let Some(s) = ex.sentences.iter().find(|s| s.cols() != model.encoder.d_w) {
            return Err(Error::Config(format!(
                "embeddings have {} dimensions but the model expects {}",
                s.cols(),
                model.encoder.d_w
            )));
        }
    }
    Ok(())
}

/// Random example with `frames` frames and QA-sentences of `tokens` tokens.
pub fn random_example(
    cfg: &ModelConfig,
    frames: usize,
    tokens: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Example> {
    use rand::Rng;
    let video = Tensor::uniform(&[frames, cfg.encoder.d_v], 1.0, rng);
    let sentences = (0..NUM_CANDIDATES)
        .map(|_| Tensor::uniform(&[tokens, cfg.encoder.d_w], 1.0, rng))
        .collect();
    Ok(Example {
        video,
        sentences,
        gt_index: rng.random_range(0..NUM_CANDIDATES),
    })
}

/// Cross-entropy plus a fixed random weighting of the eight scores. The
/// weighting keeps video-side gradients away from the near-total cancellation
/// the softmax alone produces at initialization.
fn check_objective(
    g: &mut Graph,
    kind: ModelKind,
    bound: &Bound,
    ex: &Example,
    weights: &Tensor,
) -> Result<Var> {
    let scores = build_scores(g, kind, bound, &ex.video, &ex.sentences)?;
    let loss = build_loss(g, scores, ex.gt_index)?;
    let w = g.constant(weights.clone());
    let weighted = g.mul(scores, w)?;
    let weighted = g.sum(weighted);
    g.add(loss, weighted)
}

/// Finite-difference check of the training loss gradient with respect to
/// every parameter of a freshly initialized model.
pub fn check_model_gradients(
    kind: ModelKind,
    cfg: &ModelConfig,
    frames: usize,
    tokens: usize,
    seed: u64,
    h: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = init_params(kind, cfg, &mut rng)?;
    let ex = random_example(cfg, frames, tokens, &mut rng)?;
    let weights = Tensor::uniform(&[NUM_CANDIDATES], 1.0, &mut rng);

    let mut g = Graph::new();
    let bound = params.bind(&mut g, true);
    let root = check_objective(&mut g, kind, &bound, &ex, &weights)?;
    let analytic = bound.gradients(&g.backward(root)?).flatten();

    let mut probe: ParamStore = params.clone();
    let objective = |flat: &[f64]| {
        probe.assign_flat(flat).expect("same layout");
        let mut g = Graph::new();
        let bound = probe.bind(&mut g, false);
        let root = check_objective(&mut g, kind, &bound, &ex, &weights).expect("valid example");
        (g.value(root).item(), g.relu_pattern())
    };
    let report = compare_piecewise(objective, &params.flatten(), &analytic, h, 2, tol);
    if let Some(i) = report.worst_index {
        let mut offset = 0;
        for (name, t) in params.iter() {
            if i < offset + t.len() {
                debug!(
                    "{kind}: worst at {name}[{}], analytic {:.6e}",
                    i - offset,
                    analytic[i]
                );
                break;
            }
            offset += t.len();
        }
    }
    Ok(report)
}
