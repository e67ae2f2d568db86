//! The scoring models: re-watcher, re-reader, forgettable-watcher and the
//! straightforward baseline.
//!
//! Every model maps one video and one QA-sentence (question tokens followed by
//! one candidate's tokens) to a scalar goodness score. Eight scores go through
//! a softmax and the most probable candidate is the prediction.
//!
//! Re-watching, for each sentence token `i` with `r(0) = 0`:
//!
//! ```text
//! m(i,t) = tanh(W_vm ỹ_v(t) + W_rm r(i−1) + W_cm ỹ_c(i))
//! s(i,·) = softmax_t(W_msᵀ m(i,t))
//! r(i)   = W_vr Σ_t s(i,t) ỹ_v(t) + tanh(W_rr r(i−1))
//! ```
//!
//! Re-reading swaps the roles: for each frame `t` with `w(0) = 0` the whole
//! sentence is attended and `w(t) = W_cr Σ_i s(t,i) ỹ_c(i) + tanh(W_ww w(t−1))`.
//!
//! The `W_vr` / `W_cr` maps take the attended joint-space context into memory
//! space. Both attention passes share `W_vm`, `W_cm` and `W_ms`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{encode_side, init_encoder, EncoderConfig, Side};
use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::params::{glorot, Bound, ParamStore};
use crate::tensor::{argmax, softmax, Tensor};

/// Candidates per question.
pub const NUM_CANDIDATES: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Rewatcher,
    Rereader,
    Forgettable,
    Straightforward,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::Rewatcher,
        ModelKind::Rereader,
        ModelKind::Forgettable,
        ModelKind::Straightforward,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Rewatcher => "rewatcher",
            ModelKind::Rereader => "rereader",
            ModelKind::Forgettable => "forgettable",
            ModelKind::Straightforward => "straightforward",
        }
    }

    fn rewatches(self) -> bool {
        matches!(self, ModelKind::Rewatcher | ModelKind::Forgettable)
    }

    fn rereads(self) -> bool {
        matches!(self, ModelKind::Rereader | ModelKind::Forgettable)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| {
                Error::arg(format!(
                    "unknown model {s:?} (expected rewatcher, rereader, forgettable or straightforward)"
                ))
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    /// Attention hidden size.
    pub d_m: usize,
    /// Memory size of `r` and `w`.
    pub d_r: usize,
    /// Input size of the fully connected stack.
    pub d_g: usize,
    /// Hidden layer sizes of the fully connected stack; a final linear layer
    /// to one output is always appended.
    pub fc: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            d_m: 512,
            d_r: 512,
            d_g: 512,
            fc: vec![512, 256, 128],
        }
    }
}

impl ModelConfig {
    /// Small dimensions used by gradient checks.
    pub fn toy() -> Self {
        Self {
            encoder: EncoderConfig {
                d_v: 6,
                d_w: 5,
                video_input: Some(8),
                text_input: Some(8),
                d_hv: 4,
                d_hc: 4,
                d_j: 8,
                output_projection: true,
            },
            d_m: 4,
            d_r: 4,
            d_g: 4,
            fc: vec![6, 5, 3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if self.d_m == 0 || self.d_r == 0 || self.d_g == 0 || self.fc.contains(&0) {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        Ok(())
    }

    /// Recovers the configuration from parameter shapes.
    pub fn infer(params: &ParamStore) -> Result<Self> {
        let shape = |n: &str| params.get(n).map(|t| t.shape().to_vec());
        let video_in = shape("video.in").ok();
        let text_in = shape("text.in").ok();
        let hv = shape("video.fwd.u")?[1];
        let hc = shape("text.fwd.u")?[1];
        let v_lstm = shape("video.fwd.w")?[1];
        let c_lstm = shape("text.fwd.w")?[1];
        let out = shape("video.out").ok();
        let d_j = match &out {
            Some(s) => s[0],
            None => 2 * hv,
        };
        let cg = shape("head.w_cg")?;
        let mut fc = Vec::new();
        let mut layer = 0;
        while let Ok(s) = shape(&format!("head.fc{layer}.w")) {
            fc.push(s[0]);
            layer += 1;
        }
        if fc.pop() != Some(1) {
            return Err(Error::format(
                "checkpoint",
                "score head must end in one output",
            ));
        }
        let d_r = ["att.w_rr", "att.w_ww"]
            .iter()
            .find_map(|n| shape(n).ok())
            .map(|s| s[0])
            .unwrap_or(1);
        let d_m = shape("att.w_ms").map(|s| s[0]).unwrap_or(1);
        let cfg = Self {
            encoder: EncoderConfig {
                d_v: video_in.as_ref().map_or(v_lstm, |s| s[1]),
                d_w: text_in.as_ref().map_or(c_lstm, |s| s[1]),
                video_input: video_in.map(|s| s[0]),
                text_input: text_in.map(|s| s[0]),
                d_hv: hv,
                d_hc: hc,
                d_j,
                output_projection: out.is_some(),
            },
            d_m,
            d_r,
            d_g: cg[0],
            fc,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Which model a parameter set was initialized for.
pub fn kind_of(params: &ParamStore) -> Result<ModelKind> {
    let has = |n| params.contains(n);
    match (has("head.w_rg"), has("head.w_wg"), has("head.w_vg")) {
        (true, true, _) => Ok(ModelKind::Forgettable),
        (true, false, _) => Ok(ModelKind::Rewatcher),
        (false, true, _) => Ok(ModelKind::Rereader),
        (false, false, true) => Ok(ModelKind::Straightforward),
        _ => Err(Error::format(
            "checkpoint",
            "cannot tell which model the parameters belong to",
        )),
    }
}

/// Fresh parameters for `kind`: Glorot-uniform weights, zero biases and a
/// forget-gate bias of one.
pub fn init_params<R: Rng + ?Sized>(
    kind: ModelKind,
    cfg: &ModelConfig,
    rng: &mut R,
) -> Result<ParamStore> {
    cfg.validate()?;
    let mut p = ParamStore::new();
    init_encoder(&mut p, &cfg.encoder, Side::Video, rng);
    init_encoder(&mut p, &cfg.encoder, Side::Text, rng);
    let (d_j, d_m, d_r, d_g) = (cfg.encoder.d_j, cfg.d_m, cfg.d_r, cfg.d_g);

    if kind.rewatches() || kind.rereads() {
        p.insert("att.w_vm", glorot(d_m, d_j, rng));
        p.insert("att.w_cm", glorot(d_m, d_j, rng));
        let limit = (6.0 / (d_m + 1) as f64).sqrt();
        p.insert("att.w_ms", Tensor::uniform(&[d_m], limit, rng));
    }
    if kind.rewatches() {
        p.insert("att.w_rm", glorot(d_m, d_r, rng));
        p.insert("att.w_rr", glorot(d_r, d_r, rng));
        p.insert("att.w_vr", glorot(d_r, d_j, rng));
        p.insert("head.w_rg", glorot(d_g, d_r, rng));
    }
    if kind.rereads() {
        p.insert("att.w_wm", glorot(d_m, d_r, rng));
        p.insert("att.w_ww", glorot(d_r, d_r, rng));
        p.insert("att.w_cr", glorot(d_r, d_j, rng));
        p.insert("head.w_wg", glorot(d_g, d_r, rng));
    }
    if kind == ModelKind::Straightforward {
        p.insert("head.w_vg", glorot(d_g, d_j, rng));
    }
    p.insert("head.w_cg", glorot(d_g, d_j, rng));

    let mut fan_in = d_g;
    for (layer, &width) in cfg.fc.iter().chain(std::iter::once(&1)).enumerate() {
        p.insert(format!("head.fc{layer}.w"), glorot(width, fan_in, rng));
        p.insert(format!("head.fc{layer}.b"), Tensor::zeros(&[width]));
        fan_in = width;
    }
    Ok(p)
}

/// Video-side graph values shared by all eight candidates of a question.
pub struct VideoContext {
    /// `N × d_j`
    pub joint: Var,
    /// `W_vm ỹ_v(t)` as rows, when an attention pass needs it.
    pub attention_keys: Option<Var>,
    /// Projected biLSTM summary.
    pub summary: Var,
}

/// Sentence-side graph values for one QA-sentence.
pub struct SentenceContext {
    /// `|c| × d_j`
    pub joint: Var,
    pub attention_keys: Option<Var>,
    /// Projected summary `ũ`.
    pub summary: Var,
}

/// Graph handles for the attention weights.
struct AttentionVars {
    w_vm: Var,
    w_cm: Var,
    w_ms: Var,
}

pub fn encode_video(g: &mut Graph, bound: &Bound, features: Var) -> Result<VideoContext> {
    let enc = encode_side(g, bound, Side::Video, features)?;
    let attention_keys = match bound.var("att.w_vm") {
        Ok(w) => Some(g.matmul_t(enc.joint, w)?),
        Err(_) => None,
    };
    Ok(VideoContext {
        joint: enc.joint,
        attention_keys,
        summary: enc.summary,
    })
}

pub fn encode_sentence(g: &mut Graph, bound: &Bound, embedded: Var) -> Result<SentenceContext> {
    let enc = encode_side(g, bound, Side::Text, embedded)?;
    let attention_keys = match bound.var("att.w_cm") {
        Ok(w) => Some(g.matmul_t(enc.joint, w)?),
        Err(_) => None,
    };
    Ok(SentenceContext {
        joint: enc.joint,
        attention_keys,
        summary: enc.summary,
    })
}

fn attention_vars(bound: &Bound) -> Result<AttentionVars> {
    Ok(AttentionVars {
        w_vm: bound.var("att.w_vm")?,
        w_cm: bound.var("att.w_cm")?,
        w_ms: bound.var("att.w_ms")?,
    })
}

/// Output of one attention pass: the final memory and one attention row per
/// step.
pub struct Attended {
    pub memory: Var,
    pub rows: Vec<Var>,
}

/// Shared recurrence of both attention passes.
///
/// `query_keys` holds one row per step of the side read step by step;
/// `attended_keys` and `attended` belong to the side attended in full at
/// every step.
#[allow(clippy::too_many_arguments)]
fn attend(
    g: &mut Graph,
    query_keys: Var,
    attended_keys: Var,
    attended: Var,
    w_memory_to_attn: Var,
    w_ms: Var,
    w_context: Var,
    w_recur: Var,
) -> Result<Attended> {
    let steps = g.shape(query_keys)[0];
    let d_r = g.shape(w_recur)[0];
    let mut memory = g.constant(Tensor::zeros(&[d_r]));
    let mut rows = Vec::with_capacity(steps);
    for i in 0..steps {
        let query = g.row(query_keys, i)?;
        let from_memory = g.matvec(w_memory_to_attn, memory)?;
        let offset = g.add(from_memory, query)?;
        let pre = g.add_row(attended_keys, offset)?;
        let m = g.tanh(pre);
        let logits = g.matvec(m, w_ms)?;
        let s = g.softmax(logits)?;
        let context = g.vecmat(s, attended)?;
        let read = g.matvec(w_context, context)?;
        let carried = g.matvec(w_recur, memory)?;
        let carried = g.tanh(carried);
        memory = g.add(read, carried)?;
        rows.push(s);
    }
    Ok(Attended { memory, rows })
}

/// Re-watching pass: every sentence token attends over all frames.
/// Returns `r(|c|)` and the `|c| × N` attention rows.
pub fn rewatcher_attend(
    g: &mut Graph,
    bound: &Bound,
    video: &VideoContext,
    sentence: &SentenceContext,
) -> Result<Attended> {
    let a = attention_vars(bound)?;
    let video_keys = keys(g, video.attention_keys, video.joint, a.w_vm)?;
    let token_keys = keys(g, sentence.attention_keys, sentence.joint, a.w_cm)?;
    attend(
        g,
        token_keys,
        video_keys,
        video.joint,
        bound.var("att.w_rm")?,
        a.w_ms,
        bound.var("att.w_vr")?,
        bound.var("att.w_rr")?,
    )
}

/// Re-reading pass: every frame attends over all sentence tokens.
/// Returns `w(N)` and the `N × |c|` attention rows.
pub fn rereader_attend(
    g: &mut Graph,
    bound: &Bound,
    video: &VideoContext,
    sentence: &SentenceContext,
) -> Result<Attended> {
    let a = attention_vars(bound)?;
    let video_keys = keys(g, video.attention_keys, video.joint, a.w_vm)?;
    let token_keys = keys(g, sentence.attention_keys, sentence.joint, a.w_cm)?;
    attend(
        g,
        video_keys,
        token_keys,
        sentence.joint,
        bound.var("att.w_wm")?,
        a.w_ms,
        bound.var("att.w_cr")?,
        bound.var("att.w_ww")?,
    )
}

fn keys(g: &mut Graph, cached: Option<Var>, joint: Var, w: Var) -> Result<Var> {
    match cached {
        Some(k) => Ok(k),
        None => g.matmul_t(joint, w),
    }
}

/// Score of one QA-sentence together with the attention it produced.
pub struct Scored {
    pub score: Var,
    pub rewatch: Option<Attended>,
    pub reread: Option<Attended>,
}

pub fn score_sentence(
    g: &mut Graph,
    kind: ModelKind,
    bound: &Bound,
    video: &VideoContext,
    sentence: &SentenceContext,
) -> Result<Scored> {
    let rewatch = if kind.rewatches() {
        Some(rewatcher_attend(g, bound, video, sentence)?)
    } else {
        None
    };
    let reread = if kind.rereads() {
        Some(rereader_attend(g, bound, video, sentence)?)
    } else {
        None
    };

    let mut terms = Vec::with_capacity(3);
    if let Some(a) = &rewatch {
        terms.push(g.matvec(bound.var("head.w_rg")?, a.memory)?);
    }
    if let Some(a) = &reread {
        terms.push(g.matvec(bound.var("head.w_wg")?, a.memory)?);
    }
    if kind == ModelKind::Straightforward {
        terms.push(g.matvec(bound.var("head.w_vg")?, video.summary)?);
    }
    terms.push(g.matvec(bound.var("head.w_cg")?, sentence.summary)?);

    let mut pre = terms[0];
    for &t in &terms[1..] {
        pre = g.add(pre, t)?;
    }
    let combined = g.tanh(pre);
    let score = fully_connected(g, bound, combined)?;
    Ok(Scored {
        score,
        rewatch,
        reread,
    })
}

/// ReLU hidden layers followed by a linear scalar output.
fn fully_connected(g: &mut Graph, bound: &Bound, input: Var) -> Result<Var> {
    let mut x = input;
    let mut layer = 0;
    loop {
        let w = bound.var(&format!("head.fc{layer}.w"))?;
        let b = bound.var(&format!("head.fc{layer}.b"))?;
        let wx = g.matvec(w, x)?;
        let y = g.add(wx, b)?;
        layer += 1;
        if bound.var(&format!("head.fc{layer}.w")).is_err() {
            return Ok(y);
        }
        x = g.relu(y);
    }
}

/// One multiple-choice question ready for a model: sampled frame features
/// (`N × d_v`) and eight embedded QA-sentences (`|c_k| × d_w`).
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub video: Tensor,
    pub sentences: Vec<Tensor>,
    pub gt_index: usize,
}

/// Builds the eight candidate scores on `g` and returns them as one vector.
pub fn build_scores(
    g: &mut Graph,
    kind: ModelKind,
    bound: &Bound,
    video: &Tensor,
    sentences: &[Tensor],
) -> Result<Var> {
    if sentences.len() != NUM_CANDIDATES {
        return Err(Error::arg(format!(
            "expected {NUM_CANDIDATES} candidates, got {}",
            sentences.len()
        )));
    }
    let features = g.constant(video.clone());
    let video_ctx = encode_video(g, bound, features)?;
    let mut scores = Vec::with_capacity(NUM_CANDIDATES);
    for s in sentences {
        let emb = g.constant(s.clone());
        let sentence_ctx = encode_sentence(g, bound, emb)?;
        scores.push(score_sentence(g, kind, bound, &video_ctx, &sentence_ctx)?.score);
    }
    g.concat(&scores)
}

/// Cross-entropy of the softmaxed scores against `gt_index`, on the graph.
pub fn build_loss(g: &mut Graph, scores: Var, gt_index: usize) -> Result<Var> {
    if gt_index >= g.value(scores).len() {
        return Err(Error::arg(format!(
            "ground-truth index {gt_index} out of range"
        )));
    }
    let logp = g.log_softmax(scores)?;
    let picked = g.pick(logp, gt_index)?;
    Ok(g.scale(picked, -1.0))
}

/// Scalar score of a single QA-sentence against a video.
pub fn score_qa(kind: ModelKind, params: &ParamStore, video: &Tensor, qa: &Tensor) -> Result<f64> {
    let mut g = Graph::new();
    let bound = params.bind(&mut g, false);
    let features = g.constant(video.clone());
    let v = encode_video(&mut g, &bound, features)?;
    let emb = g.constant(qa.clone());
    let s = encode_sentence(&mut g, &bound, emb)?;
    let scored = score_sentence(&mut g, kind, &bound, &v, &s)?;
    Ok(g.value(scored.score).item())
}

/// Attention matrices of one QA-sentence, rows as plain vectors.
pub struct AttentionMaps {
    /// `|c| × N`, one row per token.
    pub rewatch: Option<Vec<Vec<f64>>>,
    /// `N × |c|`, one row per frame.
    pub reread: Option<Vec<Vec<f64>>>,
    pub rewatch_memory: Option<Vec<f64>>,
    pub reread_memory: Option<Vec<f64>>,
    pub score: f64,
}

pub fn attention_maps(
    kind: ModelKind,
    params: &ParamStore,
    video: &Tensor,
    qa: &Tensor,
) -> Result<AttentionMaps> {
    let mut g = Graph::new();
    let bound = params.bind(&mut g, false);
    let features = g.constant(video.clone());
    let v = encode_video(&mut g, &bound, features)?;
    let emb = g.constant(qa.clone());
    let s = encode_sentence(&mut g, &bound, emb)?;
    let scored = score_sentence(&mut g, kind, &bound, &v, &s)?;
    let rows = |a: &Option<Attended>| {
        a.as_ref()
            .map(|a| a.rows.iter().map(|&r| g.value(r).data().to_vec()).collect())
    };
    let memory = |a: &Option<Attended>| a.as_ref().map(|a| g.value(a.memory).data().to_vec());
    Ok(AttentionMaps {
        rewatch: rows(&scored.rewatch),
        reread: rows(&scored.reread),
        rewatch_memory: memory(&scored.rewatch),
        reread_memory: memory(&scored.reread),
        score: g.value(scored.score).item(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Answer {
    pub probabilities: Vec<f64>,
    pub predicted: usize,
}

/// Scores all eight QA-sentences and softmaxes them.
pub fn answer_question(
    kind: ModelKind,
    params: &ParamStore,
    video: &Tensor,
    sentences: &[Tensor],
) -> Result<Answer> {
    let mut g = Graph::new();
    let bound = params.bind(&mut g, false);
    let scores = build_scores(&mut g, kind, &bound, video, sentences)?;
    let probabilities = softmax(g.value(scores).data())?;
    let predicted = argmax(&probabilities);
    Ok(Answer {
        probabilities,
        predicted,
    })
}

/// `−ln p[gt]`
pub fn qa_loss(probabilities: &[f64], gt_index: usize) -> Result<f64> {
    let p = probabilities.get(gt_index).ok_or_else(|| {
        Error::arg(format!(
            "ground-truth index {gt_index} out of range for {} candidates",
            probabilities.len()
        ))
    })?;
    Ok(-p.ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn loss_known_values() {
        let uniform = [0.125; 8];
        assert!((qa_loss(&uniform, 3).unwrap() - 8f64.ln()).abs() < 1e-15);
        assert!((8f64.ln() - 2.0794).abs() < 1e-4);
        let mut one_hot = [0.0; 8];
        one_hot[5] = 1.0;
        assert_eq!(qa_loss(&one_hot, 5).unwrap(), 0.0);
        let mut half = [0.5 / 7.0; 8];
        half[0] = 0.5;
        assert!((qa_loss(&half, 0).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!(qa_loss(&uniform, 8).is_err());
    }

    #[test]
    fn kind_parsing() {
        assert_eq!(
            "Forgettable".parse::<ModelKind>().unwrap(),
            ModelKind::Forgettable
        );
        assert!("watcher".parse::<ModelKind>().is_err());
    }

    #[test]
    fn config_inferred_from_params() {
        let cfg = ModelConfig::toy();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for kind in ModelKind::ALL {
            let p = init_params(kind, &cfg, &mut rng).unwrap();
            assert_eq!(kind_of(&p).unwrap(), kind);
            let inferred = ModelConfig::infer(&p).unwrap();
            assert_eq!(inferred.encoder, cfg.encoder);
            assert_eq!(inferred.fc, cfg.fc);
            assert_eq!(inferred.d_g, cfg.d_g);
            if kind != ModelKind::Straightforward {
                assert_eq!((inferred.d_m, inferred.d_r), (cfg.d_m, cfg.d_r));
            }
        }
    }

    #[test]
    fn wrong_candidate_count_rejected() {
        let cfg = ModelConfig::toy();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = init_params(ModelKind::Rewatcher, &cfg, &mut rng).unwrap();
        let video = Tensor::uniform(&[3, 6], 1.0, &mut rng);
        let sentences = vec![Tensor::uniform(&[2, 5], 1.0, &mut rng); 7];
        assert!(matches!(
            answer_question(ModelKind::Rewatcher, &p, &video, &sentences),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn missing_params_for_kind_is_an_error() {
        let cfg = ModelConfig::toy();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = init_params(ModelKind::Straightforward, &cfg, &mut rng).unwrap();
        let video = Tensor::uniform(&[3, 6], 1.0, &mut rng);
        let qa = Tensor::uniform(&[2, 5], 1.0, &mut rng);
        assert!(score_qa(ModelKind::Rewatcher, &p, &video, &qa).is_err());
        score_qa(ModelKind::Straightforward, &p, &video, &qa).unwrap();
    }
}
