//! Synthetic video QA tasks small enough to train on a laptop.
//!
//! Every entity has a fixed signature vector. A frame's feature is the sum of
//! the signatures of the entities visible in it plus Gaussian noise.
//!
//! * `who`: one actor is visible in a random subset of frames. Entity words
//!   are embedded as a fixed linear map of their signatures, so matching the
//!   answer to the video is a linear problem at zero noise.
//! * `howmany`: `k` distinct entities are scattered over the frames with at
//!   most `per_frame_cap` per frame, so counting needs the whole video.
//!   Signatures are non-negative here so that presence adds up.

use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{
    gen_candidates, record_rng, NounLexicon, Pools, QaInstance, QaRecord, QuestionType, COUNT_WORDS,
};
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::features::VideoFeatures;
use crate::metrics::Taxonomy;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthTask {
    Who,
    #[serde(alias = "how_many")]
    HowMany,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub task: SynthTask,
    /// One question per video.
    pub videos: usize,
    pub entities: usize,
    pub frames: usize,
    pub signature_dim: usize,
    pub word_dim: usize,
    pub noise: f64,
    /// Fraction of frames showing the actor (`who`).
    pub presence: f64,
    /// Most entities visible in one frame (`howmany`).
    pub per_frame_cap: usize,
    /// Frames each counted entity shows up in (`howmany`).
    pub appearances: usize,
    /// Largest count asked about (`howmany`), at most eight.
    pub max_count: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            task: SynthTask::Who,
            videos: 2000,
            entities: 12,
            frames: 8,
            signature_dim: 6,
            word_dim: 5,
            noise: 0.1,
            presence: 0.5,
            per_frame_cap: 2,
            appearances: 1,
            max_count: 8,
            seed: 0,
        }
    }
}

/// Words the synthetic entities are named with.
pub fn entity_words() -> Vec<String> {
    Taxonomy::demo().leaves_under("organism")
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::arg(m));
        if self.videos == 0 || self.frames == 0 || self.signature_dim == 0 || self.word_dim == 0 {
            return fail("videos, frames and dimensions must be at least 1".into());
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return fail(format!(
                "noise must be a non-negative number, got {}",
                self.noise
            ));
        }
        let available = entity_words().len();
        if self.entities > available {
            return fail(format!(
                "at most {available} entities are available, asked for {}",
                self.entities
            ));
        }
        match self.task {
            SynthTask::Who => {
                if self.entities < 8 {
                    return fail(format!(
                        "the who task needs at least 8 entities, got {}",
                        self.entities
                    ));
                }
                if !(self.presence > 0.0 && self.presence <= 1.0) {
                    return fail(format!(
                        "presence must lie in (0, 1], got {}",
                        self.presence
                    ));
                }
            }
            SynthTask::HowMany => {
                if !(1..=8).contains(&self.max_count) {
                    return fail(format!(
                        "max_count must lie in 1..=8, got {}",
                        self.max_count
                    ));
                }
                if self.entities < self.max_count {
                    return fail(format!(
                        "{} entities cannot show {} distinct ones",
                        self.entities, self.max_count
                    ));
                }
                if self.per_frame_cap == 0
                    || self.appearances == 0
                    || self.appearances > self.frames
                {
                    return fail("per_frame_cap and appearances must be at least 1, appearances at most frames".into());
                }
                if self.per_frame_cap * self.frames < self.max_count * self.appearances {
                    return fail(format!(
                        "{} frames with cap {} cannot hold {} entities seen {} times each",
                        self.frames, self.per_frame_cap, self.max_count, self.appearances
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SynthData {
    pub features: Vec<VideoFeatures>,
    pub records: Vec<QaRecord>,
    pub instances: Vec<QaInstance>,
    pub embeddings: EmbeddingTable,
    /// `entities × signature_dim`
    pub signatures: Tensor,
    /// Entities visible in each frame of each video.
    pub layout: Vec<Vec<Vec<usize>>>,
}

const WHO_QUESTION: &str = "who is here ?";
const HOW_MANY_QUESTION: &str = "how many are there ?";
const COUNTED_NOUN: &str = "things";

fn gaussian_vector<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    v.iter_mut().for_each(|x| *x /= n);
    v
}

/// Generates a whole task; identical configs give identical data.
pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let names: Vec<String> = entity_words().into_iter().take(cfg.entities).collect();
    let signatures: Vec<Vec<f64>> = (0..cfg.entities)
        .map(|_| {
            let g = gaussian_vector(cfg.signature_dim, &mut rng);
            match cfg.task {
                SynthTask::Who => unit(g),
                SynthTask::HowMany => unit(g.into_iter().map(f64::abs).collect()),
            }
        })
        .collect();

    let mut table = EmbeddingTable::new(cfg.word_dim)?;
    let word_scale = 1.0 / (cfg.word_dim as f64).sqrt();
    let random_word = |table: &mut EmbeddingTable, w: &str, rng: &mut ChaCha8Rng| {
        let v = gaussian_vector(cfg.word_dim, rng)
            .into_iter()
            .map(|x| x * word_scale)
            .collect();
        table.insert(w, v)
    };
    let question = match cfg.task {
        SynthTask::Who => WHO_QUESTION,
        SynthTask::HowMany => HOW_MANY_QUESTION,
    };
    for w in question.split_whitespace().filter(|w| *w != "?") {
        random_word(&mut table, w, &mut rng)?;
    }
    match cfg.task {
        SynthTask::Who => {
            random_word(&mut table, "the", &mut rng)?;
            let map_scale = 1.0 / (cfg.signature_dim as f64).sqrt();
            let map: Vec<Vec<f64>> = (0..cfg.word_dim)
                .map(|_| gaussian_vector(cfg.signature_dim, &mut rng))
                .collect();
            for (name, sig) in names.iter().zip(&signatures) {
                let v = map
                    .iter()
                    .map(|row| map_scale * row.iter().zip(sig).map(|(a, b)| a * b).sum::<f64>())
                    .collect();
                table.insert(name.as_str(), v)?;
            }
        }
        SynthTask::HowMany => {
            random_word(&mut table, COUNTED_NOUN, &mut rng)?;
            for w in COUNT_WORDS {
                random_word(&mut table, w, &mut rng)?;
            }
        }
    }

    let noise = Normal::new(0.0, cfg.noise).map_err(|e| Error::arg(e.to_string()))?;
    let lexicon = NounLexicon::from_words(names.iter().chain([&COUNTED_NOUN.to_string()]));
    let pools = Pools {
        entities: names.iter().map(String::as_str).collect(),
        nouns: Vec::new(),
        lexicon: Some(&lexicon),
    };
    let mut data = SynthData {
        features: Vec::with_capacity(cfg.videos),
        records: Vec::with_capacity(cfg.videos),
        instances: Vec::with_capacity(cfg.videos),
        embeddings: table,
        signatures: Tensor::from_rows(&signatures)?,
        layout: Vec::with_capacity(cfg.videos),
    };
    let all: Vec<usize> = (0..cfg.entities).collect();
    for v in 0..cfg.videos {
        let video_id = format!("synth{}-{v:05}", cfg.seed);
        let (layout, answer) = match cfg.task {
            SynthTask::Who => {
                let actor = rng.random_range(0..cfg.entities);
                let shown =
                    ((cfg.presence * cfg.frames as f64).round() as usize).clamp(1, cfg.frames);
                let mut frames: Vec<usize> = (0..cfg.frames).collect();
                frames.shuffle(&mut rng);
                let mut layout = vec![Vec::new(); cfg.frames];
                for &f in &frames[..shown] {
                    layout[f].push(actor);
                }
                (layout, format!("the {}", names[actor]))
            }
            SynthTask::HowMany => {
                let k = rng.random_range(1..=cfg.max_count);
                let chosen: Vec<usize> = all.choose_multiple(&mut rng, k).copied().collect();
                (
                    scatter(&chosen, cfg, &mut rng),
                    format!("{} {COUNTED_NOUN}", COUNT_WORDS[k - 1]),
                )
            }
        };
        let mut frames = Vec::with_capacity(cfg.frames * cfg.signature_dim);
        for present in &layout {
            #[allow(clippy::needless_range_loop)]
            for d in 0..cfg.signature_dim {
                let x: f64 =
                    present.iter().map(|&e| signatures[e][d]).sum::<f64>() + noise.sample(&mut rng);
                frames.push(x as f32 as f64);
            }
        }
        let feats = VideoFeatures::new(
            video_id.clone(),
            Tensor::new(vec![cfg.frames, cfg.signature_dim], frames)?,
        )?;
        let record = QaRecord {
            video_id,
            description: String::new(),
            question: question.to_string(),
            answer,
            question_type: Some(match cfg.task {
                SynthTask::Who => QuestionType::Who,
                SynthTask::HowMany => QuestionType::HowMany,
            }),
        };
        let inst = gen_candidates(&record, &pools, &mut record_rng(cfg.seed, v))
            .map_err(|d| Error::Invariant(format!("synthetic record {v} discarded: {d}")))?;
        data.features.push(feats);
        data.records.push(record);
        data.instances.push(inst);
        data.layout.push(layout);
    }
    Ok(data)
}

/// Places each chosen entity in `appearances` distinct frames, never more than
/// `per_frame_cap` entities per frame.
fn scatter<R: Rng + ?Sized>(chosen: &[usize], cfg: &SynthConfig, rng: &mut R) -> Vec<Vec<usize>> {
    for _ in 0..20 {
        if let Some(layout) = scatter_randomly(chosen, cfg, rng) {
            return layout;
        }
    }
    // Filling the emptiest frames first always succeeds when the totals fit.
    let mut layout: Vec<Vec<usize>> = vec![Vec::new(); cfg.frames];
    for &e in chosen {
        let mut order: Vec<usize> = (0..cfg.frames).collect();
        order.shuffle(rng);
        order.sort_by_key(|&f| layout[f].len());
        for &f in &order[..cfg.appearances] {
            layout[f].push(e);
        }
    }
    layout
}

fn scatter_randomly<R: Rng + ?Sized>(
    chosen: &[usize],
    cfg: &SynthConfig,
    rng: &mut R,
) -> Option<Vec<Vec<usize>>> {
    let mut layout: Vec<Vec<usize>> = vec![Vec::new(); cfg.frames];
    for &e in chosen {
        let open: Vec<usize> = (0..cfg.frames)
            .filter(|&f| layout[f].len() < cfg.per_frame_cap)
            .collect();
        if open.len() < cfg.appearances {
            return None;
        }
        for &f in open.choose_multiple(rng, cfg.appearances) {
            layout[f].push(e);
        }
    }
    Some(layout)
}

impl SynthData {
    /// Writes `features/*.vfeat`, `qa.jsonl`, `instances.jsonl` and
    /// `embeddings.txt` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let fdir = dir.join("features");
        for f in &self.features {
            f.save(&fdir)?;
        }
        crate::io::write_jsonl(&dir.join("qa.jsonl"), &self.records)?;
        crate::io::write_jsonl(&dir.join("instances.jsonl"), &self.instances)?;
        self.embeddings.save(&dir.join("embeddings.txt"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn who_task_shape() {
        let cfg = SynthConfig {
            videos: 20,
            ..SynthConfig::default()
        };
        let d = generate(&cfg).unwrap();
        assert_eq!(d.instances.len(), 20);
        for (inst, layout) in d.instances.iter().zip(&d.layout) {
            inst.validate().unwrap();
            let shown = layout.iter().filter(|f| !f.is_empty()).count();
            assert_eq!(shown, 4);
        }
    }

    #[test]
    fn howmany_respects_cap() {
        let cfg = SynthConfig {
            task: SynthTask::HowMany,
            videos: 50,
            appearances: 2,
            frames: 8,
            ..SynthConfig::default()
        };
        let d = generate(&cfg).unwrap();
        for (inst, layout) in d.instances.iter().zip(&d.layout) {
            assert!(layout.iter().all(|f| f.len() <= 2));
            let mut seen: Vec<usize> = layout.iter().flatten().copied().collect();
            assert_eq!(seen.len() % 2, 0);
            seen.sort();
            seen.dedup();
            assert_eq!(
                inst.ground_truth(),
                format!("{} things", COUNT_WORDS[seen.len() - 1])
            );
        }
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            SynthConfig {
                entities: 5,
                ..SynthConfig::default()
            },
            SynthConfig {
                task: SynthTask::HowMany,
                max_count: 9,
                ..SynthConfig::default()
            },
            SynthConfig {
                task: SynthTask::HowMany,
                frames: 2,
                ..SynthConfig::default()
            },
            SynthConfig {
                noise: -1.0,
                ..SynthConfig::default()
            },
            SynthConfig {
                entities: 1000,
                ..SynthConfig::default()
            },
        ];
        for c in bad {
            assert!(matches!(generate(&c), Err(Error::Argument(_))), "{c:?}");
        }
    }
}
