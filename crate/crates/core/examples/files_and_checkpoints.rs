//! The on-disk workflow without the command line: write a synthetic task,
//! load features and embeddings back, train, checkpoint, reload and answer.
//!
//! ```text
//! cargo run --release --example files_and_checkpoints
//! ```

use fwqa::checkpoint;
use fwqa::dataset::{split_dataset, QaInstance, DEFAULT_RATIOS};
use fwqa::embeddings::EmbeddingTable;
use fwqa::features::FeatureStore;
use fwqa::io::read_jsonl;
use fwqa::model::{answer_question, kind_of, ModelKind};
use fwqa::pipeline::{prepare_examples, RunConfig};
use fwqa::synth::{generate, SynthConfig};
use fwqa::train::{accuracy, train};

fn main() -> fwqa::Result<()> {
    let dir = std::env::temp_dir().join("fwqa-example");
    let synth = SynthConfig { videos: 500, ..SynthConfig::default() };
    generate(&synth)?.write(&dir)?;
    println!("wrote task to {}", dir.display());

    let instances: Vec<QaInstance> = read_jsonl(&dir.join("instances.jsonl"))?;
    let [train_i, val_i, test_i] = split_dataset(&instances, DEFAULT_RATIOS, 0)?;
    let table = EmbeddingTable::load(&dir.join("embeddings.txt"))?;
    let mut store = FeatureStore::new(dir.join("features"));
    let run = RunConfig::from_json(r#"{"preset":"toy","train":{"max_epochs":10}}"#)?;
    let train_set = prepare_examples(&train_i, &mut store, &table, run.frames)?;
    let val_set = prepare_examples(&val_i, &mut store, &table, run.frames)?;
    let test_set = prepare_examples(&test_i, &mut store, &table, run.frames)?;

    let outcome = train(ModelKind::Rewatcher, &train_set, &val_set, &run.train)?;
    let path = dir.join("rewatcher.ckpt");
    checkpoint::save(&outcome.params, &path)?;

    let params = checkpoint::load(&path)?;
    let kind = kind_of(&params)?;
    println!("reloaded a {kind} with {} scalars", params.num_scalars());
    println!("test accuracy {:.3}", accuracy(kind, &params, &test_set)?);

    let (inst, ex) = (&test_i[0], &test_set[0]);
    let a = answer_question(kind, &params, &ex.video, &ex.sentences)?;
    println!("{} -> {} (truth: {})", inst.question, inst.candidates[a.predicted], inst.ground_truth());
    Ok(())
}
