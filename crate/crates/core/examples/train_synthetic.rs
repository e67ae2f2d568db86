//! Trains one model on a generated task and reports held-out accuracy.
//!
//! ```text
//! cargo run --release --example train_synthetic -- MODEL [SYNTH_JSON] [RUN_JSON]
//! cargo run --release --example train_synthetic -- rereader '{"task":"howmany","frames":16}'
//! ```
//!
//! The JSON arguments override the generator defaults and the `toy` preset.

use std::time::Instant;

use fwqa::model::ModelKind;
use fwqa::pipeline::{synth_examples, RunConfig};
use fwqa::synth::{generate, SynthConfig};
use fwqa::train::{accuracy, train};

fn main() -> fwqa::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let kind: ModelKind = args
        .first()
        .map_or(Ok(ModelKind::Rewatcher), |s| s.parse())?;
    let synth: SynthConfig = serde_json::from_str(args.get(1).map_or("{}", String::as_str))?;
    let mut run = RunConfig::from_json(args.get(2).map_or("{}", String::as_str))?;
    if args.get(2).is_none_or(|s| !s.contains("preset")) {
        run = RunConfig::from_json(r#"{"preset":"toy"}"#)?;
    }

    let data = generate(&synth)?;
    let examples = synth_examples(&data, synth.frames)?;
    let (train_set, rest) = examples.split_at(examples.len() * 8 / 10);
    let (val_set, test_set) = rest.split_at(rest.len() / 2);

    let start = Instant::now();
    let outcome = train(kind, train_set, val_set, &run.train)?;
    let test = accuracy(kind, &outcome.params, test_set)?;
    println!(
        "{kind} on {:?}: best epoch {}, validation {:.3}, test {:.3}, {:.1}s",
        synth.task,
        outcome.best_epoch,
        outcome.best_val_accuracy,
        test,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
