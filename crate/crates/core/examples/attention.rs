//! Trains a forgettable-watcher on the synthetic `who` task, then prints its
//! re-watching and re-reading attention for one question and its answer.
//!
//! ```text
//! cargo run --release --example attention
//! ```

use fwqa::dataset::make_qa_sentences;
use fwqa::model::{answer_question, attention_maps, ModelKind};
use fwqa::pipeline::{synth_examples, Preset, RunConfig};
use fwqa::synth::{generate, SynthConfig};
use fwqa::train::train;

fn heat(rows: &[Vec<f64>], labels: &[String]) {
    const SHADES: [char; 5] = [' ', '.', ':', '*', '#'];
    for (row, label) in rows.iter().zip(labels) {
        let cells: String = row
            .iter()
            .map(|&w| SHADES[((w * row.len() as f64 / 2.0) * 4.0).clamp(0.0, 4.0) as usize])
            .collect();
        let weights: Vec<String> = row.iter().map(|w| format!("{w:.2}")).collect();
        println!("  {label:>10} |{cells}| {}", weights.join(" "));
    }
}

fn main() -> fwqa::Result<()> {
    let synth = SynthConfig { videos: 600, ..SynthConfig::default() };
    let data = generate(&synth)?;
    let examples = synth_examples(&data, synth.frames)?;
    let mut run = RunConfig::preset(Preset::Toy).train;
    run.max_epochs = 15;
    let kind = ModelKind::Forgettable;
    let outcome = train(kind, &examples[..500], &examples[500..550], &run)?;
    println!("validation accuracy {:.3}", outcome.best_val_accuracy);

    let i = 560;
    let (inst, ex) = (&data.instances[i], &examples[i]);
    let answer = answer_question(kind, &outcome.params, &ex.video, &ex.sentences)?;
    println!("question  {}", inst.question);
    println!("predicted {} (p = {:.3})", inst.candidates[answer.predicted], answer.probabilities[answer.predicted]);
    println!("truth     {}", inst.ground_truth());
    let shown: Vec<usize> = (0..synth.frames).filter(|&f| !data.layout[i][f].is_empty()).collect();
    println!("actor visible in frames {shown:?}");

    let tokens = &make_qa_sentences(&inst.question, &inst.candidates)[inst.gt_index];
    let maps = attention_maps(kind, &outcome.params, &ex.video, &ex.sentences[inst.gt_index])?;
    println!("\nre-watching: each token over the {} frames", synth.frames);
    heat(maps.rewatch.as_deref().unwrap_or_default(), tokens);
    println!("\nre-reading: each frame over the {} tokens", tokens.len());
    let frames: Vec<String> = (0..synth.frames).map(|f| format!("frame {f}")).collect();
    heat(maps.reread.as_deref().unwrap_or_default(), &frames);
    Ok(())
}
