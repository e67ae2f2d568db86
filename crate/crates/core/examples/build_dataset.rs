//! Turns question/answer records into eight-way multiple-choice instances,
//! shows why some records are discarded, and splits the result by video.
//!
//! ```text
//! cargo run --release --example build_dataset
//! ```

use fwqa::dataset::{build_dataset, split_dataset, BuildOptions, QaRecord, DEFAULT_RATIOS};

fn record(video: &str, question: &str, answer: &str) -> QaRecord {
    QaRecord {
        video_id: video.into(),
        description: String::new(),
        question: question.into(),
        answer: answer.into(),
        question_type: None,
    }
}

fn main() -> fwqa::Result<()> {
    let mut records = vec![
        record("v1", "How many cars is chasing each other along a highway?", "two cars"),
        record("v2", "How many birds fly?", "12 birds"),
        record("v3", "Whose leg is moving?", "a little boy 's leg"),
        record("v4", "Whose hat falls?", "his hat"),
        record("v5", "What does the woman hold?", "a cup of coffee"),
        record("v6", "Where is the cat sleeping?", "on the sofa"),
        record("v7", "Why is he laughing?", "it is funny"),
    ];
    let people = ["man", "woman", "boy", "girl", "child", "dancer", "singer", "player"];
    let things = ["table", "chair", "car", "ball", "tree", "window", "door", "dog", "cat"];
    for (i, p) in people.iter().enumerate() {
        records.push(record(&format!("w{i}"), "Who is dancing?", &format!("a {p}")));
    }
    for (i, t) in things.iter().enumerate() {
        records.push(record(&format!("t{i}"), "What is shown?", &format!("a {t} in a {} 's room", people[i % 8])));
    }

    let opts = BuildOptions { min_noun_count: 1, seed: 7, ..BuildOptions::default() };
    let built = build_dataset(&records, &opts)?;
    println!("{} records, {} instances, {} discarded\n", records.len(), built.instances.len(), built.discards.len());
    for inst in built.instances.iter().take(5) {
        println!("[{}] {} ({})", inst.video_id, inst.question, inst.question_type);
        for (k, c) in inst.candidates.iter().enumerate() {
            println!("   {} {c}", if k == inst.gt_index { '*' } else { ' ' });
        }
    }
    println!();
    for d in &built.discards {
        println!("discarded {}: {:?} -> {}", d.video_id, d.answer, d.reason);
    }
    println!("\nentities: {:?}", built.entities.words());

    let [train, val, test] = split_dataset(&built.instances, DEFAULT_RATIOS, 0)?;
    println!("split by video: {} train, {} val, {} test", train.len(), val.len(), test.len());
    Ok(())
}
