//! Wu-Palmer similarity, WUPS at both thresholds and a full evaluation
//! report on the bundled taxonomy.
//!
//! ```text
//! cargo run --release --example wups
//! ```

use fwqa::metrics::{evaluate, wu_palmer, wups, Taxonomy};
use fwqa::synth::{generate, SynthConfig, SynthTask};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> fwqa::Result<()> {
    let tax = Taxonomy::demo();
    for (a, b) in [("dog", "cat"), ("dog", "horse"), ("man", "woman"), ("bat", "ball"), ("car", "dog")] {
        println!("wup({a}, {b}) = {:.3}", wu_palmer(&tax, a, b));
    }

    let predicted: Vec<String> = ["a dog", "the man", "two cars", "a hat"].map(String::from).to_vec();
    let truth: Vec<String> = ["a cat", "the man", "three cars", "a sofa"].map(String::from).to_vec();
    for theta in [0.0, 0.9] {
        println!("WUPS@{theta}: {:.2}", wups(&predicted, &truth, theta, &tax)?);
    }

    // Half of the predictions right, the rest random.
    let data = generate(&SynthConfig { task: SynthTask::HowMany, videos: 400, ..SynthConfig::default() })?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let picks: Vec<usize> = data
        .instances
        .iter()
        .map(|i| if rng.random_bool(0.5) { i.gt_index } else { rng.random_range(0..8) })
        .collect();
    let report = evaluate(&picks, &data.instances, &tax)?;
    println!();
    print!("{}", report.table());
    Ok(())
}
