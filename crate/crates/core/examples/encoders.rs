//! Encodes a frame sequence and a sentence with the bidirectional LSTM
//! encoders and prints the joint-space outputs.
//!
//! ```text
//! cargo run --release --example encoders
//! ```

use fwqa::encoder::{encode_side, init_encoder, Side};
use fwqa::{Graph, ModelConfig, ParamStore, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn show(label: &str, t: &Tensor) {
    println!("{label} {:?}", t.shape());
    for r in 0..t.rows() {
        let row: Vec<String> = t.row(r).iter().map(|x| format!("{x:+.3}")).collect();
        println!("  {}", row.join(" "));
    }
}

fn main() -> fwqa::Result<()> {
    let cfg = ModelConfig::toy().encoder;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut params = ParamStore::new();
    init_encoder(&mut params, &cfg, Side::Video, &mut rng);
    init_encoder(&mut params, &cfg, Side::Text, &mut rng);
    println!("{} parameter tensors, {} scalars", params.len(), params.num_scalars());

    let frames = Tensor::uniform(&[5, cfg.d_v], 1.0, &mut rng);
    let words = Tensor::uniform(&[4, cfg.d_w], 1.0, &mut rng);

    let mut g = Graph::new();
    let bound = params.bind(&mut g, false);
    let v = g.constant(frames);
    let video = encode_side(&mut g, &bound, Side::Video, v)?;
    let c = g.constant(words);
    let text = encode_side(&mut g, &bound, Side::Text, c)?;

    show("frame encodings", g.value(video.joint));
    show("video summary", &g.value(video.summary).clone().reshape(&[1, cfg.d_j])?);
    show("token encodings", g.value(text.joint));
    show("sentence summary", &g.value(text.summary).clone().reshape(&[1, cfg.d_j])?);
    Ok(())
}
