//! Trains on a synthetic corpus and prints per-epoch development metrics, then
//! mention-detection recall by width on the development split.
//!
//! cargo run --release -p corefrl-core --example synthetic -- \
//!     [epochs] [seed] [max_name_width] [score_feature 0/1] [name_width_decay]

use corefrl::corpus::{hash_embeddings, synth::generate, SynthConfig};
use corefrl::decode::{mention_detection_by_width, WIDTH_BUCKETS};
use corefrl::trainer::{train, TrainConfig, TrainData};

fn main() -> corefrl::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |k: usize, default: u64| args.get(k).and_then(|a| a.parse().ok()).unwrap_or(default);
    let decay = args.get(4).and_then(|a| a.parse().ok()).unwrap_or(1.0);
    let synth = SynthConfig {
        seed: arg(1, 0),
        max_name_width: arg(2, 1) as usize,
        name_width_decay: decay,
        ..SynthConfig::default()
    };
    let docs = generate(&synth)?;
    let embeddings = hash_embeddings(&docs, 64, synth.seed)?;
    let (train_docs, dev_docs) = docs.split_at(docs.len() * 4 / 5);
    let cfg = TrainConfig {
        epochs: arg(0, 20) as usize,
        seed: arg(1, 0),
        score_feature: arg(3, 1) == 1,
        ..TrainConfig::default()
    };
    let start = std::time::Instant::now();
    let data = TrainData { train: train_docs, dev: dev_docs, embeddings: &embeddings };
    let out = train(data, &cfg, |r| {
        println!(
            "epoch {:2}  loss {:8.4}  muc {:.3}  b3 {:.3}  ceaf {:.3}  avg {:.3}  mentions {:.3}  [{:.0?}]",
            r.epoch, r.mean_train_loss, r.muc_f1, r.b3_f1, r.ceaf_f1, r.avg_f1, r.mention_det_acc,
            start.elapsed()
        )
    })?;
    println!("best epoch {:?}: avg F1 {:.4}", out.best_epoch, out.best_avg_f1());

    for b in mention_detection_by_width(&out.model, dev_docs, &embeddings, &WIDTH_BUCKETS)? {
        println!("width {:2}-{:<2}  gold {:4}  recall {:?}", b.lo, b.hi, b.gold, b.recall);
    }
    Ok(())
}
