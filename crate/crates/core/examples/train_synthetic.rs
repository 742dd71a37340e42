//! Trains the default network on a small synthetic corpus and compares test
//! metrics before and after training.
//!
//! ```text
//! cargo run --release --example train_synthetic -- [epochs] [seed]
//! ```

use innpar::layers::ModelConfig;
use innpar::train::{run_variant, SyntheticSplit, TrainConfig};

fn main() -> innpar::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().map_or(30, |a| a.parse().expect("epochs"));
    let seed: u64 = args.next().map_or(7, |a| a.parse().expect("seed"));

    let split = SyntheticSplit::standard(seed)?;
    let cfg = TrainConfig {
        epochs,
        batch_size: 16,
        seed,
        ..TrainConfig::default()
    };
    let r = run_variant::<f32>(&split, &ModelConfig::default(), &cfg)?;
    for e in &r.log.epochs {
        println!(
            "epoch {:3}  train {:.5}  val {:.5}  {:.1}s",
            e.epoch, e.train_loss, e.val_loss, e.seconds
        );
    }
    println!("              waveform MAE  NRMSE   SBP MAE  DBP MAE");
    for (label, m) in [("untrained", &r.untrained), ("trained", &r.trained)] {
        println!(
            "{label:>12}  {:.4}        {:.4}  {:6.2}   {:6.2}",
            m.waveform_mae, m.waveform_nrmse, m.sbp_mae_mmhg, m.dbp_mae_mmhg
        );
    }
    Ok(())
}
