//! Trains each ablation variant on the same synthetic split and prints a
//! comparison table.
//!
//! ```text
//! cargo run --release --example ablation -- [epochs] [seed...]
//! ```

use innpar::layers::ModelConfig;
use innpar::train::{run_variant, Ablation, SyntheticSplit, TrainConfig};

fn main() -> innpar::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().map_or(30, |a| a.parse().expect("epochs"));
    let mut seeds: Vec<u64> = args.map(|a| a.parse().expect("seed")).collect();
    if seeds.is_empty() {
        seeds.push(7);
    }
    let variants = [
        ("AE1 duplicated signal", Ablation::ae1()),
        ("AE2 single scale", Ablation::ae2()),
        ("AE3 alpha = 0", Ablation::ae3()),
        ("AE4 full model", Ablation::default()),
    ];
    println!("seed  variant                 waveform MAE  NRMSE   SBP MAE  DBP MAE");
    for &seed in &seeds {
        let split = SyntheticSplit::standard(seed)?;
        for (name, ablation) in variants {
            let cfg = TrainConfig {
                epochs,
                batch_size: 16,
                seed,
                ablation,
                ..TrainConfig::default()
            };
            let m = run_variant::<f32>(&split, &ModelConfig::default(), &cfg)?.trained;
            println!(
                "{seed:4}  {name:<22}  {:.4}        {:.4}  {:6.2}   {:6.2}",
                m.waveform_mae, m.waveform_nrmse, m.sbp_mae_mmhg, m.dbp_mae_mmhg
            );
        }
    }
    Ok(())
}
