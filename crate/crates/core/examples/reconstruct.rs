//! Forward reconstruction of ABP from PPG with an untrained model, then the
//! inverse map from the predicted ABP back to the PPG.
//!
//! ```text
//! cargo run --release --example reconstruct
//! ```

use innpar::layers::{init_model, ModelConfig};
use innpar::signal::{extract_sbp_dbp, synth_corpus};
use innpar::train::{make_model_input, Ablation};

fn main() -> innpar::Result<()> {
    let set = synth_corpus(1, 4, 625, 125.0)?;
    let model = init_model::<f64>(&ModelConfig::default(), 4)?;
    let x = make_model_input::<f64>(&set.segments()[0].ppg, 625, &Ablation::default())?;
    let y = model.forward(&x)?;
    let abp = set.norm.denormalize(y.row(0, 0));
    let (sbp, dbp) = extract_sbp_dbp(&abp, 125.0)?;
    println!("predicted SBP {sbp:.1} mmHg, DBP {dbp:.1} mmHg (untrained)");
    let back = model.inverse(&y)?;
    println!("PPG recovered from the prediction, max error {:.3e}", back.max_abs_diff(&x)?);
    Ok(())
}
