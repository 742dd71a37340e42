//! Parameter and operation counts for the default model and each ablation.
//!
//! ```text
//! cargo run --example cost
//! ```

use innpar::layers::{init_model, ModelConfig, PUBLISHED_PARAMS_K};
use innpar::train::Ablation;

fn main() -> innpar::Result<()> {
    let base = ModelConfig::default();
    println!("variant          params   conv MACs (L=625)  elementwise");
    for (name, ablation) in [("full", Ablation::default()), ("single scale", Ablation::ae2())] {
        let model = init_model::<f32>(&ablation.model_config(&base), 0)?;
        let c = model.count_flops(base.signal_length)?;
        println!("{name:<14}  {:>8}   {:>16}  {:>11}", c.params, c.conv_macs, c.elementwise_ops);
    }
    println!("published parameter count: {PUBLISHED_PARAMS_K} K");
    Ok(())
}
