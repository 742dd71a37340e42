//! Invertibility audit: random models, random inputs, worst reconstruction
//! error in both precisions.
//!
//! ```text
//! cargo run --release --example roundtrip -- [models]
//! ```

use innpar::layers::{init_model, ModelConfig};
use innpar::train::{random_inputs, roundtrip_audit};
use innpar::tensor::Scalar;

fn worst<T: Scalar>(models: u64) -> innpar::Result<f64> {
    let mut worst = 0.0f64;
    for seed in 0..models {
        let model = init_model::<T>(&ModelConfig::default(), seed)?;
        let r = roundtrip_audit(&model, &random_inputs(&model, 1, 1000 + seed))?;
        worst = worst.max(r.max_abs_err);
    }
    Ok(worst)
}

fn main() -> innpar::Result<()> {
    let models: u64 = std::env::args().nth(1).map_or(20, |a| a.parse().expect("models"));
    println!("{models} models, length 625");
    println!("f32 worst |x - inverse(forward(x))|: {:.3e}", worst::<f32>(models)?);
    println!("f64 worst |x - inverse(forward(x))|: {:.3e}", worst::<f64>(models)?);
    Ok(())
}
