//! Central-difference check of every parameter gradient of a small model.
//!
//! ```text
//! cargo run --release --example gradcheck -- [seed]
//! ```

use innpar::autodiff::Selection;
use innpar::layers::{init_model, ModelConfig};
use innpar::signal::synth_corpus;
use innpar::train::gradcheck_model;

fn main() -> innpar::Result<()> {
    let seed: u64 = std::env::args().nth(1).map_or(0, |a| a.parse().expect("seed"));
    let config = ModelConfig::tiny();
    let mut model = init_model::<f64>(&config, seed)?;
    let batch = synth_corpus(2, seed, config.signal_length, 8.0)?;
    let r = gradcheck_model(&mut model, &batch, 1.0, 1e-5, Selection::All)?;
    println!("scalars checked      {}", r.checked);
    println!("max relative error   {:.3e} ({})", r.max_rel_err, r.worst_param);
    println!("analytic / numeric   {:.6e} / {:.6e}", r.worst_analytic, r.worst_numeric);
    println!("widened steps        {}", r.widened);
    println!("kink crossings       {}", r.kinks);
    Ok(())
}
