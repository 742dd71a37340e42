//! Saves a model, loads it back in both precisions and checks the outputs.
//!
//! ```text
//! cargo run --release --example checkpoint -- [path]
//! ```

use innpar::layers::{init_model, load_checkpoint, save_checkpoint, CheckpointMeta, ModelConfig};
use innpar::train::random_inputs;

fn main() -> innpar::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map_or_else(|| std::env::temp_dir().join("innpar_example.bin"), Into::into);
    let model = init_model::<f32>(&ModelConfig::default(), 11)?;
    save_checkpoint(&model, &path, &CheckpointMeta::new(0, &[]))?;
    let bytes = std::fs::metadata(&path)?.len();

    let (same, meta) = load_checkpoint::<f32>(&path)?;
    let (wide, _) = load_checkpoint::<f64>(&path)?;
    let x = random_inputs(&model, 1, 5).remove(0);
    let y = model.forward(&x)?;
    println!("{} ({bytes} bytes, epoch {}, digest {})", path.display(), meta.epoch, meta.loss_digest);
    println!("f32 reload identical: {}", same == model);
    println!(
        "f64 reload max output difference: {:.3e}",
        wide.forward(&x.cast())?.cast::<f32>().max_abs_diff(&y)?
    );
    Ok(())
}
