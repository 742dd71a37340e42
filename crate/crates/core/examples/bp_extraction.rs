//! Systolic and diastolic pressure from a waveform, plus the waveform
//! metrics, on hand-made and synthetic signals.
//!
//! ```text
//! cargo run --example bp_extraction
//! ```

use std::f64::consts::PI;

use innpar::signal::{extract_sbp_dbp, mae, nrmse, synth_corpus_with_truth};

fn main() -> innpar::Result<()> {
    let rate = 125.0;
    let wave: Vec<f64> = (0..625)
        .map(|i| 100.0 + 20.0 * (2.0 * PI * 1.2 * i as f64 / rate).sin())
        .collect();
    let (sbp, dbp) = extract_sbp_dbp(&wave, rate)?;
    println!("1.2 Hz sinusoid 100 +- 20 mmHg: SBP {sbp:.3}  DBP {dbp:.3}");

    println!(
        "mae([1,1,1,1], [0,2,0,2]) = {}  nrmse = {}",
        mae(&[1.0, 1.0, 1.0, 1.0], &[0.0, 2.0, 0.0, 2.0])?,
        nrmse(&[1.0, 1.0, 1.0, 1.0], &[0.0, 2.0, 0.0, 2.0])?
    );

    let corpus = synth_corpus_with_truth(5, 3, 625, rate as f32)?;
    println!("synthetic segments: true vs extracted (mmHg)");
    for (s, t) in corpus.set.segments().iter().zip(&corpus.truth) {
        let abp: Vec<f64> = s.abp.iter().map(|&v| v as f64).collect();
        let (sbp, dbp) = extract_sbp_dbp(&corpus.set.norm.denormalize(&abp), rate)?;
        println!("  SBP {:6.2} -> {sbp:6.2}   DBP {:6.2} -> {dbp:6.2}", t.sbp, t.dbp);
    }
    Ok(())
}
