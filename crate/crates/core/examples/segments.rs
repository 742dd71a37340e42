//! Writes a synthetic corpus as CSV, ingests it back and stores it in the
//! binary segment format.
//!
//! ```text
//! cargo run --example segments -- [dir]
//! ```

use std::fmt::Write as _;

use innpar::signal::{ingest_csv, read_segments, synth_corpus, write_segments, CsvLayout, IngestOptions};

fn main() -> innpar::Result<()> {
    let dir = std::env::args().nth(1).map_or_else(std::env::temp_dir, Into::into);
    let set = synth_corpus(4, 2, 625, 125.0)?;

    let mut csv = String::from("# 625 PPG values, then 625 ABP values in mmHg\n");
    for s in set.segments() {
        let abp: Vec<f64> = s.abp.iter().map(|&v| v as f64).collect();
        let cells = s.ppg.iter().map(|&v| v as f64).chain(set.norm.denormalize(&abp));
        for (i, v) in cells.enumerate() {
            if i > 0 {
                csv.push(',');
            }
            write!(csv, "{v}").unwrap();
        }
        csv.push('\n');
    }
    let csv_path = dir.join("innpar_segments.csv");
    std::fs::write(&csv_path, csv)?;

    let ingested = ingest_csv(&CsvLayout::Paired(csv_path.clone()), &IngestOptions::default())?;
    let bin_path = dir.join("innpar_segments.bin");
    write_segments(&bin_path, &ingested)?;
    let back = read_segments(&bin_path)?;
    println!("{} segments: {} -> {}", back.len(), csv_path.display(), bin_path.display());
    println!("binary round trip identical: {}", back.segments() == ingested.segments());
    Ok(())
}
