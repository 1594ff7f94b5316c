//! Text to synthetic speech units, then grouping and run-length reduction.

use groupformer::unit_codec::{expand, group, reduce, synth_units, ungroup, SyntheticLexicon};

fn main() -> groupformer::Result<()> {
    let lex = SyntheticLexicon::generate(0);
    let units = synth_units("where does the fox live?", &lex)?;
    println!(
        "{} units, {:.2} s at {} Hz",
        units.len(),
        units.duration_seconds(),
        units.frame_rate_hz
    );

    let grouped = group(&units, 5)?;
    println!(
        "grouped: {} groups of 5, {} units clipped from the start",
        grouped.num_groups(),
        grouped.clipped_prefix_len()
    );
    for g in grouped.groups().take(3) {
        println!("  {g:?}");
    }
    assert_eq!(
        ungroup(&grouped, 25.0).units,
        units.units[grouped.clipped_prefix_len()..]
    );

    let reduced = reduce(&units);
    println!(
        "reduced: {} unique units, mean run {:.3}",
        reduced.len(),
        units.len() as f64 / reduced.len() as f64
    );
    assert_eq!(expand(&reduced, 25.0)?, units);
    Ok(())
}
