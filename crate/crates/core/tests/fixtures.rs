use std::path::PathBuf;

use momentreg::embedstore::{load_table, save_table};
use momentreg::feasibility::{classify_triplet, load_triplets, synth_triplet_geometry};
use momentreg::Format;

const DIM: usize = 64;
const UNREASONABLE: f64 = 0.3;
const SEED: u64 = 2024;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

// Set REGEN_FIXTURES=1 to rewrite concepts.emb after changing the generator.
#[test]
fn concepts_table_matches_generator() {
    let triplets = load_triplets(&fixture("triplets200.json")).unwrap();
    assert_eq!(triplets.len(), 200);
    let (table, unreasonable) = synth_triplet_geometry(&triplets, DIM, UNREASONABLE, SEED).unwrap();
    let table = table.quantize_f32();
    let path = fixture("concepts.emb");
    if std::env::var_os("REGEN_FIXTURES").is_some() {
        save_table(&table, &path, Format::Binary).unwrap();
    }
    let shipped = load_table(&path, Format::Binary).unwrap();
    assert_eq!(shipped, table);
    assert_eq!(unreasonable.iter().filter(|u| **u).count(), 60);
    for (t, u) in triplets.iter().zip(&unreasonable) {
        assert_eq!(classify_triplet(&shipped, t).unwrap().reasonable, !u);
    }
}
