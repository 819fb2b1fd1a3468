//! Procedural objects: parts, silhouettes and a written corpus.

use partgen::synthdata::{build_dataset, generate_sample, Category};

fn main() {
    let sample = generate_sample(3, Category::Chair);
    println!("{} ({} parts)", sample.sample_id, sample.parts.len());
    for (b, part) in sample.boxes().iter().zip(&sample.parts) {
        println!("  part {}: {:?} .. {:?}", part.part_id, b.min.to_array(), b.max.to_array());
    }
    let sil = sample.silhouettes();
    println!("silhouette pixels per view: {:?}", (0..3).map(|v| sil.count(v)).collect::<Vec<_>>());
    println!("condition tokens: {}x{}", sample.condition().rows, sample.condition().cols);

    let dir = tempfile::tempdir().unwrap();
    let manifest = build_dataset(5, &Category::ALL, 10, 16, dir.path()).unwrap();
    println!("wrote {} samples and a manifest (grid {})", manifest.samples.len(), manifest.grid);
}
