//! Center-corner keys: a cell is addressed by its center and eight corners
//! quantized on a shared lattice, so abutting parts agree on shared faces.

use partgen::encoding::{cell_key, grid_keys, EmbeddingTable, LATTICE};
use partgen::geometry::Aabb;

fn main() {
    let k = cell_key(&Aabb::UNIT, [0, 0, 0], 64, LATTICE).unwrap();
    println!("first cell at 64^3: center {:?}", k.center);
    for c in &k.corners {
        println!("  corner {:?}", c);
    }

    let left = Aabb::from_arrays([-0.5, -0.5, -0.5], [0.0, 0.5, 0.5]).unwrap();
    let right = Aabb::from_arrays([0.0, -0.5, -0.5], [0.5, 0.5, 0.5]).unwrap();
    let l = cell_key(&left, [3, 0, 0], 4, LATTICE).unwrap();
    let r = cell_key(&right, [0, 0, 0], 4, LATTICE).unwrap();
    println!("shared face x: left {} right {}", l.corners[1].ix, r.corners[0].ix);

    let table = EmbeddingTable::<f32>::sinusoidal(LATTICE, 32, 8);
    let keys = grid_keys(&Aabb::UNIT, 4, LATTICE);
    let e = table.embed(&keys[0], 1).unwrap();
    println!("{} keys at 4^3, embedding width {}", keys.len(), e.len());
}
