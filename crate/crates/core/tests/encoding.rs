mod common;

use common::checks::unit_key_mismatches;
use common::oracle::lattice_coord;
use partgen::encoding::*;
use partgen::geometry::Aabb;
use partgen::stages::patch_keys;

fn lattice(num: usize, den: usize) -> u16 {
    lattice_coord(num, den, LATTICE)
}

#[test]
fn unit_box_keys_equal_the_global_lattice() {
    assert_eq!(unit_key_mismatches(16), 0);
    assert_eq!(unit_key_mismatches(64), 0);
}

#[test]
fn worked_value_first_cell_at_64() {
    let k = cell_key(&Aabb::UNIT, [0, 0, 0], 64, LATTICE).unwrap();
    assert_eq!((k.center.ix, k.center.iy, k.center.iz), (16, 16, 16));
    let mut seen: Vec<u16> = k.corners.iter().flat_map(|q| [q.ix, q.iy, q.iz]).collect();
    seen.sort_unstable();
    seen.dedup();
    assert_eq!(seen, vec![0, 32]);
    assert_eq!(k.corners[0], QuantCoord { ix: 0, iy: 0, iz: 0 });
    assert_eq!(k.corners[7], QuantCoord { ix: 32, iy: 32, iz: 32 });
}

#[test]
fn whole_object_part_shares_global_slot_keys() {
    // The global slot is keyed by the unit box, so a part spanning the whole
    // object gets the same keys.
    let part = Aabb::from_arrays([-1.0; 3], [1.0; 3]).unwrap();
    assert_eq!(patch_keys(&part, 16, 4, LATTICE).unwrap(), patch_keys(&Aabb::UNIT, 16, 4, LATTICE).unwrap());
    assert_eq!(patch_keys(&part, 64, 4, LATTICE).unwrap(), grid_keys(&Aabb::UNIT, 16, LATTICE));
}

#[test]
fn neighboring_cells_share_corners() {
    let b = Aabb::from_arrays([-0.5, -0.25, 0.0], [0.5, 0.75, 0.5]).unwrap();
    let n = 8;
    let keys = grid_keys(&b, n, LATTICE);
    let at = |x: usize, y: usize, z: usize| keys[x + n * (y + n * z)];
    for z in 0..n {
        for y in 0..n {
            for x in 0..n - 1 {
                let (l, r) = (at(x, y, z), at(x + 1, y, z));
                for c in [0, 2, 4, 6] {
                    assert_eq!(l.corners[c + 1], r.corners[c]);
                }
            }
        }
    }
}

#[test]
fn abutting_part_boxes_agree_on_the_shared_face() {
    // Two boxes meeting at x = 0.25: the lower box's max-x corners and the
    // upper box's min-x corners land on the same lattice plane.
    let lo = Aabb::from_arrays([-0.75, -0.5, -0.5], [0.25, 0.5, 0.5]).unwrap();
    let hi = Aabb::from_arrays([0.25, -0.5, -0.5], [0.75, 0.5, 0.5]).unwrap();
    let kl = cell_key(&lo, [15, 3, 3], 16, LATTICE).unwrap();
    let kh = cell_key(&hi, [0, 3, 3], 16, LATTICE).unwrap();
    assert_eq!(kl.corners[1].ix, kh.corners[0].ix);
    assert_eq!(kl.corners[1].ix, lattice(5, 8));
    assert_eq!(kl.corners[1], kh.corners[0]);
}

#[test]
fn embedding_is_the_sum_of_nine_lookups_plus_id() {
    let t = EmbeddingTable::<f64>::sinusoidal(LATTICE, 12, 5);
    let b = Aabb::from_arrays([-0.3, 0.1, -0.9], [0.2, 0.7, 0.4]).unwrap();
    let k = cell_key(&b, [1, 2, 3], 4, LATTICE).unwrap();
    let got = t.embed(&k, 3).unwrap();
    let mut want = t.id.row(3).to_vec();
    for q in k.points() {
        for a in 0..3 {
            for (w, v) in want.iter_mut().zip(t.pos[a].row(q.axis(a) as usize)) {
                *w += v;
            }
        }
    }
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w).abs() < 1e-12);
    }
}

#[test]
fn axis_tables_differ() {
    let t = EmbeddingTable::<f64>::sinusoidal(64, 8, 2);
    assert_ne!(t.pos[0], t.pos[1]);
    assert_ne!(t.pos[1], t.pos[2]);
}
