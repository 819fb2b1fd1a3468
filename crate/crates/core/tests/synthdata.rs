use std::collections::BTreeMap;
use std::path::Path;

use partgen::geometry::{voxelize, Aabb, Vec3};
use partgen::synthdata::*;

#[test]
fn samples_are_deterministic_per_seed() {
    for c in Category::ALL {
        assert_eq!(generate_sample(42, c), generate_sample(42, c));
        assert_ne!(generate_sample(42, c), generate_sample(43, c));
    }
}

#[test]
fn tables_have_a_top_and_four_legs() {
    for seed in 0..20 {
        let s = generate_sample(seed, Category::Table);
        assert_eq!(s.parts.len(), 5);
        assert_eq!(s.parts[0].name, "top");
        assert!(s.parts[1..].iter().all(|p| p.name == "leg"));
    }
}

#[test]
fn every_part_is_occupied_at_grid_16() {
    for seed in 0..100 {
        for c in Category::ALL {
            let s = generate_sample(seed, c);
            for (p, g) in s.parts.iter().zip(s.part_grids(16).unwrap()) {
                assert!(g.count() > 0, "{} part {} ({}) is empty", s.sample_id, p.part_id, p.name);
            }
            let ids: Vec<usize> = s.parts.iter().map(|p| p.part_id).collect();
            assert_eq!(ids, (1..=s.parts.len()).collect::<Vec<_>>());
        }
    }
}

#[test]
fn objects_fill_the_normalized_cube() {
    for c in Category::ALL {
        let s = generate_sample(5, c);
        let b = Aabb::enclosing(&s.boxes()).unwrap();
        assert!((b.extent().max_elem() - 2.0 * OBJECT_HALF_EXTENT).abs() < 1e-9);
        assert!(b.center().norm() < 1e-9);
        for p in &s.parts {
            assert_eq!(p.solid.bounds().unwrap(), p.aabb);
        }
    }
}

#[test]
fn global_grid_is_the_union_of_part_grids() {
    for c in Category::ALL {
        let s = generate_sample(9, c);
        let global = s.global_grid(&Aabb::UNIT, 32).unwrap();
        let parts: Vec<_> = s.parts.iter().map(|p| voxelize(&p.solid, &Aabb::UNIT, 32).unwrap()).collect();
        for i in 0..global.len() {
            assert_eq!(global.get_linear(i), parts.iter().any(|g| g.get_linear(i)), "{c} cell {i}");
        }
    }
}

/// Marches a ray through the object and reports whether any sample is inside.
fn ray_hits(s: &ObjectSample, view: usize, u: f64, v: f64) -> bool {
    let (ra, ca) = view_axes(view);
    let union = s.union_solid();
    (0..=4000).any(|k| {
        let mut p = Vec3::splat(0.0);
        p.set(view, -1.0 + 2.0 * k as f64 / 4000.0);
        p.set(ra, u);
        p.set(ca, v);
        union.contains(p)
    })
}

#[test]
fn silhouettes_match_marched_rays() {
    for c in Category::ALL {
        let s = generate_sample(13, c);
        let sil = s.silhouettes();
        let res = sil.res;
        let center = |i: usize| -1.0 + (i as f64 + 0.5) * 2.0 / res as f64;
        let mut mismatches = 0;
        for view in 0..3 {
            for i in 0..res {
                for j in 0..res {
                    if sil.get(view, i, j) != ray_hits(&s, view, center(i), center(j)) {
                        mismatches += 1;
                    }
                }
            }
            assert!(sil.count(view) > 0);
        }
        assert_eq!(mismatches, 0, "{c}");
    }
}

#[test]
fn condition_tokens_mirror_silhouette_pixels() {
    let s = generate_sample(1, Category::Lamp);
    let sil = s.silhouettes();
    let m = s.condition();
    assert_eq!((m.rows, m.cols), (COND_TOKENS, COND_WIDTH));
    let per = SILHOUETTE_RES / COND_PATCH;
    let on = m.data.iter().filter(|&&v| v == 1.0).count();
    assert_eq!(on, (0..3).map(|v| sil.count(v)).sum::<usize>());
    assert!(m.data.iter().all(|&v| v == 1.0 || v == -1.0));
    // Pixel (9, 17) of view 2 sits in patch (1, 2) at offset (1, 1).
    let want = if sil.get(2, 9, 17) { 1.0 } else { -1.0 };
    assert_eq!(m.at(2 * per * per + per + 2, COND_PATCH + 1), want);
}

fn tree_hashes(root: &Path) -> BTreeMap<String, String> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, partgen::files::sha256_hex(&std::fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

#[test]
fn manifest_rebuild_is_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let m = build_dataset(3, &Category::ALL, 7, 16, a.path()).unwrap();
    let read = Manifest::read(a.path()).unwrap();
    assert_eq!(read, m);
    rebuild_from_manifest(&read, b.path()).unwrap();
    let (ha, hb) = (tree_hashes(a.path()), tree_hashes(b.path()));
    assert_eq!(ha, hb);
    let listed: usize = m.samples.iter().map(|e| e.files.len()).sum();
    assert_eq!(ha.len(), listed + 1);
}

#[test]
fn corpus_cycles_categories_evenly() {
    let samples = corpus(0, &Category::ALL, 100).unwrap();
    let mut counts: BTreeMap<Category, usize> = BTreeMap::new();
    for s in &samples {
        *counts.entry(s.category).or_default() += 1;
    }
    assert!(Category::ALL.iter().all(|c| counts[c] == 20));
    let only = corpus(0, &[Category::Chair, Category::Lamp], 5).unwrap();
    let cats: Vec<Category> = only.iter().map(|s| s.category).collect();
    assert_eq!(cats, [Category::Chair, Category::Lamp, Category::Chair, Category::Lamp, Category::Chair]);
    assert!(corpus(0, &[], 3).is_err());
    let ids: std::collections::HashSet<&str> = samples.iter().map(|s| s.sample_id.as_str()).collect();
    assert_eq!(ids.len(), samples.len());
}
