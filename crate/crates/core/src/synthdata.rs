//! Procedural multi-part objects with analytic ground truth.
//!
//! Each category is a small parametric grammar of boxes, spheres and
//! cylinders. Parts abut or overlap, so the union is connected, and every
//! part's box is the tight bound of its solid.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{voxelize, Aabb, Solid, Vec3, VoxelGrid};
use crate::rng::{derive_seed, det_rng};
use crate::tensor::Mat;

/// Silhouette resolution per view.
pub const SILHOUETTE_RES: usize = 32;
/// Pixel patch edge used to tokenize silhouettes.
pub const COND_PATCH: usize = 8;
/// Condition tokens: 3 views of 4 x 4 patches.
pub const COND_TOKENS: usize = 3 * (SILHOUETTE_RES / COND_PATCH) * (SILHOUETTE_RES / COND_PATCH);
/// Width of one condition token (one patch of pixels).
pub const COND_WIDTH: usize = COND_PATCH * COND_PATCH;
/// Objects are scaled so their largest half extent equals this.
pub const OBJECT_HALF_EXTENT: f64 = 0.95;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Table,
    Chair,
    Robot,
    Lamp,
    Barbell,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::Table,
        Category::Chair,
        Category::Robot,
        Category::Lamp,
        Category::Barbell,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::Table => "table",
            Category::Chair => "chair",
            Category::Robot => "robot",
            Category::Lamp => "lamp",
            Category::Barbell => "barbell",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Category {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::UnknownCategory(s.to_string()))
    }
}

/// Fixed part palette.
pub const PALETTE: [[u8; 3]; 8] = [
    [200, 60, 50],
    [60, 130, 200],
    [240, 190, 60],
    [80, 170, 90],
    [150, 90, 180],
    [230, 120, 40],
    [70, 70, 80],
    [190, 190, 200],
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Part {
    /// 1-based; 0 is reserved for the whole object.
    pub part_id: usize,
    pub name: String,
    #[serde(rename = "box")]
    pub aabb: Aabb,
    pub solid: Solid,
    pub color: [u8; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSample {
    pub sample_id: String,
    pub seed: u64,
    pub category: Category,
    pub parts: Vec<Part>,
}

/// Three orthographic binary views. View `X` looks along x and indexes
/// pixels by `(y, z)`, `Y` by `(z, x)` and `Z` by `(x, y)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Silhouettes {
    pub res: usize,
    pub views: [Vec<bool>; 3],
}

impl Silhouettes {
    pub fn get(&self, view: usize, i: usize, j: usize) -> bool {
        self.views[view][i * self.res + j]
    }

    pub fn count(&self, view: usize) -> usize {
        self.views[view].iter().filter(|b| **b).count()
    }
}

/// The two image axes of view `v`: `(v + 1) % 3` for rows, `(v + 2) % 3` for columns.
pub fn view_axes(view: usize) -> (usize, usize) {
    ((view + 1) % 3, (view + 2) % 3)
}

fn pixel_center(i: usize, res: usize) -> f64 {
    -1.0 + (i as f64 + 0.5) * 2.0 / res as f64
}

impl ObjectSample {
    pub fn boxes(&self) -> Vec<Aabb> {
        self.parts.iter().map(|p| p.aabb).collect()
    }

    pub fn union_solid(&self) -> Solid {
        Solid::Union {
            parts: self.parts.iter().map(|p| p.solid.clone()).collect(),
        }
    }

    pub fn part(&self, part_id: usize) -> Result<&Part> {
        self.parts
            .iter()
            .find(|p| p.part_id == part_id)
            .ok_or(Error::UnknownPart(part_id as u32))
    }

    /// Occupancy of one part in its own box frame.
    pub fn part_grid(&self, part_id: usize, n: usize) -> Result<VoxelGrid> {
        let p = self.part(part_id)?;
        voxelize(&p.solid, &p.aabb, n)
    }

    /// Occupancy of every part at resolution `n`, in part order.
    pub fn part_grids(&self, n: usize) -> Result<Vec<VoxelGrid>> {
        self.parts.iter().map(|p| voxelize(&p.solid, &p.aabb, n)).collect()
    }

    /// Whole-object occupancy on a grid spanning `frame`.
    pub fn global_grid(&self, frame: &Aabb, n: usize) -> Result<VoxelGrid> {
        voxelize(&self.union_solid(), frame, n)
    }

    pub fn silhouettes(&self) -> Silhouettes {
        rasterize_condition(&self.union_solid(), SILHOUETTE_RES)
    }

    /// Condition payload rows (`COND_TOKENS x COND_WIDTH`).
    pub fn condition(&self) -> Mat<f32> {
        condition_tokens(&self.silhouettes())
    }
}

/// Synthetic color of a point of part `part`: the palette color shaded by
/// height so colors vary inside every part.
pub fn voxel_color(part: &Part, p: Vec3) -> [f32; 3] {
    let shade = 0.6 + 0.4 * ((p.y + 1.0) / 2.0).clamp(0.0, 1.0);
    part.color.map(|c| (c as f64 / 255.0 * shade) as f32)
}

/// Colors of the occupied cells of `grid` (ascending linear index), with the
/// grid spanning `part.aabb`.
pub fn voxel_colors(part: &Part, grid: &VoxelGrid) -> Vec<[f32; 3]> {
    grid.occupied()
        .map(|i| {
            let [x, y, z] = grid.coords(i);
            voxel_color(part, grid.cell_center(&part.aabb, x, y, z))
        })
        .collect()
}

/// Orthographic silhouettes of `solid` over `[-1, 1]^2` per view.
pub fn rasterize_condition(solid: &Solid, res: usize) -> Silhouettes {
    let views = [0, 1, 2].map(|v| {
        let (ra, ca) = view_axes(v);
        let mut img = vec![false; res * res];
        for i in 0..res {
            for j in 0..res {
                let (ci, cj) = (pixel_center(i, res), pixel_center(j, res));
                // `hits_line` wants the two coordinates in ascending axis order.
                let (a, b) = if ra < ca { (ci, cj) } else { (cj, ci) };
                img[i * res + j] = solid.hits_line(v, a, b);
            }
        }
        img
    });
    Silhouettes { res, views }
}

/// Tokenizes silhouettes into `8 x 8` pixel patches, one token per patch,
/// pixels mapped to -1 / +1.
pub fn condition_tokens(s: &Silhouettes) -> Mat<f32> {
    let per = s.res / COND_PATCH;
    let mut m = Mat::zeros(3 * per * per, COND_PATCH * COND_PATCH);
    for v in 0..3 {
        for pi in 0..per {
            for pj in 0..per {
                let row = m.row_mut(v * per * per + pi * per + pj);
                for di in 0..COND_PATCH {
                    for dj in 0..COND_PATCH {
                        let on = s.get(v, pi * COND_PATCH + di, pj * COND_PATCH + dj);
                        row[di * COND_PATCH + dj] = if on { 1.0 } else { -1.0 };
                    }
                }
            }
        }
    }
    m
}

fn bx(lo: [f64; 3], hi: [f64; 3]) -> Solid {
    Solid::Box {
        aabb: Aabb::from_arrays(lo, hi).expect("grammar boxes are ordered"),
    }
}

fn cyl(axis: usize, c: [f64; 3], radius: f64, half_height: f64) -> Solid {
    Solid::Cylinder {
        axis,
        center: Vec3::from_array(c),
        radius,
        half_height,
    }
}

fn sph(c: [f64; 3], radius: f64) -> Solid {
    Solid::Sphere {
        center: Vec3::from_array(c),
        radius,
    }
}

fn affine(s: &Solid, scale: f64, shift: Vec3) -> Solid {
    let map = |p: Vec3| p * scale + shift;
    match s {
        Solid::Box { aabb } => Solid::Box {
            aabb: Aabb {
                min: map(aabb.min),
                max: map(aabb.max),
            },
        },
        Solid::Sphere { center, radius } => Solid::Sphere {
            center: map(*center),
            radius: radius * scale,
        },
        Solid::Cylinder {
            axis,
            center,
            radius,
            half_height,
        } => Solid::Cylinder {
            axis: *axis,
            center: map(*center),
            radius: radius * scale,
            half_height: half_height * scale,
        },
        Solid::HalfSpace { .. } | Solid::Union { .. } => {
            unreachable!("grammars only emit bounded primitives")
        }
    }
}

fn table(rng: &mut impl Rng) -> Vec<(&'static str, Solid)> {
    let w = rng.random_range(0.6..0.95);
    let d = rng.random_range(0.4..0.85);
    let h = rng.random_range(0.9..1.7) / 2.0;
    let t = rng.random_range(0.08..0.16);
    let s = rng.random_range(0.08..0.15);
    let inset = rng.random_range(0.0..0.1);
    let round = rng.random_bool(0.5);
    let mut parts = vec![("top", bx([-w, h - t, -d], [w, h, d]))];
    for (sx, sz) in [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)] {
        let cx = sx * (w - inset - s / 2.0);
        let cz = sz * (d - inset - s / 2.0);
        let leg = if round {
            cyl(1, [cx, (-h + h - t) / 2.0, cz], s / 2.0, (2.0 * h - t) / 2.0)
        } else {
            bx([cx - s / 2.0, -h, cz - s / 2.0], [cx + s / 2.0, h - t, cz + s / 2.0])
        };
        parts.push(("leg", leg));
    }
    parts
}

fn chair(rng: &mut impl Rng) -> Vec<(&'static str, Solid)> {
    let w = rng.random_range(0.4..0.6);
    let d = rng.random_range(0.4..0.6);
    let ys = rng.random_range(-0.2..0.1);
    let t = rng.random_range(0.08..0.14);
    let yb = rng.random_range(-0.95..-0.7);
    let s = rng.random_range(0.07..0.12);
    let bt = rng.random_range(0.06..0.12);
    let hb = rng.random_range(0.6..0.85);
    let mut parts = vec![("seat", bx([-w, ys - t, -d], [w, ys, d]))];
    for (sx, sz) in [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)] {
        let cx = sx * (w - s / 2.0);
        let cz = sz * (d - s / 2.0);
        parts.push((
            "leg",
            bx([cx - s / 2.0, yb, cz - s / 2.0], [cx + s / 2.0, ys - t, cz + s / 2.0]),
        ));
    }
    parts.push(("back", bx([-w, ys, -d], [w, ys + hb, -d + bt])));
    parts
}

fn robot(rng: &mut impl Rng) -> Vec<(&'static str, Solid)> {
    let (tx, ty, tz) = (
        rng.random_range(0.25..0.4),
        rng.random_range(0.25..0.4),
        rng.random_range(0.15..0.3),
    );
    let y0 = rng.random_range(-0.05..0.15);
    let h = rng.random_range(0.15..0.25);
    let a = rng.random_range(0.06..0.1);
    let la = rng.random_range(0.3..0.55);
    let lw = rng.random_range(0.06..0.1);
    let ll = rng.random_range(0.3..0.5);
    let top = y0 + ty;
    let head_c = [0.0, top + h, 0.0];
    let head = if rng.random_bool(0.5) {
        sph(head_c, h)
    } else {
        bx([-h, top, -h], [h, top + 2.0 * h, h])
    };
    let mut parts = vec![
        ("torso", bx([-tx, y0 - ty, -tz], [tx, top, tz])),
        ("head", head),
        ("arm", bx([-tx - 2.0 * a, top - la, -a], [-tx, top, a])),
        ("arm", bx([tx, top - la, -a], [tx + 2.0 * a, top, a])),
        ("leg", bx([-tx / 2.0 - lw, y0 - ty - ll, -lw], [-tx / 2.0 + lw, y0 - ty, lw])),
        ("leg", bx([tx / 2.0 - lw, y0 - ty - ll, -lw], [tx / 2.0 + lw, y0 - ty, lw])),
    ];
    let antennae = rng.random_range(0..=2usize);
    for i in 0..antennae {
        let hh = rng.random_range(0.05..0.1);
        let x = if antennae == 1 { 0.0 } else { (i as f64 - 0.5) * h };
        // Rooted slightly inside the head so the union stays connected.
        let base = top + 2.0 * h - 0.02;
        let base = if matches!(parts[1].1, Solid::Sphere { .. }) {
            top + h + (h * h - x * x).max(0.0).sqrt() - 0.02
        } else {
            base
        };
        parts.push(("antenna", cyl(1, [x, base + hh, 0.0], 0.03, hh)));
    }
    parts
}

fn lamp(rng: &mut impl Rng) -> Vec<(&'static str, Solid)> {
    let rb = rng.random_range(0.3..0.5);
    let hb = rng.random_range(0.04..0.08);
    let rp = rng.random_range(0.03..0.06);
    let hp = rng.random_range(0.8..1.3);
    let yb = -1.0;
    let pole_top = yb + 2.0 * hb + hp;
    let mut parts = vec![
        ("base", cyl(1, [0.0, yb + hb, 0.0], rb, hb)),
        ("pole", cyl(1, [0.0, yb + 2.0 * hb + hp / 2.0, 0.0], rp, hp / 2.0)),
    ];
    let shade_top = if rng.random_bool(0.5) {
        let r = rng.random_range(0.2..0.35);
        parts.push(("shade", sph([0.0, pole_top + r * 0.8, 0.0], r)));
        pole_top + r * 1.8
    } else {
        let r = rng.random_range(0.2..0.4);
        let hh = rng.random_range(0.1..0.2);
        parts.push(("shade", cyl(1, [0.0, pole_top + hh * 0.8, 0.0], r, hh)));
        pole_top + hh * 1.8
    };
    if rng.random_bool(0.5) {
        let r = rng.random_range(0.05..0.08);
        parts.push(("finial", sph([0.0, shade_top + r * 0.8, 0.0], r)));
    }
    parts
}

fn barbell(rng: &mut impl Rng) -> Vec<(&'static str, Solid)> {
    let l = rng.random_range(0.7..0.95);
    let rbar = rng.random_range(0.04..0.06);
    let rp = rng.random_range(0.25..0.45);
    let tp = rng.random_range(0.05..0.12);
    let margin = rng.random_range(0.15..0.3);
    let xp = l - margin;
    let mut parts = vec![
        ("bar", cyl(0, [0.0; 3], rbar, l)),
        ("plate", cyl(0, [-xp, 0.0, 0.0], rp, tp)),
        ("plate", cyl(0, [xp, 0.0, 0.0], rp, tp)),
    ];
    if rng.random_bool(0.5) {
        let rc = rng.random_range(0.08..0.1);
        let tc = 0.03;
        let xc = xp - tp - tc;
        parts.push(("collar", cyl(0, [-xc, 0.0, 0.0], rc, tc)));
        parts.push(("collar", cyl(0, [xc, 0.0, 0.0], rc, tc)));
    }
    parts
}

/// Deterministic sample of `category` from `seed`.
pub fn generate_sample(seed: u64, category: Category) -> ObjectSample {
    let mut rng = det_rng(derive_seed(seed, category.name(), 0));
    let raw = match category {
        Category::Table => table(&mut rng),
        Category::Chair => chair(&mut rng),
        Category::Robot => robot(&mut rng),
        Category::Lamp => lamp(&mut rng),
        Category::Barbell => barbell(&mut rng),
    };
    // Center the union and scale its largest half extent to a fixed size.
    let bounds = Aabb::enclosing(
        &raw.iter()
            .map(|(_, s)| s.bounds().expect("bounded"))
            .collect::<Vec<_>>(),
    )
    .expect("grammar emits parts");
    let scale = OBJECT_HALF_EXTENT / (bounds.extent().max_elem() / 2.0);
    let shift = bounds.center() * -scale;
    let offset = rng.random_range(0..PALETTE.len());
    let parts = raw
        .iter()
        .enumerate()
        .map(|(i, (name, s))| {
            let solid = affine(s, scale, shift);
            Part {
                part_id: i + 1,
                name: name.to_string(),
                aabb: solid.bounds().expect("bounded"),
                solid,
                color: PALETTE[(offset + i) % PALETTE.len()],
            }
        })
        .collect();
    ObjectSample {
        sample_id: format!("{category}-{seed:016x}"),
        seed,
        category,
        parts,
    }
}

/// Parses a category name.
pub fn category(name: &str) -> Result<Category> {
    name.parse()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub seed: u64,
    pub category: Category,
    /// Paths relative to the dataset root.
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub base_seed: u64,
    pub grid: usize,
    pub samples: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let m: Manifest = serde_json::from_slice(&bytes)?;
        if m.version != MANIFEST_VERSION {
            return Err(Error::format("manifest", format!("unsupported version {}", m.version)));
        }
        Ok(m)
    }

    /// Regenerates every sample from its recorded seed and category.
    pub fn samples(&self) -> Vec<ObjectSample> {
        self.samples
            .iter()
            .map(|e| generate_sample(e.seed, e.category))
            .collect()
    }
}

/// Seed of the `i`-th corpus sample.
pub fn sample_seed(base_seed: u64, i: usize) -> u64 {
    derive_seed(base_seed, "sample", i as u64)
}

/// The `n` samples of a corpus: categories cycle through `categories`.
pub fn corpus(base_seed: u64, categories: &[Category], n: usize) -> Result<Vec<ObjectSample>> {
    if categories.is_empty() && n > 0 {
        return Err(Error::InvalidArgument("no categories given".into()));
    }
    Ok((0..n)
        .map(|i| generate_sample(sample_seed(base_seed, i), categories[i % categories.len()]))
        .collect())
}

fn write_sample(dir: &Path, s: &ObjectSample, grid: usize) -> Result<Vec<String>> {
    let rel = PathBuf::from("samples").join(&s.sample_id);
    let mut files = vec![rel.join("sample.json")];
    crate::files::write_atomic(&dir.join(&files[0]), &serde_json::to_vec_pretty(s)?)?;
    for p in &s.parts {
        let f = rel.join(format!("part_{}.pvox", p.part_id));
        voxelize(&p.solid, &p.aabb, grid)?.write_pvox(&dir.join(&f))?;
        files.push(f);
    }
    Ok(files
        .into_iter()
        .map(|f| f.to_string_lossy().replace('\\', "/"))
        .collect())
}

/// Writes `n` samples plus `manifest.json` under `out_dir`.
pub fn build_dataset(
    base_seed: u64,
    categories: &[Category],
    n: usize,
    grid: usize,
    out_dir: &Path,
) -> Result<Manifest> {
    let samples = corpus(base_seed, categories, n)?;
    write_corpus(&samples, base_seed, grid, out_dir)
}

/// Writes an explicit list of samples and their manifest.
pub fn write_corpus(
    samples: &[ObjectSample],
    base_seed: u64,
    grid: usize,
    out_dir: &Path,
) -> Result<Manifest> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut entries = Vec::with_capacity(samples.len());
    for s in samples {
        entries.push(ManifestEntry {
            id: s.sample_id.clone(),
            seed: s.seed,
            category: s.category,
            files: write_sample(out_dir, s, grid)?,
        });
    }
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        base_seed,
        grid,
        samples: entries,
    };
    crate::files::write_atomic(
        &out_dir.join("manifest.json"),
        &serde_json::to_vec_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

/// Rewrites a corpus from an existing manifest's seeds.
pub fn rebuild_from_manifest(manifest: &Manifest, out_dir: &Path) -> Result<Manifest> {
    write_corpus(&manifest.samples(), manifest.base_seed, manifest.grid, out_dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn categories_round_trip_names() {
        for c in Category::ALL {
            assert_eq!(c.name().parse::<Category>().unwrap(), c);
        }
        assert!(matches!("sofa".parse::<Category>(), Err(Error::UnknownCategory(_))));
    }

    #[test]
    fn part_counts_follow_grammar() {
        for seed in 0..20 {
            assert_eq!(generate_sample(seed, Category::Table).parts.len(), 5);
            assert_eq!(generate_sample(seed, Category::Chair).parts.len(), 6);
            let r = generate_sample(seed, Category::Robot).parts.len();
            assert!((6..=8).contains(&r));
        }
    }

    #[test]
    fn condition_shape() {
        let s = generate_sample(3, Category::Lamp);
        let c = s.condition();
        assert_eq!(c.shape(), (COND_TOKENS, COND_WIDTH));
        assert_eq!((COND_TOKENS, COND_WIDTH), (48, 64));
    }
}
