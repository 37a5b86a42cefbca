//! Synthetic rock/paper/scissors silhouettes and on-disk gesture datasets.
//!
//! Each class has a fixed prototype drawn in a 64×64 frame: a filled disc
//! (rock), a large filled quadrilateral (paper) and two elongated prongs on a
//! small base (scissors). Samples apply a random rotation, translation and
//! scale to the prototype, then flip boundary pixels at random.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_to_string, write_json};
use crate::model::default_class_names;
use crate::plane::BitImage;
use crate::pnm::{read_pgm, write_pgm};
use crate::prep::{prepare, DEFAULT_THRESHOLD};

/// Side of every sample image.
pub const SAMPLE_SIZE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JitterParams {
    /// Maximum absolute rotation, degrees.
    pub rotation_deg: f64,
    /// Maximum absolute shift per axis, pixels.
    pub translation_px: f64,
    /// Maximum relative scale change.
    pub scale: f64,
    /// Probability of flipping each boundary pixel.
    pub boundary_noise: f64,
}

impl Default for JitterParams {
    fn default() -> Self {
        Self {
            rotation_deg: 25.0,
            translation_px: 6.0,
            scale: 0.15,
            boundary_noise: 0.1,
        }
    }
}

impl JitterParams {
    pub fn none() -> Self {
        Self {
            rotation_deg: 0.0,
            translation_px: 0.0,
            scale: 0.0,
            boundary_noise: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerateConfig {
    pub seed: u64,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub jitter: JitterParams,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            seed: 2021,
            train_per_class: 500,
            test_per_class: 200,
            jitter: JitterParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Provenance {
    Synthetic { seed: u64, split: Split, index: usize },
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GestureSample {
    pub image: BitImage,
    pub label: usize,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub class_names: Vec<String>,
    pub train: Vec<GestureSample>,
    pub test: Vec<GestureSample>,
    /// Present for generated datasets.
    pub generator: Option<GenerateConfig>,
}

impl DatasetSplit {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn samples(&self, split: Split) -> &[GestureSample] {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }

    /// Samples per class in `split`.
    pub fn class_counts(&self, split: Split) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for s in self.samples(split) {
            counts[s.label] += 1;
        }
        counts
    }
}

// ---------------------------------------------------------------------------
// Geometry of the prototypes. Coordinates are pixels relative to the frame
// centre, y pointing down.

#[derive(Debug, Clone, Copy)]
enum Primitive {
    Disc { cx: f64, cy: f64, r: f64 },
    Capsule { ax: f64, ay: f64, bx: f64, by: f64, r: f64 },
    Quad([(f64, f64); 4]),
}

impl Primitive {
    fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Primitive::Disc { cx, cy, r } => (x - cx).powi(2) + (y - cy).powi(2) <= r * r,
            Primitive::Capsule { ax, ay, bx, by, r } => {
                let (dx, dy) = (bx - ax, by - ay);
                let t = (((x - ax) * dx + (y - ay) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
                let (px, py) = (ax + t * dx, ay + t * dy);
                (x - px).powi(2) + (y - py).powi(2) <= r * r
            }
            Primitive::Quad(v) => {
                // Convex, vertices in clockwise screen order.
                (0..4).all(|i| {
                    let (x0, y0) = v[i];
                    let (x1, y1) = v[(i + 1) % 4];
                    (x1 - x0) * (y - y0) - (y1 - y0) * (x - x0) >= 0.0
                })
            }
        }
    }
}

fn prototype(class: usize) -> Vec<Primitive> {
    match class {
        0 => vec![Primitive::Disc {
            cx: 0.0,
            cy: 0.0,
            r: 11.0,
        }],
        1 => vec![Primitive::Quad([
            (-17.0, -21.0),
            (17.0, -21.0),
            (19.0, 21.0),
            (-19.0, 21.0),
        ])],
        _ => {
            let (len, tilt) = (28.0, 22f64.to_radians());
            let (bx, by) = (0.0, 10.0);
            let prong = |sign: f64| Primitive::Capsule {
                ax: bx,
                ay: by,
                bx: bx + sign * len * tilt.sin(),
                by: by - len * tilt.cos(),
                r: 3.5,
            };
            vec![
                prong(-1.0),
                prong(1.0),
                Primitive::Disc {
                    cx: bx,
                    cy: by + 2.0,
                    r: 8.0,
                },
            ]
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Pose {
    angle: f64,
    tx: f64,
    ty: f64,
    scale: f64,
}

fn render(shape: &[Primitive], pose: Pose) -> BitImage {
    let half = SAMPLE_SIZE as f64 / 2.0;
    let (sin, cos) = pose.angle.sin_cos();
    BitImage::from_fn(SAMPLE_SIZE, SAMPLE_SIZE, |r, c| {
        let x = c as f64 + 0.5 - half - pose.tx;
        let y = r as f64 + 0.5 - half - pose.ty;
        // Inverse rotation, then inverse scale.
        let px = (cos * x + sin * y) / pose.scale;
        let py = (-sin * x + cos * y) / pose.scale;
        shape.iter().any(|p| p.contains(px, py))
    })
}

fn flip_boundary(img: &BitImage, p: f64, rng: &mut ChaCha8Rng) -> BitImage {
    let n = SAMPLE_SIZE;
    let mut out = img.clone();
    for r in 0..n {
        for c in 0..n {
            let v = img.get(r, c);
            let edge = [(0isize, 1isize), (0, -1), (1, 0), (-1, 0)]
                .iter()
                .any(|&(dr, dc)| {
                    let (rr, cc) = (r as isize + dr, c as isize + dc);
                    rr >= 0
                        && cc >= 0
                        && (rr as usize) < n
                        && (cc as usize) < n
                        && img.get(rr as usize, cc as usize) != v
                });
            // Always draw so the stream does not depend on the image.
            let roll: f64 = rng.random();
            if edge && roll < p {
                out.set(r, c, v == 0);
            }
        }
    }
    out
}

fn sample_seed(seed: u64, split: Split, class: usize, index: usize) -> u64 {
    // splitmix64 over the tuple
    let mut z = seed
        ^ (split as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (class as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9)
        ^ (index as u64).wrapping_mul(0x94D0_49BB_1331_11EB);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draws one sample of `class`.
pub fn synthesize(class: usize, jitter: &JitterParams, rng: &mut ChaCha8Rng) -> BitImage {
    let mut sym = || 2.0 * rng.random::<f64>() - 1.0;
    let pose = Pose {
        angle: sym() * jitter.rotation_deg.to_radians(),
        tx: sym() * jitter.translation_px,
        ty: sym() * jitter.translation_px,
        scale: 1.0 + sym() * jitter.scale,
    };
    let img = render(&prototype(class), pose);
    flip_boundary(&img, jitter.boundary_noise, rng)
}

/// The un-jittered silhouette of `class`.
pub fn class_prototype(class: usize) -> BitImage {
    render(
        &prototype(class),
        Pose {
            angle: 0.0,
            tx: 0.0,
            ty: 0.0,
            scale: 1.0,
        },
    )
}

/// Generates a balanced train/test split of the three gesture classes.
pub fn generate(config: &GenerateConfig) -> Result<DatasetSplit> {
    if config.train_per_class == 0 && config.test_per_class == 0 {
        return Err(Error::Dataset("at least one sample per class is required".into()));
    }
    let classes = default_class_names();
    let make = |split: Split, per_class: usize| {
        let mut out = Vec::with_capacity(per_class * classes.len());
        for index in 0..per_class {
            for class in 0..classes.len() {
                let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(config.seed, split, class, index));
                out.push(GestureSample {
                    image: synthesize(class, &config.jitter, &mut rng),
                    label: class,
                    provenance: Provenance::Synthetic {
                        seed: config.seed,
                        split,
                        index,
                    },
                });
            }
        }
        out
    };
    let train = make(Split::Train, config.train_per_class);
    let test = make(Split::Test, config.test_per_class);
    Ok(DatasetSplit {
        class_names: classes,
        train,
        test,
        generator: Some(*config),
    })
}

// ---------------------------------------------------------------------------
// On-disk layout

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub label: usize,
    pub split: Split,
}

/// `manifest.json` written next to an exported dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: Option<u64>,
    pub params: Option<GenerateConfig>,
    pub classes: Vec<String>,
    pub samples: Vec<ManifestEntry>,
}

pub const MANIFEST: &str = "manifest.json";

/// Writes `<split>/<class>/<nnnn>.pgm` for every sample plus the manifest.
/// Returns every path written.
pub fn export(data: &DatasetSplit, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut entries = Vec::new();
    for split in [Split::Train, Split::Test] {
        let mut per_class = vec![0usize; data.num_classes()];
        for s in data.samples(split) {
            let class = &data.class_names[s.label];
            let rel = format!("{}/{}/{:04}.pgm", split.name(), class, per_class[s.label]);
            per_class[s.label] += 1;
            let path = dir.join(&rel);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            write_pgm(&path, &s.image.to_gray())?;
            written.push(path);
            entries.push(ManifestEntry {
                file: rel,
                label: s.label,
                split,
            });
        }
    }
    let manifest = Manifest {
        seed: data.generator.map(|g| g.seed),
        params: data.generator,
        classes: data.class_names.clone(),
        samples: entries,
    };
    let mpath = dir.join(MANIFEST);
    write_json(&mpath, &manifest)?;
    written.push(mpath);
    Ok(written)
}

/// Reads a dataset through its manifest.
pub fn load_manifest(dir: &Path) -> Result<DatasetSplit> {
    let manifest: Manifest = serde_json::from_str(&read_to_string(&dir.join(MANIFEST))?)?;
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut problems = Vec::new();
    for e in &manifest.samples {
        if e.label >= manifest.classes.len() {
            problems.push(format!("{}: label {} out of range", e.file, e.label));
            continue;
        }
        let path = dir.join(&e.file);
        match read_pgm(&path).and_then(|img| prepare(&img, DEFAULT_THRESHOLD, SAMPLE_SIZE)) {
            Ok(image) => {
                let s = GestureSample {
                    image,
                    label: e.label,
                    provenance: Provenance::File(path),
                };
                match e.split {
                    Split::Train => train.push(s),
                    Split::Test => test.push(s),
                }
            }
            Err(err) => problems.push(err.to_string()),
        }
    }
    if !problems.is_empty() {
        return Err(Error::Ingest(problems));
    }
    Ok(DatasetSplit {
        class_names: manifest.classes,
        train,
        test,
        generator: manifest.params,
    })
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| !n.starts_with('.'))
        })
        .collect();
    out.sort();
    Ok(out)
}

fn ingest_classes(
    dir: &Path,
    class_names: &[String],
    problems: &mut Vec<String>,
) -> Result<Vec<GestureSample>> {
    let mut samples = Vec::new();
    for path in sorted_entries(dir)?.into_iter().filter(|p| p.is_dir()) {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let Some(label) = class_names.iter().position(|c| c == name) else {
            problems.push(format!("{}: unknown class directory `{name}`", path.display()));
            continue;
        };
        for file in sorted_entries(&path)?.into_iter().filter(|p| p.is_file()) {
            match read_pgm(&file).and_then(|img| prepare(&img, DEFAULT_THRESHOLD, SAMPLE_SIZE)) {
                Ok(image) => samples.push(GestureSample {
                    image,
                    label,
                    provenance: Provenance::File(file),
                }),
                Err(e) => problems.push(e.to_string()),
            }
        }
    }
    Ok(samples)
}

/// Reads class-named subdirectories of PGM files.
///
/// If `dir` holds `train/` and/or `test/` subdirectories, each is read as
/// that split; otherwise the class directories are read directly into the
/// test split. Every image is thresholded at 127 and majority-downsampled to
/// 64×64. Any problem refuses the whole ingestion with an itemized report.
pub fn ingest(dir: &Path, class_names: &[String]) -> Result<DatasetSplit> {
    let mut problems = Vec::new();
    let has_split = ["train", "test"].iter().any(|s| dir.join(s).is_dir());
    let (train, test) = if has_split {
        let read = |s: &str, problems: &mut Vec<String>| -> Result<Vec<GestureSample>> {
            let d = dir.join(s);
            if d.is_dir() {
                ingest_classes(&d, class_names, problems)
            } else {
                Ok(Vec::new())
            }
        };
        (read("train", &mut problems)?, read("test", &mut problems)?)
    } else {
        (Vec::new(), ingest_classes(dir, class_names, &mut problems)?)
    };
    if !problems.is_empty() {
        return Err(Error::Ingest(problems));
    }
    if train.is_empty() && test.is_empty() {
        return Err(Error::Dataset(format!("no classes found in {}", dir.display())));
    }
    Ok(DatasetSplit {
        class_names: class_names.to_vec(),
        train,
        test,
        generator: None,
    })
}

/// Mean number of set pixels per class in `split`.
pub fn class_mean_ones(data: &DatasetSplit, split: Split) -> Vec<f64> {
    let mut sums: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for s in data.samples(split) {
        let e = sums.entry(s.label).or_default();
        e.0 += s.image.count_ones();
        e.1 += 1;
    }
    (0..data.num_classes())
        .map(|c| sums.get(&c).map_or(0.0, |&(t, n)| t as f64 / n as f64))
        .collect()
}
