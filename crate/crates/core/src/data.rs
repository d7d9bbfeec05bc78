//! Depth-image datasets: PGM loading, manifests, stratified splits and a
//! synthetic gesture generator.
//!
//! A manifest is plain text with one `relative_path<TAB>label<TAB>subject`
//! record per line. Paths are relative to the manifest's directory. Lines
//! starting with `#` are comments, except for two optional directives:
//!
//! ```text
//! # classes = 5
//! # class_names = one,two,three,four,five
//! ```
//!
//! Without a `classes` directive the class count is one more than the
//! largest label.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, RngState};

#[derive(Clone, Debug, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    /// Row-major intensities normalized to `[0, 1]`.
    pub pixels: Vec<f64>,
    pub label: usize,
    pub subject: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub images: Vec<DepthImage>,
    pub class_count: usize,
    pub class_names: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

pub const DEFAULT_FRACTIONS: [f64; 3] = [0.5, 0.25, 0.25];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Partition {
    Train,
    Validation,
    Test,
}

impl Partition {
    pub fn name(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Validation => "validation",
            Partition::Test => "test",
        }
    }
}

impl std::str::FromStr for Partition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Partition::Train),
            "validation" | "val" => Ok(Partition::Validation),
            "test" => Ok(Partition::Test),
            other => Err(Error::Param(format!(
                "unknown partition `{other}` (train, validation, test)"
            ))),
        }
    }
}

impl Split {
    pub fn indices(&self, part: Partition) -> &[usize] {
        match part {
            Partition::Train => &self.train,
            Partition::Validation => &self.validation,
            Partition::Test => &self.test,
        }
    }
}

impl Dataset {
    pub fn new(images: Vec<DepthImage>, class_count: usize) -> Result<Self> {
        let names = (0..class_count).map(|c| c.to_string()).collect();
        Self::with_names(images, class_count, names)
    }

    pub fn with_names(
        images: Vec<DepthImage>,
        class_count: usize,
        class_names: Vec<String>,
    ) -> Result<Self> {
        if class_names.len() != class_count {
            return Err(Error::Param(format!(
                "{} class names for {class_count} classes",
                class_names.len()
            )));
        }
        if let Some(first) = images.first() {
            for (i, img) in images.iter().enumerate() {
                if (img.width, img.height) != (first.width, first.height) {
                    return Err(Error::Format(format!(
                        "image {i} is {}x{}, expected {}x{}",
                        img.width, img.height, first.width, first.height
                    )));
                }
                if img.label >= class_count {
                    return Err(Error::Param(format!(
                        "image {i} has label {} but there are {class_count} classes",
                        img.label
                    )));
                }
            }
        }
        Ok(Dataset {
            images,
            class_count,
            class_names,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// `(width, height)` shared by all images, or `(0, 0)` when empty.
    pub fn image_dims(&self) -> (usize, usize) {
        self.images.first().map_or((0, 0), |i| (i.width, i.height))
    }

    pub fn pixel_count(&self) -> usize {
        let (w, h) = self.image_dims();
        w * h
    }

    pub fn labels(&self, idx: &[usize]) -> Vec<usize> {
        idx.iter().map(|&i| self.images[i].label).collect()
    }

    /// Pixels of the selected images as columns of a `pixels x idx.len()` matrix.
    pub fn matrix(&self, idx: &[usize]) -> Matrix {
        let rows = self.pixel_count();
        let mut m = Matrix::zeros(rows, idx.len());
        for (c, &i) in idx.iter().enumerate() {
            for (r, &v) in self.images[i].pixels.iter().enumerate() {
                m.set(r, c, v);
            }
        }
        m
    }

    pub fn subjects(&self) -> Vec<u32> {
        self.images
            .iter()
            .map(|i| i.subject)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn for_subject(&self, subject: u32) -> Dataset {
        Dataset {
            images: self
                .images
                .iter()
                .filter(|i| i.subject == subject)
                .cloned()
                .collect(),
            class_count: self.class_count,
            class_names: self.class_names.clone(),
        }
    }
}

pub fn normalize_pixel(v: u8, maxval: u16) -> f64 {
    v as f64 / maxval as f64
}

/// Inverse of [`normalize_pixel`] for 8-bit data.
pub fn denormalize_pixel(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Raw binary PGM raster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub raster: Vec<u8>,
}

impl Pgm {
    pub fn normalized(&self) -> Vec<f64> {
        self.raster
            .iter()
            .map(|&v| normalize_pixel(v, self.maxval))
            .collect()
    }
}

/// Parses a binary (P5) PGM with `maxval <= 255`.
pub fn parse_pgm(bytes: &[u8]) -> Result<Pgm> {
    let bad = |msg: &str| Error::Format(format!("PGM: {msg}"));
    let mut pos = 0;
    let mut token = || -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token()? != "P5" {
        return Err(bad("only binary P5 files are supported"));
    }
    let width: usize = token()?.parse().map_err(|_| bad("bad width"))?;
    let height: usize = token()?.parse().map_err(|_| bad("bad height"))?;
    let maxval: u16 = token()?.parse().map_err(|_| bad("bad maxval"))?;
    if maxval == 0 || maxval > 255 {
        return Err(bad(&format!("maxval {maxval} unsupported, need 1..=255")));
    }
    // exactly one whitespace byte separates the header from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(bad("missing raster"));
    }
    pos += 1;
    let n = width * height;
    if bytes.len() - pos < n {
        return Err(bad(&format!(
            "raster has {} bytes, expected {n}",
            bytes.len() - pos
        )));
    }
    Ok(Pgm {
        width,
        height,
        maxval,
        raster: bytes[pos..pos + n].to_vec(),
    })
}

pub fn encode_pgm(width: usize, height: usize, raster: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(raster);
    out
}

pub fn read_pgm(path: &Path) -> Result<Pgm> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[f64]) -> Result<()> {
    let raster: Vec<u8> = pixels.iter().map(|&v| denormalize_pixel(v)).collect();
    fs::write(path, encode_pgm(width, height, &raster)).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestRecord {
    pub path: PathBuf,
    pub label: usize,
    pub subject: u32,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Manifest {
    pub class_count: Option<usize>,
    pub class_names: Option<Vec<String>>,
    pub records: Vec<ManifestRecord>,
}

impl Manifest {
    pub fn parse(text: &str, origin: &Path) -> Result<Manifest> {
        let mut m = Manifest::default();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let err = |msg: String| Error::Manifest {
                path: origin.to_path_buf(),
                line: line_no,
                msg,
            };
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            if let Some(comment) = line.trim_start().strip_prefix('#') {
                if let Some((key, value)) = comment.split_once('=') {
                    match key.trim() {
                        "classes" => {
                            let c = value
                                .trim()
                                .parse()
                                .map_err(|_| err(format!("bad class count `{}`", value.trim())))?;
                            m.class_count = Some(c);
                        }
                        "class_names" => {
                            m.class_names =
                                Some(value.split(',').map(|s| s.trim().to_string()).collect());
                        }
                        _ => {}
                    }
                }
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(err(format!(
                    "expected `path<TAB>label<TAB>subject`, got {} fields",
                    fields.len()
                )));
            }
            let label = fields[1]
                .trim()
                .parse()
                .map_err(|_| err(format!("bad label `{}`", fields[1])))?;
            let subject = fields[2]
                .trim()
                .parse()
                .map_err(|_| err(format!("bad subject `{}`", fields[2])))?;
            if let Some(c) = m.class_count {
                if label >= c {
                    return Err(err(format!("label {label} out of range for {c} classes")));
                }
            }
            m.records.push(ManifestRecord {
                path: PathBuf::from(fields[0]),
                label,
                subject,
            });
        }
        Ok(m)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Some(c) = self.class_count {
            let _ = writeln!(out, "# classes = {c}");
        }
        if let Some(names) = &self.class_names {
            let _ = writeln!(out, "# class_names = {}", names.join(","));
        }
        for r in &self.records {
            let _ = writeln!(out, "{}\t{}\t{}", r.path.display(), r.label, r.subject);
        }
        out
    }
}

/// Reads a manifest and every image it references.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest = Manifest::parse(&text, manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let class_count = manifest.class_count.unwrap_or_else(|| {
        manifest
            .records
            .iter()
            .map(|r| r.label + 1)
            .max()
            .unwrap_or(0)
    });
    let names = match manifest.class_names {
        Some(n) if n.len() == class_count => n,
        Some(n) => {
            return Err(Error::Manifest {
                path: manifest_path.to_path_buf(),
                line: 0,
                msg: format!("{} class names for {class_count} classes", n.len()),
            })
        }
        None => (0..class_count).map(|c| c.to_string()).collect(),
    };
    let mut images = Vec::with_capacity(manifest.records.len());
    for rec in &manifest.records {
        let pgm = read_pgm(&base.join(&rec.path))?;
        images.push(DepthImage {
            width: pgm.width,
            height: pgm.height,
            pixels: pgm.normalized(),
            label: rec.label,
            subject: rec.subject,
        });
    }
    Dataset::with_names(images, class_count, names)
}

fn check_fractions(fractions: [f64; 3]) -> Result<()> {
    let sum: f64 = fractions.iter().sum();
    if fractions.iter().any(|f| !(f.is_finite() && *f >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Param(format!(
            "split fractions must be non-negative and sum to 1, got {fractions:?}"
        )));
    }
    Ok(())
}

/// Largest-remainder apportionment of `n` items over `fractions`.
fn apportion(n: usize, fractions: [f64; 3]) -> [usize; 3] {
    let exact = fractions.map(|f| f * n as f64);
    let mut counts = exact.map(|e| e.floor() as usize);
    let mut left = n.saturating_sub(counts.iter().sum());
    let mut order = [0, 1, 2];
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &k in order.iter().cycle() {
        if left == 0 {
            break;
        }
        if fractions[k] > 0.0 {
            counts[k] += 1;
            left -= 1;
        }
    }
    counts
}

/// Stratified shuffled split: each class's images are shuffled and divided
/// by `fractions` independently. Index lists come back sorted.
pub fn split_dataset(ds: &Dataset, fractions: [f64; 3], rng: &mut RngState) -> Result<Split> {
    check_fractions(fractions)?;
    let mut split = Split {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    for class in 0..ds.class_count {
        let mut members: Vec<usize> = (0..ds.len())
            .filter(|&i| ds.images[i].label == class)
            .collect();
        rng.shuffle(&mut members);
        let [a, b, _] = apportion(members.len(), fractions);
        split.train.extend_from_slice(&members[..a]);
        split.validation.extend_from_slice(&members[a..a + b]);
        split.test.extend_from_slice(&members[a + b..]);
    }
    split.train.sort_unstable();
    split.validation.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

pub fn one_hot(labels: &[usize], class_count: usize) -> Result<Matrix> {
    let mut m = Matrix::zeros(class_count, labels.len());
    for (c, &l) in labels.iter().enumerate() {
        if l >= class_count {
            return Err(Error::Param(format!(
                "label {l} out of range for {class_count} classes"
            )));
        }
        m.set(l, c, 1.0);
    }
    Ok(m)
}

/// Noise-free template for one class: a bar through the centre at angle
/// `pi * class / class_count` plus a blob on a ring at angle
/// `2 pi * class / class_count`.
pub fn gesture_template(class: usize, class_count: usize, side: usize) -> Vec<f64> {
    let s = side as f64;
    let centre = (s - 1.0) / 2.0;
    let bar_angle = PI * class as f64 / class_count as f64;
    let (bs, bc) = bar_angle.sin_cos();
    let blob_angle = 2.0 * PI * class as f64 / class_count as f64;
    let ring = s / 3.0;
    let (blob_x, blob_y) = (
        centre + ring * blob_angle.cos(),
        centre + ring * blob_angle.sin(),
    );
    let bar_half_width = (s / 12.0).max(0.5);
    let blob_sigma = s / 8.0;

    let mut pixels = Vec::with_capacity(side * side);
    for y in 0..side {
        for x in 0..side {
            let (dx, dy) = (x as f64 - centre, y as f64 - centre);
            // distance from the bar's axis
            let off_axis = (-dx * bs + dy * bc).abs();
            let bar = if off_axis <= bar_half_width { 0.6 } else { 0.0 };
            let d2 = (x as f64 - blob_x).powi(2) + (y as f64 - blob_y).powi(2);
            let blob = 0.4 * (-d2 / (2.0 * blob_sigma * blob_sigma)).exp();
            pixels.push((0.05 + bar + blob).min(1.0));
        }
    }
    pixels
}

/// Synthetic stand-in for a depth-gesture corpus: `per_class` images of each
/// class template with uniform noise in `[-noise, noise]`, clamped to
/// `[0, 1]`. All images get subject 1.
pub fn synth_gestures(
    class_count: usize,
    per_class: usize,
    side: usize,
    noise: f64,
    rng: &mut RngState,
) -> Result<Dataset> {
    if side < 4 {
        return Err(Error::Param(format!(
            "image side must be at least 4, got {side}"
        )));
    }
    if class_count == 0 {
        return Err(Error::Param("need at least one class".into()));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::Param(format!("noise must be >= 0, got {noise}")));
    }
    let mut images = Vec::with_capacity(class_count * per_class);
    for class in 0..class_count {
        let template = gesture_template(class, class_count, side);
        for _ in 0..per_class {
            let pixels = template
                .iter()
                .map(|&v| (v + noise * (2.0 * rng.uniform() - 1.0)).clamp(0.0, 1.0))
                .collect();
            images.push(DepthImage {
                width: side,
                height: side,
                pixels,
                label: class,
                subject: 1,
            });
        }
    }
    Dataset::new(images, class_count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dataset_with_labels(labels: &[usize], classes: usize) -> Dataset {
        let images = labels
            .iter()
            .map(|&label| DepthImage {
                width: 1,
                height: 1,
                pixels: vec![0.0],
                label,
                subject: 1,
            })
            .collect();
        Dataset::new(images, classes).unwrap()
    }

    #[test]
    fn pgm_endpoints_and_comments() {
        let bytes = b"P5\n# depth\n3 1\n255\n\x00\x80\xff";
        let pgm = parse_pgm(bytes).unwrap();
        assert_eq!((pgm.width, pgm.height), (3, 1));
        let px = pgm.normalized();
        assert_eq!(px[0], 0.0);
        assert_eq!(px[2], 1.0);
        assert!(parse_pgm(b"P2\n1 1\n255\n0").is_err());
        assert!(parse_pgm(b"P5\n2 2\n255\n\x00").is_err());
        assert!(parse_pgm(b"P5\n1 1\n65535\n\x00\x00").is_err());
    }

    #[test]
    fn every_byte_round_trips() {
        let raster: Vec<u8> = (0..=255).collect();
        let pgm = parse_pgm(&encode_pgm(16, 16, &raster)).unwrap();
        let back: Vec<u8> = pgm
            .normalized()
            .into_iter()
            .map(denormalize_pixel)
            .collect();
        assert_eq!(back, raster);
    }

    #[test]
    fn manifest_parsing() {
        let text = "# classes = 3\n# class_names = a,b,c\na.pgm\t0\t1\nb.pgm\t2\t2\n";
        let m = Manifest::parse(text, Path::new("m.tsv")).unwrap();
        assert_eq!(m.class_count, Some(3));
        assert_eq!(m.records.len(), 2);
        assert_eq!(Manifest::parse(&m.to_text(), Path::new("m")).unwrap(), m);

        let err = Manifest::parse("# classes = 2\na.pgm\t2\t1\n", Path::new("m.tsv")).unwrap_err();
        assert!(matches!(err, Error::Manifest { line: 2, .. }), "{err}");
        assert!(Manifest::parse("a.pgm 0 1\n", Path::new("m")).is_err());
    }

    #[test]
    fn default_split_sizes_on_a_thousand_images() {
        let labels: Vec<usize> = (0..1000).map(|i| i % 5).collect();
        let ds = dataset_with_labels(&labels, 5);
        let split = split_dataset(&ds, DEFAULT_FRACTIONS, &mut RngState::new(1)).unwrap();
        assert_eq!(
            (split.train.len(), split.validation.len(), split.test.len()),
            (500, 250, 250)
        );
        for class in 0..5 {
            let count = |idx: &[usize]| idx.iter().filter(|&&i| labels[i] == class).count();
            assert_eq!(count(&split.train), 100);
            assert_eq!(count(&split.validation), 50);
            assert_eq!(count(&split.test), 50);
        }
        let again = split_dataset(&ds, DEFAULT_FRACTIONS, &mut RngState::new(1)).unwrap();
        assert_eq!(split, again);
    }

    #[test]
    fn split_edge_cases() {
        let ds = dataset_with_labels(&[0, 1, 0, 1, 1], 2);
        let split = split_dataset(&ds, [1.0, 0.0, 0.0], &mut RngState::new(2)).unwrap();
        assert_eq!(split.train, vec![0, 1, 2, 3, 4]);
        assert!(split.validation.is_empty() && split.test.is_empty());
        assert!(split_dataset(&ds, [0.5, 0.5, 0.5], &mut RngState::new(2)).is_err());
        assert!(split_dataset(&ds, [1.5, -0.5, 0.0], &mut RngState::new(2)).is_err());
    }

    #[test]
    fn one_hot_cases() {
        let m = one_hot(&[0, 2], 3).unwrap();
        assert_eq!(
            m,
            Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 0.0], &[0.0, 1.0]])
        );
        assert!(one_hot(&[3], 3).is_err());
        let labels = vec![4, 0, 3, 3, 1];
        let m = one_hot(&labels, 5).unwrap();
        assert_eq!(m.argmax_columns(), labels);
        for c in 0..5 {
            assert_eq!(m.column(c).iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn synth_shapes_and_determinism() {
        let ds = synth_gestures(5, 200, 16, 0.05, &mut RngState::new(7)).unwrap();
        assert_eq!(ds.len(), 1000);
        for c in 0..5 {
            assert_eq!(ds.images.iter().filter(|i| i.label == c).count(), 200);
        }
        assert!(ds
            .images
            .iter()
            .all(|i| i.pixels.iter().all(|p| (0.0..=1.0).contains(p))));
        let again = synth_gestures(5, 200, 16, 0.05, &mut RngState::new(7)).unwrap();
        assert_eq!(ds, again);
        assert!(synth_gestures(5, 1, 3, 0.0, &mut RngState::new(7)).is_err());
    }

    #[test]
    fn noiseless_classes_are_constant() {
        let ds = synth_gestures(4, 5, 8, 0.0, &mut RngState::new(1)).unwrap();
        for img in &ds.images {
            assert_eq!(img.pixels, ds.images[img.label * 5].pixels);
        }
        // and the templates differ between classes
        let firsts: BTreeSet<Vec<u64>> = (0..4)
            .map(|c| {
                ds.images[c * 5]
                    .pixels
                    .iter()
                    .map(|v| v.to_bits())
                    .collect()
            })
            .collect();
        assert_eq!(firsts.len(), 4);
    }

    #[test]
    fn nearest_centroid_separates_synthetic_classes() {
        let ds = synth_gestures(5, 200, 16, 0.05, &mut RngState::new(21)).unwrap();
        let p = ds.pixel_count();
        let mut centroids = vec![vec![0.0; p]; 5];
        for img in &ds.images {
            for (c, v) in centroids[img.label].iter_mut().zip(&img.pixels) {
                *c += v / 200.0;
            }
        }
        let correct = ds
            .images
            .iter()
            .filter(|img| {
                let dist = |c: &Vec<f64>| -> f64 {
                    c.iter()
                        .zip(&img.pixels)
                        .map(|(a, b)| (a - b).powi(2))
                        .sum()
                };
                let best = (0..5)
                    .min_by(|&a, &b| {
                        dist(&centroids[a])
                            .partial_cmp(&dist(&centroids[b]))
                            .unwrap()
                    })
                    .unwrap();
                best == img.label
            })
            .count();
        assert_eq!(correct, 1000);
    }

    proptest! {
        #[test]
        fn split_is_disjoint_cover(
            labels in proptest::collection::vec(0usize..4, 0..120),
            seed in any::<u64>(),
        ) {
            let ds = dataset_with_labels(&labels, 4);
            let split = split_dataset(&ds, DEFAULT_FRACTIONS, &mut RngState::new(seed)).unwrap();
            let mut all: Vec<usize> = split.train.iter()
                .chain(&split.validation)
                .chain(&split.test)
                .copied()
                .collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());

            for class in 0..4 {
                let n = labels.iter().filter(|&&l| l == class).count();
                let count = |idx: &[usize]| idx.iter().filter(|&&i| labels[i] == class).count();
                let parts = [count(&split.train), count(&split.validation), count(&split.test)];
                for (got, f) in parts.iter().zip(DEFAULT_FRACTIONS) {
                    prop_assert!((*got as f64 - f * n as f64).abs() < 1.0 + 1e-9);
                    if n >= 4 {
                        prop_assert!(*got > 0);
                    }
                }
            }
        }
    }
}
