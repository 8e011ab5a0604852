//! Synthetic multimodal classification data with per-modality domain shift.
//!
//! Every modality draws class-conditional Gaussian clusters with unit
//! within-class covariance. Target samples come from the same clusters and
//! are then corrupted per modality: additive noise, a planar rotation of the
//! first two coordinates, and zeroing of a random subset of coordinates.
//!
//! Each modality owns its seed substreams, so changing one modality's
//! severity leaves the other modalities' data untouched.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::numerics::{seeded_rng, Matrix};
use crate::{Error, Result};

/// Corruption applied to one modality of the target domain.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShiftSeverity {
    pub noise_sigma: f64,
    /// Radians.
    pub rotation_angle: f64,
    pub mask_fraction: f64,
}

impl ShiftSeverity {
    pub fn new(noise_sigma: f64, rotation_angle: f64, mask_fraction: f64) -> Self {
        Self {
            noise_sigma,
            rotation_angle,
            mask_fraction,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.noise_sigma == 0.0 && self.rotation_angle == 0.0 && self.mask_fraction == 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSpec {
    pub classes: usize,
    /// Raw feature dimension of each modality; its length is the modality count.
    pub input_dims: Vec<usize>,
    pub n_source: usize,
    pub n_source_test: usize,
    pub n_target: usize,
    pub n_target_test: usize,
    /// Standard deviation of the class means around the origin.
    pub class_separation: f64,
    pub seed: u64,
    pub shift: Vec<ShiftSeverity>,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            classes: 4,
            input_dims: vec![8; 3],
            n_source: 600,
            n_source_test: 600,
            n_target: 600,
            n_target_test: 600,
            class_separation: 0.6,
            seed: 0,
            shift: vec![ShiftSeverity::default(); 3],
        }
    }
}

impl DatasetSpec {
    /// Three modalities where the first is shifted much harder than the others:
    /// a quarter-turn rotation plus 25% masking against light noise and a small rotation.
    pub fn imbalanced_benchmark(seed: u64) -> Self {
        let light = ShiftSeverity::new(0.2, 0.5, 0.0);
        Self {
            seed,
            shift: vec![ShiftSeverity::new(0.0, 1.57, 0.25), light, light],
            ..Self::default()
        }
    }

    pub fn modalities(&self) -> usize {
        self.input_dims.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Validation(msg));
        if self.input_dims.is_empty() {
            return bad("at least one modality is required".into());
        }
        if self.classes < 2 {
            return bad(format!("classes must be ≥ 2, got {}", self.classes));
        }
        if let Some(m) = self.input_dims.iter().position(|&d| d == 0) {
            return bad(format!("modality {m} has dimension 0"));
        }
        let counts = [
            ("n_source", self.n_source),
            ("n_source_test", self.n_source_test),
            ("n_target", self.n_target),
            ("n_target_test", self.n_target_test),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, n)| *n == 0) {
            return bad(format!("{name} must be ≥ 1"));
        }
        if !(self.class_separation.is_finite() && self.class_separation >= 0.0) {
            return bad(format!("class_separation must be finite and ≥ 0, got {}", self.class_separation));
        }
        if self.shift.len() != self.modalities() {
            return bad(format!(
                "{} shift records for {} modalities",
                self.shift.len(),
                self.modalities()
            ));
        }
        for (m, s) in self.shift.iter().enumerate() {
            if !(s.noise_sigma.is_finite() && s.noise_sigma >= 0.0) {
                return bad(format!("modality {m}: noise_sigma must be ≥ 0"));
            }
            if !(s.rotation_angle.is_finite() && s.rotation_angle >= 0.0) {
                return bad(format!("modality {m}: rotation_angle must be ≥ 0"));
            }
            if !(0.0..=1.0).contains(&s.mask_fraction) {
                return bad(format!("modality {m}: mask_fraction must lie in [0, 1]"));
            }
            if s.rotation_angle != 0.0 && self.input_dims[m] < 2 {
                return bad(format!("modality {m}: rotation needs at least 2 dimensions"));
            }
        }
        Ok(())
    }
}

/// Labels that training may not look at.
///
/// Every call to [`EvalOnlyLabels::read`] is counted so tests can confirm the
/// training loop never touched them.
#[derive(Debug)]
pub struct EvalOnlyLabels {
    labels: Vec<usize>,
    reads: AtomicUsize,
}

impl EvalOnlyLabels {
    pub fn new(labels: Vec<usize>) -> Self {
        Self {
            labels,
            reads: AtomicUsize::new(0),
        }
    }

    pub fn read(&self) -> &[usize] {
        self.reads.fetch_add(1, Ordering::Relaxed);
        &self.labels
    }

    pub fn access_count(&self) -> usize {
        self.reads.load(Ordering::Relaxed)
    }

    pub fn reset_access_count(&self) {
        self.reads.store(0, Ordering::Relaxed);
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn unaudited(&self) -> &[usize] {
        &self.labels
    }
}

impl Clone for EvalOnlyLabels {
    fn clone(&self) -> Self {
        Self::new(self.labels.clone())
    }
}

impl PartialEq for EvalOnlyLabels {
    fn eq(&self, other: &Self) -> bool {
        self.labels == other.labels
    }
}

/// Features of every modality plus labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSplit {
    pub features: Vec<Matrix>,
    pub labels: Vec<usize>,
}

impl LabeledSplit {
    pub fn rows(&self) -> usize {
        self.labels.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultimodalDataset {
    pub spec: DatasetSpec,
    pub source: LabeledSplit,
    pub source_test: LabeledSplit,
    /// Unlabeled at training time.
    pub target_train: Vec<Matrix>,
    pub target_train_labels: EvalOnlyLabels,
    pub target_test: LabeledSplit,
}

impl MultimodalDataset {
    pub fn modalities(&self) -> usize {
        self.spec.modalities()
    }

    pub fn classes(&self) -> usize {
        self.spec.classes
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        let check = |name: &str, feats: &[Matrix], labels: &[usize], n: usize| -> Result<()> {
            if feats.len() != self.modalities() {
                return Err(Error::Validation(format!("{name}: {} modalities", feats.len())));
            }
            for (m, x) in feats.iter().enumerate() {
                if x.shape() != (n, self.spec.input_dims[m]) {
                    return Err(Error::Validation(format!(
                        "{name} modality {m}: shape {:?}, expected {:?}",
                        x.shape(),
                        (n, self.spec.input_dims[m])
                    )));
                }
            }
            if labels.len() != n {
                return Err(Error::Validation(format!("{name}: {} labels for {n} rows", labels.len())));
            }
            if let Some(y) = labels.iter().find(|&&y| y >= self.spec.classes) {
                return Err(Error::Validation(format!("{name}: label {y} out of range")));
            }
            Ok(())
        };
        check("source", &self.source.features, &self.source.labels, self.spec.n_source)?;
        check(
            "source_test",
            &self.source_test.features,
            &self.source_test.labels,
            self.spec.n_source_test,
        )?;
        check(
            "target_train",
            &self.target_train,
            self.target_train_labels.unaudited(),
            self.spec.n_target,
        )?;
        check(
            "target_test",
            &self.target_test.features,
            &self.target_test.labels,
            self.spec.n_target_test,
        )
    }
}

const SPLITS: [&str; 4] = ["source", "source_test", "target_train", "target_test"];

fn label_stream(split: usize) -> u64 {
    10 + split as u64
}

fn means_stream(m: usize) -> u64 {
    100 + m as u64
}

fn feature_stream(m: usize, split: usize) -> u64 {
    1000 + 10 * m as u64 + split as u64
}

fn shift_stream(m: usize, split: usize) -> u64 {
    2000 + 10 * m as u64 + split as u64
}

fn draw_labels(n: usize, classes: usize, rng: &mut impl Rng) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..classes)).collect()
}

fn draw_features(labels: &[usize], means: &Matrix, rng: &mut impl Rng) -> Matrix {
    let d = means.cols();
    let mut x = Matrix::zeros(labels.len(), d);
    for (n, &y) in labels.iter().enumerate() {
        for (v, mu) in x.row_mut(n).iter_mut().zip(means.row(y)) {
            let e: f64 = rng.sample(StandardNormal);
            *v = mu + e;
        }
    }
    x
}

/// Applies noise, rotation and masking in that order.
pub fn apply_shift(x: &mut Matrix, shift: &ShiftSeverity, rng: &mut impl Rng) {
    let d = x.cols();
    let masked = (shift.mask_fraction * d as f64).round() as usize;
    let (c, s) = (shift.rotation_angle.cos(), shift.rotation_angle.sin());
    for n in 0..x.rows() {
        let row = x.row_mut(n);
        for v in row.iter_mut() {
            let e: f64 = rng.sample(StandardNormal);
            *v += shift.noise_sigma * e;
        }
        if d >= 2 && shift.rotation_angle != 0.0 {
            let (a, b) = (row[0], row[1]);
            row[0] = c * a - s * b;
            row[1] = s * a + c * b;
        }
        for i in sample(rng, d, masked) {
            row[i] = 0.0;
        }
    }
}

pub fn generate(spec: &DatasetSpec) -> Result<MultimodalDataset> {
    spec.validate()?;
    let sizes = [spec.n_source, spec.n_source_test, spec.n_target, spec.n_target_test];
    let labels: Vec<Vec<usize>> = sizes
        .iter()
        .enumerate()
        .map(|(s, &n)| draw_labels(n, spec.classes, &mut seeded_rng(spec.seed, label_stream(s))))
        .collect();

    let mut features: Vec<Vec<Matrix>> = vec![Vec::with_capacity(spec.modalities()); SPLITS.len()];
    for (m, &d) in spec.input_dims.iter().enumerate() {
        let mut rng = seeded_rng(spec.seed, means_stream(m));
        let mut means = Matrix::random_normal(spec.classes, d, &mut rng);
        means.scale(spec.class_separation);
        for (s, split_labels) in labels.iter().enumerate() {
            let mut x = draw_features(split_labels, &means, &mut seeded_rng(spec.seed, feature_stream(m, s)));
            if SPLITS[s].starts_with("target") {
                apply_shift(&mut x, &spec.shift[m], &mut seeded_rng(spec.seed, shift_stream(m, s)));
            }
            features[s].push(x);
        }
    }

    let mut features = features.into_iter();
    let mut labels = labels.into_iter();
    let mut next = || (features.next().unwrap(), labels.next().unwrap());
    let (f, l) = next();
    let source = LabeledSplit { features: f, labels: l };
    let (f, l) = next();
    let source_test = LabeledSplit { features: f, labels: l };
    let (target_train, l) = next();
    let target_train_labels = EvalOnlyLabels::new(l);
    let (f, l) = next();
    let target_test = LabeledSplit { features: f, labels: l };
    Ok(MultimodalDataset {
        spec: spec.clone(),
        source,
        source_test,
        target_train,
        target_train_labels,
        target_test,
    })
}

pub const MANIFEST: &str = "manifest.json";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileEntry {
    pub split: String,
    /// `None` for the labels file.
    pub modality: Option<usize>,
    pub path: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub seed: u64,
    pub spec: DatasetSpec,
    pub counts: Vec<(String, usize)>,
    pub files: Vec<FileEntry>,
}

fn split_parts(ds: &MultimodalDataset) -> [(&'static str, &[Matrix], &[usize]); 4] {
    [
        (SPLITS[0], &ds.source.features, &ds.source.labels),
        (SPLITS[1], &ds.source_test.features, &ds.source_test.labels),
        (SPLITS[2], &ds.target_train, ds.target_train_labels.unaudited()),
        (SPLITS[3], &ds.target_test.features, &ds.target_test.labels),
    ]
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let section = file_name(path);
    let line = e.position().map_or(0, |p| p.line());
    Error::Parse {
        section,
        line,
        message: e.to_string(),
    }
}

fn file_name(path: &Path) -> String {
    path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn write_csv(path: &Path, header: Vec<String>, rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes the manifest and one CSV per modality and split plus label files.
pub fn save(ds: &MultimodalDataset, dir: &Path) -> Result<()> {
    ds.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    let mut counts = Vec::new();
    for (split, feats, labels) in split_parts(ds) {
        counts.push((split.to_string(), labels.len()));
        for (m, x) in feats.iter().enumerate() {
            let name = format!("{split}_m{m}.csv");
            let header = std::iter::once("sample_id".to_string())
                .chain((0..x.cols()).map(|j| format!("f{j}")))
                .collect();
            let rows = (0..x.rows()).map(|n| {
                std::iter::once(n.to_string())
                    .chain(x.row(n).iter().map(|v| v.to_string()))
                    .collect()
            });
            write_csv(&dir.join(&name), header, rows)?;
            files.push(FileEntry {
                split: split.into(),
                modality: Some(m),
                path: name,
                rows: x.rows(),
                cols: x.cols(),
            });
        }
        let name = format!("{split}_labels.csv");
        let rows = labels.iter().enumerate().map(|(n, y)| vec![n.to_string(), y.to_string()]);
        write_csv(&dir.join(&name), vec!["sample_id".into(), "label".into()], rows)?;
        files.push(FileEntry {
            split: split.into(),
            modality: None,
            path: name,
            rows: labels.len(),
            cols: 1,
        });
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        seed: ds.spec.seed,
        spec: ds.spec.clone(),
        counts,
        files,
    };
    let path = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Reads a CSV with a `sample_id` column followed by `cols` values.
fn read_csv<T: std::str::FromStr>(path: &Path, rows: usize, cols: usize) -> Result<Vec<Vec<T>>>
where
    T::Err: std::fmt::Display,
{
    let section = file_name(path);
    let parse = |line: u64, message: String| Error::Parse {
        section: section.clone(),
        line,
        message,
    };
    let mut r = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::io(path, io),
                _ => unreachable!(),
            },
            _ => csv_error(path, e),
        })?;
    let header = r.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.len() != cols + 1 || header.get(0) != Some("sample_id") {
        return Err(parse(1, format!("expected sample_id and {cols} value columns in header")));
    }
    let mut out = Vec::with_capacity(rows);
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != cols + 1 {
            return Err(parse(line, format!("expected {} fields, found {}", cols + 1, rec.len())));
        }
        let id: usize = rec[0]
            .parse()
            .map_err(|e| parse(line, format!("bad sample_id `{}`: {e}", &rec[0])))?;
        if id != out.len() {
            return Err(parse(line, format!("sample_id {id} out of sequence, expected {}", out.len())));
        }
        let values = rec
            .iter()
            .skip(1)
            .map(|f| f.parse::<T>().map_err(|e| parse(line, format!("bad value `{f}`: {e}"))))
            .collect::<Result<Vec<T>>>()?;
        out.push(values);
        if out.len() > rows {
            return Err(parse(line, format!("more than the {rows} rows listed in the manifest")));
        }
    }
    if out.len() < rows {
        return Err(parse(
            out.len() as u64 + 2,
            format!("truncated: expected {rows} rows, found {}", out.len()),
        ));
    }
    Ok(out)
}

fn check_manifest(manifest: &Manifest) -> Result<()> {
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Validation(format!(
            "unsupported format version {}",
            manifest.format_version
        )));
    }
    manifest.spec.validate()?;
    if manifest.seed != manifest.spec.seed {
        return Err(Error::Validation("manifest seed differs from spec seed".into()));
    }
    let spec = &manifest.spec;
    let expected = [spec.n_source, spec.n_source_test, spec.n_target, spec.n_target_test];
    for (split, n) in SPLITS.iter().zip(expected) {
        let listed = manifest.counts.iter().find(|(s, _)| s == split).map(|(_, c)| *c);
        if listed != Some(n) {
            return Err(Error::Validation(format!("{split}: count {listed:?} does not match spec {n}")));
        }
        for m in (0..spec.modalities()).map(Some).chain([None]) {
            let entry = manifest
                .files
                .iter()
                .find(|f| f.split == *split && f.modality == m)
                .ok_or_else(|| Error::Validation(format!("{split}: no file for modality {m:?}")))?;
            let cols = m.map_or(1, |m| spec.input_dims[m]);
            if entry.rows != n || entry.cols != cols {
                return Err(Error::Validation(format!(
                    "{}: manifest lists {}×{}, expected {n}×{cols}",
                    entry.path, entry.rows, entry.cols
                )));
            }
            if Path::new(&entry.path).components().count() != 1 {
                return Err(Error::Validation(format!("{}: file must sit next to the manifest", entry.path)));
            }
        }
    }
    Ok(())
}

pub fn load(dir: &Path) -> Result<MultimodalDataset> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
        section: MANIFEST.into(),
        line: e.line() as u64,
        message: e.to_string(),
    })?;
    check_manifest(&manifest)?;
    let spec = manifest.spec.clone();
    let locate = |split: &str, m: Option<usize>| -> (PathBuf, usize, usize) {
        let f = manifest
            .files
            .iter()
            .find(|f| f.split == split && f.modality == m)
            .expect("checked");
        (dir.join(&f.path), f.rows, f.cols)
    };
    let mut splits = Vec::new();
    for split in SPLITS {
        let mut feats = Vec::new();
        for m in 0..spec.modalities() {
            let (p, rows, cols) = locate(split, Some(m));
            let data = read_csv::<f64>(&p, rows, cols)?;
            feats.push(Matrix::new(rows, cols, data.concat())?);
        }
        let (p, rows, _) = locate(split, None);
        let labels: Vec<usize> = read_csv::<usize>(&p, rows, 1)?.into_iter().map(|r| r[0]).collect();
        splits.push((feats, labels));
    }
    let mut it = splits.into_iter();
    let mut next = || it.next().unwrap();
    let (f, l) = next();
    let source = LabeledSplit { features: f, labels: l };
    let (f, l) = next();
    let source_test = LabeledSplit { features: f, labels: l };
    let (target_train, l) = next();
    let (f, tl) = next();
    let ds = MultimodalDataset {
        spec,
        source,
        source_test,
        target_train,
        target_train_labels: EvalOnlyLabels::new(l),
        target_test: LabeledSplit { features: f, labels: tl },
    };
    ds.validate()?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DatasetSpec {
        DatasetSpec {
            input_dims: vec![3, 2],
            n_source: 20,
            n_source_test: 10,
            n_target: 15,
            n_target_test: 12,
            shift: vec![ShiftSeverity::default(); 2],
            ..DatasetSpec::default()
        }
    }

    #[test]
    fn shapes_and_determinism() {
        let spec = small();
        let a = generate(&spec).unwrap();
        assert_eq!(a.source.features[0].shape(), (20, 3));
        assert_eq!(a.target_train[1].shape(), (15, 2));
        assert_eq!(a.target_test.labels.len(), 12);
        assert!(a.source.labels.iter().all(|&y| y < 4));
        assert_eq!(a, generate(&spec).unwrap());
    }

    #[test]
    fn full_mask_zeroes_modality() {
        let mut spec = small();
        spec.shift[1] = ShiftSeverity::new(0.5, 0.3, 1.0);
        let ds = generate(&spec).unwrap();
        assert!(ds.target_train[1].as_slice().iter().all(|&v| v == 0.0));
        assert!(ds.target_test.features[1].as_slice().iter().all(|&v| v == 0.0));
        assert!(ds.target_train[0].as_slice().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn zero_shift_keeps_source_law() {
        // Same clusters, same noise-free construction; only the draws differ.
        let ds = generate(&small()).unwrap();
        let base = generate(&DatasetSpec {
            shift: vec![ShiftSeverity::new(0.0, 0.0, 0.0); 2],
            ..small()
        })
        .unwrap();
        assert_eq!(ds.target_train, base.target_train);
    }

    #[test]
    fn severities_are_independent_across_modalities() {
        let a = generate(&small()).unwrap();
        let mut spec = small();
        spec.shift[0] = ShiftSeverity::new(2.0, 1.0, 0.5);
        let b = generate(&spec).unwrap();
        assert_eq!(a.target_train[1], b.target_train[1]);
        assert_eq!(a.target_test.features[1], b.target_test.features[1]);
        assert_ne!(a.target_train[0], b.target_train[0]);
        assert_eq!(a.source, b.source);
    }

    #[test]
    fn rotation_preserves_norms_of_first_two_coordinates() {
        let mut rng = seeded_rng(1, 1);
        let x = Matrix::random_normal(5, 3, &mut rng);
        let mut y = x.clone();
        apply_shift(&mut y, &ShiftSeverity::new(0.0, 0.7, 0.0), &mut rng);
        for n in 0..5 {
            let a = x.row(n)[0].hypot(x.row(n)[1]);
            let b = y.row(n)[0].hypot(y.row(n)[1]);
            assert!((a - b).abs() < 1e-12);
            assert_eq!(x.row(n)[2], y.row(n)[2]);
        }
    }

    #[test]
    fn mask_zeroes_rounded_count_per_sample() {
        let mut rng = seeded_rng(2, 2);
        let mut x = Matrix::random_uniform(50, 8, 1.0, 2.0, &mut rng);
        apply_shift(&mut x, &ShiftSeverity::new(0.0, 0.0, 0.3), &mut rng);
        for n in 0..50 {
            assert_eq!(x.row(n).iter().filter(|&&v| v == 0.0).count(), 2);
        }
    }

    #[test]
    fn invalid_specs() {
        let mut s = small();
        s.classes = 1;
        assert!(generate(&s).is_err());
        let mut s = small();
        s.shift[0].mask_fraction = 1.5;
        assert!(generate(&s).is_err());
        let mut s = small();
        s.shift.pop();
        assert!(generate(&s).is_err());
        let mut s = small();
        s.input_dims = vec![1, 2];
        s.shift[0].rotation_angle = 0.1;
        assert!(generate(&s).is_err());
        let mut s = small();
        s.shift[1].noise_sigma = -1.0;
        assert!(generate(&s).is_err());
    }

    #[test]
    fn eval_only_labels_count_reads() {
        let l = EvalOnlyLabels::new(vec![1, 0]);
        assert_eq!(l.access_count(), 0);
        assert_eq!(l.read(), &[1, 0]);
        assert_eq!(l.access_count(), 1);
        l.reset_access_count();
        assert_eq!(l.access_count(), 0);
    }
}
