//! Line and plane hypotheses, point sets and the synthetic scene generators.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from;

const DEGENERATE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    coords: [f64; 3],
    dim: usize,
}

impl Point {
    pub fn new2(x: f64, y: f64) -> Self {
        Self {
            coords: [x, y, 0.0],
            dim: 2,
        }
    }

    pub fn new3(x: f64, y: f64, z: f64) -> Self {
        Self {
            coords: [x, y, z],
            dim: 3,
        }
    }

    pub fn from_slice(coords: &[f64]) -> Result<Self> {
        match *coords {
            [x, y] => Ok(Self::new2(x, y)),
            [x, y, z] => Ok(Self::new3(x, y, z)),
            _ => Err(Error::InvalidConfig(format!(
                "points must have 2 or 3 coordinates, got {}",
                coords.len()
            ))),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords[..self.dim]
    }

    fn v2(&self) -> Vector2<f64> {
        Vector2::new(self.coords[0], self.coords[1])
    }

    fn v3(&self) -> Vector3<f64> {
        Vector3::new(self.coords[0], self.coords[1], self.coords[2])
    }
}

/// An ordered point cloud, optionally carrying ground-truth structure labels
/// (`0` marks an outlier).
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    points: Vec<Point>,
    gt_labels: Option<Vec<usize>>,
    dim: usize,
}

impl PointSet {
    pub fn new(points: Vec<Point>, gt_labels: Option<Vec<usize>>) -> Result<Self> {
        let dim = points.first().map_or(2, Point::dim);
        if let Some(p) = points.iter().find(|p| p.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: p.dim(),
            });
        }
        if points
            .iter()
            .any(|p| p.coords().iter().any(|c| !c.is_finite()))
        {
            return Err(Error::InvalidConfig("non-finite point coordinate".into()));
        }
        if let Some(labels) = &gt_labels {
            if labels.len() != points.len() {
                return Err(Error::ShapeMismatch(format!(
                    "{} labels for {} points",
                    labels.len(),
                    points.len()
                )));
            }
        }
        Ok(Self {
            points,
            gt_labels,
            dim,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn gt_labels(&self) -> Option<&[usize]> {
        self.gt_labels.as_deref()
    }

    /// Indices of the points carrying ground-truth label `label`.
    pub fn group(&self, label: usize) -> Vec<usize> {
        match &self.gt_labels {
            Some(l) => (0..l.len()).filter(|&i| l[i] == label).collect(),
            None => Vec::new(),
        }
    }

    /// Writes `x,y[,z][,label]` CSV.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<&str> = vec!["x", "y", "z"][..self.dim].to_vec();
        if self.gt_labels.is_some() {
            header.push("label");
        }
        w.write_record(&header).map_err(csv_err)?;
        for (i, p) in self.points.iter().enumerate() {
            let mut row: Vec<String> = p.coords().iter().map(|c| format!("{c}")).collect();
            if let Some(l) = &self.gt_labels {
                row.push(l[i].to_string());
            }
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(input);
        let header: Vec<String> = r
            .headers()
            .map_err(csv_err)?
            .iter()
            .map(|h| h.to_ascii_lowercase())
            .collect();
        let has_label = header.last().is_some_and(|h| h == "label");
        let coord_cols = header.len() - usize::from(has_label);
        let expected = ["x", "y", "z"];
        if !(2..=3).contains(&coord_cols) || header[..coord_cols] != expected[..coord_cols] {
            return Err(Error::parse(1, 1, format!("bad header {header:?}")));
        }
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for (row, rec) in r.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            if rec.len() != header.len() {
                return Err(Error::parse(row + 2, rec.len(), "wrong field count"));
            }
            let mut coords = [0.0; 3];
            for c in 0..coord_cols {
                coords[c] = rec[c]
                    .parse::<f64>()
                    .map_err(|e| Error::parse(row + 2, c + 1, e.to_string()))?;
            }
            points.push(Point::from_slice(&coords[..coord_cols])?);
            if has_label {
                labels.push(
                    rec[coord_cols]
                        .parse::<usize>()
                        .map_err(|e| Error::parse(row + 2, coord_cols + 1, e.to_string()))?,
                );
            }
        }
        if points.is_empty() {
            return Err(Error::parse(1, 1, "no points"));
        }
        Self::new(points, has_label.then_some(labels))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(f))
    }
}

fn csv_err(e: csv::Error) -> Error {
    let (row, col) = e
        .position()
        .map_or((0, 0), |p| (p.line() as usize, p.record() as usize));
    Error::parse(row, col, e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    Line2D,
    Plane3D,
}

impl ModelKind {
    pub fn minimal_sample_size(self) -> usize {
        match self {
            ModelKind::Line2D => 2,
            ModelKind::Plane3D => 3,
        }
    }

    pub fn dim(self) -> usize {
        match self {
            ModelKind::Line2D => 2,
            ModelKind::Plane3D => 3,
        }
    }

    fn param_len(self) -> usize {
        self.dim() + 1
    }
}

/// A line `a x + b y + c = 0` or plane `a x + b y + c z + d = 0` with a unit normal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHypothesis {
    pub kind: ModelKind,
    params: Vec<f64>,
}

impl ModelHypothesis {
    /// Normalizes the parameter vector so the normal has unit length and its
    /// first nonzero component is positive.
    pub fn new(kind: ModelKind, params: &[f64]) -> Result<Self> {
        if params.len() != kind.param_len() {
            return Err(Error::DimensionMismatch {
                expected: kind.param_len(),
                got: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidConfig("non-finite model parameter".into()));
        }
        let dim = kind.dim();
        let norm = params[..dim].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < DEGENERATE_EPS {
            return Err(Error::DegenerateSample);
        }
        let sign = params[..dim]
            .iter()
            .find(|v| v.abs() > DEGENERATE_EPS)
            .map_or(1.0, |v| v.signum());
        Ok(Self {
            kind,
            params: params.iter().map(|v| v * sign / norm).collect(),
        })
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn normal(&self) -> &[f64] {
        &self.params[..self.kind.dim()]
    }

    /// Signed distance; its absolute value is [`residual`].
    pub fn signed_distance(&self, point: &Point) -> Result<f64> {
        if point.dim() != self.kind.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.kind.dim(),
                got: point.dim(),
            });
        }
        let dim = self.kind.dim();
        let dot: f64 = point
            .coords()
            .iter()
            .zip(&self.params[..dim])
            .map(|(x, n)| x * n)
            .sum();
        Ok(dot + self.params[dim])
    }
}

/// Orthogonal distance from `point` to the zero set of `model`.
pub fn residual(model: &ModelHypothesis, point: &Point) -> Result<f64> {
    model.signed_distance(point).map(f64::abs)
}

/// Fits a model exactly through a minimal sample.
pub fn fit_minimal(kind: ModelKind, sample: &[Point]) -> Result<ModelHypothesis> {
    if sample.len() != kind.minimal_sample_size() {
        return Err(Error::InvalidConfig(format!(
            "{kind:?} needs {} points, got {}",
            kind.minimal_sample_size(),
            sample.len()
        )));
    }
    if let Some(p) = sample.iter().find(|p| p.dim() != kind.dim()) {
        return Err(Error::DimensionMismatch {
            expected: kind.dim(),
            got: p.dim(),
        });
    }
    match kind {
        ModelKind::Line2D => {
            let (p, q) = (sample[0].v2(), sample[1].v2());
            let d = q - p;
            let len = d.norm();
            if len < DEGENERATE_EPS * (1.0 + p.norm().max(q.norm())) {
                return Err(Error::DegenerateSample);
            }
            let n = Vector2::new(-d.y, d.x) / len;
            ModelHypothesis::new(kind, &[n.x, n.y, -n.dot(&p)])
        }
        ModelKind::Plane3D => {
            let (a, b, c) = (sample[0].v3(), sample[1].v3(), sample[2].v3());
            let (u, v) = (b - a, c - a);
            let n = u.cross(&v);
            let scale = u.norm() * v.norm();
            if scale < DEGENERATE_EPS || n.norm() < DEGENERATE_EPS * scale.max(1.0) {
                return Err(Error::DegenerateSample);
            }
            let n = n.normalize();
            ModelHypothesis::new(kind, &[n.x, n.y, n.z, -n.dot(&a)])
        }
    }
}

/// Total least-squares fit to any number of points (at least the minimal
/// sample size).
pub fn fit_least_squares(kind: ModelKind, points: &[Point]) -> Result<ModelHypothesis> {
    if points.len() < kind.minimal_sample_size() {
        return Err(Error::DegenerateSample);
    }
    if let Some(p) = points.iter().find(|p| p.dim() != kind.dim()) {
        return Err(Error::DimensionMismatch {
            expected: kind.dim(),
            got: p.dim(),
        });
    }
    let n = points.len() as f64;
    match kind {
        ModelKind::Line2D => {
            let mean = points.iter().map(Point::v2).sum::<Vector2<f64>>() / n;
            let cov = points.iter().fold(Matrix2::zeros(), |acc, p| {
                let d = p.v2() - mean;
                acc + d * d.transpose()
            });
            let eig = cov.symmetric_eigen();
            let normal = eig.eigenvectors.column(eig.eigenvalues.imin()).into_owned();
            ModelHypothesis::new(kind, &[normal.x, normal.y, -normal.dot(&mean)])
        }
        ModelKind::Plane3D => {
            let mean = points.iter().map(Point::v3).sum::<Vector3<f64>>() / n;
            let cov = points.iter().fold(Matrix3::zeros(), |acc, p| {
                let d = p.v3() - mean;
                acc + d * d.transpose()
            });
            let eig = cov.symmetric_eigen();
            let normal = eig.eigenvectors.column(eig.eigenvalues.imin()).into_owned();
            ModelHypothesis::new(kind, &[normal.x, normal.y, normal.z, -normal.dot(&mean)])
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl BoundingBox {
    pub fn square(half: f64) -> Self {
        Self {
            min: vec![-half; 2],
            max: vec![half; 2],
        }
    }

    pub fn cube(half: f64) -> Self {
        Self {
            min: vec![-half; 3],
            max: vec![half; 3],
        }
    }

    fn dim(&self) -> usize {
        self.min.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub total_points: usize,
    pub outlier_fraction: f64,
    pub noise_sigma: f64,
    pub n_structures: usize,
    pub bounding_box: BoundingBox,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            total_points: 30,
            outlier_fraction: 1.0 / 6.0,
            noise_sigma: 0.01,
            n_structures: 5,
            bounding_box: BoundingBox::square(1.0),
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.total_points == 0 {
            return bad("total_points must be positive");
        }
        if !(0.0..=0.5).contains(&self.outlier_fraction) {
            return bad("outlier_fraction must lie in [0, 0.5]");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be a finite non-negative number");
        }
        if self.n_structures == 0 {
            return bad("n_structures must be positive");
        }
        let bb = &self.bounding_box;
        if bb.min.len() != bb.max.len()
            || bb
                .min
                .iter()
                .zip(&bb.max)
                .any(|(lo, hi)| lo.partial_cmp(hi) != Some(std::cmp::Ordering::Less))
        {
            return bad("bounding box must have min < max in every axis");
        }
        Ok(())
    }

    pub fn outlier_count(&self) -> usize {
        (self.outlier_fraction * self.total_points as f64).round() as usize
    }

    pub fn inlier_count(&self) -> usize {
        self.total_points - self.outlier_count()
    }

    /// Inliers per structure, remainder going round-robin to the first ones.
    pub fn inliers_per_structure(&self) -> Vec<usize> {
        let (q, r) = (
            self.inlier_count() / self.n_structures,
            self.inlier_count() % self.n_structures,
        );
        (0..self.n_structures)
            .map(|k| q + usize::from(k < r))
            .collect()
    }
}

fn uniform_in_box(rng: &mut crate::rng::Rng, bb: &BoundingBox) -> Vec<f64> {
    bb.min
        .iter()
        .zip(&bb.max)
        .map(|(lo, hi)| rng.random_range(*lo..*hi))
        .collect()
}

/// Noisy points on the edges of a regular polygon inscribed in the unit
/// circle (a pentagon for the default five structures), plus uniform outliers.
///
/// Returns the labelled point set (edge `k` gets label `k + 1`, outliers `0`)
/// and the exact edge lines.
pub fn generate_pentagon(config: &SyntheticConfig) -> Result<(PointSet, Vec<ModelHypothesis>)> {
    config.validate()?;
    if config.bounding_box.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: config.bounding_box.dim(),
        });
    }
    if config.n_structures < 3 {
        return Err(Error::InvalidConfig(
            "a polygon needs at least three edges".into(),
        ));
    }
    let k = config.n_structures;
    let vertices: Vec<Point> = (0..k)
        .map(|i| {
            let a = PI / 2.0 + 2.0 * PI * i as f64 / k as f64;
            Point::new2(a.cos(), a.sin())
        })
        .collect();
    let models = (0..k)
        .map(|i| fit_minimal(ModelKind::Line2D, &[vertices[i], vertices[(i + 1) % k]]))
        .collect::<Result<Vec<_>>>()?;

    let mut rng = rng_from(config.seed);
    let noise = Normal::new(0.0, config.noise_sigma).expect("sigma validated");
    let mut points = Vec::with_capacity(config.total_points);
    let mut labels = Vec::with_capacity(config.total_points);
    for (edge, count) in config.inliers_per_structure().into_iter().enumerate() {
        let (a, b) = (vertices[edge].v2(), vertices[(edge + 1) % k].v2());
        let normal = Vector2::new(models[edge].params[0], models[edge].params[1]);
        for _ in 0..count {
            let t: f64 = rng.random();
            let p = a + (b - a) * t + normal * noise.sample(&mut rng);
            points.push(Point::new2(p.x, p.y));
            labels.push(edge + 1);
        }
    }
    for _ in 0..config.outlier_count() {
        let c = uniform_in_box(&mut rng, &config.bounding_box);
        points.push(Point::new2(c[0], c[1]));
        labels.push(0);
    }
    Ok((PointSet::new(points, Some(labels))?, models))
}

/// Rectangular facade patch: centre, two orthonormal in-plane axes and half extents.
struct Patch {
    centre: Vector3<f64>,
    u: Vector3<f64>,
    v: Vector3<f64>,
    half: (f64, f64),
}

fn building_patches() -> Vec<Patch> {
    let x = Vector3::x();
    let y = Vector3::y();
    let z = Vector3::z();
    let roof_n = Vector3::new(0.0, 1.0, 1.0).normalize();
    let roof_u = x;
    let roof_v = roof_n.cross(&roof_u);
    vec![
        // ground
        Patch {
            centre: Vector3::new(0.0, 0.0, 0.0),
            u: x,
            v: y,
            half: (5.0, 5.0),
        },
        // walls
        Patch {
            centre: Vector3::new(-4.0, 0.0, 2.5),
            u: y,
            v: z,
            half: (4.0, 2.5),
        },
        Patch {
            centre: Vector3::new(0.0, -4.0, 2.5),
            u: x,
            v: z,
            half: (4.0, 2.5),
        },
        Patch {
            centre: Vector3::new(4.0, 0.0, 2.5),
            u: y,
            v: z,
            half: (4.0, 2.5),
        },
        // pitched roof
        Patch {
            centre: Vector3::new(0.0, 0.0, 5.5),
            u: roof_u,
            v: roof_v,
            half: (4.0, 2.0),
        },
        Patch {
            centre: Vector3::new(0.0, 4.0, 2.5),
            u: x,
            v: z,
            half: (4.0, 2.5),
        },
    ]
}

/// Synthetic planar scene (ground, walls and a roof of a box-shaped building)
/// with at most six structures; the 3D counterpart of [`generate_pentagon`].
pub fn generate_planes(config: &SyntheticConfig) -> Result<(PointSet, Vec<ModelHypothesis>)> {
    config.validate()?;
    if config.bounding_box.dim() != 3 {
        return Err(Error::DimensionMismatch {
            expected: 3,
            got: config.bounding_box.dim(),
        });
    }
    let patches = building_patches();
    if config.n_structures > patches.len() {
        return Err(Error::InvalidConfig(format!(
            "plane scene has at most {} structures",
            patches.len()
        )));
    }
    let mut rng = rng_from(config.seed);
    let noise = Normal::new(0.0, config.noise_sigma).expect("sigma validated");
    let mut models = Vec::new();
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (k, count) in config.inliers_per_structure().into_iter().enumerate() {
        let p = &patches[k];
        let n = p.u.cross(&p.v).normalize();
        models.push(ModelHypothesis::new(
            ModelKind::Plane3D,
            &[n.x, n.y, n.z, -n.dot(&p.centre)],
        )?);
        for _ in 0..count {
            let a = rng.random_range(-p.half.0..p.half.0);
            let b = rng.random_range(-p.half.1..p.half.1);
            let q = p.centre + p.u * a + p.v * b + n * noise.sample(&mut rng);
            points.push(Point::new3(q.x, q.y, q.z));
            labels.push(k + 1);
        }
    }
    for _ in 0..config.outlier_count() {
        let c = uniform_in_box(&mut rng, &config.bounding_box);
        points.push(Point::new3(c[0], c[1], c[2]));
        labels.push(0);
    }
    Ok((PointSet::new(points, Some(labels))?, models))
}

/// Options for [`sample_hypotheses_with`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SamplingOptions {
    /// When set, every point after the first is drawn with probability
    /// proportional to `exp(-d² / σ²)` of its distance to the first.
    pub locality_sigma: Option<f64>,
}

/// `m` hypotheses fitted to uniformly drawn minimal samples.
pub fn sample_hypotheses(
    points: &PointSet,
    kind: ModelKind,
    m: usize,
    seed: u64,
) -> Result<Vec<ModelHypothesis>> {
    sample_hypotheses_with(points, kind, m, seed, &SamplingOptions::default())
}

pub fn sample_hypotheses_with(
    points: &PointSet,
    kind: ModelKind,
    m: usize,
    seed: u64,
    options: &SamplingOptions,
) -> Result<Vec<ModelHypothesis>> {
    if m == 0 {
        return Err(Error::InvalidConfig(
            "hypothesis count must be at least 1".into(),
        ));
    }
    if points.dim() != kind.dim() {
        return Err(Error::DimensionMismatch {
            expected: kind.dim(),
            got: points.dim(),
        });
    }
    let k = kind.minimal_sample_size();
    if points.len() < k {
        return Err(Error::SamplingFailed { attempts: 0 });
    }
    if let Some(s) = options.locality_sigma {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidConfig(
                "locality sigma must be positive".into(),
            ));
        }
    }
    let mut rng = rng_from(seed);
    let budget = 100 * m;
    let mut attempts = 0;
    let mut out = Vec::with_capacity(m);
    let mut idx = Vec::with_capacity(k);
    while out.len() < m {
        if attempts == budget {
            return Err(Error::SamplingFailed { attempts });
        }
        attempts += 1;
        draw_minimal(&mut rng, points, k, options.locality_sigma, &mut idx);
        let sample: Vec<Point> = idx.iter().map(|&i| points.points[i]).collect();
        match fit_minimal(kind, &sample) {
            Ok(model) => out.push(model),
            Err(Error::DegenerateSample) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

fn draw_minimal(
    rng: &mut crate::rng::Rng,
    points: &PointSet,
    k: usize,
    locality: Option<f64>,
    idx: &mut Vec<usize>,
) {
    let n = points.len();
    idx.clear();
    idx.push(rng.random_range(0..n));
    match locality {
        None => {
            while idx.len() < k {
                let j = rng.random_range(0..n);
                if !idx.contains(&j) {
                    idx.push(j);
                }
            }
        }
        Some(sigma) => {
            let anchor = points.points[idx[0]];
            let weights: Vec<f64> = points
                .points
                .iter()
                .map(|p| {
                    let d2: f64 = p
                        .coords()
                        .iter()
                        .zip(anchor.coords())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    (-d2 / (sigma * sigma)).exp()
                })
                .collect();
            while idx.len() < k {
                let total: f64 = (0..n)
                    .filter(|j| !idx.contains(j))
                    .map(|j| weights[j])
                    .sum();
                let j = if total > 0.0 {
                    let mut u = rng.random::<f64>() * total;
                    let mut pick = None;
                    for j in (0..n).filter(|j| !idx.contains(j)) {
                        pick = Some(j);
                        u -= weights[j];
                        if u <= 0.0 {
                            break;
                        }
                    }
                    pick.expect("at least one candidate remains")
                } else {
                    // every other point underflowed; fall back to uniform
                    loop {
                        let j = rng.random_range(0..n);
                        if !idx.contains(&j) {
                            break j;
                        }
                    }
                };
                idx.push(j);
            }
        }
    }
}

/// Hypothesis pool in which the true models are always present: one
/// least-squares refit per ground-truth inlier group comes first, followed by
/// `m - groups` sampled hypotheses.
pub fn sample_hypotheses_with_gt(
    points: &PointSet,
    kind: ModelKind,
    m: usize,
    seed: u64,
    options: &SamplingOptions,
) -> Result<Vec<ModelHypothesis>> {
    let labels = points
        .gt_labels()
        .ok_or_else(|| Error::InvalidConfig("ground-truth injection needs labels".into()))?;
    let groups = labels
        .iter()
        .copied()
        .filter(|&l| l != 0)
        .max()
        .unwrap_or(0);
    if m < groups {
        return Err(Error::InvalidConfig(format!(
            "{m} hypotheses cannot hold {groups} injected models"
        )));
    }
    let mut out = Vec::with_capacity(m);
    for g in 1..=groups {
        let members: Vec<Point> = points
            .group(g)
            .into_iter()
            .map(|i| points.points[i])
            .collect();
        out.push(fit_least_squares(kind, &members)?);
    }
    if m > groups {
        out.extend(sample_hypotheses_with(
            points,
            kind,
            m - groups,
            seed,
            options,
        )?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(a: f64, b: f64, c: f64) -> ModelHypothesis {
        ModelHypothesis::new(ModelKind::Line2D, &[a, b, c]).unwrap()
    }

    #[test]
    fn residual_examples() {
        let l = line(0.0, 1.0, 0.0);
        assert_eq!(residual(&l, &Point::new2(3.0, 0.0)).unwrap(), 0.0);
        assert_eq!(residual(&l, &Point::new2(3.0, 0.5)).unwrap(), 0.5);
        let p = ModelHypothesis::new(ModelKind::Plane3D, &[0.0, 0.0, 1.0, -2.0]).unwrap();
        assert_eq!(residual(&p, &Point::new3(1.0, 1.0, 5.0)).unwrap(), 3.0);
    }

    #[test]
    fn residual_rejects_wrong_dimension() {
        let l = line(0.0, 1.0, 0.0);
        assert!(matches!(
            residual(&l, &Point::new3(0.0, 0.0, 0.0)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn residual_ignores_parameter_sign() {
        let raw = [0.3, -0.4, 0.7];
        let neg: Vec<f64> = raw.iter().map(|v| -v).collect();
        let a = ModelHypothesis::new(ModelKind::Line2D, &raw).unwrap();
        let b = ModelHypothesis::new(ModelKind::Line2D, &neg).unwrap();
        let p = Point::new2(1.5, -2.0);
        assert_eq!(residual(&a, &p).unwrap(), residual(&b, &p).unwrap());
    }

    #[test]
    fn fit_minimal_examples() {
        let l = fit_minimal(
            ModelKind::Line2D,
            &[Point::new2(0.0, 0.0), Point::new2(1.0, 1.0)],
        )
        .unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((l.params()[0] - h).abs() < 1e-12);
        assert!((l.params()[1] + h).abs() < 1e-12);
        assert!(l.params()[2].abs() < 1e-12);

        let p = fit_minimal(
            ModelKind::Plane3D,
            &[
                Point::new3(0.0, 0.0, 0.0),
                Point::new3(1.0, 0.0, 0.0),
                Point::new3(0.0, 1.0, 0.0),
            ],
        )
        .unwrap();
        assert_eq!(p.params(), &[0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn fit_minimal_degenerate() {
        let same = [Point::new2(0.0, 0.0), Point::new2(0.0, 0.0)];
        assert!(matches!(
            fit_minimal(ModelKind::Line2D, &same),
            Err(Error::DegenerateSample)
        ));
        let collinear = [
            Point::new3(0.0, 0.0, 0.0),
            Point::new3(1.0, 1.0, 1.0),
            Point::new3(2.0, 2.0, 2.0),
        ];
        assert!(matches!(
            fit_minimal(ModelKind::Plane3D, &collinear),
            Err(Error::DegenerateSample)
        ));
    }

    #[test]
    fn pentagon_counts() {
        let cfg = SyntheticConfig {
            outlier_fraction: 1.0 / 6.0,
            ..Default::default()
        };
        let (ps, models) = generate_pentagon(&cfg).unwrap();
        let labels = ps.gt_labels().unwrap();
        assert_eq!(ps.len(), 30);
        assert_eq!(models.len(), 5);
        assert_eq!(labels.iter().filter(|&&l| l == 0).count(), 5);
        for g in 1..=5 {
            assert_eq!(ps.group(g).len(), 5);
        }
    }

    #[test]
    fn pentagon_without_outliers() {
        let cfg = SyntheticConfig {
            outlier_fraction: 0.0,
            total_points: 32,
            ..Default::default()
        };
        let (ps, _) = generate_pentagon(&cfg).unwrap();
        let labels = ps.gt_labels().unwrap();
        assert!(labels.iter().all(|l| (1..=5).contains(l)));
        // 32 = 5 * 6 + 2: the first two edges get one extra point
        assert_eq!(ps.group(1).len(), 7);
        assert_eq!(ps.group(3).len(), 6);
    }

    #[test]
    fn pentagon_is_deterministic() {
        let cfg = SyntheticConfig {
            seed: 99,
            ..Default::default()
        };
        assert_eq!(
            generate_pentagon(&cfg).unwrap(),
            generate_pentagon(&cfg).unwrap()
        );
    }

    #[test]
    fn pentagon_rejects_bad_config() {
        let cfg = SyntheticConfig {
            outlier_fraction: 0.6,
            ..Default::default()
        };
        assert!(matches!(
            generate_pentagon(&cfg),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn pentagon_noise_matches_sigma() {
        let cfg = SyntheticConfig {
            total_points: 10_000,
            outlier_fraction: 0.0,
            noise_sigma: 0.01,
            seed: 3,
            ..Default::default()
        };
        let (ps, models) = generate_pentagon(&cfg).unwrap();
        let labels = ps.gt_labels().unwrap();
        let d: Vec<f64> = ps
            .points()
            .iter()
            .zip(labels)
            .map(|(p, &l)| models[l - 1].signed_distance(p).unwrap())
            .collect();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let std = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d.len() as f64).sqrt();
        assert!((std - 0.01).abs() < 0.002, "std = {std}");
    }

    #[test]
    fn sampling_examples() {
        let (ps, _) = generate_pentagon(&SyntheticConfig::default()).unwrap();
        assert!(matches!(
            sample_hypotheses(&ps, ModelKind::Line2D, 0, 1),
            Err(Error::InvalidConfig(_))
        ));
        let hyps = sample_hypotheses(&ps, ModelKind::Line2D, 40, 1).unwrap();
        assert_eq!(hyps.len(), 40);
        for h in &hyps {
            let n = h.normal();
            assert!((n[0] * n[0] + n[1] * n[1] - 1.0).abs() < 1e-12);
        }
        assert_eq!(
            hyps,
            sample_hypotheses(&ps, ModelKind::Line2D, 40, 1).unwrap()
        );
    }

    #[test]
    fn sampling_fails_when_everything_is_degenerate() {
        let ps = PointSet::new(vec![Point::new2(1.0, 1.0); 4], None).unwrap();
        assert!(matches!(
            sample_hypotheses(&ps, ModelKind::Line2D, 3, 0),
            Err(Error::SamplingFailed { attempts: 300 })
        ));
    }

    #[test]
    fn local_sampling_prefers_neighbours() {
        // two far-apart clusters: local pairs should almost never straddle them
        let mut pts = Vec::new();
        for i in 0..10 {
            pts.push(Point::new2(i as f64 * 0.01, 0.0));
            pts.push(Point::new2(100.0 + i as f64 * 0.01, 5.0 + i as f64 * 0.01));
        }
        let ps = PointSet::new(pts, None).unwrap();
        let opts = SamplingOptions {
            locality_sigma: Some(1.0),
        };
        let hyps = sample_hypotheses_with(&ps, ModelKind::Line2D, 200, 5, &opts).unwrap();
        let horizontal = hyps.iter().filter(|h| h.normal()[0].abs() < 1e-9).count();
        let diagonal = hyps
            .iter()
            .filter(|h| (h.normal()[0] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9)
            .count();
        assert_eq!(horizontal + diagonal, 200);
    }

    #[test]
    fn gt_injection_prepends_refits() {
        let cfg = SyntheticConfig {
            noise_sigma: 0.0,
            seed: 11,
            ..Default::default()
        };
        let (ps, _) = generate_pentagon(&cfg).unwrap();
        let hyps =
            sample_hypotheses_with_gt(&ps, ModelKind::Line2D, 40, 2, &SamplingOptions::default())
                .unwrap();
        assert_eq!(hyps.len(), 40);
        for g in 1..=5 {
            for i in ps.group(g) {
                assert!(residual(&hyps[g - 1], &ps.points()[i]).unwrap() < 1e-9);
            }
        }
        let rest = sample_hypotheses(&ps, ModelKind::Line2D, 35, 2).unwrap();
        assert_eq!(&hyps[5..], &rest[..]);
    }

    #[test]
    fn least_squares_plane() {
        let pts: Vec<Point> = (0..20)
            .map(|i| {
                let (x, y) = ((i % 5) as f64, (i / 5) as f64);
                Point::new3(x, y, 0.5 * x - 0.25 * y + 1.0)
            })
            .collect();
        let m = fit_least_squares(ModelKind::Plane3D, &pts).unwrap();
        for p in &pts {
            assert!(residual(&m, p).unwrap() < 1e-9);
        }
    }

    #[test]
    fn plane_scene() {
        let cfg = SyntheticConfig {
            total_points: 300,
            outlier_fraction: 0.2,
            noise_sigma: 0.05,
            n_structures: 6,
            bounding_box: BoundingBox::cube(6.0),
            seed: 4,
        };
        let (ps, models) = generate_planes(&cfg).unwrap();
        assert_eq!(ps.dim(), 3);
        assert_eq!(models.len(), 6);
        let labels = ps.gt_labels().unwrap();
        for (p, &l) in ps.points().iter().zip(labels) {
            if l > 0 {
                assert!(residual(&models[l - 1], p).unwrap() < 0.5);
            }
        }
    }

    #[test]
    fn csv_round_trip() {
        let (ps, _) = generate_pentagon(&SyntheticConfig::default()).unwrap();
        let mut buf = Vec::new();
        ps.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"x,y,label\n"));
        let back = PointSet::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, ps);
    }

    #[test]
    fn csv_without_labels() {
        let ps = PointSet::read_csv("x,y,z\n1,2,3\n4,5,6\n".as_bytes()).unwrap();
        assert_eq!(ps.dim(), 3);
        assert!(ps.gt_labels().is_none());
        assert!(PointSet::read_csv("x,y\n1,oops\n".as_bytes()).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn coord() -> impl Strategy<Value = f64> {
            -10.0..10.0f64
        }

        proptest! {
            #[test]
            fn minimal_line_passes_through_sample(a in (coord(), coord()), b in (coord(), coord())) {
                let s = [Point::new2(a.0, a.1), Point::new2(b.0, b.1)];
                prop_assume!((a.0 - b.0).hypot(a.1 - b.1) > 1e-3);
                let m = fit_minimal(ModelKind::Line2D, &s).unwrap();
                for p in &s {
                    prop_assert!(residual(&m, p).unwrap() <= 1e-9);
                }
                prop_assert!(m.normal()[0] > 0.0 || (m.normal()[0] == 0.0 && m.normal()[1] > 0.0));
            }

            #[test]
            fn minimal_plane_passes_through_sample(
                a in (coord(), coord(), coord()),
                b in (coord(), coord(), coord()),
                c in (coord(), coord(), coord()),
            ) {
                let s = [Point::new3(a.0, a.1, a.2), Point::new3(b.0, b.1, b.2), Point::new3(c.0, c.1, c.2)];
                match fit_minimal(ModelKind::Plane3D, &s) {
                    Ok(m) => for p in &s {
                        prop_assert!(residual(&m, p).unwrap() <= 1e-9);
                    },
                    Err(Error::DegenerateSample) => {}
                    Err(e) => prop_assert!(false, "{e}"),
                }
            }

            #[test]
            fn residual_non_negative(p in (coord(), coord()), l in (coord(), coord(), coord())) {
                prop_assume!(l.0.hypot(l.1) > 1e-6);
                let m = ModelHypothesis::new(ModelKind::Line2D, &[l.0, l.1, l.2]).unwrap();
                prop_assert!(residual(&m, &Point::new2(p.0, p.1)).unwrap() >= 0.0);
            }
        }
    }
}
