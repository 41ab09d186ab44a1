//! Distance-parameterized gesture functions and the gesture model library.
//!
//! A gesture function maps the hand-object distance (meters) to the six grasp
//! angles (degrees), one quartic polynomial per degree of freedom.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, Point3, PointCloud, SizeParams};
use crate::intent::{self, Validation};
use crate::kinematics::{AngleVector, Dof};

pub const POLY_TERMS: usize = 5;
/// Relative tolerance under which two library sizes count as the same object.
pub const SIZE_TOLERANCE: f64 = 0.10;

#[derive(Debug, Error)]
pub enum GestureError {
    #[error("need at least {POLY_TERMS} samples, got {0}")]
    TooFewSamples(usize),
    #[error("only {0} distinct distances; a quartic needs {POLY_TERMS}")]
    IllConditioned(usize),
    #[error("invalid gesture function: {0}")]
    InvalidFunction(String),
    #[error("distance range is degenerate (start = end = {0})")]
    DegenerateRange(f64),
    #[error("no library entry for class {0:?}")]
    ClassNotFound(String),
    #[error("class {class:?} found but no entry passed registration (best error {best_error:.4} m)")]
    GestureMismatch { class: String, best_error: f64 },
    #[error("library is empty")]
    EmptyLibrary,
    #[error(transparent)]
    Registration(#[from] intent::IntentError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("schema error in {path}: {msg}")]
    Schema { path: PathBuf, msg: String },
}

pub type Result<T> = std::result::Result<T, GestureError>;

/// One observation of the approach: distance to the object and the hand pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GestureSample {
    pub distance: f64,
    pub angles: AngleVector,
    pub timestamp: f64,
}

/// Six quartics over distance, coefficients highest power first.
#[derive(Debug, Clone, PartialEq)]
pub struct GestureFunction {
    pub coeffs: [[f64; POLY_TERMS]; 6],
    /// `(d_end, d_start)` in meters.
    pub d_range: (f64, f64),
}

impl GestureFunction {
    pub fn new(coeffs: [[f64; POLY_TERMS]; 6], d_end: f64, d_start: f64) -> Result<Self> {
        let f = Self {
            coeffs,
            d_range: (d_end, d_start),
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.d_range;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(GestureError::InvalidFunction(format!(
                "distance range [{lo}, {hi}] must be increasing and finite"
            )));
        }
        if !self.coeffs.iter().flatten().all(|c| c.is_finite()) {
            return Err(GestureError::InvalidFunction("non-finite coefficient".into()));
        }
        Ok(())
    }

    pub fn d_end(&self) -> f64 {
        self.d_range.0
    }

    pub fn d_start(&self) -> f64 {
        self.d_range.1
    }

    /// Raw polynomial value for one DOF, no clamping.
    pub fn poly(&self, dof: usize, d: f64) -> f64 {
        self.coeffs[dof].iter().fold(0.0, |acc, c| acc * d + c)
    }

    /// Per-DOF (min, max) of the function over its distance range, sampled densely.
    pub fn angle_ranges(&self) -> [(f64, f64); 6] {
        const STEPS: usize = 256;
        let mut out = [(f64::INFINITY, f64::NEG_INFINITY); 6];
        for k in 0..=STEPS {
            let d = self.d_end() + (self.d_start() - self.d_end()) * k as f64 / STEPS as f64;
            for (j, r) in out.iter_mut().enumerate() {
                let v = self.poly(j, d);
                r.0 = r.0.min(v);
                r.1 = r.1.max(v);
            }
        }
        out
    }
}

pub fn hand_object_distance(hand: &Point3, object: &Point3) -> f64 {
    (hand - object).norm()
}

/// Per-DOF quartic least squares of angle against distance, solved with a
/// Householder QR of the Vandermonde matrix.
pub fn fit_gesture_function(samples: &[GestureSample]) -> Result<GestureFunction> {
    if samples.len() < POLY_TERMS {
        return Err(GestureError::TooFewSamples(samples.len()));
    }
    let mut distinct: Vec<f64> = samples.iter().map(|s| s.distance).collect();
    distinct.sort_by(|a, b| a.total_cmp(b));
    distinct.dedup();
    if distinct.len() < POLY_TERMS {
        return Err(GestureError::IllConditioned(distinct.len()));
    }

    let n = samples.len();
    let vander = DMatrix::from_fn(n, POLY_TERMS, |r, c| {
        samples[r].distance.powi((POLY_TERMS - 1 - c) as i32)
    });
    let qr = vander.qr();
    let q = qr.q();
    let r = qr.r();

    let mut coeffs = [[0.0; POLY_TERMS]; 6];
    for (dof, out) in coeffs.iter_mut().enumerate() {
        let y = DVector::from_iterator(n, samples.iter().map(|s| s.angles[dof]));
        let qty = q.tr_mul(&y);
        let sol = r
            .solve_upper_triangular(&qty)
            .ok_or(GestureError::IllConditioned(distinct.len()))?;
        out.copy_from_slice(sol.as_slice());
    }
    GestureFunction::new(coeffs, distinct[0], distinct[distinct.len() - 1])
}

/// Root-mean-square fit residual per DOF, degrees.
pub fn fit_residuals(f: &GestureFunction, samples: &[GestureSample]) -> [f64; 6] {
    let mut out = [0.0; 6];
    if samples.is_empty() {
        return out;
    }
    for (dof, r) in out.iter_mut().enumerate() {
        let sse: f64 = samples
            .iter()
            .map(|s| (s.angles[dof] - f.poly(dof, s.distance)).powi(2))
            .sum();
        *r = (sse / samples.len() as f64).sqrt();
    }
    out
}

/// Angles at distance `d`, holding the endpoint values outside the fitted range.
pub fn eval_gesture(f: &GestureFunction, d: f64) -> AngleVector {
    let d = d.clamp(f.d_end(), f.d_start());
    let mut out = AngleVector::default();
    for dof in Dof::ALL {
        out[dof.index()] = f.poly(dof.index(), d);
    }
    out
}

/// Degree of completion of the reach in percent, clamped to [0, 100].
pub fn degree_of_completion(d_start: f64, d_ongo: f64, d_end: f64) -> Result<f64> {
    if d_start == d_end {
        return Err(GestureError::DegenerateRange(d_start));
    }
    Ok(((d_start - d_ongo) / (d_start - d_end) * 100.0).clamp(0.0, 100.0))
}

/// Keeps the approach part of a sequence: samples whose 3-frame median
/// distance does not rise above any earlier kept value.
pub fn approach_samples(samples: &[GestureSample]) -> Vec<GestureSample> {
    let n = samples.len();
    let smoothed: Vec<f64> = (0..n)
        .map(|k| {
            if k == 0 || k + 1 == n {
                return samples[k].distance;
            }
            let mut w = [samples[k - 1].distance, samples[k].distance, samples[k + 1].distance];
            w.sort_by(|a, b| a.total_cmp(b));
            w[1]
        })
        .collect();
    let mut floor = f64::INFINITY;
    let mut out = Vec::with_capacity(n);
    for (s, d) in samples.iter().zip(smoothed) {
        if d <= floor {
            floor = d;
            out.push(*s);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct GestureLibraryEntry {
    pub object_class: String,
    pub size: SizeParams,
    pub model_cloud: Option<PointCloud>,
    pub function: GestureFunction,
}

impl GestureLibraryEntry {
    pub fn new(
        object_class: impl Into<String>,
        size: SizeParams,
        model_cloud: Option<PointCloud>,
        function: GestureFunction,
    ) -> Result<Self> {
        let object_class = object_class.into();
        if object_class.is_empty() {
            return Err(GestureError::InvalidFunction("empty object class".into()));
        }
        function.validate()?;
        Ok(Self {
            object_class,
            size,
            model_cloud,
            function,
        })
    }
}

/// Size-only discrepancy: worst per-axis extent or radius difference, meters.
pub fn size_discrepancy(a: &SizeParams, b: &SizeParams) -> f64 {
    let de = (a.extents - b.extents).abs().max();
    de.max((a.radius - b.radius).abs())
}

pub fn sizes_match(a: &SizeParams, b: &SizeParams) -> bool {
    size_discrepancy(a, b) <= SIZE_TOLERANCE * a.radius.max(b.radius)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GestureLibrary {
    pub entries: Vec<GestureLibraryEntry>,
}

impl GestureLibrary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an entry; an existing entry of the same class and matching size is replaced.
    pub fn insert(&mut self, entry: GestureLibraryEntry) {
        if let Some(slot) = self
            .entries
            .iter_mut()
            .find(|e| e.object_class == entry.object_class && sizes_match(&e.size, &entry.size))
        {
            *slot = entry;
        } else {
            self.entries.push(entry);
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn classes(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.object_class.as_str())
    }
}

/// Finds the entry of `object_class` that passes the registration gate
/// against the observed object, preferring the lowest registration error.
pub fn library_lookup<'a>(
    lib: &'a GestureLibrary,
    object_class: &str,
    size: &SizeParams,
    cloud: &PointCloud,
) -> Result<&'a GestureLibraryEntry> {
    if lib.is_empty() {
        return Err(GestureError::EmptyLibrary);
    }
    let mut best: Option<(&GestureLibraryEntry, f64)> = None;
    let mut best_error = f64::INFINITY;
    let mut found_class = false;
    for entry in lib.entries.iter().filter(|e| e.object_class == object_class) {
        found_class = true;
        match intent::validate_gesture_entry(entry, cloud, size)? {
            Validation::Ok { error } => {
                if best.is_none_or(|(_, e)| error < e) {
                    best = Some((entry, error));
                }
            }
            Validation::Mismatch { error } => best_error = best_error.min(error),
        }
    }
    match best {
        Some((entry, _)) => Ok(entry),
        None if found_class => Err(GestureError::GestureMismatch {
            class: object_class.to_string(),
            best_error,
        }),
        None => Err(GestureError::ClassNotFound(object_class.to_string())),
    }
}

#[derive(Serialize, Deserialize)]
struct LibraryFile {
    entries: Vec<EntryFile>,
}

#[derive(Serialize, Deserialize)]
struct SizeFile {
    extents: [f64; 3],
    radius: f64,
    centroid: [f64; 3],
}

#[derive(Serialize, Deserialize)]
struct CoeffsFile {
    p: Vec<f64>,
    r: Vec<f64>,
    m: Vec<f64>,
    i: Vec<f64>,
    tb: Vec<f64>,
    tr: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct EntryFile {
    class: String,
    size: SizeFile,
    coeffs: CoeffsFile,
    d_range: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cloud_ref: Option<String>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> GestureError + '_ {
    move |source| GestureError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes the library JSON; model clouds go to a sibling `<stem>.clouds/` directory.
pub fn save_library(lib: &GestureLibrary, path: &Path) -> Result<()> {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("library");
    let cloud_dir_name = format!("{stem}.clouds");
    let base = path.parent().unwrap_or(Path::new(""));
    let mut entries = Vec::with_capacity(lib.len());
    for (idx, e) in lib.entries.iter().enumerate() {
        let cloud_ref = match &e.model_cloud {
            Some(cloud) => {
                let dir = base.join(&cloud_dir_name);
                fs::create_dir_all(&dir).map_err(io_err(&dir))?;
                let rel = format!("{cloud_dir_name}/{idx:03}_{}.json", sanitize(&e.object_class));
                let file = base.join(&rel);
                let text = serde_json::to_string(cloud).expect("point clouds always serialize");
                fs::write(&file, text).map_err(io_err(&file))?;
                Some(rel)
            }
            None => None,
        };
        let c = &e.function.coeffs;
        entries.push(EntryFile {
            class: e.object_class.clone(),
            size: SizeFile {
                extents: e.size.extents.into(),
                radius: e.size.radius,
                centroid: e.size.centroid.into(),
            },
            coeffs: CoeffsFile {
                p: c[0].to_vec(),
                r: c[1].to_vec(),
                m: c[2].to_vec(),
                i: c[3].to_vec(),
                tb: c[4].to_vec(),
                tr: c[5].to_vec(),
            },
            d_range: [e.function.d_end(), e.function.d_start()],
            cloud_ref,
        });
    }
    let text = serde_json::to_string_pretty(&LibraryFile { entries }).expect("library always serializes");
    fs::write(path, text).map_err(io_err(path))
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

pub fn load_library(path: &Path) -> Result<GestureLibrary> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let schema = |msg: String| GestureError::Schema {
        path: path.to_path_buf(),
        msg,
    };
    let file: LibraryFile = serde_json::from_str(&text).map_err(|e| schema(e.to_string()))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut lib = GestureLibrary::new();
    for (idx, e) in file.entries.into_iter().enumerate() {
        let mut coeffs = [[0.0; POLY_TERMS]; 6];
        let rows = [
            &e.coeffs.p,
            &e.coeffs.r,
            &e.coeffs.m,
            &e.coeffs.i,
            &e.coeffs.tb,
            &e.coeffs.tr,
        ];
        for (dof, row) in Dof::ALL.iter().zip(rows) {
            if row.len() != POLY_TERMS {
                return Err(schema(format!(
                    "entry {idx}: DOF {} has {} coefficients, expected {POLY_TERMS}",
                    dof.key(),
                    row.len()
                )));
            }
            coeffs[dof.index()].copy_from_slice(row);
        }
        let function = GestureFunction::new(coeffs, e.d_range[0], e.d_range[1])
            .map_err(|err| schema(format!("entry {idx}: {err}")))?;
        let model_cloud = match &e.cloud_ref {
            Some(rel) => {
                let file = base.join(rel);
                let text = fs::read_to_string(&file).map_err(io_err(&file))?;
                let cloud: PointCloud =
                    serde_json::from_str(&text).map_err(|err| schema(format!("cloud {rel}: {err}")))?;
                Some(PointCloud::new(cloud.points).map_err(|err| schema(format!("cloud {rel}: {err}")))?)
            }
            None => None,
        };
        let size = SizeParams {
            extents: Vector3::from(e.size.extents),
            radius: e.size.radius,
            centroid: Vector3::from(e.size.centroid),
        };
        if size.extents.iter().any(|x| *x < 0.0) || size.radius < 0.0 {
            return Err(schema(format!("entry {idx}: negative size")));
        }
        let entry = GestureLibraryEntry::new(e.class, size, model_cloud, function)
            .map_err(|err| schema(format!("entry {idx}: {err}")))?;
        lib.entries.push(entry);
    }
    Ok(lib)
}

/// Builds an entry from a modeling sequence and the object's cloud.
pub fn model_entry(
    object_class: &str,
    cloud: &PointCloud,
    samples: &[GestureSample],
) -> Result<(GestureLibraryEntry, [f64; 6])> {
    let approach = approach_samples(samples);
    let function = fit_gesture_function(&approach)?;
    let residuals = fit_residuals(&function, &approach);
    let size = geometry::object_size(cloud).map_err(|e| GestureError::InvalidFunction(e.to_string()))?;
    let entry = GestureLibraryEntry::new(object_class, size, Some(cloud.clone()), function)?;
    Ok((entry, residuals))
}
