//! CSV/JSON file formats.
//!
//! Every table has a fixed, versioned column list ([`TableSchema`]); writers
//! always emit the header, readers reject files whose header differs.
//! [`schema_manifest`] is the machine-readable description shipped next to
//! experiment outputs.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Correspondence, GravityRotation, ImageFrame};

pub const SCHEMA_VERSION: u32 = 1;

/// Column layout of one CSV table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TableSchema {
    pub name: &'static str,
    pub description: &'static str,
    pub columns: &'static [&'static str],
}

pub const STABILITY: TableSchema = TableSchema {
    name: "stability",
    description: "one row per noise-free instance; log10 errors of the best solution, empty when not estimated or failed",
    columns: &[
        "index", "seed", "solver", "status", "n_solutions", "log10_h_err", "log10_f_err",
        "log10_lambda_err", "solve_us",
    ],
};

pub const NOISE: TableSchema = TableSchema {
    name: "noise",
    description: "one row per instance and noise level; angles in radians, f/lambda/homography errors relative",
    columns: &[
        "sigma_px", "index", "seed", "solver", "status", "n_solutions", "e_rot", "e_t", "e_f",
        "e_lambda", "e_h",
    ],
};

pub const DRIFT: TableSchema = TableSchema {
    name: "drift",
    description: "one row per instance and yaw drift level; errors before and after local optimization, costs in px^2",
    columns: &[
        "drift_deg", "index", "solver", "status", "e_rot", "e_h", "e_h_lo", "e_f", "e_f_lo", "cost",
        "cost_lo",
    ],
};

pub const TIMING: TableSchema = TableSchema {
    name: "timing",
    description: "one row per solver; wall time per call in microseconds",
    columns: &[
        "solver", "instances", "warmup", "batch_size", "mean_us", "median_of_means_us",
        "max_iterations_30fps",
    ],
};

pub const RANSAC_REPEATS: TableSchema = TableSchema {
    name: "ransac_repeats",
    description: "one row per RANSAC repeat, scored against generator labels; elapsed_ms empty when timings are disabled",
    columns: &[
        "repeat", "status", "true_inliers", "found_inliers", "precision", "recall", "iterations",
        "elapsed_ms", "e_h", "e_f",
    ],
};

pub const RANSAC_TRACE: TableSchema = TableSchema {
    name: "ransac_trace",
    description: "best-so-far inlier count each time it changed; time_ms empty when timings are disabled",
    columns: &["repeat", "iteration", "inliers", "time_ms"],
};

pub const RANSAC_CURVE: TableSchema = TableSchema {
    name: "ransac_curve",
    description: "best-so-far inlier count averaged over repeats on a time grid",
    columns: &["time_ms", "mean_inliers"],
};

pub const CORRESPONDENCES: TableSchema = TableSchema {
    name: "correspondences",
    description: "distortion-centered pixel coordinates and world-to-camera Hamilton quaternions (w, x, y, z)",
    columns: &[
        "x1", "y1", "x2", "y2", "qw1", "qx1", "qy1", "qz1", "qw2", "qx2", "qy2", "qz2",
    ],
};

pub const ALL_TABLES: [TableSchema; 8] = [
    STABILITY,
    NOISE,
    DRIFT,
    TIMING,
    RANSAC_REPEATS,
    RANSAC_TRACE,
    RANSAC_CURVE,
    CORRESPONDENCES,
];

pub fn schema_manifest() -> serde_json::Value {
    serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "tables": ALL_TABLES,
    })
}

/// Writes header plus rows; the header is present even without rows.
pub fn write_table<T: Serialize>(path: &Path, schema: &TableSchema, rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(BufWriter::new(File::create(path)?));
    w.write_record(schema.columns)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a table after checking its header against `schema`.
pub fn read_table<T: DeserializeOwned>(path: &Path, schema: &TableSchema) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(BufReader::new(File::open(path)?));
    let header = r.headers()?.clone();
    if header.iter().ne(schema.columns.iter().copied()) {
        return Err(Error::Parse {
            row: 1,
            message: format!(
                "{} header mismatch: expected [{}], found [{}]",
                schema.name,
                schema.columns.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Io(e.to_string()))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_reader(BufReader::new(File::open(path)?)).map_err(|e| Error::Parse {
        row: e.line(),
        message: format!("{}: {e}", path.display()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceRow {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub qw1: f64,
    pub qx1: f64,
    pub qy1: f64,
    pub qz1: f64,
    pub qw2: f64,
    pub qx2: f64,
    pub qy2: f64,
    pub qz2: f64,
}

impl CorrespondenceRow {
    pub fn from_correspondence(c: &Correspondence, frame: &ImageFrame) -> Self {
        let p1 = frame.to_pixels(c.p1);
        let p2 = frame.to_pixels(c.p2);
        let [qw1, qx1, qy1, qz1] = c.r1.quaternion();
        let [qw2, qx2, qy2, qz2] = c.r2.quaternion();
        Self {
            x1: p1.x,
            y1: p1.y,
            x2: p2.x,
            y2: p2.y,
            qw1,
            qx1,
            qy1,
            qz1,
            qw2,
            qx2,
            qy2,
            qz2,
        }
    }

    pub fn to_correspondence(&self, frame: &ImageFrame) -> Result<Correspondence> {
        let r1 = GravityRotation::from_quaternion(self.qw1, self.qx1, self.qy1, self.qz1)?;
        let r2 = GravityRotation::from_quaternion(self.qw2, self.qx2, self.qy2, self.qz2)?;
        let p1 = frame.normalize(nalgebra::Vector2::new(self.x1, self.y1));
        let p2 = frame.normalize(nalgebra::Vector2::new(self.x2, self.y2));
        if !(p1.is_finite() && p2.is_finite()) {
            return Err(Error::InvalidArgument("non-finite coordinate".into()));
        }
        Ok(Correspondence::new(p1, p2, r1, r2))
    }
}

/// Image size accompanying a correspondence file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageSidecar {
    pub schema_version: u32,
    pub width: f64,
    pub height: f64,
}

/// `points.csv` -> `points.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Writes the CSV and its sidecar.
pub fn write_correspondences(csv_path: &Path, corrs: &[Correspondence], frame: &ImageFrame) -> Result<()> {
    let rows: Vec<CorrespondenceRow> = corrs
        .iter()
        .map(|c| CorrespondenceRow::from_correspondence(c, frame))
        .collect();
    write_table(csv_path, &CORRESPONDENCES, &rows)?;
    write_json(
        &sidecar_path(csv_path),
        &ImageSidecar {
            schema_version: SCHEMA_VERSION,
            width: frame.width,
            height: frame.height,
        },
    )
}

/// Reads a correspondence CSV, normalizing pixels with the frame from
/// `sidecar` (default: next to the CSV). Errors name the offending line.
pub fn read_correspondences(csv_path: &Path, sidecar: Option<&Path>) -> Result<(Vec<Correspondence>, ImageFrame)> {
    let side_path = sidecar.map_or_else(|| sidecar_path(csv_path), Path::to_path_buf);
    let side: ImageSidecar = read_json(&side_path)?;
    if side.schema_version != SCHEMA_VERSION {
        return Err(Error::Parse {
            row: 0,
            message: format!(
                "{}: schema version {} is not supported (expected {SCHEMA_VERSION})",
                side_path.display(),
                side.schema_version
            ),
        });
    }
    let frame = ImageFrame::new(side.width, side.height)?;
    let rows: Vec<CorrespondenceRow> = read_table(csv_path, &CORRESPONDENCES)?;
    let corrs = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            // Header is line 1.
            let line = i + 2;
            r.to_correspondence(&frame).map_err(|e| match e {
                Error::InvalidRotation(m) => Error::InvalidRotation(format!("line {line}: {m}")),
                other => Error::Parse {
                    row: line,
                    message: other.to_string(),
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((corrs, frame))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ImagePoint;
    use crate::synth::experiments::{NoiseRecord, StabilityRecord};
    use crate::solvers::SolverKind;

    fn header_of<T: Serialize>(row: &T) -> Vec<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.serialize(row).unwrap();
        let s = String::from_utf8(w.into_inner().unwrap()).unwrap();
        s.lines().next().unwrap().split(',').map(String::from).collect()
    }

    #[test]
    fn record_fields_match_manifest() {
        let st = StabilityRecord {
            index: 0,
            seed: 0,
            solver: SolverKind::Fhf,
            status: "ok".into(),
            n_solutions: 1,
            log10_h_err: None,
            log10_f_err: None,
            log10_lambda_err: None,
            solve_us: None,
        };
        assert_eq!(header_of(&st), STABILITY.columns);
        let nr = NoiseRecord {
            sigma_px: 0.0,
            index: 0,
            seed: 0,
            solver: SolverKind::Fhf,
            status: "ok".into(),
            n_solutions: 1,
            e_rot: None,
            e_t: None,
            e_f: None,
            e_lambda: None,
            e_h: None,
        };
        assert_eq!(header_of(&nr), NOISE.columns);
        let row = CorrespondenceRow::from_correspondence(
            &Correspondence::new(
                ImagePoint::new(0.0, 0.0),
                ImagePoint::new(0.0, 0.0),
                GravityRotation::identity(),
                GravityRotation::identity(),
            ),
            &ImageFrame::default(),
        );
        assert_eq!(header_of(&row), CORRESPONDENCES.columns);
    }

    #[test]
    fn manifest_lists_every_table_once() {
        let m = schema_manifest();
        let tables = m["tables"].as_array().unwrap();
        assert_eq!(tables.len(), ALL_TABLES.len());
        assert_eq!(m["schema_version"], SCHEMA_VERSION);
    }
}
