//! CSV/JSON persistence for fields, trajectories and tables.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Field, SpaceError, SpatialGrid};
use crate::solver::Trajectory;

fn writer(path: &Path) -> Result<csv::Writer<fs::File>, SpaceError> {
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?)
}

/// One row per interior node: `x, u_1, ..., u_d`.
pub fn write_field_csv(path: &Path, field: &Field) -> Result<(), SpaceError> {
    let grid = field.grid();
    let mut w = writer(path)?;
    let mut header = vec!["x".to_string()];
    header.extend((1..=grid.dim()).map(|i| format!("u_{i}")));
    w.write_record(&header)?;
    for (j, p) in field.points().enumerate() {
        let mut row = vec![grid.x(j).to_string()];
        row.extend(p.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a field written by [`write_field_csv`]; the grid is inferred from
/// the row and column counts and the `x` column is checked against it.
pub fn read_field_csv(path: &Path) -> Result<Field, SpaceError> {
    let mut r = csv::ReaderBuilder::new().from_path(path)?;
    let header = r.headers()?.clone();
    let d = header.len().saturating_sub(1);
    if header.get(0) != Some("x") || d == 0 || (1..=d).any(|i| header.get(i) != Some(format!("u_{i}").as_str())) {
        return Err(SpaceError::Parse(format!("{}: expected header x,u_1..u_d", path.display())));
    }
    let mut xs = Vec::new();
    let mut values = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let parse = |s: &str| s.parse::<f64>().map_err(|e| SpaceError::Parse(format!("{}: {s:?}: {e}", path.display())));
        xs.push(parse(&rec[0])?);
        for i in 1..=d {
            values.push(parse(&rec[i])?);
        }
    }
    let grid = SpatialGrid::new(xs.len(), d)?;
    for (j, x) in xs.iter().enumerate() {
        if (x - grid.x(j)).abs() > 1e-12 {
            return Err(SpaceError::GridMismatch(format!("row {j} has x={x}, grid expects {}", grid.x(j))));
        }
    }
    Field::from_values(grid, values)
}

/// Index written next to the snapshot files of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryIndex {
    pub times: Vec<f64>,
    #[serde(rename = "J")]
    pub interior: usize,
    pub d: usize,
    pub dt: f64,
    pub t_final: f64,
    pub steps: usize,
    pub stride: usize,
    pub n_pen: f64,
    pub snapshot_steps: Vec<usize>,
    pub files: Vec<String>,
    pub eta_total_variation: f64,
}

#[derive(Debug, Clone)]
pub struct StoredTrajectory {
    pub index: TrajectoryIndex,
    pub snapshots: Vec<Field>,
}

/// Writes `snapshot_NNNNN.csv` per stored time plus `index.json`.
pub fn write_trajectory_dir(dir: &Path, traj: &Trajectory) -> Result<(), SpaceError> {
    fs::create_dir_all(dir)?;
    let width = traj.snapshots.len().to_string().len().max(5);
    let files: Vec<String> = (0..traj.snapshots.len()).map(|i| format!("snapshot_{i:0width$}.csv")).collect();
    for (f, name) in traj.snapshots.iter().zip(&files) {
        write_field_csv(&dir.join(name), f)?;
    }
    let index = TrajectoryIndex {
        times: traj.snapshot_times(),
        interior: traj.grid.interior(),
        d: traj.grid.dim(),
        dt: traj.dt(),
        t_final: traj.time.t_final,
        steps: traj.time.steps,
        stride: traj.stride,
        n_pen: traj.n_pen,
        snapshot_steps: traj.snapshot_steps.clone(),
        files,
        eta_total_variation: traj.measure.total_variation(),
    };
    write_json(&dir.join("index.json"), &index)
}

pub fn read_trajectory_dir(dir: &Path) -> Result<StoredTrajectory, SpaceError> {
    let index: TrajectoryIndex = serde_json::from_slice(&fs::read(dir.join("index.json"))?)?;
    if index.files.len() != index.times.len() || index.files.len() != index.snapshot_steps.len() {
        return Err(SpaceError::Parse("index.json: files, times and snapshot_steps differ in length".into()));
    }
    let snapshots = index.files.iter().map(|f| read_field_csv(&dir.join(f))).collect::<Result<Vec<_>, _>>()?;
    let expected = SpatialGrid::new(index.interior, index.d)?;
    if let Some(bad) = snapshots.iter().position(|f| f.grid() != expected) {
        return Err(SpaceError::GridMismatch(format!("{} does not match J={}, d={}", index.files[bad], index.interior, index.d)));
    }
    Ok(StoredTrajectory { index, snapshots })
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), SpaceError> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes)?;
    Ok(())
}

/// Header from the field names of `T`, one row per item, LF endings.
pub fn write_table_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), SpaceError> {
    let mut w = writer(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
