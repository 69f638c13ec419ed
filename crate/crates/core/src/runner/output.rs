use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::ensemble::EnsembleState;
use crate::error::{Error, Result};
use crate::guidance::Trajectory;
use crate::measurement::MeasurementRecord;
use crate::qstate::{Axis, Boundary, Grid, WaveField};
use crate::C64;

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"PWF1";
pub const SNAPSHOT_VERSION: u32 = 1;

/// Bytes before the amplitudes of an `ndim`-dimensional snapshot.
pub fn snapshot_header_len(ndim: usize) -> usize {
    4 + 4 + 4 + ndim * (8 + 8 + 8 + 1) + 8 + ndim * 8
}

pub fn write_snapshot(field: &WaveField, path: &Path) -> Result<()> {
    let grid = field.grid();
    let mut buf = Vec::with_capacity(snapshot_header_len(grid.ndim()) + 16 * grid.len());
    buf.extend_from_slice(SNAPSHOT_MAGIC);
    buf.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(grid.ndim() as u32).to_le_bytes());
    for ax in grid.axes() {
        buf.extend_from_slice(&(ax.npoints() as u64).to_le_bytes());
        buf.extend_from_slice(&ax.lo().to_le_bytes());
        buf.extend_from_slice(&ax.hi().to_le_bytes());
        buf.push(ax.boundary().code());
    }
    buf.extend_from_slice(&field.time().to_le_bytes());
    for m in field.masses() {
        buf.extend_from_slice(&m.to_le_bytes());
    }
    for a in field.amplitudes() {
        buf.extend_from_slice(&a.re.to_le_bytes());
        buf.extend_from_slice(&a.im.to_le_bytes());
    }
    let mut f = BufWriter::new(File::create(path)?);
    f.write_all(&buf)?;
    f.flush()?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> [u8; N] {
        let out = self.bytes[self.pos..self.pos + N].try_into().unwrap();
        self.pos += N;
        out
    }
    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take())
    }
    fn u64(&mut self) -> u64 {
        u64::from_le_bytes(self.take())
    }
    fn f64(&mut self) -> f64 {
        f64::from_le_bytes(self.take())
    }
}

pub fn read_snapshot(path: &Path) -> Result<WaveField> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let found = bytes.len() as u64;
    let truncated = |expected: usize| Error::TruncatedFile {
        path: path.to_path_buf(),
        expected: expected as u64,
        found,
    };
    if bytes.len() < 4 {
        return Err(truncated(snapshot_header_len(1)));
    }
    if &bytes[..4] != SNAPSHOT_MAGIC {
        return Err(Error::MagicMismatch { path: path.to_path_buf() });
    }
    if bytes.len() < 12 {
        return Err(truncated(snapshot_header_len(1)));
    }
    let mut c = Cursor { bytes: &bytes, pos: 4 };
    let version = c.u32();
    if version != SNAPSHOT_VERSION {
        return Err(Error::VersionUnsupported {
            path: path.to_path_buf(),
            version,
        });
    }
    let ndim = c.u32() as usize;
    if ndim == 0 || ndim > crate::qstate::MAX_DIM {
        return Err(Error::InvalidGrid(format!("{}: snapshot declares {ndim} axes", path.display())));
    }
    let header = snapshot_header_len(ndim);
    if bytes.len() < header {
        return Err(truncated(header));
    }
    let mut axes = Vec::with_capacity(ndim);
    let mut points: u64 = 1;
    for _ in 0..ndim {
        let n = c.u64();
        let lo = c.f64();
        let hi = c.f64();
        let code = c.take::<1>()[0];
        let boundary = Boundary::from_code(code)
            .ok_or_else(|| Error::InvalidGrid(format!("{}: unknown boundary code {code}", path.display())))?;
        axes.push(Axis::new(n as usize, lo, hi, boundary)?);
        points = points.saturating_mul(n);
    }
    let time = c.f64();
    let masses: Vec<f64> = (0..ndim).map(|_| c.f64()).collect();
    let expected = (header as u64).saturating_add(points.saturating_mul(16));
    if found < expected {
        return Err(truncated(expected as usize));
    }
    let amps: Vec<C64> = (0..points).map(|_| C64::new(c.f64(), c.f64())).collect();
    WaveField::new(Grid::new(axes)?, amps, masses, time)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    Ok(csv::Writer::from_path(path).map_err(std::io::Error::from)?)
}

fn finish(mut w: csv::Writer<File>) -> Result<()> {
    w.flush()?;
    Ok(())
}

fn row(w: &mut csv::Writer<File>, fields: &[String]) -> Result<()> {
    w.write_record(fields).map_err(std::io::Error::from)?;
    Ok(())
}

fn coord_names(dim: usize, pointer: bool) -> Vec<String> {
    let n = if pointer { dim - 1 } else { dim };
    let mut names: Vec<String> = (1..=n).map(|k| format!("q{k}")).collect();
    if pointer {
        names.push("y".into());
    }
    names
}

/// Columns `t, q1[, q2], flag`.
pub fn write_trajectory_csv(path: &Path, tr: &Trajectory) -> Result<()> {
    let mut w = csv_writer(path)?;
    let dim = tr.points.first().map_or(1, |p| p.dim());
    let mut head = vec!["t".to_string()];
    head.extend(coord_names(dim, false));
    head.push("flag".into());
    row(&mut w, &head)?;
    for ((t, q), f) in tr.times.iter().zip(&tr.points).zip(&tr.flags) {
        let mut r = vec![t.to_string()];
        r.extend((0..dim).map(|k| q[k].to_string()));
        r.push(f.label().to_string());
        row(&mut w, &r)?;
    }
    finish(w)
}

/// Columns `member_id, t, q1[, q2][, y], flag`, one block per state in member
/// order. With `pointer` the last coordinate is the pointer position.
pub fn write_ensemble_csv(path: &Path, states: &[&EnsembleState], pointer: bool) -> Result<()> {
    let mut w = csv_writer(path)?;
    let dim = states
        .iter()
        .find_map(|s| s.points.first())
        .map_or(if pointer { 2 } else { 1 }, |p| p.dim());
    let mut head = vec!["member_id".to_string(), "t".to_string()];
    head.extend(coord_names(dim, pointer));
    head.push("flag".into());
    row(&mut w, &head)?;
    for s in states {
        for (i, (q, f)) in s.points.iter().zip(&s.flags).enumerate() {
            let mut r = vec![i.to_string(), s.time.to_string()];
            r.extend((0..dim).map(|k| q[k].to_string()));
            r.push(f.label());
            row(&mut w, &r)?;
        }
    }
    finish(w)
}

/// Trajectories of many members on shared sample times, in the ensemble layout.
pub fn write_paths_csv(path: &Path, paths: &[Trajectory]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let dim = paths.first().and_then(|p| p.points.first()).map_or(1, |p| p.dim());
    let mut head = vec!["member_id".to_string(), "t".to_string()];
    head.extend(coord_names(dim, false));
    head.push("flag".into());
    row(&mut w, &head)?;
    for (i, tr) in paths.iter().enumerate() {
        for ((t, q), f) in tr.times.iter().zip(&tr.points).zip(&tr.flags) {
            let mut r = vec![i.to_string(), t.to_string()];
            r.extend((0..dim).map(|k| q[k].to_string()));
            r.push(f.label().to_string());
            row(&mut w, &r)?;
        }
    }
    finish(w)
}

/// Columns `t, H, n_effective`.
pub fn write_h_series(path: &Path, rows: &[(f64, f64, usize)]) -> Result<()> {
    let mut w = csv_writer(path)?;
    row(&mut w, &["t".into(), "H".into(), "n_effective".into()])?;
    for (t, h, n) in rows {
        row(&mut w, &[t.to_string(), h.to_string(), n.to_string()])?;
    }
    finish(w)
}

/// Columns `run_id, outcome_index, pointer_reading, inferred_value,
/// wave_disturbance[, estimate]`; an unassigned outcome is an empty field.
pub fn write_measurements(path: &Path, records: &[MeasurementRecord], estimate: bool) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut head: Vec<String> = ["run_id", "outcome_index", "pointer_reading", "inferred_value", "wave_disturbance"]
        .map(String::from)
        .to_vec();
    if estimate {
        head.push("estimate".into());
    }
    row(&mut w, &head)?;
    for (i, r) in records.iter().enumerate() {
        let mut fields = vec![
            i.to_string(),
            r.outcome_index.map(|k| k.to_string()).unwrap_or_default(),
            r.pointer_reading.to_string(),
            r.inferred_value.to_string(),
            r.wave_disturbance.to_string(),
        ];
        if estimate {
            fields.push(r.trajectory_estimate.map(|e| e.to_string()).unwrap_or_default());
        }
        row(&mut w, &fields)?;
    }
    finish(w)
}

/// Any other table: a header and rows of numbers.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv_writer(path)?;
    row(&mut w, &header.iter().map(|h| h.to_string()).collect::<Vec<_>>())?;
    for r in rows {
        row(&mut w, &r.iter().map(f64::to_string).collect::<Vec<_>>())?;
    }
    finish(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::{Axis, Grid};

    fn field() -> WaveField {
        let g = Grid::new(vec![Axis::periodic(8, -1.0, 1.0).unwrap(), Axis::walled(16, 0.0, 2.0).unwrap()]).unwrap();
        WaveField::from_fn(g, vec![1.0, 2.5], 0.375, |q| C64::new(q[0].sin() + 1e-300, q[1].cos() / 3.0)).unwrap()
    }

    #[test]
    fn snapshot_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.pwf");
        let f = field();
        write_snapshot(&f, &p).unwrap();
        let g = read_snapshot(&p).unwrap();
        assert_eq!(g.grid(), f.grid());
        assert_eq!(g.masses(), f.masses());
        assert_eq!(g.time().to_bits(), f.time().to_bits());
        for (a, b) in f.amplitudes().iter().zip(g.amplitudes()) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
        let len = std::fs::metadata(&p).unwrap().len() as usize;
        assert_eq!(len, snapshot_header_len(2) + 16 * 8 * 16);
    }

    #[test]
    fn header_size_matches_layout() {
        assert_eq!(snapshot_header_len(1), 4 + 4 + 4 + 25 + 8 + 8);
        assert_eq!(snapshot_header_len(2), 86);
        assert_eq!(snapshot_header_len(3), 119);
    }

    #[test]
    fn damaged_snapshots_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.pwf");
        write_snapshot(&field(), &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();

        std::fs::write(&p, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(read_snapshot(&p), Err(Error::TruncatedFile { .. })));
        std::fs::write(&p, &bytes[..20]).unwrap();
        assert!(matches!(read_snapshot(&p), Err(Error::TruncatedFile { .. })));

        let mut bad = bytes.clone();
        bad[..4].copy_from_slice(b"PWF2");
        std::fs::write(&p, &bad).unwrap();
        assert!(matches!(read_snapshot(&p), Err(Error::MagicMismatch { .. })));

        let mut bad = bytes.clone();
        bad[4..8].copy_from_slice(&7u32.to_le_bytes());
        std::fs::write(&p, &bad).unwrap();
        assert!(matches!(read_snapshot(&p), Err(Error::VersionUnsupported { version: 7, .. })));
    }

    #[test]
    fn measurement_csv_leaves_unassigned_empty() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let rec = MeasurementRecord {
            outcome_index: None,
            pointer_start: 0.0,
            pointer_reading: 1.5,
            inferred_value: 0.25,
            wave_disturbance: 0.0,
            trajectory_estimate: Some(0.25),
            final_config: crate::qstate::Config::new(&[0.0, 1.5]),
            flags: Default::default(),
        };
        write_measurements(&p, &[rec], true).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(
            text,
            "run_id,outcome_index,pointer_reading,inferred_value,wave_disturbance,estimate\n0,,1.5,0.25,0,0.25\n"
        );
    }
}
