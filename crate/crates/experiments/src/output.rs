//! Persistence: the diagnostic series CSV, auxiliary tables, NLSF snapshots
//! and JSON summaries.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use nls_core::glassey::SeriesRow;
use nls_core::{GridField, Space, SpatialGrid};
use num_complex::Complex64;

use crate::RunError;

pub const SERIES_FILE: &str = "series.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const TIMING_FILE: &str = "timing.json";
pub const CONFIG_ECHO_FILE: &str = "config.toml";

pub const SERIES_COLUMNS: [&str; 11] = [
    "t", "pairing_re", "pairing_im", "main_re", "main_im", "pot_re", "pot_im", "resid_l2", "mod_resid", "mass",
    "l_q_norm",
];

pub(crate) fn io_err(path: &Path, e: std::io::Error) -> RunError {
    RunError::Io { path: path.display().to_string(), source: e }
}

/// Shortest round-trip representation; missing values are empty cells.
fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_series(path: &Path, rows: &[SeriesRow]) -> Result<(), RunError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SERIES_COLUMNS)?;
    for r in rows {
        w.write_record([
            cell(Some(r.t)),
            cell(Some(r.pairing.re)),
            cell(Some(r.pairing.im)),
            cell(r.main.map(|z| z.re)),
            cell(r.main.map(|z| z.im)),
            cell(r.pot.map(|z| z.re)),
            cell(r.pot.map(|z| z.im)),
            cell(r.resid_l2),
            cell(r.mod_resid),
            cell(Some(r.mass)),
            cell(r.l_q_norm),
        ])?;
    }
    w.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

fn parse_cell(s: &str, column: &str) -> Result<Option<f64>, RunError> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|_| RunError::Format(format!("column {column}: cannot parse {s:?}")))
}

fn required(v: Option<f64>, column: &str) -> Result<f64, RunError> {
    v.ok_or_else(|| RunError::Format(format!("column {column}: empty cell in a required column")))
}

fn complex(re: Option<f64>, im: Option<f64>) -> Option<Complex64> {
    Some(Complex64::new(re?, im?))
}

pub fn read_series(path: &Path) -> Result<Vec<SeriesRow>, RunError> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    if header != SERIES_COLUMNS {
        return Err(RunError::Format(format!("unexpected series header {header:?}")));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let v: Vec<Option<f64>> =
            rec.iter().zip(SERIES_COLUMNS).map(|(s, c)| parse_cell(s, c)).collect::<Result<_, _>>()?;
        rows.push(SeriesRow {
            t: required(v[0], "t")?,
            pairing: Complex64::new(required(v[1], "pairing_re")?, required(v[2], "pairing_im")?),
            main: complex(v[3], v[4]),
            pot: complex(v[5], v[6]),
            resid_l2: v[7],
            mod_resid: v[8],
            mass: required(v[9], "mass")?,
            l_q_norm: v[10],
        });
    }
    Ok(rows)
}

/// A small numeric table with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Option<f64>>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn write(&self, path: &Path) -> Result<(), RunError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record(r.iter().map(|v| cell(*v)))?;
        }
        w.flush().map_err(|e| io_err(path, e))?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, RunError> {
        let mut r = csv::Reader::from_path(path)?;
        let columns: Vec<String> = r.headers()?.iter().map(String::from).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            rows.push(rec.iter().zip(&columns).map(|(s, c)| parse_cell(s, c)).collect::<Result<_, _>>()?);
        }
        Ok(Self { columns, rows })
    }
}

const NLSF_MAGIC: &[u8; 4] = b"NLSF";
pub const NLSF_VERSION: u32 = 1;

/// `NLSF`, version, dim and points per axis as u32 LE, box lengths and time
/// (NaN when unlabelled) as f64 LE, then interleaved re/im f64 LE in row-major order.
pub fn write_snapshot(path: &Path, f: &GridField) -> Result<(), RunError> {
    f.expect_space(Space::Physical)?;
    let g = f.grid();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let mut buf = Vec::with_capacity(32 + 16 * f.values().len());
    buf.extend_from_slice(NLSF_MAGIC);
    buf.extend_from_slice(&NLSF_VERSION.to_le_bytes());
    buf.extend_from_slice(&(g.dim() as u32).to_le_bytes());
    for _ in 0..g.dim() {
        buf.extend_from_slice(&(g.n() as u32).to_le_bytes());
    }
    for l in g.lengths() {
        buf.extend_from_slice(&l.to_le_bytes());
    }
    buf.extend_from_slice(&f.time().unwrap_or(f64::NAN).to_le_bytes());
    for z in f.values() {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    w.write_all(&buf).map_err(|e| io_err(path, e))?;
    w.flush().map_err(|e| io_err(path, e))
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], RunError> {
        let end = self.pos + N;
        let slice = self.data.get(self.pos..end).ok_or_else(|| RunError::Format("truncated snapshot".into()))?;
        self.pos = end;
        Ok(slice.try_into().expect("slice has length N"))
    }

    fn u32(&mut self) -> Result<u32, RunError> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64, RunError> {
        Ok(f64::from_le_bytes(self.take()?))
    }
}

pub fn read_snapshot(path: &Path) -> Result<GridField, RunError> {
    let mut data = Vec::new();
    File::open(path).and_then(|mut f| f.read_to_end(&mut data)).map_err(|e| io_err(path, e))?;
    let mut c = Cursor { data: &data, pos: 0 };
    if &c.take::<4>()? != NLSF_MAGIC {
        return Err(RunError::Format("not an NLSF snapshot".into()));
    }
    let version = c.u32()?;
    if version != NLSF_VERSION {
        return Err(RunError::Format(format!("unsupported snapshot version {version}")));
    }
    let dim = c.u32()? as usize;
    if !(1..=2).contains(&dim) {
        return Err(RunError::Format(format!("unsupported snapshot dimension {dim}")));
    }
    let ns: Vec<usize> = (0..dim).map(|_| c.u32().map(|v| v as usize)).collect::<Result<_, _>>()?;
    if ns.iter().any(|n| *n != ns[0]) {
        return Err(RunError::Format("snapshot axes must have equal sizes".into()));
    }
    let lengths: Vec<f64> = (0..dim).map(|_| c.f64()).collect::<Result<_, _>>()?;
    let t = c.f64()?;
    let grid = SpatialGrid::with_lengths(dim, ns[0], &lengths)?;
    let values: Vec<Complex64> =
        (0..grid.len()).map(|_| Ok(Complex64::new(c.f64()?, c.f64()?))).collect::<Result<_, RunError>>()?;
    if c.pos != data.len() {
        return Err(RunError::Format("trailing bytes after snapshot data".into()));
    }
    let mut f = GridField::new(grid, values, Space::Physical)?;
    f.set_time(if t.is_nan() { None } else { Some(t) });
    Ok(f)
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), RunError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, RunError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let g = SpatialGrid::new(2, 8, 3.5).unwrap();
        let f = GridField::from_fn(&g, |x| Complex64::new(x[0].sin(), x[1] / 3.0)).unwrap().with_time(0.1);
        let p = dir.path().join("a.nlsf");
        write_snapshot(&p, &f).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[..4], b"NLSF");
        assert_eq!(bytes.len(), 4 + 4 + 4 + 2 * 4 + 2 * 8 + 8 + 16 * 64);
        let back = read_snapshot(&p).unwrap();
        assert_eq!(back, f);
        let unlabelled = GridField::zeros(&SpatialGrid::new(1, 8, 1.0).unwrap(), Space::Physical);
        write_snapshot(&p, &unlabelled).unwrap();
        assert_eq!(read_snapshot(&p).unwrap().time(), None);
    }

    #[test]
    fn series_round_trip_keeps_empty_cells() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![
            SeriesRow {
                t: 0.1,
                pairing: Complex64::new(1.0 / 3.0, -2.0),
                main: None,
                pot: Some(Complex64::new(0.0, 1e-300)),
                resid_l2: None,
                mod_resid: Some(0.25),
                mass: 1.7724538509055159,
                l_q_norm: None,
            };
            2
        ];
        let p = dir.path().join(SERIES_FILE);
        write_series(&p, &rows).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.lines().nth(1).unwrap().contains(",,,"));
        assert_eq!(read_series(&p).unwrap(), rows);
    }
}
