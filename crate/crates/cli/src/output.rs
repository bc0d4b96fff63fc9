//! CSV encoding and atomic file output.

use std::io::Write;
use std::path::{Path, PathBuf};

use merge_cbf::sim::{SimulationTrace, StepRecord};
use tempfile::NamedTempFile;

use crate::error::CliError;

pub const TRACE_SCHEMA: &str = "merge-cbf-trace/1";
pub const MANIFEST_NAME: &str = "manifest.txt";

/// Decimal rendering with 9 significant digits.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        return String::new();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-5..15).contains(&mag) {
        return format!("{x:.8e}");
    }
    let s = format!("{x:.*}", (8 - mag).max(0) as usize);
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

/// CSV document with a leading comment naming its schema and manifest.
pub struct Table {
    schema: &'static str,
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new(schema: &'static str, header: &[String]) -> Self {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header).expect("in-memory write");
        Self { schema, writer }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.writer.write_record(fields).expect("in-memory write");
    }

    pub fn write(self, path: &Path) -> Result<(), CliError> {
        let body = self.writer.into_inner().expect("in-memory flush");
        let mut out = format!("# schema={} manifest={MANIFEST_NAME}\n", self.schema).into_bytes();
        out.extend(body);
        write_atomic(path, &out)
    }
}

fn trace_header(merges: usize) -> Vec<String> {
    let mut h: Vec<String> = ["t", "time_s", "ego_x_m", "ego_y_m", "ego_vx_mps", "ego_vy_mps", "ego_speed_mps", "ego_arc_m"]
        .map(String::from)
        .to_vec();
    for i in 0..merges {
        for c in ["x_m", "y_m", "speed_mps", "distance_m", "h_m2"] {
            h.push(format!("m{i}_{c}"));
        }
    }
    h.extend(
        ["u_mps2", "theta_rad", "alpha", "alpha_next", "interval_lo", "interval_hi", "status", "fallback"].map(String::from),
    );
    h
}

fn trace_row(r: &StepRecord, dt: f64) -> Vec<String> {
    let mut row = vec![
        r.t.to_string(),
        num(r.t as f64 * dt),
        num(r.ego.x.x),
        num(r.ego.x.y),
        num(r.ego.v.x),
        num(r.ego.v.y),
        num(r.ego.v.norm()),
        num(r.ego_arc),
    ];
    for (i, m) in r.merges.iter().enumerate() {
        row.extend([num(m.x.x), num(m.x.y), num(m.v.norm()), num(r.distances[i]), num(r.h[i])]);
    }
    match &r.control {
        Some(c) => {
            let (lo, hi) = c.interval.map_or((f64::NAN, f64::NAN), |iv| (iv.lo, iv.hi));
            row.extend([
                num(c.u),
                num(c.theta),
                num(c.alpha_used),
                num(c.alpha_next),
                num(lo),
                num(hi),
                c.status.as_str().to_string(),
                c.fallback.to_string(),
            ]);
        }
        None => row.extend(std::iter::repeat_n(String::new(), 8)),
    }
    row
}

pub fn write_trace(path: &Path, trace: &SimulationTrace, dt: f64) -> Result<(), CliError> {
    let merges = trace.records.first().map_or(0, |r| r.merges.len());
    let mut t = Table::new(TRACE_SCHEMA, &trace_header(merges));
    for r in &trace.records {
        t.row(&trace_row(r, dt));
    }
    t.write(path)
}

/// Flat `key=value` record of one invocation.
pub struct Manifest {
    entries: Vec<(String, String)>,
    outputs: Vec<PathBuf>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Self {
            entries: vec![
                ("tool".into(), env!("CARGO_PKG_NAME").into()),
                ("tool_version".into(), env!("CARGO_PKG_VERSION").into()),
                ("command".into(), command.into()),
            ],
            outputs: Vec::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn output(&mut self, path: PathBuf) -> PathBuf {
        self.outputs.push(path.clone());
        path
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let mut s = String::new();
        for (k, v) in &self.entries {
            s.push_str(&format!("{k}={v}\n"));
        }
        let names: Vec<String> = self
            .outputs
            .iter()
            .map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned())
            .collect();
        s.push_str(&format!("outputs={}\n", names.join(",")));
        write_atomic(&dir.join(MANIFEST_NAME), s.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::num;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(num(1.0), "1");
        assert_eq!(num(-0.5), "-0.5");
        assert_eq!(num(123.456789012345), "123.456789");
        assert_eq!(num(0.000123456789012), "0.000123456789");
        assert_eq!(num(2.0f64.sqrt() * 1e20), "1.41421356e20");
        assert_eq!(num(f64::NAN), "");
        let x = 98765.4321987;
        assert!((num(x).parse::<f64>().unwrap() - x).abs() <= 1e-4 * 0.5);
    }
}
