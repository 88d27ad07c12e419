//! Output formats: CSV tables with round-trip exact decimals, run manifests,
//! and a little-endian binary file for co-moving limit responses.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::lattice::LatticeField;
use crate::tail::{LimitResponse, Variant};

/// Seventeen significant digits, enough to reproduce any double exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// CSV writer with a mandatory header row.
pub struct CsvOut {
    inner: csv::Writer<BufWriter<File>>,
    columns: usize,
}

impl CsvOut {
    pub fn create(path: impl AsRef<Path>, header: &[&str]) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
        inner.write_record(header)?;
        Ok(CsvOut { inner, columns: header.len() })
    }

    pub fn row(&mut self, values: &[f64]) -> Result<()> {
        self.check(values.len())?;
        self.inner.write_record(values.iter().map(|v| fmt_f64(*v)))?;
        Ok(())
    }

    /// A row whose leading cells are labels.
    pub fn labeled_row(&mut self, labels: &[&str], values: &[f64]) -> Result<()> {
        self.check(labels.len() + values.len())?;
        let cells = labels.iter().map(|s| s.to_string()).chain(values.iter().map(|v| fmt_f64(*v)));
        self.inner.write_record(cells)?;
        Ok(())
    }

    /// Numbers, then text cells, then more numbers.
    pub fn mixed_row(&mut self, head: &[f64], labels: &[&str], tail: &[f64]) -> Result<()> {
        self.check(head.len() + labels.len() + tail.len())?;
        let cells = head
            .iter()
            .map(|v| fmt_f64(*v))
            .chain(labels.iter().map(|s| s.to_string()))
            .chain(tail.iter().map(|v| fmt_f64(*v)));
        self.inner.write_record(cells)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }

    fn check(&self, n: usize) -> Result<()> {
        if n != self.columns {
            return Err(Error::Consistency(format!("row of {n} cells for {} columns", self.columns)));
        }
        Ok(())
    }
}

/// Writes a whole numeric table.
pub fn write_csv(path: impl AsRef<Path>, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut out = CsvOut::create(path, header)?;
    for r in rows {
        out.row(r)?;
    }
    out.finish()
}

/// Header and string cells of a CSV file.
pub fn read_csv(path: impl AsRef<Path>) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut rd = csv::Reader::from_path(path)?;
    let header = rd.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rd.records() {
        rows.push(rec?.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

/// Numeric column `name` of a CSV file.
pub fn read_column(path: impl AsRef<Path>, name: &str) -> Result<Vec<f64>> {
    let (header, rows) = read_csv(path)?;
    let k = header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Consistency(format!("no column {name}")))?;
    rows.iter()
        .map(|r| r[k].parse::<f64>().map_err(|e| Error::Consistency(format!("column {name}: {e}"))))
        .collect()
}

/// `j, r, p` rows of a lattice field.
pub fn write_field(path: impl AsRef<Path>, u: &LatticeField) -> Result<()> {
    let mut out = CsvOut::create(path, &["j", "r", "p"])?;
    for (k, j) in u.sites().enumerate() {
        out.row(&[j as f64, u.r[k], u.p[k]])?;
    }
    out.finish()
}

/// Ordered `key = value` record of a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Writes the entries, preceded by `#` comment lines.
    pub fn write(&self, path: impl AsRef<Path>, comments: &[String]) -> Result<()> {
        let mut f = BufWriter::new(File::create(path)?);
        for c in comments {
            writeln!(f, "# {c}")?;
        }
        for (k, v) in &self.entries {
            writeln!(f, "{k} = {v}")?;
        }
        f.flush()?;
        Ok(())
    }
}

const LIMIT_MAGIC: &[u8; 8] = b"FPUTRLIM";
const LIMIT_VERSION: u32 = 1;

/// Binary layout, all little-endian: magic, version (u32), variant (u8: 0 full,
/// 1 homogeneous), c (f64), number of phases (u64), phases (f64 each), j_min
/// (i64), j_len (u64), m_min (i64), m_len (u64), then the strain samples and
/// the momentum samples as f64 in `[phase][m][j]` order.
pub fn write_limit(path: impl AsRef<Path>, lr: &LimitResponse) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    f.write_all(LIMIT_MAGIC)?;
    f.write_all(&LIMIT_VERSION.to_le_bytes())?;
    f.write_all(&[match lr.variant {
        Variant::Full => 0u8,
        Variant::Homogeneous => 1u8,
    }])?;
    f.write_all(&lr.c.to_le_bytes())?;
    f.write_all(&(lr.phases.len() as u64).to_le_bytes())?;
    for p in &lr.phases {
        f.write_all(&p.to_le_bytes())?;
    }
    f.write_all(&lr.j_min.to_le_bytes())?;
    f.write_all(&(lr.j_len as u64).to_le_bytes())?;
    f.write_all(&lr.m_min.to_le_bytes())?;
    f.write_all(&(lr.m_len as u64).to_le_bytes())?;
    let (r, p) = lr.samples();
    for v in r.iter().chain(p) {
        f.write_all(&v.to_le_bytes())?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_limit(path: impl AsRef<Path>) -> Result<LimitResponse> {
    let mut f = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    f.read_exact(&mut magic)?;
    if &magic != LIMIT_MAGIC {
        return Err(Error::Config("not a limit response file".into()));
    }
    let mut b4 = [0u8; 4];
    f.read_exact(&mut b4)?;
    if u32::from_le_bytes(b4) != LIMIT_VERSION {
        return Err(Error::Config(format!("unsupported limit file version {}", u32::from_le_bytes(b4))));
    }
    let mut b1 = [0u8; 1];
    f.read_exact(&mut b1)?;
    let variant = match b1[0] {
        0 => Variant::Full,
        1 => Variant::Homogeneous,
        v => return Err(Error::Config(format!("unknown variant tag {v}"))),
    };
    let mut b8 = [0u8; 8];
    let mut next = |f: &mut BufReader<File>| -> Result<[u8; 8]> {
        f.read_exact(&mut b8)?;
        Ok(b8)
    };
    let c = f64::from_le_bytes(next(&mut f)?);
    let n_phases = u64::from_le_bytes(next(&mut f)?) as usize;
    let phases = (0..n_phases).map(|_| next(&mut f).map(f64::from_le_bytes)).collect::<Result<Vec<_>>>()?;
    let j_min = i64::from_le_bytes(next(&mut f)?);
    let j_len = u64::from_le_bytes(next(&mut f)?) as usize;
    let m_min = i64::from_le_bytes(next(&mut f)?);
    let m_len = u64::from_le_bytes(next(&mut f)?) as usize;
    let n = n_phases * j_len * m_len;
    let read_block = |f: &mut BufReader<File>| -> Result<Vec<f64>> {
        let mut buf = vec![0u8; 8 * n];
        f.read_exact(&mut buf)?;
        Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    };
    let r = read_block(&mut f)?;
    let p = read_block(&mut f)?;
    LimitResponse::from_parts(variant, c, phases, (j_min, j_len), (m_min, m_len), r, p)
}
