//! File formats: `LSF1` field snapshots (little-endian binary, bit-exact
//! round trips) and the versioned diagnostics CSV.

use lakesim_core::dynamics::DiagnosticsRow;
use lakesim_core::{Error, GridSpec, Result, ScalarField};
use ndarray::Array2;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

/// Magic prefix of a snapshot file.
pub const SNAPSHOT_MAGIC: &[u8; 4] = b"LSF1";

/// First line of every CSV this tool emits.
pub const CSV_VERSION_HEADER: &str = "# lake-salt-sim v1";

const SNAPSHOT_HEADER_LEN: usize = 4 + 8 + 8 + 8;

/// Writes `fields` (all on one grid) with their common time stamp.
/// Layout: magic, n (u64), t (f64), field count (u64), then each field's
/// values row-major as little-endian f64.
pub fn write_snapshot(path: &Path, t: f64, fields: &[ScalarField<f64>]) -> Result<()> {
    let first = fields.first().ok_or_else(|| {
        Error::Format("a snapshot needs at least one field".to_string())
    })?;
    let n = first.grid().n();
    for field in fields {
        if field.grid() != first.grid() {
            return Err(Error::GridMismatch(field.grid().n(), n));
        }
    }
    let mut bytes =
        Vec::with_capacity(SNAPSHOT_HEADER_LEN + fields.len() * n * n * 8);
    bytes.extend_from_slice(SNAPSHOT_MAGIC);
    bytes.extend_from_slice(&(n as u64).to_le_bytes());
    bytes.extend_from_slice(&t.to_le_bytes());
    bytes.extend_from_slice(&(fields.len() as u64).to_le_bytes());
    for field in fields {
        for value in field.values().iter() {
            bytes.extend_from_slice(&value.to_le_bytes());
        }
    }
    fs::write(path, bytes)?;
    Ok(())
}

fn read_u64(bytes: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(bytes[at..at + 8].try_into().expect("slice is 8 bytes"))
}

/// Reads a snapshot back; validates magic, header consistency, exact
/// payload length, and finiteness.
pub fn read_snapshot(path: &Path) -> Result<(f64, Vec<ScalarField<f64>>)> {
    let bytes = fs::read(path)?;
    if bytes.len() < SNAPSHOT_HEADER_LEN {
        return Err(Error::Format(format!(
            "snapshot too short: {} bytes, header needs {SNAPSHOT_HEADER_LEN}",
            bytes.len()
        )));
    }
    if &bytes[..4] != SNAPSHOT_MAGIC {
        return Err(Error::Format(format!(
            "bad snapshot magic {:?}, expected {:?}",
            &bytes[..4],
            SNAPSHOT_MAGIC
        )));
    }
    let n = read_u64(&bytes, 4) as usize;
    let grid = GridSpec::new(n).map_err(|e| Error::Format(format!("snapshot header: {e}")))?;
    let t = f64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
    if !t.is_finite() {
        return Err(Error::Format(format!("snapshot time stamp {t} is not finite")));
    }
    let count = read_u64(&bytes, 20) as usize;
    let expected = SNAPSHOT_HEADER_LEN + count * n * n * 8;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "snapshot payload is {} bytes, header promises {} ({} fields of {}x{})",
            bytes.len() - SNAPSHOT_HEADER_LEN,
            expected - SNAPSHOT_HEADER_LEN,
            count,
            n,
            n
        )));
    }
    let mut fields = Vec::with_capacity(count);
    let mut at = SNAPSHOT_HEADER_LEN;
    for index in 0..count {
        let mut values = Vec::with_capacity(n * n);
        for _ in 0..n * n {
            values.push(f64::from_le_bytes(
                bytes[at..at + 8].try_into().expect("8 bytes"),
            ));
            at += 8;
        }
        let array = Array2::from_shape_vec((n, n), values)
            .expect("length checked against the header");
        let field = ScalarField::from_values(grid, array).map_err(|_| {
            Error::Format(format!("snapshot field {index} contains non-finite values"))
        })?;
        fields.push(field);
    }
    Ok((t, fields))
}

/// Renders diagnostics rows as the versioned CSV (deterministic bytes:
/// shortest round-trip float formatting, `stopped` as 0/1).
pub fn diagnostics_csv(rows: &[DiagnosticsRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 2));
    out.push_str(CSV_VERSION_HEADER);
    out.push('\n');
    out.push_str("t,l2b,linf,hk,divres,cutoff,stopped\n");
    for row in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            row.t,
            row.l2b,
            row.linf,
            row.hk,
            row.divres,
            row.cutoff,
            u8::from(row.stopped)
        );
    }
    out
}

/// Renders the viscous-cascade gap table as CSV.
pub fn gaps_csv(gaps: &[(usize, f64)]) -> String {
    let mut out = String::from(CSV_VERSION_HEADER);
    out.push('\n');
    out.push_str("level,gap\n");
    for (level, gap) in gaps {
        let _ = writeln!(out, "{level},{gap}");
    }
    out
}
