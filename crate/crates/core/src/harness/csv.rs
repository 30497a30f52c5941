//! Per-iteration telemetry as CSV. Reals are written with 17 significant
//! digits so a re-read reproduces every value bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::optimizers::IterationRecord;

pub const HEADER: &str = "k,f,grad_norm_sq,lyapunov,active_nodes,v_norm,gamma,wall_micros";

pub fn write_csv_to<W: Write>(trace: &[IterationRecord], mut w: W) -> Result<()> {
    if trace.is_empty() {
        return Err(Error::invalid("refusing to write an empty trace"));
    }
    writeln!(w, "{HEADER}")?;
    for r in trace {
        writeln!(
            w,
            "{},{:.16e},{:.16e},{:.16e},{},{:.16e},{:.16e},{}",
            r.k, r.f, r.grad_norm_sq, r.lyapunov, r.active_nodes, r.v_norm, r.gamma, r.wall_micros
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv(trace: &[IterationRecord], path: &Path) -> Result<()> {
    let f = File::create(path)?;
    write_csv_to(trace, BufWriter::new(f))
}

pub fn read_csv_from<R: BufRead>(r: R) -> Result<Vec<IterationRecord>> {
    let mut lines = r.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim_end() != HEADER {
        return Err(Error::Parse { line: 1, msg: "missing or unexpected CSV header".into() });
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let line_no = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.trim_end().split(',').collect();
        if cols.len() != 8 {
            return Err(Error::Parse { line: line_no, msg: format!("expected 8 columns, found {}", cols.len()) });
        }
        let real = |j: usize| -> Result<f64> {
            cols[j].parse().map_err(|_| Error::Parse { line: line_no, msg: format!("bad number '{}'", cols[j]) })
        };
        let int = |j: usize| -> Result<u64> {
            cols[j].parse().map_err(|_| Error::Parse { line: line_no, msg: format!("bad integer '{}'", cols[j]) })
        };
        out.push(IterationRecord {
            k: int(0)? as usize,
            f: real(1)?,
            grad_norm_sq: real(2)?,
            lyapunov: real(3)?,
            active_nodes: int(4)? as usize,
            v_norm: real(5)?,
            gamma: real(6)?,
            wall_micros: int(7)?,
        });
    }
    Ok(out)
}

pub fn read_csv(path: &Path) -> Result<Vec<IterationRecord>> {
    read_csv_from(BufReader::new(File::open(path)?))
}
