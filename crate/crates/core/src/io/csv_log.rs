//! CSV sample and controller logs.
//!
//! Samples: `t,q1..qn,dq1..dqn,ddq1..ddqn,u1..un`.
//! Controller: `t,model_used,q_des1..,q1..,u_cmd1..,saturated`.
//! Both start with a `# format_version 1` comment line; readers accept files
//! without it.

use std::io::{Read, Write};

use nalgebra::DVector;

use crate::control::ModelUsed;
use crate::dynamics::JointState;
use crate::error::{Error, Result};
use crate::identify::Sample;
use crate::sim::ControlRecord;

pub const CSV_FORMAT_VERSION: u32 = 1;

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            line,
            message: format!("{other:?}"),
        },
    }
}

fn names(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |i| format!("{prefix}{i}"))
}

pub fn sample_header(n: usize) -> Vec<String> {
    std::iter::once("t".to_string())
        .chain(names("q", n))
        .chain(names("dq", n))
        .chain(names("ddq", n))
        .chain(names("u", n))
        .collect()
}

pub fn control_header(n: usize) -> Vec<String> {
    ["t".to_string(), "model_used".to_string()]
        .into_iter()
        .chain(names("q_des", n))
        .chain(names("q", n))
        .chain(names("u_cmd", n))
        .chain(std::iter::once("saturated".to_string()))
        .collect()
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_samples<W: Write>(mut w: W, samples: &[Sample]) -> Result<()> {
    let n = samples.first().map(|s| s.u.len()).unwrap_or(0);
    writeln!(w, "# format_version {CSV_FORMAT_VERSION}")?;
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(sample_header(n)).map_err(csv_err)?;
    for s in samples {
        if s.u.len() != n {
            return Err(Error::Dimension {
                what: "sample joints",
                expected: n,
                actual: s.u.len(),
            });
        }
        let row: Vec<String> = std::iter::once(s.t)
            .chain(s.state.q.iter().copied())
            .chain(s.state.dq.iter().copied())
            .chain(s.state.ddq.iter().copied())
            .chain(s.u.iter().copied())
            .map(num)
            .collect();
        wr.write_record(&row).map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(r)
}

fn parse_f64(field: &str, line: usize, column: &str) -> Result<f64> {
    let v: f64 = field.parse().map_err(|_| Error::Parse {
        line,
        message: format!("column '{column}': '{field}' is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("column '{column}': value must be finite"),
        });
    }
    Ok(v)
}

pub fn read_samples<R: Read>(r: R) -> Result<Vec<Sample>> {
    let mut rd = reader(r);
    let header: Vec<String> = rd
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_string)
        .collect();
    if header.len() < 5 || !(header.len() - 1).is_multiple_of(4) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected 1 + 4n columns, found {}", header.len()),
        });
    }
    let n = (header.len() - 1) / 4;
    if header != sample_header(n) {
        return Err(Error::Parse {
            line: 1,
            message: format!("header must be {}", sample_header(n).join(",")),
        });
    }
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let vals: Vec<f64> = rec
            .iter()
            .zip(&header)
            .map(|(f, c)| parse_f64(f, line, c))
            .collect::<Result<_>>()?;
        let block = |k: usize| DVector::from_column_slice(&vals[1 + k * n..1 + (k + 1) * n]);
        out.push(Sample::new(
            vals[0],
            JointState::new(block(0), block(1), block(2))?,
            block(3),
        )?);
    }
    Ok(out)
}

pub fn write_control_log<W: Write>(mut w: W, log: &[ControlRecord]) -> Result<()> {
    let n = log.first().map(|r| r.q.len()).unwrap_or(0);
    writeln!(w, "# format_version {CSV_FORMAT_VERSION}")?;
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(control_header(n)).map_err(csv_err)?;
    for r in log {
        let mut row = vec![num(r.t), r.model_used.as_str().to_string()];
        row.extend(
            r.q_des
                .iter()
                .chain(r.q.iter())
                .chain(r.u_cmd.iter())
                .map(|&x| num(x)),
        );
        row.push(u8::from(r.saturated).to_string());
        wr.write_record(&row).map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

/// Row of a parsed controller log.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlRow {
    pub t: f64,
    pub model_used: ModelUsed,
    pub q_des: DVector<f64>,
    pub q: DVector<f64>,
    pub u_cmd: DVector<f64>,
    pub saturated: bool,
}

pub fn read_control_log<R: Read>(r: R) -> Result<Vec<ControlRow>> {
    let mut rd = reader(r);
    let header: Vec<String> = rd
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_string)
        .collect();
    if header.len() < 6 || !(header.len() - 3).is_multiple_of(3) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected 3 + 3n columns, found {}", header.len()),
        });
    }
    let n = (header.len() - 3) / 3;
    if header != control_header(n) {
        return Err(Error::Parse {
            line: 1,
            message: format!("header must be {}", control_header(n).join(",")),
        });
    }
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let t = parse_f64(&rec[0], line, "t")?;
        let model_used = rec[1].parse::<ModelUsed>().map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let block = |k: usize| -> Result<DVector<f64>> {
            let v = (0..n)
                .map(|i| {
                    let c = 2 + k * n + i;
                    parse_f64(&rec[c], line, &header[c])
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(DVector::from_vec(v))
        };
        let saturated = match &rec[header.len() - 1] {
            "0" | "false" => false,
            "1" | "true" => true,
            other => {
                return Err(Error::Parse {
                    line,
                    message: format!("saturated flag '{other}'"),
                })
            }
        };
        out.push(ControlRow {
            t,
            model_used,
            q_des: block(0)?,
            q: block(1)?,
            u_cmd: block(2)?,
            saturated,
        });
    }
    Ok(out)
}
