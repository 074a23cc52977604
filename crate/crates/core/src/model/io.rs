//! JSON files for channels and solver reports.
//!
//! Complex entries are `[re, im]` pairs; matrices are lists of rows. Orders
//! are written 1-based.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ChannelSet, CovariancePlan, RateAllocation};
use crate::error::{Error, Result};
use crate::linalg::{c, CMatrix};
use crate::solvers::{Flag, SolveReport, SolverKind};

const VERSION: u32 = 1;

type JsonMatrix = Vec<Vec<[f64; 2]>>;

fn to_json(m: &CMatrix) -> JsonMatrix {
    (0..m.nrows())
        .map(|i| {
            (0..m.ncols())
                .map(|j| [m[(i, j)].re, m[(i, j)].im])
                .collect()
        })
        .collect()
}

fn from_json(m: &JsonMatrix, context: &str) -> Result<CMatrix> {
    let rows = m.len();
    let cols = m.first().map_or(0, Vec::len);
    if m.iter().any(|r| r.len() != cols) {
        return Err(parse_error(context, "ragged matrix"));
    }
    Ok(CMatrix::from_fn(rows, cols, |i, j| {
        c(m[i][j][0], m[i][j][1])
    }))
}

fn parse_error(context: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        context: context.to_string(),
        message: message.into(),
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelFile {
    version: u32,
    c_b: u32,
    #[serde(rename = "U")]
    users: usize,
    #[serde(rename = "L_y")]
    rx: usize,
    #[serde(rename = "L_x")]
    tx: Vec<usize>,
    #[serde(rename = "N")]
    tones: usize,
    /// `H[tone][user]`.
    #[serde(rename = "H")]
    h: Vec<Vec<JsonMatrix>>,
}

pub fn write_channel<W: Write>(ch: &ChannelSet, out: W) -> Result<()> {
    let file = ChannelFile {
        version: VERSION,
        c_b: ch.c_b(),
        users: ch.num_users(),
        rx: ch.rx_antennas(),
        tx: ch.tx_antennas().to_vec(),
        tones: ch.num_tones(),
        h: ch
            .matrices()
            .iter()
            .map(|t| t.iter().map(to_json).collect())
            .collect(),
    };
    serde_json::to_writer(out, &file).map_err(|e| parse_error("channel", e.to_string()))
}

pub fn read_channel<R: Read>(input: R) -> Result<ChannelSet> {
    let f: ChannelFile =
        serde_json::from_reader(input).map_err(|e| parse_error("channel", e.to_string()))?;
    if f.version != VERSION {
        return Err(parse_error(
            "channel",
            format!("unsupported version {}", f.version),
        ));
    }
    if f.tx.len() != f.users || f.h.len() != f.tones || f.h.iter().any(|t| t.len() != f.users) {
        return Err(parse_error("channel", "U, N and L_x disagree with H"));
    }
    let h =
        f.h.iter()
            .enumerate()
            .map(|(n, tone)| {
                tone.iter()
                    .enumerate()
                    .map(|(u, m)| from_json(m, &format!("channel H (n={n}, u={u})")))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
    ChannelSet::new(f.c_b, f.rx, f.tx, h)
}

pub fn save_channel(ch: &ChannelSet, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_channel(ch, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn load_channel(path: &Path) -> Result<ChannelSet> {
    read_channel(BufReader::new(File::open(path)?))
}

/// On-disk form of a [`SolveReport`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportFile {
    pub version: u32,
    pub solver: String,
    pub flag: u8,
    pub objective: f64,
    /// Time-shared per-user rates.
    pub rates: Vec<f64>,
    pub energies: Vec<f64>,
    pub w: Vec<f64>,
    pub theta: Vec<f64>,
    pub lambda: Option<f64>,
    pub alpha: Vec<f64>,
    /// Decoding order of each vertex, 1-based.
    pub orders: Vec<Vec<usize>>,
    pub vertex_rates: Vec<Vec<f64>>,
    /// `[vertex][tone][user]`.
    pub vertex_tone_rates: Vec<Vec<Vec<f64>>>,
    pub vertex_plan: Vec<usize>,
    /// `[plan][tone][user]` covariances.
    #[serde(rename = "R")]
    pub plans: Vec<Vec<Vec<JsonMatrix>>>,
    pub trace: Vec<f64>,
    pub outer_iterations: usize,
}

impl From<&SolveReport> for ReportFile {
    fn from(r: &SolveReport) -> Self {
        Self {
            version: VERSION,
            solver: r.solver.name().to_string(),
            flag: r.flag.code(),
            objective: r.objective,
            rates: r.rates.clone(),
            energies: r.energies.clone(),
            w: r.w.clone(),
            theta: r.theta.clone(),
            lambda: r.lambda,
            alpha: r.alpha.clone(),
            orders: r
                .allocations
                .iter()
                .map(|a| a.order.iter().map(|u| u + 1).collect())
                .collect(),
            vertex_rates: r.allocations.iter().map(|a| a.totals.clone()).collect(),
            vertex_tone_rates: r.allocations.iter().map(|a| a.per_tone.clone()).collect(),
            vertex_plan: r.allocation_plan.clone(),
            plans: r
                .plans
                .iter()
                .map(|p| {
                    p.matrices()
                        .iter()
                        .map(|t| t.iter().map(to_json).collect())
                        .collect()
                })
                .collect(),
            trace: r.trace.clone(),
            outer_iterations: r.outer_iterations,
        }
    }
}

impl TryFrom<ReportFile> for SolveReport {
    type Error = Error;

    fn try_from(f: ReportFile) -> Result<Self> {
        if f.version != VERSION {
            return Err(parse_error(
                "report",
                format!("unsupported version {}", f.version),
            ));
        }
        let solver = SolverKind::from_name(&f.solver)
            .ok_or_else(|| parse_error("report", format!("unknown solver {:?}", f.solver)))?;
        let flag = Flag::from_code(f.flag)
            .ok_or_else(|| parse_error("report", format!("bad flag {}", f.flag)))?;
        let k = f.orders.len();
        if f.vertex_tone_rates.len() != k || f.vertex_plan.len() != k {
            return Err(parse_error("report", "vertex lists differ in length"));
        }
        let mut allocations = Vec::with_capacity(k);
        for (order, per_tone) in f.orders.iter().zip(f.vertex_tone_rates) {
            if order.contains(&0) {
                return Err(parse_error("report", "orders are 1-based"));
            }
            allocations.push(RateAllocation::new(
                per_tone,
                order.iter().map(|u| u - 1).collect(),
            ));
        }
        let plans = f
            .plans
            .iter()
            .map(|p| {
                p.iter()
                    .map(|t| {
                        t.iter()
                            .map(|m| from_json(m, "report R"))
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()
                    .map(CovariancePlan::new)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SolveReport {
            solver,
            flag,
            objective: f.objective,
            plans,
            allocations,
            allocation_plan: f.vertex_plan,
            alpha: f.alpha,
            rates: f.rates,
            energies: f.energies,
            w: f.w,
            theta: f.theta,
            lambda: f.lambda,
            trace: f.trace,
            outer_iterations: f.outer_iterations,
        })
    }
}

pub fn write_report<W: Write>(report: &SolveReport, out: W) -> Result<()> {
    serde_json::to_writer_pretty(out, &ReportFile::from(report))
        .map_err(|e| parse_error("report", e.to_string()))
}

pub fn read_report<R: Read>(input: R) -> Result<SolveReport> {
    let f: ReportFile =
        serde_json::from_reader(input).map_err(|e| parse_error("report", e.to_string()))?;
    f.try_into()
}

pub fn save_report(report: &SolveReport, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_report(report, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn load_report(path: &Path) -> Result<SolveReport> {
    read_report(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_channel, ChannelSpec};

    #[test]
    fn channel_roundtrip_is_exact() {
        let ch = generate_channel(&ChannelSpec {
            tones: 4,
            seed: 3,
            ..Default::default()
        })
        .unwrap();
        let mut buf = Vec::new();
        write_channel(&ch, &mut buf).unwrap();
        let back = read_channel(buf.as_slice()).unwrap();
        assert_eq!(back, ch);
    }

    #[test]
    fn malformed_channel_is_a_parse_error() {
        assert!(matches!(read_channel(&b"{}"[..]), Err(Error::Parse { .. })));
        let bad = r#"{"version":1,"c_b":1,"U":1,"L_y":1,"L_x":[1],"N":2,"H":[[[[[1,0]]]]]}"#;
        assert!(matches!(
            read_channel(bad.as_bytes()),
            Err(Error::Parse { .. })
        ));
    }
}
