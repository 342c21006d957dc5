use std::io::Write;

use serde::Serialize;

use crate::error::Result;

use super::{AttackReport, Mtd};

/// One point of the correlation-versus-trace-count curve.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceCountRow {
    pub traces: usize,
    pub byte_index: usize,
    pub rho_correct: f64,
    pub rho_best_wrong: f64,
    pub rank_correct: usize,
}

#[derive(Serialize)]
struct ByteRow {
    byte_index: usize,
    winning_guess: String,
    rho: f64,
    margin: f64,
    per_byte_mtd: String,
}

/// One row per register byte: rank-1 guess, its score, margin and MTD.
pub fn write_report_csv<W: Write>(report: &AttackReport, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for c in &report.curves {
        let mtd = report
            .per_byte_mtd
            .as_ref()
            .map_or(String::new(), |m| m[c.byte_index].to_string());
        out.serialize(ByteRow {
            byte_index: c.byte_index,
            winning_guess: format!("{:02x}", c.winning_guess),
            rho: c.per_guess_max_abs_rho[c.winning_guess as usize],
            margin: c.rho_margin,
            per_byte_mtd: if mtd == Mtd::NotReached.to_string() { "not_reached".into() } else { mtd },
        })?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_curve_csv<W: Write>(rows: &[TraceCountRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_summary_json<W: Write, T: Serialize>(summary: &T, mut w: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, summary)?;
    w.write_all(b"\n")?;
    Ok(())
}
