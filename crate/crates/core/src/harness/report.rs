//! CSV results, per-group summaries and allocation traces.

use std::fmt::Write as _;
use std::path::Path;

use super::config::{Mode, Scheme};
use crate::stats;
use crate::{Error, Result};

pub const CSV_HEADER: &str = "scheme,mode,snr_db,trial,psnr,ssim,mse,side_info_bits,predictor_nmse";

/// One (scheme, mode, SNR, trial) outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scheme: Scheme,
    pub mode: Mode,
    pub snr_db: f64,
    pub trial: usize,
    pub psnr: f64,
    pub ssim: f64,
    pub mse: f64,
    pub side_info_bits: u64,
    pub predictor_nmse: f64,
}

/// Feature order and block ranking used for one transmission.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub scheme: Scheme,
    pub mode: Mode,
    pub snr_db: f64,
    pub trial: usize,
    pub eta: Vec<usize>,
    pub block_rank: Vec<usize>,
}

/// Renders rows as CSV. Floats use the shortest round-trip representation,
/// so identical runs give identical bytes.
pub fn to_csv(rows: &[ResultRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.scheme, r.mode, r.snr_db, r.trial, r.psnr, r.ssim, r.mse, r.side_info_bits, r.predictor_nmse
        );
    }
    out
}

pub fn emit_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::config("no result rows to write"));
    }
    std::fs::write(path, to_csv(rows))?;
    Ok(())
}

/// Parses CSV written by [`to_csv`].
pub fn parse_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        _ => return Err(Error::parse(0, "missing or unexpected CSV header")),
    }
    let mut offset = CSV_HEADER.len() + 1;
    let mut rows = Vec::new();
    for line in lines {
        let start = offset;
        offset += line.len() + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(Error::parse(start, format!("expected 9 fields, found {}", f.len())));
        }
        let num = |i: usize| -> Result<f64> {
            f[i].trim()
                .parse::<f64>()
                .map_err(|_| Error::parse(start, format!("bad number '{}'", f[i])))
        };
        let int = |i: usize| -> Result<u64> {
            f[i].trim()
                .parse::<u64>()
                .map_err(|_| Error::parse(start, format!("bad integer '{}'", f[i])))
        };
        rows.push(ResultRow {
            scheme: f[0].trim().parse()?,
            mode: f[1].trim().parse()?,
            snr_db: num(2)?,
            trial: int(3)? as usize,
            psnr: num(4)?,
            ssim: num(5)?,
            mse: num(6)?,
            side_info_bits: int(7)?,
            predictor_nmse: num(8)?,
        });
    }
    Ok(rows)
}

/// Aggregate of one (mode, scheme, SNR) group.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scheme: Scheme,
    pub mode: Mode,
    pub snr_db: f64,
    pub count: usize,
    pub psnr_mean: f64,
    pub psnr_std: f64,
    /// Half-width of the normal-approximation 95% interval of the mean.
    pub psnr_ci95: f64,
    pub ssim_mean: f64,
    pub ssim_std: f64,
    pub mse_mean: f64,
    pub side_info_bits: u64,
    pub predictor_nmse_mean: f64,
}

/// Groups rows by (mode, scheme, SNR), in order of first appearance.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(Mode, Scheme, u64)> = Vec::new();
    let mut groups: Vec<Vec<&ResultRow>> = Vec::new();
    for r in rows {
        let key = (r.mode, r.scheme, r.snr_db.to_bits());
        match keys.iter().position(|k| *k == key) {
            Some(i) => groups[i].push(r),
            None => {
                keys.push(key);
                groups.push(vec![r]);
            }
        }
    }
    groups
        .into_iter()
        .map(|g| {
            let col = |f: fn(&ResultRow) -> f64| g.iter().map(|r| f(r)).collect::<Vec<f64>>();
            let psnr = col(|r| r.psnr);
            let ssim = col(|r| r.ssim);
            let psnr_std = stats::std_dev(&psnr);
            SummaryRow {
                scheme: g[0].scheme,
                mode: g[0].mode,
                snr_db: g[0].snr_db,
                count: g.len(),
                psnr_mean: stats::mean(&psnr),
                psnr_std,
                psnr_ci95: 1.96 * psnr_std / (g.len() as f64).sqrt(),
                ssim_mean: stats::mean(&ssim),
                ssim_std: stats::std_dev(&ssim),
                mse_mean: stats::mean(&col(|r| r.mse)),
                side_info_bits: g[0].side_info_bits,
                predictor_nmse_mean: stats::mean(&col(|r| r.predictor_nmse)),
            }
        })
        .collect()
}

pub const SUMMARY_HEADER: &str = "scheme,mode,snr_db,count,psnr_mean,psnr_std,psnr_ci95,ssim_mean,ssim_std,mse_mean,side_info_bits,predictor_nmse_mean";

pub fn summary_csv(summary: &[SummaryRow]) -> String {
    let mut out = String::new();
    out.push_str(SUMMARY_HEADER);
    out.push('\n');
    for s in summary {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.4},{:.4},{:.4},{:.5},{:.5},{:.6e},{},{:.6e}",
            s.scheme,
            s.mode,
            s.snr_db,
            s.count,
            s.psnr_mean,
            s.psnr_std,
            s.psnr_ci95,
            s.ssim_mean,
            s.ssim_std,
            s.mse_mean,
            s.side_info_bits,
            s.predictor_nmse_mean
        );
    }
    out
}

/// Writes the grouped summary of `rows` to `path`.
pub fn emit_summary(rows: &[ResultRow], path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::config("no result rows to summarize"));
    }
    std::fs::write(path, summary_csv(&summarize(rows)))?;
    Ok(())
}

fn join(xs: &[usize]) -> String {
    xs.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

/// One line per transmission: `scheme,mode,snr_db,trial,eta,u` with the
/// integer lists space-separated.
pub fn trace_text(traces: &[TraceRecord]) -> String {
    let mut out = String::from("scheme,mode,snr_db,trial,eta,u\n");
    for t in traces {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            t.scheme,
            t.mode,
            t.snr_db,
            t.trial,
            join(&t.eta),
            join(&t.block_rank)
        );
    }
    out
}
