//! CSV reports of a pipeline run.
//!
//! `pairs.csv` holds one row per scheduled pair, `aggregate.csv` one row per
//! method with time statistics, `errors.csv` the sorted pose errors of all
//! resolved pairs with ground truth, ready for cumulative plots.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{PairMethod, PairRecord, RunReport};

/// Median of the values; the mean of the middle two for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

pub fn write_pairs_csv<W: Write>(records: &[PairRecord], mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "pair,method,time_s,inliers,rot_err_deg,trans_err_deg,tentative,walk_attempted,demoted,walk_length,nodes_visited,ransac_iterations"
    )?;
    for r in records {
        writeln!(
            out,
            "{}-{},{},{:.6},{},{},{},{},{},{},{},{},{}",
            r.i,
            r.j,
            r.method.label(),
            r.time_s,
            r.inliers,
            opt(r.rot_err_deg),
            opt(r.trans_err_deg),
            r.tentative,
            r.walk_attempted,
            r.demoted,
            r.walk_length,
            r.nodes_visited,
            r.ransac_iterations
        )?;
    }
    Ok(())
}

pub fn write_aggregate_csv<W: Write>(records: &[PairRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "method,count,avg_time_s,med_time_s,total_time_s,med_rot_err_deg,med_trans_err_deg")?;
    for m in PairMethod::ALL {
        let rows: Vec<&PairRecord> = records.iter().filter(|r| r.method == m).collect();
        if rows.is_empty() {
            continue;
        }
        let times: Vec<f64> = rows.iter().map(|r| r.time_s).collect();
        let total: f64 = times.iter().sum();
        let rot: Vec<f64> = rows.iter().filter_map(|r| r.rot_err_deg).collect();
        let trans: Vec<f64> = rows.iter().filter_map(|r| r.trans_err_deg).collect();
        writeln!(
            out,
            "{},{},{:.6},{:.6},{:.6},{},{}",
            m.label(),
            rows.len(),
            total / rows.len() as f64,
            median(&times).unwrap_or(0.0),
            total,
            opt(median(&rot)),
            opt(median(&trans))
        )?;
    }
    Ok(())
}

pub fn write_errors_csv<W: Write>(records: &[PairRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "rank,fraction,rot_err_deg,trans_err_deg")?;
    let mut rot: Vec<f64> = records.iter().filter_map(|r| r.rot_err_deg).collect();
    let mut trans: Vec<f64> = records.iter().filter_map(|r| r.trans_err_deg).collect();
    rot.sort_by(f64::total_cmp);
    trans.sort_by(f64::total_cmp);
    let n = rot.len();
    for (k, (r, t)) in rot.iter().zip(&trans).enumerate() {
        writeln!(out, "{},{:.6},{:.6},{:.6}", k + 1, (k + 1) as f64 / n as f64, r, t)?;
    }
    Ok(())
}

/// Writes `pairs.csv`, `aggregate.csv` and `errors.csv` into `dir`.
pub fn write_reports(report: &RunReport, dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut f = BufWriter::new(File::create(dir.join("pairs.csv"))?);
    write_pairs_csv(&report.records, &mut f)?;
    f.flush()?;
    let mut f = BufWriter::new(File::create(dir.join("aggregate.csv"))?);
    write_aggregate_csv(&report.records, &mut f)?;
    f.flush()?;
    let mut f = BufWriter::new(File::create(dir.join("errors.csv"))?);
    write_errors_csv(&report.records, &mut f)?;
    f.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(i: u32, method: PairMethod, t: f64, rot: Option<f64>) -> PairRecord {
        PairRecord {
            i,
            j: i + 1,
            method,
            time_s: t,
            inliers: 30,
            tentative: 40,
            rot_err_deg: rot,
            trans_err_deg: rot.map(|r| r * 2.0),
            walk_attempted: method == PairMethod::Walk,
            demoted: false,
            walk_length: 2,
            nodes_visited: 5,
            ransac_iterations: 0,
        }
    }

    #[test]
    fn median_rules() {
        assert_eq!(median(&[]), None);
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
    }

    #[test]
    fn empty_run_gives_headers_only() {
        type Writer = fn(&[PairRecord], &mut Vec<u8>) -> std::io::Result<()>;
        let writers: [Writer; 3] =
            [|r, o| write_pairs_csv(r, o), |r, o| write_aggregate_csv(r, o), |r, o| write_errors_csv(r, o)];
        for w in writers {
            let mut buf = Vec::new();
            w(&[], &mut buf).unwrap();
            assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1);
        }
    }

    #[test]
    fn aggregate_rows() {
        let records = vec![
            rec(0, PairMethod::Walk, 0.1, Some(0.2)),
            rec(1, PairMethod::Walk, 0.3, Some(0.4)),
            rec(2, PairMethod::Skipped, 0.05, None),
        ];
        let mut buf = Vec::new();
        write_aggregate_csv(&records, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "walk,2,0.200000,0.200000,0.400000,0.300000,0.600000");
        assert_eq!(lines[2], "skipped,1,0.050000,0.050000,0.050000,,");
        let mut buf = Vec::new();
        write_errors_csv(&records, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().nth(2).unwrap(), "2,1.000000,0.400000,0.800000");
    }
}
