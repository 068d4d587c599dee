//! File formats: sample CSV/JSON, model JSON, study and capacity CSVs.
//!
//! CSV dialect everywhere: comma separated, `.` decimal point, one header
//! row, LF line endings. Floats are written with Rust's shortest
//! round-trip formatting, so re-reading a file reproduces the values.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::capacity::CapacityProfile;
use crate::error::{Error, Result};
use crate::experiment::ExperimentReport;
use crate::kernel::{MeasureTag, SampleSet};

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

/// Parse a sample CSV. A first row that does not parse as numbers is
/// treated as the header.
pub fn read_samples_csv<R: Read>(reader: R, tag: MeasureTag) -> Result<SampleSet> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut points = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(p) => points.push(p),
            Err(_) if i == 0 => continue,
            Err(e) => return Err(Error::Parse(format!("row {}: {e}", i + 1))),
        }
    }
    SampleSet::new(points, tag, None)
}

pub fn load_samples_csv(path: &Path, tag: MeasureTag) -> Result<SampleSet> {
    read_samples_csv(fs::File::open(path)?, tag)
}

pub fn write_samples_csv<W: Write>(w: W, samples: &SampleSet) -> Result<()> {
    let mut wtr = csv_writer(w);
    let header: Vec<String> = (0..samples.dim()).map(|i| format!("x{i}")).collect();
    wtr.write_record(&header)?;
    for p in &samples.points {
        wtr.write_record(p.iter().map(|v| v.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn save_samples_csv(path: &Path, samples: &SampleSet) -> Result<()> {
    write_samples_csv(fs::File::create(path)?, samples)
}

/// Sample JSON container `{points, measure_tag, seed}`.
pub fn load_samples_json(path: &Path) -> Result<SampleSet> {
    let s: SampleSet = serde_json::from_str(&fs::read_to_string(path)?)?;
    s.validate()?;
    Ok(s)
}

pub fn save_samples_json(path: &Path, samples: &SampleSet) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(samples)?)?;
    Ok(())
}

/// Load by extension: `.json` as the container, anything else as CSV.
/// The tag of a JSON file must match `tag`.
pub fn load_samples(path: &Path, tag: MeasureTag) -> Result<SampleSet> {
    if path.extension().is_some_and(|e| e == "json") {
        let s = load_samples_json(path)?;
        if s.measure_tag != tag {
            return Err(Error::Input(format!(
                "{} is tagged {} but was given as the {} sample",
                path.display(),
                s.measure_tag,
                tag
            )));
        }
        Ok(s)
    } else {
        load_samples_csv(path, tag)
    }
}

/// One row per replication cell: `mu_q,k,replication,chosen_lambda,msd`.
/// Failed replications leave the last two fields empty.
pub fn write_replications_csv<W: Write>(w: W, report: &ExperimentReport) -> Result<()> {
    let mut wtr = csv_writer(w);
    wtr.write_record(["mu_q", "k", "replication", "chosen_lambda", "msd"])?;
    for cell in &report.cells {
        for r in &cell.replications {
            wtr.write_record([
                cell.mu_q.to_string(),
                cell.k.to_string(),
                r.replication.to_string(),
                r.chosen_lambda.map(|v| v.to_string()).unwrap_or_default(),
                r.msd.map(|v| v.to_string()).unwrap_or_default(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_box_stats_csv<W: Write>(w: W, report: &ExperimentReport) -> Result<()> {
    let mut wtr = csv_writer(w);
    wtr.write_record([
        "mu_q", "k", "count", "min", "q1", "median", "q3", "max", "complete",
    ])?;
    for cell in &report.cells {
        let mut row = vec![cell.mu_q.to_string(), cell.k.to_string()];
        match cell.box_stats {
            Some(b) => row.extend([
                b.count.to_string(),
                b.min.to_string(),
                b.q1.to_string(),
                b.median.to_string(),
                b.q3.to_string(),
                b.max.to_string(),
            ]),
            None => row.extend(std::iter::repeat_n(String::new(), 6)),
        }
        row.push(cell.complete.to_string());
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Parsed row of the replications CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationRow {
    pub mu_q: f64,
    pub k: u32,
    pub replication: usize,
    pub chosen_lambda: Option<f64>,
    pub msd: Option<f64>,
}

pub fn read_replications_csv<R: Read>(r: R) -> Result<Vec<ReplicationRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let opt = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse()
                .map(Some)
                .map_err(|e| Error::Parse(format!("{e}")))
        }
    };
    let parse_err = |e: std::num::ParseIntError| Error::Parse(e.to_string());
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != 5 {
            return Err(Error::Parse(format!(
                "expected 5 columns, got {}",
                rec.len()
            )));
        }
        rows.push(ReplicationRow {
            mu_q: rec[0].parse().map_err(|e| Error::Parse(format!("{e}")))?,
            k: rec[1].parse().map_err(parse_err)?,
            replication: rec[2].parse().map_err(parse_err)?,
            chosen_lambda: opt(&rec[3])?,
            msd: opt(&rec[4])?,
        });
    }
    Ok(rows)
}

/// Columns `lambda,n_eff,n_inf`.
pub fn write_capacity_csv<W: Write>(w: W, profile: &CapacityProfile) -> Result<()> {
    let mut wtr = csv_writer(w);
    wtr.write_record(["lambda", "n_eff", "n_inf"])?;
    for ((l, ne), ni) in profile
        .lambdas
        .iter()
        .zip(&profile.n_eff)
        .zip(&profile.n_inf)
    {
        wtr.write_record([l.to_string(), ne.to_string(), ni.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads the CSV written by [`write_capacity_csv`]; `lambda_star` is not part of it.
pub fn read_capacity_csv<R: Read>(r: R) -> Result<CapacityProfile> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut profile = CapacityProfile {
        lambdas: vec![],
        n_eff: vec![],
        n_inf: vec![],
        lambda_star: None,
    };
    for rec in rdr.records() {
        let rec = rec?;
        let vals: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        let vals = vals.map_err(|e| Error::Parse(e.to_string()))?;
        if vals.len() != 3 {
            return Err(Error::Parse(format!(
                "expected 3 columns, got {}",
                vals.len()
            )));
        }
        profile.lambdas.push(vals[0]);
        profile.n_eff.push(vals[1]);
        profile.n_inf.push(vals[2]);
    }
    Ok(profile)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_with_and_without_header() {
        let with = "x0,x1\n1.0,2.0\n3.5,-1e-3\n";
        let without = "1.0,2.0\n3.5,-1e-3\n";
        let a = read_samples_csv(with.as_bytes(), MeasureTag::P).unwrap();
        let b = read_samples_csv(without.as_bytes(), MeasureTag::P).unwrap();
        assert_eq!(a.points, b.points);
        assert_eq!(a.points[1], vec![3.5, -1e-3]);
    }

    #[test]
    fn empty_and_malformed_csv() {
        assert!(matches!(
            read_samples_csv("x0\n".as_bytes(), MeasureTag::P),
            Err(Error::Input(_))
        ));
        assert!(matches!(
            read_samples_csv("1.0\nabc\n".as_bytes(), MeasureTag::P),
            Err(Error::Parse(_))
        ));
        assert!(read_samples_csv("1.0,2.0\n3.0\n".as_bytes(), MeasureTag::P).is_err());
    }

    #[test]
    fn sample_csv_round_trip() {
        let s = SampleSet::new(
            vec![vec![0.1, 2.0 / 3.0], vec![-5.25, 1e-17]],
            MeasureTag::Q,
            None,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_samples_csv(&mut buf, &s).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x0,x1\n"));
        assert!(!text.contains('\r'));
        let back = read_samples_csv(buf.as_slice(), MeasureTag::Q).unwrap();
        assert_eq!(back.points, s.points);
    }
}
