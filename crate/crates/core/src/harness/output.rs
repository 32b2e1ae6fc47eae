//! Result files: `replications.csv`, `summary.txt` and, for bivariate
//! models, boundary polylines of the median-ratio replication.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{median, replication_boundaries, ExperimentConfig, ExperimentOutcome, RecordStatus, ReplicationRecord, Summary};
use crate::error::{Error, Result};
use crate::kde::BandwidthVector;
use crate::levelset::write_polylines_csv;
use crate::mixtures::{Level, MixtureModel};

pub const REPLICATIONS_FILE: &str = "replications.csv";
pub const SUMMARY_FILE: &str = "summary.txt";

/// Column names of the replications file for dimension `d`.
pub fn replication_header(d: usize) -> Vec<String> {
    let mut cols = vec!["rep".to_string(), "seed".to_string()];
    cols.extend((1..=d).map(|k| format!("h_opt_{k}")));
    cols.extend((1..=d).map(|k| format!("h_lscv_{k}")));
    cols.extend(["e_opt", "e_lscv", "ratio", "status"].map(String::from));
    cols
}

pub fn write_replications_csv<W: Write>(writer: W, d: usize, records: &[ReplicationRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| Error::csv("<replications>", e);
    w.write_record(replication_header(d)).map_err(err)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in records {
        let mut row = vec![r.rep.to_string(), r.seed.to_string()];
        for h in [&r.h_opt, &r.h_lscv] {
            match h {
                Some(h) => row.extend(h.as_slice().iter().map(f64::to_string)),
                None => row.extend(std::iter::repeat_n(String::new(), d)),
            }
        }
        row.extend([opt(r.e_opt), opt(r.e_lscv), opt(r.ratio), r.status.as_str().to_string()]);
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(|e| Error::csv("<replications>", e.into()))?;
    Ok(())
}

/// Parses a replications file; the dimension is read off the header.
pub fn read_replications_csv(path: impl AsRef<Path>) -> Result<Vec<ReplicationRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_replications_from(file).map_err(|e| match e {
        Error::Csv { source, .. } => Error::csv(path, source),
        other => other,
    })
}

pub fn read_replications_from<R: std::io::Read>(reader: R) -> Result<Vec<ReplicationRecord>> {
    let mut r = csv::Reader::from_reader(reader);
    let err = |e: csv::Error| Error::csv("<replications>", e);
    let header = r.headers().map_err(err)?.clone();
    let d = header.iter().filter(|h| h.starts_with("h_opt_")).count();
    let expected = replication_header(d);
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::Config(format!("unexpected replications header: {header:?}")));
    }
    let num = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            return Ok(None);
        }
        s.parse::<f64>().map(Some).map_err(|e| Error::Config(format!("bad number `{s}`: {e}")))
    };
    let bw = |cells: &[&str]| -> Result<Option<BandwidthVector>> {
        if cells.iter().all(|c| c.is_empty()) {
            return Ok(None);
        }
        let h = cells.iter().map(|c| num(c)?.ok_or_else(|| Error::Config("partial bandwidth".into()))).collect::<Result<Vec<_>>>()?;
        BandwidthVector::new(h).map(Some)
    };
    let mut out = Vec::new();
    for row in r.records() {
        let row = row.map_err(err)?;
        let cells: Vec<&str> = row.iter().collect();
        let int = |s: &str| s.parse::<u64>().map_err(|e| Error::Config(format!("bad integer `{s}`: {e}")));
        out.push(ReplicationRecord {
            rep: int(cells[0])? as usize,
            seed: int(cells[1])?,
            h_opt: bw(&cells[2..2 + d])?,
            h_lscv: bw(&cells[2 + d..2 + 2 * d])?,
            e_opt: num(cells[2 + 2 * d])?,
            e_lscv: num(cells[3 + 2 * d])?,
            ratio: num(cells[4 + 2 * d])?,
            status: RecordStatus::parse(cells[5 + 2 * d])?,
            message: None,
        });
    }
    Ok(out)
}

fn opt_str(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "NA".into())
}

/// `key = value` lines.
pub fn format_summary(s: &Summary) -> String {
    let (w, p, n, method) = match &s.wilcoxon {
        Some(w) => (
            w.statistic.to_string(),
            w.p_two_sided.to_string(),
            w.n.to_string(),
            format!("{:?}", w.method).to_lowercase(),
        ),
        None => ("NA".into(), "NA".into(), "0".into(), "NA".into()),
    };
    let pairs = [
        ("model", s.model.clone()),
        ("tau", s.tau.to_string()),
        ("level", s.level.to_string()),
        ("n", s.n.to_string()),
        ("reps", s.reps.to_string()),
        ("kernel", s.kernel.clone()),
        ("computable", s.computable.to_string()),
        ("incomputable", s.incomputable.to_string()),
        ("incomputable_rate", s.incomputable_rate.to_string()),
        ("failed", s.failed.to_string()),
        ("median_ratio", opt_str(s.median_ratio)),
        ("wilcoxon_statistic", w),
        ("wilcoxon_p", p),
        ("wilcoxon_n", n),
        ("wilcoxon_method", method),
    ];
    pairs.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

/// Parses `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_summary(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("summary line without `=`: {line}")))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

pub fn read_summary(path: impl AsRef<Path>) -> Result<BTreeMap<String, String>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_summary(&text)
}

/// Index of the record whose ratio is nearest the median ratio.
pub fn median_record(records: &[ReplicationRecord]) -> Option<usize> {
    let ratios: Vec<f64> = records.iter().filter_map(|r| r.ratio).collect();
    let m = median(&ratios)?;
    records
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.ratio.map(|x| (i, (x - m).abs())))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
}

/// Writes the result files into `dir` (created if missing) and returns the
/// paths written. Polylines are written when `model` is bivariate and
/// some replication has a ratio.
pub fn emit_results(
    outcome: &ExperimentOutcome,
    model: &MixtureModel,
    config: &ExperimentConfig,
    dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();

    let path = dir.join(REPLICATIONS_FILE);
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    write_replications_csv(BufWriter::new(file), model.dim(), &outcome.records).map_err(|e| match e {
        Error::Csv { source, .. } => Error::csv(&path, source),
        other => other,
    })?;
    written.push(path);

    let path = dir.join(SUMMARY_FILE);
    std::fs::write(&path, format_summary(&outcome.summary)).map_err(|e| Error::io(&path, e))?;
    written.push(path);

    if model.dim() == 2 {
        if let Some(i) = median_record(&outcome.records) {
            let level = Level {
                c: outcome.summary.level,
                tau: Some(outcome.summary.tau),
            };
            for (name, boundary) in replication_boundaries(model, level, config, &outcome.records[i])? {
                let path = dir.join(format!("boundary_{name}.csv"));
                let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
                let mut w = BufWriter::new(file);
                write_polylines_csv(&mut w, boundary.polylines())
                    .and_then(|_| w.flush())
                    .map_err(|e| Error::io(&path, e))?;
                written.push(path);
            }
        }
    }
    Ok(written)
}
