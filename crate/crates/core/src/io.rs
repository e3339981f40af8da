//! File formats: counts and pmf CSV input, fit JSON, band and plot-data CSV.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::limit::ConfidenceBand;
use crate::pmf::{Counts, Pmf};
use crate::solver::FittedLogConcave;

fn parse_err(line: u64, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

/// Reads two-column rows, skipping a header line when its first field is
/// not numeric. Returns `(line, first, second)` triples.
fn read_pairs(reader: impl Read, what: &str) -> Result<Vec<(u64, String, String)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(reader);
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(i as u64 + 1, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(i as u64 + 1, |p| p.line());
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if rec.len() != 2 {
            return Err(parse_err(line, format!("expected 2 columns ({what}), found {}", rec.len())));
        }
        if rows.is_empty() && i == 0 && rec[0].parse::<f64>().is_err() {
            continue;
        }
        rows.push((line, rec[0].to_string(), rec[1].to_string()));
    }
    if rows.is_empty() {
        return Err(parse_err(0, "no data rows"));
    }
    Ok(rows)
}

/// Counts CSV: `value,count` with integer entries, header optional. Repeated
/// values are summed.
pub fn read_counts(reader: impl Read) -> Result<Counts> {
    let mut counts = Counts::new();
    for (line, v, c) in read_pairs(reader, "value,count")? {
        let v: i64 = v.parse().map_err(|_| parse_err(line, format!("value {v:?} is not an integer")))?;
        let c: u64 = c.parse().map_err(|_| parse_err(line, format!("count {c:?} is not a nonnegative integer")))?;
        counts.add(v, c);
    }
    if counts.n() == 0 {
        return Err(Error::invalid("all counts are zero"));
    }
    Ok(counts)
}

/// Pmf CSV: `value,prob`. Values must be distinct; missing values inside the
/// range get probability zero.
pub fn read_pmf(reader: impl Read) -> Result<Pmf> {
    let mut entries = Vec::new();
    for (line, v, p) in read_pairs(reader, "value,prob")? {
        let v: i64 = v.parse().map_err(|_| parse_err(line, format!("value {v:?} is not an integer")))?;
        let p: f64 = p.parse().map_err(|_| parse_err(line, format!("probability {p:?} is not a number")))?;
        if !(p.is_finite() && p >= 0.0) {
            return Err(parse_err(line, format!("probability {p} is negative or not finite")));
        }
        entries.push((line, v, p));
    }
    entries.sort_by_key(|e| e.1);
    if let Some(w) = entries.windows(2).find(|w| w[0].1 == w[1].1) {
        return Err(parse_err(w[1].0.max(w[0].0), format!("value {} appears twice", w[1].1)));
    }
    let lo = entries[0].1;
    let hi = entries[entries.len() - 1].1;
    let mut probs = vec![0.0; (hi - lo + 1) as usize];
    for (_, v, p) in entries {
        probs[(v - lo) as usize] = p;
    }
    Pmf::new(lo, probs)
}

pub fn write_pmf(pmf: &Pmf, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["value", "prob"]).map_err(csv_err)?;
    for (z, p) in pmf.iter() {
        w.write_record([z.to_string(), p.to_string()]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::invalid(format!("{other:?}")),
    }
}

fn json_err(e: serde_json::Error) -> Error {
    if e.is_io() {
        Error::Io(e.into())
    } else {
        parse_err(e.line() as u64, e.to_string())
    }
}

/// Fit JSON: `{origin, psi, pmf, knots, objective, fenchel_gap, iterations}`.
pub fn write_fit(fit: &FittedLogConcave, writer: impl Write) -> Result<()> {
    serde_json::to_writer_pretty(writer, fit).map_err(json_err)
}

/// Reads a fit back; `psi`, `pmf` and `knots` must be consistent in length
/// and position.
pub fn read_fit(reader: impl Read) -> Result<FittedLogConcave> {
    let fit: FittedLogConcave = serde_json::from_reader(reader).map_err(json_err)?;
    if fit.psi.is_empty() || fit.psi.len() != fit.pmf.len() {
        return Err(Error::invalid("fit has empty or mismatched psi and pmf arrays"));
    }
    if fit.knots.iter().any(|k| *k < fit.origin || *k > fit.last()) {
        return Err(Error::invalid("fit has knots outside its window"));
    }
    Ok(fit)
}

/// Band CSV: `x,estimate,lower,upper,q1,q2`.
pub fn write_band(band: &ConfidenceBand, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["x", "estimate", "lower", "upper", "q1", "q2"]).map_err(csv_err)?;
    for p in &band.points {
        w.write_record([
            p.x.to_string(),
            p.estimate.to_string(),
            p.lower.to_string(),
            p.upper.to_string(),
            p.q1.to_string(),
            p.q2.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Long-format plot data, one `(series, x, y)` row per point.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlotData {
    rows: Vec<(String, f64, f64)>,
}

impl PlotData {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, series: &str, x: f64, y: f64) {
        self.rows.push((series.to_string(), x, y));
    }

    pub fn extend_pmf(&mut self, series: &str, pmf: &Pmf) {
        for (z, p) in pmf.iter() {
            self.push(series, z as f64, p);
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["series", "x", "y"]).map_err(csv_err)?;
        for (s, x, y) in &self.rows {
            w.write_record([s.clone(), x.to_string(), y.to_string()]).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{fit_mle, SolverOptions};

    #[test]
    fn counts_with_and_without_header() {
        let a = read_counts("value,count\n0,2\n2,2\n".as_bytes()).unwrap();
        let b = read_counts("0,2\n2,1\n2,1\n".as_bytes()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n(), 4);
    }

    #[test]
    fn bad_rows_report_their_line() {
        let cases = ["value,count\n0,2\nx,3\n", "0,2\n1,-3\n", "0,2\n1,2,3\n"];
        for (case, want) in cases.iter().zip([3, 2, 2]) {
            match read_counts(case.as_bytes()) {
                Err(Error::Parse { line, .. }) => assert_eq!(line, want, "{case:?}"),
                other => panic!("{case:?}: {other:?}"),
            }
        }
        assert!(matches!(read_counts("".as_bytes()), Err(Error::Parse { .. })));
        assert!(matches!(read_counts("value,count\n".as_bytes()), Err(Error::Parse { .. })));
        assert!(read_counts("0,0\n".as_bytes()).is_err());
    }

    #[test]
    fn pmf_round_trip() {
        let p = read_pmf("value,prob\n2,0.5\n0,0.5\n".as_bytes()).unwrap();
        assert_eq!(p.probs(), &[0.5, 0.0, 0.5]);
        let mut buf = Vec::new();
        write_pmf(&p, &mut buf).unwrap();
        assert_eq!(read_pmf(buf.as_slice()).unwrap(), p);
        assert!(read_pmf("0,0.5\n0,0.5\n".as_bytes()).is_err());
        assert!(read_pmf("0,0.5\n1,0.6\n".as_bytes()).is_err());
    }

    #[test]
    fn fit_round_trip() {
        let fit = fit_mle(&Counts::from_pairs([(0, 2), (2, 2)]), &SolverOptions::default()).unwrap();
        let mut buf = Vec::new();
        write_fit(&fit, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        for key in ["origin", "psi", "pmf", "knots", "objective", "fenchel_gap", "iterations"] {
            assert!(text.contains(&format!("\"{key}\"")), "{key}");
        }
        let back = read_fit(buf.as_slice()).unwrap();
        assert_eq!(back.pmf, fit.pmf);
        assert_eq!(back.psi, fit.psi);
        assert!(read_fit("{\"origin\": 0}".as_bytes()).is_err());
    }

    #[test]
    fn plot_data_layout() {
        let mut d = PlotData::new();
        d.extend_pmf("truth", &Pmf::new(0, vec![0.25, 0.75]).unwrap());
        let mut buf = Vec::new();
        d.write(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "series,x,y\ntruth,0,0.25\ntruth,1,0.75\n");
    }
}
