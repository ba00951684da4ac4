use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use super::{percent_error, Mode};
use crate::error::{Error, Result};
use crate::sched::SchedulingTechnique;

use super::KernelSpec;

pub const RESULTS_HEADER: &str = "kernel,technique,threads,mode,mean_time_s,ci_half_width_s,reps,parallel_cost_ps";
const REFERENCE_HEADER: [&str; 5] = ["kernel", "technique", "threads", "parallel_cost_ps", "source"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellKey {
    pub kernel: KernelSpec,
    pub technique: SchedulingTechnique,
    pub threads: usize,
}

impl std::fmt::Display for CellKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{},{},{}", self.kernel, self.technique, self.threads)
    }
}

/// One line of a results CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub key: CellKey,
    pub mode: Mode,
    pub mean_time_s: f64,
    pub ci_half_width_s: f64,
    pub reps: usize,
    pub parallel_cost_ps: f64,
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::parse(path, line, e.to_string())
}

fn field<T: std::str::FromStr>(path: &Path, line: usize, rec: &csv::StringRecord, i: usize, name: &str) -> Result<T> {
    let raw = rec.get(i).unwrap_or("").trim();
    raw.parse()
        .map_err(|_| Error::parse(path, line, format!("invalid {name} '{raw}'")))
}

fn parse_key(path: &Path, line: usize, rec: &csv::StringRecord) -> Result<CellKey> {
    Ok(CellKey {
        kernel: field(path, line, rec, 0, "kernel")?,
        technique: field(path, line, rec, 1, "technique")?,
        threads: field(path, line, rec, 2, "threads")?,
    })
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input)
}

fn check_header(path: &Path, rdr: &mut csv::Reader<impl Read>, expected: &[&str]) -> Result<()> {
    let header = rdr.headers().map_err(|e| csv_err(path, e))?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::parse(
            path,
            1,
            format!("expected header '{}'", expected.join(",")),
        ));
    }
    Ok(())
}

pub fn write_results<W: Write>(rows: &[ResultRow], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let io = |e: csv::Error| Error::Runtime(format!("writing results: {e}"));
    wtr.write_record(RESULTS_HEADER.split(',')).map_err(io)?;
    for r in rows {
        wtr.write_record([
            r.key.kernel.to_string(),
            r.key.technique.to_string(),
            r.key.threads.to_string(),
            r.mode.to_string(),
            r.mean_time_s.to_string(),
            r.ci_half_width_s.to_string(),
            r.reps.to_string(),
            r.parallel_cost_ps.to_string(),
        ])
        .map_err(io)?;
    }
    wtr.flush().map_err(|e| Error::Runtime(format!("writing results: {e}")))
}

pub fn read_results<R: Read>(path: &Path, input: R) -> Result<Vec<ResultRow>> {
    let mut rdr = reader(input);
    check_header(path, &mut rdr, &RESULTS_HEADER.split(',').collect::<Vec<_>>())?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        rows.push(ResultRow {
            key: parse_key(path, line, &rec)?,
            mode: field(path, line, &rec, 3, "mode")?,
            mean_time_s: field(path, line, &rec, 4, "mean_time_s")?,
            ci_half_width_s: field(path, line, &rec, 5, "ci_half_width_s")?,
            reps: field(path, line, &rec, 6, "reps")?,
            parallel_cost_ps: field(path, line, &rec, 7, "parallel_cost_ps")?,
        });
    }
    Ok(rows)
}

pub fn load_results(path: &Path) -> Result<Vec<ResultRow>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_results(path, f)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceRow {
    pub key: CellKey,
    pub parallel_cost_ps: f64,
    pub source: String,
}

/// Reference parallel costs, unique per `(kernel, technique, threads, source)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReferenceSeries {
    rows: Vec<ReferenceRow>,
}

impl ReferenceSeries {
    pub fn new(rows: Vec<ReferenceRow>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for r in &rows {
            if !seen.insert((r.key, r.source.clone())) {
                return Err(Error::invalid(format!("duplicate reference row {} ({})", r.key, r.source)));
            }
        }
        Ok(ReferenceSeries { rows })
    }

    pub fn rows(&self) -> &[ReferenceRow] {
        &self.rows
    }

    /// Keeps only rows from `source`.
    pub fn filter_source(&self, source: &str) -> ReferenceSeries {
        ReferenceSeries {
            rows: self.rows.iter().filter(|r| r.source == source).cloned().collect(),
        }
    }

    pub fn parse<R: Read>(path: &Path, input: R) -> Result<Self> {
        let mut rdr = reader(input);
        check_header(path, &mut rdr, &REFERENCE_HEADER)?;
        let mut rows = Vec::new();
        let mut seen = BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| csv_err(path, e))?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let row = ReferenceRow {
                key: parse_key(path, line, &rec)?,
                parallel_cost_ps: field(path, line, &rec, 3, "parallel_cost_ps")?,
                source: rec.get(4).unwrap_or("").to_string(),
            };
            if let Some(first) = seen.insert((row.key, row.source.clone()), line) {
                return Err(Error::parse(
                    path,
                    line,
                    format!("duplicate key {} ({}), first seen on line {first}", row.key, row.source),
                ));
            }
            rows.push(row);
        }
        Ok(ReferenceSeries { rows })
    }
}

pub fn load_reference(path: &Path) -> Result<ReferenceSeries> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    ReferenceSeries::parse(path, f)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCell {
    pub key: CellKey,
    pub source: String,
    pub sim_cost_ps: f64,
    pub ref_cost_ps: f64,
    pub percent_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Skipped {
    pub key: CellKey,
    pub reason: &'static str,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ErrorTable {
    pub cells: Vec<ErrorCell>,
    pub skipped: Vec<Skipped>,
}

impl ErrorTable {
    fn abs_errors(&self) -> impl Iterator<Item = f64> + '_ {
        self.cells.iter().map(|c| c.percent_error.abs())
    }

    pub fn min_abs(&self) -> Option<f64> {
        self.abs_errors().reduce(f64::min)
    }

    pub fn max_abs(&self) -> Option<f64> {
        self.abs_errors().reduce(f64::max)
    }

    pub fn mean_abs(&self) -> Option<f64> {
        (!self.cells.is_empty()).then(|| self.abs_errors().sum::<f64>() / self.cells.len() as f64)
    }

    /// Per-cell CSV, then the aggregate statistics as `stat,value` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "kernel,technique,threads,source,sim_cost_ps,ref_cost_ps,percent_error")?;
        for c in &self.cells {
            writeln!(
                w,
                "{},{},{},{},{}",
                c.key, c.source, c.sim_cost_ps, c.ref_cost_ps, c.percent_error
            )?;
        }
        writeln!(w)?;
        writeln!(w, "stat,value")?;
        let fmt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |v| v.to_string());
        writeln!(w, "min_abs_percent_error,{}", fmt(self.min_abs()))?;
        writeln!(w, "max_abs_percent_error,{}", fmt(self.max_abs()))?;
        writeln!(w, "mean_abs_percent_error,{}", fmt(self.mean_abs()))?;
        writeln!(w, "matched_cells,{}", self.cells.len())?;
        writeln!(w, "skipped_cells,{}", self.skipped.len())
    }
}

/// Percent error of every result against every matching reference row.
pub fn compare(results: &[ResultRow], reference: &ReferenceSeries) -> Result<ErrorTable> {
    let mut table = ErrorTable::default();
    let mut by_key: BTreeMap<CellKey, Vec<&ReferenceRow>> = BTreeMap::new();
    for r in reference.rows() {
        by_key.entry(r.key).or_default().push(r);
    }
    let mut used = BTreeSet::new();
    for row in results {
        match by_key.get(&row.key) {
            None => table.skipped.push(Skipped {
                key: row.key,
                reason: "no reference value",
            }),
            Some(refs) => {
                used.insert(row.key);
                for r in refs {
                    table.cells.push(ErrorCell {
                        key: row.key,
                        source: r.source.clone(),
                        sim_cost_ps: row.parallel_cost_ps,
                        ref_cost_ps: r.parallel_cost_ps,
                        percent_error: percent_error(row.parallel_cost_ps, r.parallel_cost_ps)?,
                    });
                }
            }
        }
    }
    for key in by_key.keys().filter(|k| !used.contains(k)) {
        table.skipped.push(Skipped {
            key: *key,
            reason: "no result",
        });
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelKind;

    fn key(t: SchedulingTechnique, threads: usize) -> CellKey {
        CellKey {
            kernel: KernelSpec {
                kind: KernelKind::MatMul,
                order: 300,
            },
            technique: t,
            threads,
        }
    }

    fn result(t: SchedulingTechnique, threads: usize, cost: f64) -> ResultRow {
        ResultRow {
            key: key(t, threads),
            mode: Mode::SimulateRp3,
            mean_time_s: cost / threads as f64,
            ci_half_width_s: 0.0,
            reps: 1,
            parallel_cost_ps: cost,
        }
    }

    fn reference(t: SchedulingTechnique, threads: usize, cost: f64) -> ReferenceRow {
        ReferenceRow {
            key: key(t, threads),
            parallel_cost_ps: cost,
            source: "test".into(),
        }
    }

    #[test]
    fn identical_results_give_zero() {
        let results: Vec<_> = SchedulingTechnique::ALL.iter().map(|&t| result(t, 4, 12.5)).collect();
        let refs = ReferenceSeries::new(SchedulingTechnique::ALL.iter().map(|&t| reference(t, 4, 12.5)).collect()).unwrap();
        let table = compare(&results, &refs).unwrap();
        assert_eq!(table.cells.len(), 4);
        assert!(table.cells.iter().all(|c| c.percent_error == 0.0));
        assert_eq!(table.mean_abs(), Some(0.0));
    }

    #[test]
    fn single_cell_mean() {
        let table = compare(
            &[result(SchedulingTechnique::Guided, 8, 89.11)],
            &ReferenceSeries::new(vec![reference(SchedulingTechnique::Guided, 8, 100.0)]).unwrap(),
        )
        .unwrap();
        assert!((table.mean_abs().unwrap() - 10.89).abs() < 1e-9);
    }

    #[test]
    fn missing_technique_is_skipped() {
        let results: Vec<_> = SchedulingTechnique::ALL.iter().map(|&t| result(t, 4, 10.0)).collect();
        let refs: Vec<_> = SchedulingTechnique::ALL
            .iter()
            .filter(|&&t| t != SchedulingTechnique::SelfScheduling)
            .map(|&t| reference(t, 4, 20.0))
            .collect();
        let table = compare(&results, &ReferenceSeries::new(refs).unwrap()).unwrap();
        assert_eq!(table.cells.len(), 3);
        assert_eq!(table.skipped, vec![Skipped {
            key: key(SchedulingTechnique::SelfScheduling, 4),
            reason: "no reference value"
        }]);
        assert_eq!(table.mean_abs(), Some(50.0));
    }

    #[test]
    fn duplicate_reference_rejected() {
        let text = "kernel,technique,threads,parallel_cost_ps,source\n# digitized\nmm:300,ss,4,1.5,orig\nmm:300,ss,4,1.7,orig\n";
        let err = ReferenceSeries::parse(Path::new("r.csv"), text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("r.csv:4"), "{err}");
        let ok = "kernel,technique,threads,parallel_cost_ps,source\nmm:300,ss,4,1.5,orig\nmm:300,ss,4,1.7,other\n";
        assert_eq!(ReferenceSeries::parse(Path::new("r.csv"), ok.as_bytes()).unwrap().rows().len(), 2);
    }

    #[test]
    fn results_csv_round_trip() {
        let rows = vec![result(SchedulingTechnique::Factoring, 16, 1234.567_891_234_5), result(SchedulingTechnique::Static, 4, 0.1)];
        let mut buf = Vec::new();
        write_results(&rows, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with(RESULTS_HEADER));
        assert_eq!(read_results(Path::new("x"), buf.as_slice()).unwrap(), rows);
        assert!(read_results(Path::new("x"), "a,b\n1,2\n".as_bytes()).is_err());
    }
}
