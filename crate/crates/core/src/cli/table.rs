//! Delimited curve tables: `t,value[,lower,upper][,series]`.
//!
//! Numbers are written with the shortest representation that parses back to
//! the same `f64`, so write → read → write is byte-identical.

use std::io::{Read, Write};

use thiserror::Error;

use crate::curve::StepCurve;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("header must be one of `t,value`, `t,value,lower,upper`, `t,value,series`, `t,value,lower,upper,series`; got `{0}`")]
    Header(String),
    #[error("row {row}: {reason}")]
    Row { row: usize, reason: String },
    #[error("non-finite {column} in series `{series}` at t = {t}")]
    NonFinite {
        column: &'static str,
        series: String,
        t: f64,
    },
    #[error("mixing labelled and unlabelled series")]
    MixedSeries,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub t: f64,
    pub value: f64,
    pub bounds: Option<(f64, f64)>,
    pub series: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CurveTable {
    pub with_bounds: bool,
    pub with_series: bool,
    pub rows: Vec<CurveRow>,
}

impl CurveTable {
    /// One unlabelled curve.
    pub fn from_curve(curve: &StepCurve) -> Result<Self, TableError> {
        Self::build(&[(None, curve)])
    }

    /// Labelled curves, interleaved by ascending `t`; ties keep the order of
    /// `series`. Curves without bounds get `lower = upper = value` when any
    /// other curve carries bounds.
    pub fn from_series(series: &[(String, &StepCurve)]) -> Result<Self, TableError> {
        let labelled: Vec<(Option<String>, &StepCurve)> = series.iter().map(|(l, c)| (Some(l.clone()), *c)).collect();
        Self::build(&labelled)
    }

    fn build(series: &[(Option<String>, &StepCurve)]) -> Result<Self, TableError> {
        let with_series = series.iter().any(|(l, _)| l.is_some());
        if with_series && series.iter().any(|(l, _)| l.is_none()) {
            return Err(TableError::MixedSeries);
        }
        let with_bounds = series.iter().any(|(_, c)| c.lower().is_some());
        let mut rows = Vec::new();
        for (label, curve) in series {
            for (i, (t, value)) in curve.points().enumerate() {
                let bounds = with_bounds.then(|| match (curve.lower(), curve.upper()) {
                    (Some(lo), Some(hi)) => (lo[i], hi[i]),
                    _ => (value, value),
                });
                rows.push(CurveRow {
                    t,
                    value,
                    bounds,
                    series: label.clone(),
                });
            }
        }
        // stable: equal t keeps series order
        rows.sort_by(|a, b| a.t.total_cmp(&b.t));
        let table = CurveTable {
            with_bounds,
            with_series,
            rows,
        };
        table.check_finite()?;
        Ok(table)
    }

    fn check_finite(&self) -> Result<(), TableError> {
        for r in &self.rows {
            let mut cols = vec![("t", r.t), ("value", r.value)];
            if let Some((lo, hi)) = r.bounds {
                cols.push(("lower", lo));
                cols.push(("upper", hi));
            }
            for (column, v) in cols {
                if !v.is_finite() {
                    return Err(TableError::NonFinite {
                        column,
                        series: r.series.clone().unwrap_or_default(),
                        t: r.t,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn header(&self) -> Vec<&'static str> {
        let mut h = vec!["t", "value"];
        if self.with_bounds {
            h.extend(["lower", "upper"]);
        }
        if self.with_series {
            h.push("series");
        }
        h
    }

    /// Rows of one series, in table order.
    pub fn series(&self, label: &str) -> impl Iterator<Item = &CurveRow> + '_ {
        let label = label.to_string();
        self.rows
            .iter()
            .filter(move |r| r.series.as_deref() == Some(label.as_str()))
    }

    /// Distinct series labels in order of first appearance.
    pub fn labels(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if let Some(s) = &r.series {
                if !out.contains(s) {
                    out.push(s.clone());
                }
            }
        }
        out
    }

    pub fn write_to<W: Write>(&self, out: W) -> Result<(), TableError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(self.header())?;
        for r in &self.rows {
            let mut rec = vec![r.t.to_string(), r.value.to_string()];
            if let Some((lo, hi)) = r.bounds {
                rec.push(lo.to_string());
                rec.push(hi.to_string());
            }
            if let Some(s) = &r.series {
                rec.push(s.clone());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String, TableError> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn read_from<R: Read>(input: R) -> Result<Self, TableError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let (with_bounds, with_series) = match header.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
            ["t", "value"] => (false, false),
            ["t", "value", "lower", "upper"] => (true, false),
            ["t", "value", "series"] => (false, true),
            ["t", "value", "lower", "upper", "series"] => (true, true),
            _ => return Err(TableError::Header(header.join(","))),
        };
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let row = i + 2;
            let rec = rec?;
            let num = |j: usize| -> Result<f64, TableError> {
                let field = rec.get(j).unwrap_or("");
                let v: f64 = field.parse().map_err(|_| TableError::Row {
                    row,
                    reason: format!("column {} is not a number: `{field}`", header[j]),
                })?;
                if !v.is_finite() {
                    return Err(TableError::Row {
                        row,
                        reason: format!("column {} is not finite", header[j]),
                    });
                }
                Ok(v)
            };
            let bounds = if with_bounds { Some((num(2)?, num(3)?)) } else { None };
            let series = with_series.then(|| rec.get(header.len() - 1).unwrap_or("").to_string());
            rows.push(CurveRow {
                t: num(0)?,
                value: num(1)?,
                bounds,
                series,
            });
        }
        if rows.windows(2).any(|w| w[1].t < w[0].t) {
            return Err(TableError::Row {
                row: 0,
                reason: "rows are not in ascending t".into(),
            });
        }
        Ok(CurveTable {
            with_bounds,
            with_series,
            rows,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interleaves_by_t_then_series() {
        let a = StepCurve::new(vec![0.0, 1.0], vec![0.0, 0.5]).unwrap();
        let b = StepCurve::new(vec![0.0, 0.5, 1.0], vec![0.0, 0.1, 0.2])
            .unwrap()
            .with_bounds(vec![0.0, 0.0, 0.1], vec![0.0, 0.2, 0.3])
            .unwrap();
        let table = CurveTable::from_series(&[("B".into(), &a), ("g".into(), &b)]).unwrap();
        let text = table.to_csv_string().unwrap();
        assert_eq!(
            text,
            "t,value,lower,upper,series\n0,0,0,0,B\n0,0,0,0,g\n0.5,0.1,0,0.2,g\n1,0.5,0.5,0.5,B\n1,0.2,0.1,0.3,g\n"
        );
        assert_eq!(table.labels(), vec!["B", "g"]);
    }

    #[test]
    fn round_trip_is_lossless() {
        let grid: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let values: Vec<f64> = grid.iter().map(|t| (1.0f64 + t).ln() / 3.0).collect();
        let curve = StepCurve::new(grid, values).unwrap();
        let table = CurveTable::from_curve(&curve).unwrap();
        let text = table.to_csv_string().unwrap();
        let back = CurveTable::read_from(text.as_bytes()).unwrap();
        assert_eq!(back, table);
        assert_eq!(back.to_csv_string().unwrap(), text);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            CurveTable::read_from("t,val\n".as_bytes()),
            Err(TableError::Header(_))
        ));
        let err = CurveTable::read_from("t,value\n0,1\n1,x\n".as_bytes()).unwrap_err();
        assert!(err.to_string().starts_with("row 3"), "{err}");
        assert!(CurveTable::read_from("t,value\n0,NaN\n".as_bytes()).is_err());
        let curve = StepCurve::new(vec![0.0], vec![f64::INFINITY]).unwrap();
        assert!(CurveTable::from_curve(&curve).is_err());
    }
}
