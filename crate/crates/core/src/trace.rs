//! Per-iteration solver traces and their CSV form.
//!
//! A CSV starts with a header block of `# key=value` lines echoing the resolved
//! configuration, followed by a column line and one row per recorded
//! iteration. Floats are printed with 17 significant digits.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

pub const COLUMNS: [&str; 9] = ["k", "t", "cum_t", "residual", "phi", "dstep_phi_norm", "gamma_k", "eps_k", "wall_s"];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub t: usize,
    pub cum_t: usize,
    pub residual: f64,
    pub phi: f64,
    pub dstep: f64,
    pub gamma: f64,
    pub eps: f64,
    pub wall_s: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolverTrace {
    pub header: Vec<(String, String)>,
    pub rows: Vec<TraceRow>,
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

impl SolverTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        let key = key.into();
        let value = value.to_string();
        match self.header.iter_mut().find(|(k, _)| *k == key) {
            Some(entry) => entry.1 = value,
            None => self.header.push((key, value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.header.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        for (k, v) in &self.header {
            writeln!(w, "# {k}={v}")?;
        }
        writeln!(w, "{}", COLUMNS.join(","))?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                r.k,
                r.t,
                r.cum_t,
                fmt_f64(r.residual),
                fmt_f64(r.phi),
                fmt_f64(r.dstep),
                fmt_f64(r.gamma),
                fmt_f64(r.eps),
                fmt_f64(r.wall_s)
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV is ASCII")
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut trace = SolverTrace::new();
        let mut seen_columns = false;
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let bad = |msg: &str| Error::InvalidParameter(format!("trace line {}: {msg}", lineno + 1));
            if let Some(rest) = line.strip_prefix("# ") {
                let (k, v) = rest.split_once('=').ok_or_else(|| bad("malformed header"))?;
                trace.header.push((k.to_string(), v.to_string()));
                continue;
            }
            if !seen_columns {
                if line != COLUMNS.join(",") {
                    return Err(bad("unexpected column line"));
                }
                seen_columns = true;
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != COLUMNS.len() {
                return Err(bad("wrong number of fields"));
            }
            let int = |s: &str| s.parse::<usize>().map_err(|_| bad("bad integer"));
            let flt = |s: &str| s.parse::<f64>().map_err(|_| bad("bad float"));
            trace.rows.push(TraceRow {
                k: int(f[0])?,
                t: int(f[1])?,
                cum_t: int(f[2])?,
                residual: flt(f[3])?,
                phi: flt(f[4])?,
                dstep: flt(f[5])?,
                gamma: flt(f[6])?,
                eps: flt(f[7])?,
                wall_s: flt(f[8])?,
            });
        }
        Ok(trace)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn csv_round_trip_is_exact(vals in proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 6), k in 0usize..1000) {
            let mut t = SolverTrace::new();
            t.set("delta", fmt_f64(vals[0]));
            t.rows.push(TraceRow { k, t: 3, cum_t: k + 3, residual: vals[0], phi: vals[1], dstep: vals[2], gamma: vals[3], eps: vals[4], wall_s: vals[5] });
            let s = t.to_csv_string();
            let back = SolverTrace::read_csv(s.as_bytes()).unwrap();
            prop_assert_eq!(back, t);
        }
    }

    #[test]
    fn header_keys_are_unique() {
        let mut t = SolverTrace::new();
        t.set("a", 1);
        t.set("a", 2);
        assert_eq!(t.header.len(), 1);
        assert_eq!(t.get("a"), Some("2"));
    }

    #[test]
    fn rejects_missing_column_line() {
        assert!(SolverTrace::read_csv("# a=1\n1,2,3\n".as_bytes()).is_err());
    }
}
