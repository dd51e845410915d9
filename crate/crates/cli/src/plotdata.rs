use std::path::Path;

use crate::error::{read_file, CliError, CliResult};

/// Columns of one trace CSV, kept as the original text.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceColumns {
    pub name: String,
    pub varphi: Vec<String>,
    pub lambda: Vec<String>,
}

impl TraceColumns {
    pub fn parse(name: &str, text: &str) -> CliResult<Self> {
        let bad = |msg: String| CliError::Config(format!("trace `{name}`: {msg}"));
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
        let column = |key: &str| {
            headers
                .iter()
                .position(|h| h == key)
                .ok_or_else(|| bad(format!("missing column `{key}`")))
        };
        let (iv, il) = (column("varphi")?, column("lambda")?);
        let mut varphi = Vec::new();
        let mut lambda = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| bad(e.to_string()))?;
            varphi.push(record[iv].to_string());
            lambda.push(record[il].to_string());
        }
        Ok(Self {
            name: name.to_string(),
            varphi,
            lambda,
        })
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        Self::parse(&name, &read_file(path)?)
    }
}

/// Aligns traces by iteration: `k`, one `φ` column per trace and, with two
/// or more traces, the first trace's `λ`. Shorter traces end in blanks.
pub fn export_plotdata(traces: &[TraceColumns]) -> CliResult<Vec<u8>> {
    if traces.is_empty() {
        return Err(CliError::Config("plotdata needs at least one trace".into()));
    }
    let rows = traces.iter().map(|t| t.varphi.len()).max().unwrap_or(0);
    let with_lambda = traces.len() > 1;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["k".to_string()];
    header.extend(traces.iter().map(|t| format!("varphi_{}", t.name)));
    if with_lambda {
        header.push("lambda".into());
    }
    let failed = |e: csv::Error| CliError::Config(e.to_string());
    w.write_record(&header).map_err(failed)?;
    for k in 0..rows {
        let mut record = vec![k.to_string()];
        record.extend(traces.iter().map(|t| t.varphi.get(k).cloned().unwrap_or_default()));
        if with_lambda {
            record.push(traces[0].lambda.get(k).cloned().unwrap_or_default());
        }
        w.write_record(&record).map_err(failed)?;
    }
    w.into_inner().map_err(|e| CliError::Config(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(name: &str, len: usize) -> TraceColumns {
        let mut text = String::from(bdsa::solver::TRACE_CSV_HEADER);
        for k in 0..len {
            text += &format!("\n{k},{},{},{},0,0.1,0.5,0", 10.0 - k as f64, 11.0 - k as f64, 0.25 * k as f64);
        }
        TraceColumns::parse(name, &text).unwrap()
    }

    fn lines(bytes: Vec<u8>) -> Vec<String> {
        String::from_utf8(bytes).unwrap().lines().map(String::from).collect()
    }

    #[test]
    fn pads_shorter_series() {
        let out = lines(export_plotdata(&[trace("bdsa", 16), trace("gppa", 30)]).unwrap());
        assert_eq!(out.len(), 31);
        assert_eq!(out[0], "k,varphi_bdsa,varphi_gppa,lambda");
        assert_eq!(out[16], "15,-5,-5,3.75");
        assert_eq!(out[17], "16,,-6,");
        assert_eq!(out[30], "29,,-19,");
    }

    #[test]
    fn single_trace_has_two_columns() {
        let out = lines(export_plotdata(&[trace("dsa", 3)]).unwrap());
        assert!(out.iter().all(|l| l.split(',').count() == 2));
        assert_eq!(out[1], "0,10");
    }

    #[test]
    fn lambda_copied_verbatim() {
        let text = format!("{}\n0,1,2,1.2345678901234567e-3,0,0,0,0", bdsa::solver::TRACE_CSV_HEADER);
        let t = TraceColumns::parse("a", &text).unwrap();
        let out = lines(export_plotdata(&[t.clone(), t]).unwrap());
        assert_eq!(out[1], "0,1,1,1.2345678901234567e-3");
    }

    #[test]
    fn missing_column_is_an_error() {
        assert!(TraceColumns::parse("x", "k,phi\n0,1").is_err());
    }
}
