//! JSON-lines and CSV serialization of result records.

use std::io::Write;

use num_complex::Complex64;
use serde::Serialize;

use crate::runner::ResultRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Jsonl,
    Csv,
}

pub fn write_jsonl<W: Write, T: Serialize>(out: &mut W, items: &[T]) -> std::io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut *out, item)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

fn number(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

fn complex(name: &str, v: Option<Complex64>, cols: &mut Vec<(String, String)>) {
    cols.push((format!("{name}_re"), number(v.map(|c| c.re))));
    cols.push((format!("{name}_im"), number(v.map(|c| c.im))));
}

/// Flat `(column, value)` view with complex fields split into `_re`/`_im`.
pub fn flatten(r: &ResultRecord) -> Vec<(String, String)> {
    let mut cols = vec![
        ("index".to_string(), r.index.to_string()),
        (
            "status".to_string(),
            serde_json::to_value(r.status)
                .ok()
                .and_then(|v| v.as_str().map(String::from))
                .unwrap_or_default(),
        ),
        (
            "error_code".to_string(),
            r.error.as_ref().map(|e| e.code.clone()).unwrap_or_default(),
        ),
    ];
    for (path, v) in &r.input.axes {
        cols.push((path.clone(), format!("{v:e}")));
    }
    cols.push(("kind".into(), r.input.geometry.kind().name().to_string()));
    cols.push(("weight".into(), format!("{:e}", r.input.geometry.weight())));
    complex("z_I", Some(r.input.boundary.z_initial), &mut cols);
    complex("zbar_F", Some(r.input.boundary.zbar_final), &mut cols);
    cols.push(("tau".into(), format!("{:e}", r.input.boundary.tau)));
    cols.push(("alpha".into(), number(r.input.alpha)));
    complex("qc", r.qc, &mut cols);
    complex("exact", r.exact, &mut cols);
    cols.push(("relative_error".into(), number(r.relative_error)));
    let b = r.breakdown.as_ref();
    complex("s_kin", b.map(|b| b.s_kin), &mut cols);
    complex("s_dyn", b.map(|b| b.s_dyn), &mut cols);
    complex("gamma", b.map(|b| b.gamma), &mut cols);
    complex("phi_c", b.map(|b| b.phi_c), &mut cols);
    complex("b_int", b.map(|b| b.b_int), &mut cols);
    cols.push((
        "winding".into(),
        b.map(|b| b.winding.to_string()).unwrap_or_default(),
    ));
    cols.push((
        "quadrature_error".into(),
        number(b.map(|b| b.quadrature_error)),
    ));
    complex("prefactor", r.prefactor, &mut cols);
    complex("reduced", r.reduced, &mut cols);
    cols.push((
        "branch".into(),
        r.branch.map(|v| v.to_string()).unwrap_or_default(),
    ));
    cols.push((
        "truncation".into(),
        r.truncation.map(|v| v.to_string()).unwrap_or_default(),
    ));
    cols.push(("wall_time".into(), number(r.wall_time)));
    cols
}

pub fn write_csv<W: Write>(out: W, records: &[ResultRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (i, r) in records.iter().enumerate() {
        let cols = flatten(r);
        if i == 0 {
            w.write_record(cols.iter().map(|c| c.0.as_str()))?;
        }
        w.write_record(cols.iter().map(|c| c.1.as_str()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_records<W: Write>(
    out: &mut W,
    records: &[ResultRecord],
    format: Format,
) -> std::io::Result<()> {
    match format {
        Format::Jsonl => write_jsonl(out, records),
        Format::Csv => write_csv(out, records).map_err(std::io::Error::other),
    }
}
