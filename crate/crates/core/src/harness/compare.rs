use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::harness::config::Method;
use crate::harness::sweep::RunManifest;

fn run_name(i: usize, m: &RunManifest) -> String {
    let method = match m.config.method {
        Method::Ngram => "ngram",
        Method::Codebook => "codebook",
    };
    format!("{i}_{method}")
}

/// Side-by-side CSV of several runs of the same sweep kind.
///
/// Rows are the union of all x values in ascending order; a run without a
/// point at some x leaves its cells blank. For every run and fitted series
/// there is a value column plus constant `exponent`, `floor` and `r2`
/// columns, named `<run>:<series>[:<field>]` with `<run>` = `<index>_<method>`.
pub fn compare_report(manifests: &[RunManifest]) -> Result<String> {
    if manifests.len() < 2 {
        return Err(Error::Input("comparison needs at least two runs".into()));
    }
    let kind = manifests[0].config.sweep_kind;
    if manifests.iter().any(|m| m.config.sweep_kind != kind) {
        return Err(Error::Input("runs have different sweep kinds".into()));
    }
    let series = kind.fitted_series();

    let mut header = vec!["x".to_string()];
    let mut fit_cells = Vec::new();
    for (i, m) in manifests.iter().enumerate() {
        let name = run_name(i, m);
        for s in series {
            header.push(format!("{name}:{s}"));
            for field in ["exponent", "floor", "r2"] {
                header.push(format!("{name}:{s}:{field}"));
                let v = m.fit(s).map(|f| match field {
                    "exponent" => f.exponent,
                    "floor" => f.floor,
                    _ => f.r2,
                });
                fit_cells.push(v);
            }
        }
    }

    // x values keyed by their bit pattern; positive floats order like their bits.
    let mut rows: BTreeMap<u64, Vec<Option<f64>>> = BTreeMap::new();
    let width = manifests.len() * series.len();
    for (i, m) in manifests.iter().enumerate() {
        for p in &m.points {
            let row = rows.entry(p.x.to_bits()).or_insert_with(|| vec![None; width]);
            for (j, s) in series.iter().enumerate() {
                row[i * series.len() + j] = p.metrics.get(*s).copied();
            }
        }
    }

    let cell = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header)?;
    for (bits, values) in rows {
        let mut rec = vec![f64::from_bits(bits).to_string()];
        for (j, v) in values.iter().enumerate() {
            rec.push(cell(*v));
            rec.extend(fit_cells[j * 3..j * 3 + 3].iter().map(|f| cell(*f)));
        }
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Input(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
