use std::path::Path;

use super::{CausalDataset, PotentialOutcomes, Propensity};
use crate::{Error, Matrix, Result};

/// How to obtain the propensity score when the file has no `pi` column.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsvSchema {
    pub propensity: Option<Propensity>,
}

/// Reads a dataset with header `x1,...,xd,w,y[,y0,y1,tau,pi]`.
///
/// Covariate columns must be named `x1..xd` consecutively and precede `w`
/// and `y`. `y0` and `y1` must appear together. A `pi` column takes
/// precedence over the schema's propensity.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<CausalDataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = reader.headers()?.clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let missing = |name: &str| Error::MissingColumn {
        path: path.to_path_buf(),
        column: name.to_string(),
    };

    let mut x_cols = Vec::new();
    while let Some(c) = column(&format!("x{}", x_cols.len() + 1)) {
        x_cols.push(c);
    }
    if x_cols.is_empty() {
        return Err(missing("x1"));
    }
    let w_col = column("w").ok_or_else(|| missing("w"))?;
    let y_col = column("y").ok_or_else(|| missing("y"))?;
    let po_cols = match (column("y0"), column("y1")) {
        (Some(a), Some(b)) => Some((a, b)),
        (None, None) => None,
        (Some(_), None) => return Err(missing("y1")),
        (None, Some(_)) => return Err(missing("y0")),
    };
    let tau_col = column("tau");
    let pi_col = column("pi");

    let d = x_cols.len();
    let mut x = Vec::new();
    let mut w = Vec::new();
    let mut y = Vec::new();
    let mut y0 = Vec::new();
    let mut y1 = Vec::new();
    let mut tau = Vec::new();
    let mut pi = Vec::new();

    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        // 1-based data row number, header excluded.
        let row = idx + 1;
        let field = |col: usize| -> Result<f64> {
            let raw = record.get(col).unwrap_or("");
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    path: path.to_path_buf(),
                    row,
                    column: headers[col].to_string(),
                    message: format!("cannot parse `{raw}` as a finite number"),
                })
        };
        for &c in &x_cols {
            x.push(field(c)?);
        }
        let wv = match record.get(w_col).unwrap_or("") {
            "0" => 0u8,
            "1" => 1u8,
            other => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    row,
                    column: "w".into(),
                    message: format!("treatment must be 0 or 1, got `{other}`"),
                })
            }
        };
        let yv = field(y_col)?;
        if let Some((c0, c1)) = po_cols {
            let (a, b) = (field(c0)?, field(c1)?);
            let factual = if wv == 1 { b } else { a };
            if factual != yv {
                return Err(Error::Consistency {
                    path: path.to_path_buf(),
                    row,
                });
            }
            y0.push(a);
            y1.push(b);
        }
        if let Some(c) = tau_col {
            tau.push(field(c)?);
        }
        if let Some(c) = pi_col {
            pi.push(field(c)?);
        }
        w.push(wv);
        y.push(yv);
    }

    let n = y.len();
    if n == 0 {
        return Err(Error::NoDataRows {
            path: path.to_path_buf(),
        });
    }
    let propensity = if pi_col.is_some() {
        Propensity::Observed(pi)
    } else {
        schema.propensity.clone().ok_or_else(|| missing("pi"))?
    };
    CausalDataset::new(
        Matrix::new(x, n, d)?,
        w,
        y,
        po_cols.map(|_| PotentialOutcomes { y0, y1 }),
        tau_col.map(|_| tau),
        propensity,
    )
}

/// Writes a dataset in the format read by [`load_csv`], including every
/// optional column that is available. Floats use shortest round-trip
/// formatting so a reload reproduces the data exactly.
pub fn write_csv(dataset: &CausalDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (1..=dataset.d()).map(|j| format!("x{j}")).collect();
    header.extend(["w", "y"].map(String::from));
    if dataset.potential().is_some() {
        header.extend(["y0", "y1"].map(String::from));
    }
    if dataset.tau_true().is_some() {
        header.push("tau".into());
    }
    header.push("pi".into());
    writer.write_record(&header)?;

    for i in 0..dataset.n() {
        let mut record: Vec<String> = dataset.x().row(i).iter().map(|v| v.to_string()).collect();
        record.push(dataset.w()[i].to_string());
        record.push(dataset.y()[i].to_string());
        if let Some(po) = dataset.potential() {
            record.push(po.y0[i].to_string());
            record.push(po.y1[i].to_string());
        }
        if let Some(tau) = dataset.tau_true() {
            record.push(tau[i].to_string());
        }
        record.push(dataset.pi(i).to_string());
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}
