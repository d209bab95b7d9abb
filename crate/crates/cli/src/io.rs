//! Plant and controller files, number formatting and CSV output.

use std::fs;
use std::io::Write;
use std::path::Path;

use clockoff::discretization::ContinuousPlant;
use clockoff::{DiscreteSystem, Mat};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Rounds to 12 significant digits.
pub fn round12(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

/// `None` for non-finite values, which JSON cannot carry.
pub fn json_num(x: f64) -> Option<f64> {
    x.is_finite().then(|| round12(x))
}

pub fn rows_of(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| round12(m[(i, j)])).collect())
        .collect()
}

/// Row-major nested array to a matrix; `cols` fixes the width of an empty one.
pub fn matrix_from_rows(rows: &[Vec<f64>], cols: Option<usize>, name: &str) -> Result<Mat, CliError> {
    let width = rows.first().map(Vec::len).or(cols).unwrap_or(0);
    if let Some(c) = cols {
        if width != c {
            return Err(CliError::Input(format!("{name} has {width} columns, expected {c}")));
        }
    }
    for (i, r) in rows.iter().enumerate() {
        if r.len() != width {
            return Err(CliError::Input(format!(
                "{name} row {} has {} entries, expected {width}",
                i + 1,
                r.len()
            )));
        }
    }
    Ok(Mat::from_row_iterator(rows.len(), width, rows.iter().flatten().copied()))
}

fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| {
        CliError::Input(format!(
            "{}: line {}, column {}: {e}",
            path.display(),
            e.line(),
            e.column()
        ))
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantFile {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    pub h: f64,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<Vec<f64>>>,
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    pub l: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl PlantFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        parse_json(path)
    }

    pub fn from_plant(plant: &ContinuousPlant, label: Option<&str>) -> Self {
        Self {
            a: rows_of(&plant.a),
            b: rows_of(&plant.b),
            h: plant.h,
            c: None,
            l: None,
            label: label.map(str::to_owned),
        }
    }

    pub fn plant(&self) -> Result<ContinuousPlant, CliError> {
        let a = matrix_from_rows(&self.a, None, "A")?;
        let b = matrix_from_rows(&self.b, None, "B")?;
        Ok(ContinuousPlant::new(a, b, self.h)?)
    }

    /// `(C, L)` for output feedback through an observer, when both are given.
    pub fn observer(&self) -> Result<Option<(Mat, Mat)>, CliError> {
        match (&self.c, &self.l) {
            (Some(c), Some(l)) => Ok(Some((matrix_from_rows(c, None, "C")?, matrix_from_rows(l, None, "L")?))),
            (None, None) => Ok(None),
            _ => Err(CliError::Input("C and L must be given together".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerMeta {
    /// `None` when the interval is `{0}` (no robustness constraint).
    pub gamma: Option<f64>,
    pub norm: Option<f64>,
    pub interval: [f64; 2],
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

/// `u = −C y` with `C(z) = Dc + z·Cc(I − z·Ac)⁻¹Bc`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerFile {
    #[serde(rename = "Ac")]
    pub ac: Vec<Vec<f64>>,
    #[serde(rename = "Bc")]
    pub bc: Vec<Vec<f64>>,
    #[serde(rename = "Cc")]
    pub cc: Vec<Vec<f64>>,
    #[serde(rename = "Dc")]
    pub dc: Vec<Vec<f64>>,
    pub meta: ControllerMeta,
}

impl ControllerFile {
    pub fn new(sys: &DiscreteSystem, meta: ControllerMeta) -> Self {
        Self {
            ac: rows_of(&sys.f),
            bc: rows_of(&sys.g),
            cc: rows_of(&sys.h),
            dc: rows_of(&sys.d),
            meta,
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        parse_json(path)
    }

    pub fn system(&self) -> Result<DiscreteSystem, CliError> {
        let dc = matrix_from_rows(&self.dc, None, "Dc")?;
        let (m, n) = dc.shape();
        let nc = self.ac.len();
        let ac = matrix_from_rows(&self.ac, Some(nc), "Ac")?;
        let bc = matrix_from_rows(&self.bc, Some(n), "Bc")?;
        let cc = if nc == 0 {
            Mat::zeros(m, 0)
        } else {
            matrix_from_rows(&self.cc, Some(nc), "Cc")?
        };
        if bc.nrows() != nc || cc.nrows() != m {
            return Err(CliError::Input(format!(
                "controller blocks disagree: Ac {nc}x{nc}, Bc {}x{}, Cc {}x{}, Dc {m}x{n}",
                bc.nrows(),
                bc.ncols(),
                cc.nrows(),
                cc.ncols()
            )));
        }
        Ok(DiscreteSystem::new(ac, bc, cc, dc)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        write_json(path, self)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

/// CSV with a leading `# config: {...}` comment line.
pub fn write_csv<W: Write>(
    out: W,
    config: &serde_json::Value,
    header: &[String],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<(), CliError> {
    let mut out = out;
    writeln!(out, "# config: {config}").map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header).map_err(|e| CliError::Runtime(e.to_string()))?;
    for r in rows {
        w.write_record(&r).map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Runtime(e.to_string()))
}

/// Reads a CSV written by [`write_csv`], skipping the config comment.
pub fn read_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<String>>), CliError> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header = r
        .headers()
        .map_err(|e| CliError::Input(e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|x| x.iter().map(str::to_owned).collect()))
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Input(e.to_string()))?;
    Ok((header, rows))
}

pub fn num(x: f64) -> String {
    format!("{}", round12(x))
}
