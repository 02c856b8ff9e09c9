//! Test input collections and their CSV format.
//!
//! The on-disk layout is a plain UTF-8 CSV with a header row: feature
//! columns `f0..f{d-1}`, then either an integer `label` column or target
//! columns `t0..t{d2-1}`. Cells use `.` as the decimal separator and no
//! quoting. An empty numeric cell is a missing value and is filled with the
//! mean of that column's present cells at load time.

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{ModelSignature, TaskKind};

/// Ground truth attached to a dataset. Prioritization never sees this;
/// labels exist only for training and evaluation.
#[derive(Debug, Clone, PartialEq)]
pub enum Labels {
    None,
    Classes(Vec<usize>),
    Targets(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Vec<Vec<f64>>,
    labels: Labels,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, labels: Labels) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::InvalidDataset("dataset has no rows".into()));
        }
        let dim = inputs[0].len();
        if dim == 0 {
            return Err(Error::InvalidDataset("rows have no features".into()));
        }
        for (i, row) in inputs.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::InvalidDataset(format!(
                    "row {i} has width {} but row 0 has width {dim}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidDataset(format!(
                    "row {i} contains a non-finite value"
                )));
            }
        }
        let n = inputs.len();
        match &labels {
            Labels::None => {}
            Labels::Classes(ls) => {
                if ls.len() != n {
                    return Err(Error::InvalidDataset(format!(
                        "{} labels for {n} rows",
                        ls.len()
                    )));
                }
            }
            Labels::Targets(ts) => {
                if ts.len() != n {
                    return Err(Error::InvalidDataset(format!(
                        "{} target rows for {n} rows",
                        ts.len()
                    )));
                }
                let width = ts[0].len();
                for (i, t) in ts.iter().enumerate() {
                    if t.len() != width || t.iter().any(|v| !v.is_finite()) {
                        return Err(Error::InvalidDataset(format!(
                            "target row {i} is ragged or non-finite"
                        )));
                    }
                }
            }
        }
        Ok(Dataset { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    pub fn class_labels(&self) -> Option<&[usize]> {
        match &self.labels {
            Labels::Classes(ls) => Some(ls),
            _ => None,
        }
    }

    pub fn targets(&self) -> Option<&[Vec<f64>]> {
        match &self.labels {
            Labels::Targets(ts) => Some(ts),
            _ => None,
        }
    }

    /// Largest absolute feature value; the default sampling radius is a
    /// fraction of this bound.
    pub fn feature_bound(&self) -> f64 {
        self.inputs
            .iter()
            .flatten()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// A copy without any label information.
    pub fn strip_labels(&self) -> Dataset {
        Dataset {
            inputs: self.inputs.clone(),
            labels: Labels::None,
        }
    }

    /// Checks that this dataset is shaped for the given model: feature width
    /// equals the input dimension and class labels lie in `[0, K)`.
    pub fn check_against(&self, signature: &ModelSignature) -> Result<()> {
        if self.input_dim() != signature.input_dim {
            return Err(Error::DimensionMismatch {
                what: "dataset features",
                expected: signature.input_dim,
                got: self.input_dim(),
            });
        }
        match (&self.labels, signature.task) {
            (Labels::Classes(ls), TaskKind::Classification) => {
                for (index, &label) in ls.iter().enumerate() {
                    if label >= signature.output_dim {
                        return Err(Error::LabelOutOfRange {
                            index,
                            label,
                            classes: signature.output_dim,
                        });
                    }
                }
            }
            (Labels::Targets(ts), TaskKind::Regression) if ts[0].len() != signature.output_dim => {
                return Err(Error::DimensionMismatch {
                    what: "dataset targets",
                    expected: signature.output_dim,
                    got: ts[0].len(),
                });
            }
            _ => {}
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_csv(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let d = self.input_dim();
        let mut header: Vec<String> = (0..d).map(|i| format!("f{i}")).collect();
        match &self.labels {
            Labels::None => {}
            Labels::Classes(_) => header.push("label".into()),
            Labels::Targets(ts) => {
                for j in 0..ts[0].len() {
                    header.push(format!("t{j}"));
                }
            }
        }
        let mut out = header.join(",");
        out.push('\n');
        for (i, row) in self.inputs.iter().enumerate() {
            let mut cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            match &self.labels {
                Labels::None => {}
                Labels::Classes(ls) => cells.push(format!("{}", ls[i])),
                Labels::Targets(ts) => cells.extend(ts[i].iter().map(|v| format!("{v}"))),
            }
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::InvalidDataset("empty file".into()))?;
        let columns: Vec<&str> = header.split(',').map(str::trim).collect();

        // Feature columns must be f0..f{d-1} in order, then optionally a
        // label column or target columns t0..t{d2-1}.
        let mut d = 0;
        while d < columns.len() && columns[d] == format!("f{d}") {
            d += 1;
        }
        if d == 0 {
            return Err(Error::Csv {
                line: 1,
                message: format!("header must start with f0, got {:?}", columns.first()),
            });
        }
        let rest = &columns[d..];
        let kind = if rest.is_empty() {
            LabelColumns::None
        } else if rest == ["label"] {
            LabelColumns::Label
        } else {
            for (j, name) in rest.iter().enumerate() {
                if *name != format!("t{j}") {
                    return Err(Error::Csv {
                        line: 1,
                        message: format!("unexpected column {name:?}"),
                    });
                }
            }
            LabelColumns::Targets
        };

        let width = columns.len();
        let mut features: Vec<Vec<Option<f64>>> = Vec::new();
        let mut class_labels: Vec<usize> = Vec::new();
        let mut targets: Vec<Vec<Option<f64>>> = Vec::new();

        for (line_index, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let line_no = line_index + 1;
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            if cells.len() != width {
                return Err(Error::Csv {
                    line: line_no,
                    message: format!("expected {width} cells, got {}", cells.len()),
                });
            }
            let parse_cell = |cell: &str| -> Result<Option<f64>> {
                if cell.is_empty() {
                    return Ok(None);
                }
                let value: f64 = cell.parse().map_err(|_| Error::Csv {
                    line: line_no,
                    message: format!("cannot parse {cell:?} as a number"),
                })?;
                if !value.is_finite() {
                    return Err(Error::Csv {
                        line: line_no,
                        message: format!("non-finite value {cell:?}"),
                    });
                }
                Ok(Some(value))
            };
            features.push(
                cells[..d]
                    .iter()
                    .map(|c| parse_cell(c))
                    .collect::<Result<_>>()?,
            );
            match kind {
                LabelColumns::None => {}
                LabelColumns::Label => {
                    let cell = cells[d];
                    let label: i64 = cell.parse().map_err(|_| Error::Csv {
                        line: line_no,
                        message: format!("cannot parse label {cell:?} as an integer"),
                    })?;
                    if label < 0 {
                        return Err(Error::Csv {
                            line: line_no,
                            message: format!("negative class label {label}"),
                        });
                    }
                    class_labels.push(label as usize);
                }
                LabelColumns::Targets => {
                    targets.push(
                        cells[d..]
                            .iter()
                            .map(|c| parse_cell(c))
                            .collect::<Result<_>>()?,
                    );
                }
            }
        }
        if features.is_empty() {
            return Err(Error::InvalidDataset(
                "file has a header but no rows".into(),
            ));
        }

        let inputs = fill_missing(features, "f")?;
        let labels = match kind {
            LabelColumns::None => Labels::None,
            LabelColumns::Label => Labels::Classes(class_labels),
            LabelColumns::Targets => Labels::Targets(fill_missing(targets, "t")?),
        };
        Dataset::new(inputs, labels)
    }
}

enum LabelColumns {
    None,
    Label,
    Targets,
}

/// Replaces missing cells with the mean of the present cells in the same
/// column.
fn fill_missing(rows: Vec<Vec<Option<f64>>>, prefix: &str) -> Result<Vec<Vec<f64>>> {
    let width = rows[0].len();
    let mut sums = vec![0.0; width];
    let mut counts = vec![0usize; width];
    for row in &rows {
        for (j, cell) in row.iter().enumerate() {
            if let Some(v) = cell {
                sums[j] += v;
                counts[j] += 1;
            }
        }
    }
    let mut means = vec![0.0; width];
    for j in 0..width {
        if counts[j] == 0 {
            return Err(Error::InvalidDataset(format!(
                "column {prefix}{j} has no values to average"
            )));
        }
        means[j] = sums[j] / counts[j] as f64;
    }
    Ok(rows
        .into_iter()
        .map(|row| {
            row.into_iter()
                .enumerate()
                .map(|(j, cell)| cell.unwrap_or(means[j]))
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_cell_is_filled_with_column_mean() {
        let csv = "f0,f1,label\n1.0,2.0,0\n3.0,,1\n5.0,6.0,0\n";
        let ds = Dataset::parse_csv(csv).unwrap();
        // Column f1 has present values 2 and 6, mean 4.
        assert_eq!(ds.inputs()[1], vec![3.0, 4.0]);
        assert_eq!(ds.class_labels().unwrap(), &[0, 1, 0]);
    }

    #[test]
    fn round_trip_preserves_matrix() {
        let ds = Dataset::new(
            vec![vec![0.125, -3.5], vec![1e-7, 42.0]],
            Labels::Classes(vec![1, 0]),
        )
        .unwrap();
        let back = Dataset::parse_csv(&ds.to_csv()).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn target_round_trip() {
        let ds = Dataset::new(
            vec![vec![1.0, 2.0], vec![3.0, 4.0]],
            Labels::Targets(vec![vec![0.5, -0.5], vec![1.5, 2.5]]),
        )
        .unwrap();
        let back = Dataset::parse_csv(&ds.to_csv()).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn label_out_of_range_is_rejected_against_model() {
        let csv = "f0,label\n1.0,0\n2.0,5\n";
        let ds = Dataset::parse_csv(csv).unwrap();
        let sig = ModelSignature {
            input_dim: 1,
            output_dim: 3,
            task: TaskKind::Classification,
            output_domain: None,
        };
        let err = ds.check_against(&sig).unwrap_err();
        assert!(matches!(err, Error::LabelOutOfRange { label: 5, .. }));
    }

    #[test]
    fn negative_label_rejected_at_parse() {
        let err = Dataset::parse_csv("f0,label\n1.0,-2\n").unwrap_err();
        assert!(err.to_string().contains("negative"));
    }

    #[test]
    fn empty_and_malformed_files_error() {
        assert!(Dataset::parse_csv("").is_err());
        assert!(Dataset::parse_csv("f0,label\n").is_err());
        assert!(Dataset::parse_csv("x0,label\n1.0,0\n").is_err());
        let err = Dataset::parse_csv("f0,f1\n1.0\n").unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn feature_bound_is_max_abs() {
        let ds = Dataset::new(vec![vec![1.0, -9.5], vec![3.0, 2.0]], Labels::None).unwrap();
        assert_eq!(ds.feature_bound(), 9.5);
    }
}
