//! Process schemas, experience datasets and the synthetic ozonation process.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::seed;

/// One adjustable process parameter and its discretisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl Variable {
    pub fn new(name: impl Into<String>, min: f64, max: f64, step: f64) -> Self {
        Variable {
            name: name.into(),
            min,
            max,
            step,
        }
    }

    /// Number of grid points `min, min + step, …` that do not exceed `max`.
    pub fn levels(&self) -> usize {
        ((self.max - self.min) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn value_at(&self, level: usize) -> f64 {
        self.min + level as f64 * self.step
    }

    /// Grid level of `value`, or `None` when the value is off-grid or out of range.
    pub fn level_of(&self, value: f64) -> Option<usize> {
        if !value.is_finite() || value < self.min - 1e-9 || value > self.max + 1e-9 {
            return None;
        }
        let k = ((value - self.min) / self.step).round();
        let level = k as usize;
        if level < self.levels()
            && (self.value_at(level) - value).abs() <= 1e-9 * self.step.max(1.0)
        {
            Some(level)
        } else {
            None
        }
    }
}

/// Parameter variables plus the ordered list of criteria they drive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessSchema {
    #[serde(rename = "variable")]
    pub variables: Vec<Variable>,
    pub criteria: Vec<String>,
}

impl ProcessSchema {
    pub fn new(variables: Vec<Variable>, criteria: Vec<String>) -> Result<Self> {
        let schema = ProcessSchema {
            variables,
            criteria,
        };
        schema.validate()?;
        Ok(schema)
    }

    /// The four-parameter textile ozonation process with its colour criteria.
    pub fn ozonation() -> Self {
        ProcessSchema {
            variables: vec![
                Variable::new("water_content", 0.0, 150.0, 50.0),
                Variable::new("temperature", 0.0, 100.0, 10.0),
                Variable::new("pH", 1.0, 14.0, 1.0),
                Variable::new("time", 1.0, 60.0, 1.0),
            ],
            criteria: ["k_over_s", "L", "a", "b"].map(String::from).to_vec(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.variables.is_empty() {
            return Err(Error::Schema("at least one variable is required".into()));
        }
        if self.criteria.is_empty() {
            return Err(Error::Schema("at least one criterion is required".into()));
        }
        let mut seen = HashSet::new();
        for v in &self.variables {
            if v.name.is_empty() {
                return Err(Error::Schema("empty variable name".into()));
            }
            if !(v.min.is_finite() && v.max.is_finite() && v.step.is_finite()) {
                return Err(Error::Schema(format!(
                    "{}: non-finite bound or step",
                    v.name
                )));
            }
            if v.min >= v.max {
                return Err(Error::Schema(format!("{}: min must be below max", v.name)));
            }
            if v.step <= 0.0 || v.step > v.max - v.min {
                return Err(Error::Schema(format!(
                    "{}: step must lie in (0, max - min]",
                    v.name
                )));
            }
            if !seen.insert(v.name.as_str()) {
                return Err(Error::Schema(format!("duplicate name {}", v.name)));
            }
        }
        for c in &self.criteria {
            if c.is_empty() {
                return Err(Error::Schema("empty criterion name".into()));
            }
            if !seen.insert(c.as_str()) {
                return Err(Error::Schema(format!("duplicate name {c}")));
            }
        }
        Ok(())
    }

    pub fn n_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn n_criteria(&self) -> usize {
        self.criteria.len()
    }

    /// Grid points per variable.
    pub fn grid_shape(&self) -> Vec<usize> {
        self.variables.iter().map(Variable::levels).collect()
    }

    pub fn grid_size(&self) -> usize {
        self.grid_shape().iter().product()
    }

    /// Size of the per-variable {decrease, keep, increase} action space.
    pub fn action_count(&self) -> usize {
        3usize.pow(self.variables.len() as u32)
    }

    /// CSV header: variable names followed by criteria names.
    pub fn header(&self) -> Vec<String> {
        self.variables
            .iter()
            .map(|v| v.name.clone())
            .chain(self.criteria.iter().cloned())
            .collect()
    }

    /// Hex SHA-256 over a canonical rendering of the schema.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        for v in &self.variables {
            hasher.update(format!(
                "v:{}:{:?}:{:?}:{:?}\n",
                v.name, v.min, v.max, v.step
            ));
        }
        for c in &self.criteria {
            hasher.update(format!("c:{c}\n"));
        }
        hex::encode(hasher.finalize())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let schema: ProcessSchema =
            toml::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("schema serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }
}

/// One observed process run.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub inputs: Vec<f64>,
    pub outputs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperienceDataset {
    pub schema: ProcessSchema,
    pub rows: Vec<Row>,
}

impl ExperienceDataset {
    pub fn new(schema: ProcessSchema, rows: Vec<Row>) -> Result<Self> {
        let n = schema.n_variables();
        let m = schema.n_criteria();
        for (i, row) in rows.iter().enumerate() {
            if row.inputs.len() != n {
                return Err(Error::Arity {
                    what: "row inputs",
                    expected: n,
                    got: row.inputs.len(),
                });
            }
            if row.outputs.len() != m {
                return Err(Error::Arity {
                    what: "row outputs",
                    expected: m,
                    got: row.outputs.len(),
                });
            }
            if row
                .inputs
                .iter()
                .chain(&row.outputs)
                .any(|x| !x.is_finite())
            {
                return Err(Error::InvalidArgument(format!(
                    "row {}: non-finite value",
                    i + 1
                )));
            }
            for (x, v) in row.inputs.iter().zip(&schema.variables) {
                if *x < v.min || *x > v.max {
                    return Err(Error::InvalidArgument(format!(
                        "row {}: {} = {} outside [{}, {}]",
                        i + 1,
                        v.name,
                        x,
                        v.min,
                        v.max
                    )));
                }
            }
        }
        Ok(ExperienceDataset { schema, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn inputs(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.inputs.clone()).collect()
    }

    /// Target column for one criterion.
    pub fn targets(&self, criterion: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.outputs[criterion]).collect()
    }

    fn with_rows(&self, rows: Vec<Row>) -> Self {
        ExperienceDataset {
            schema: self.schema.clone(),
            rows,
        }
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(self.schema.header())?;
        for row in &self.rows {
            w.write_record(row.inputs.iter().chain(&row.outputs).map(|x| x.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Reads a comma-separated dataset whose header lists the schema's variables
/// then its criteria, in order. Data rows are numbered from 1 in errors.
pub fn load_csv(path: impl AsRef<Path>, schema: &ProcessSchema) -> Result<ExperienceDataset> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file);

    let expected = schema.header();
    let found: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if found != expected {
        return Err(Error::Header {
            path: path.to_path_buf(),
            expected: expected.join(","),
            found: found.join(","),
        });
    }

    let n = schema.n_variables();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row_no = i + 1;
        let record = record?;
        if record.len() != expected.len() {
            return Err(Error::Cell {
                path: path.to_path_buf(),
                row: row_no,
                column: "*".into(),
                message: format!("expected {} fields, found {}", expected.len(), record.len()),
            });
        }
        let mut values = Vec::with_capacity(record.len());
        for (j, cell) in record.iter().enumerate() {
            let cell_err = |message: String| Error::Cell {
                path: path.to_path_buf(),
                row: row_no,
                column: expected[j].clone(),
                message,
            };
            let x: f64 = cell
                .trim()
                .parse()
                .map_err(|_| cell_err(format!("not a number: {cell:?}")))?;
            if !x.is_finite() {
                return Err(cell_err(format!("non-finite value {cell:?}")));
            }
            if j < n {
                let v = &schema.variables[j];
                if x < v.min || x > v.max {
                    return Err(cell_err(format!("{x} outside [{}, {}]", v.min, v.max)));
                }
            }
            values.push(x);
        }
        let outputs = values.split_off(n);
        rows.push(Row {
            inputs: values,
            outputs,
        });
    }
    Ok(ExperienceDataset {
        schema: schema.clone(),
        rows,
    })
}

/// Seeded shuffle-and-cut into (train, test) with `round(fraction · len)` training rows.
pub fn split(
    dataset: &ExperienceDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(ExperienceDataset, ExperienceDataset)> {
    if dataset.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction {train_fraction} not in (0, 1)"
        )));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut seed::rng(seed));
    let n_train = (train_fraction * dataset.len() as f64).round() as usize;
    let pick = |idx: &[usize]| idx.iter().map(|&i| dataset.rows[i].clone()).collect();
    Ok((
        dataset.with_rows(pick(&order[..n_train])),
        dataset.with_rows(pick(&order[n_train..])),
    ))
}

/// Deterministic ground-truth response of a process: inputs ↦ one value per criterion.
pub type Phantom = fn(&[f64]) -> Vec<f64>;

/// Smooth interacting colour responses of the ozonation process.
pub fn ozonation_phantom(x: &[f64]) -> Vec<f64> {
    let w = x[0] / 150.0;
    let temp = x[1] / 100.0;
    let p = (x[2] - 1.0) / 13.0;
    let t = x[3] / 60.0;
    let k_over_s = 0.3 + 2.3 * (-2.2 * t * (0.4 + 0.6 * w)).exp() * (1.0 - 0.3 * temp);
    let lightness = 8.0 + 14.0 * (1.0 - (-2.0 * t).exp()) * (0.5 + 0.5 * w) * (0.7 + 0.3 * temp);
    let a = -18.0 - 18.0 * (1.0 - (-1.5 * t).exp()) * (0.6 + 0.4 * p);
    let b = -38.0 - 33.0 * (1.0 - (-1.8 * t).exp()) * (0.5 + 0.5 * w);
    vec![k_over_s, lightness, a, b]
}

/// Phantom registered for `schema`, if any.
pub fn phantom_for(schema: &ProcessSchema) -> Option<Phantom> {
    if schema.hash() == ProcessSchema::ozonation().hash() {
        Some(ozonation_phantom)
    } else {
        None
    }
}

/// Visits every grid point of the schema in row-major order (last variable fastest).
pub fn for_each_grid_point(schema: &ProcessSchema, mut f: impl FnMut(&[f64])) {
    let shape = schema.grid_shape();
    let mut levels = vec![0usize; shape.len()];
    let mut point: Vec<f64> = schema.variables.iter().map(|v| v.min).collect();
    loop {
        f(&point);
        let mut j = shape.len();
        loop {
            if j == 0 {
                return;
            }
            j -= 1;
            levels[j] += 1;
            if levels[j] < shape[j] {
                point[j] = schema.variables[j].value_at(levels[j]);
                break;
            }
            levels[j] = 0;
            point[j] = schema.variables[j].min;
        }
    }
}

/// Per-criterion (min, max) of the phantom over the full grid.
pub fn phantom_ranges(schema: &ProcessSchema, phantom: Phantom) -> Vec<(f64, f64)> {
    let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); schema.n_criteria()];
    for_each_grid_point(schema, |x| {
        for (r, y) in ranges.iter_mut().zip(phantom(x)) {
            r.0 = r.0.min(y);
            r.1 = r.1.max(y);
        }
    });
    ranges
}

/// Noise level used when none is configured: 2% of each criterion's range.
pub fn default_noise(schema: &ProcessSchema, phantom: Phantom) -> Vec<f64> {
    phantom_ranges(schema, phantom)
        .into_iter()
        .map(|(lo, hi)| 0.02 * (hi - lo))
        .collect()
}

/// Samples `count` grid points uniformly and labels them with the registered
/// phantom plus Gaussian noise.
pub fn synth_generate(
    schema: &ProcessSchema,
    count: usize,
    noise_sigma: &[f64],
    seed: u64,
) -> Result<ExperienceDataset> {
    let phantom = phantom_for(schema)
        .ok_or_else(|| Error::Schema("no phantom registered for this schema".into()))?;
    synth_generate_with(schema, phantom, count, noise_sigma, seed)
}

pub fn synth_generate_with(
    schema: &ProcessSchema,
    phantom: Phantom,
    count: usize,
    noise_sigma: &[f64],
    seed: u64,
) -> Result<ExperienceDataset> {
    if count < 1 {
        return Err(Error::InvalidArgument(
            "sample count must be at least 1".into(),
        ));
    }
    if noise_sigma.len() != schema.n_criteria() {
        return Err(Error::Arity {
            what: "noise sigma",
            expected: schema.n_criteria(),
            got: noise_sigma.len(),
        });
    }
    let noise = noise_sigma
        .iter()
        .map(|&s| Normal::new(0.0, s).map_err(|_| Error::InvalidArgument(format!("bad sigma {s}"))))
        .collect::<Result<Vec<_>>>()?;

    let mut rng = seed::rng(seed);
    let rows = (0..count)
        .map(|_| {
            let inputs: Vec<f64> = schema
                .variables
                .iter()
                .map(|v| v.value_at(rng.random_range(0..v.levels())))
                .collect();
            let outputs = phantom(&inputs)
                .into_iter()
                .zip(&noise)
                .map(|(y, d)| y + d.sample(&mut rng))
                .collect();
            Row { inputs, outputs }
        })
        .collect();
    ExperienceDataset::new(schema.clone(), rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn ozonation_grid() {
        let s = ProcessSchema::ozonation();
        s.validate().unwrap();
        assert_eq!(s.grid_shape(), vec![4, 11, 14, 60]);
        assert_eq!(s.grid_size(), 36_960);
        assert_eq!(s.action_count(), 81);
    }

    #[test]
    fn schema_rejects_bad_bounds_and_duplicates() {
        let bad = ProcessSchema {
            variables: vec![Variable::new("x", 1.0, 1.0, 0.5)],
            criteria: vec!["y".into()],
        };
        assert!(bad.validate().is_err());
        let bad = ProcessSchema {
            variables: vec![Variable::new("x", 0.0, 1.0, 2.0)],
            criteria: vec!["y".into()],
        };
        assert!(bad.validate().is_err());
        let dup = ProcessSchema {
            variables: vec![Variable::new("x", 0.0, 1.0, 0.5)],
            criteria: vec!["x".into()],
        };
        assert!(dup.validate().is_err());
    }

    #[test]
    fn schema_toml_round_trip() {
        let s = ProcessSchema::ozonation();
        let back = ProcessSchema::from_toml_str(&s.to_toml_string()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.hash(), s.hash());
    }

    #[test]
    fn level_lookup() {
        let v = Variable::new("pH", 1.0, 14.0, 1.0);
        assert_eq!(v.level_of(1.0), Some(0));
        assert_eq!(v.level_of(14.0), Some(13));
        assert_eq!(v.level_of(7.5), None);
        assert_eq!(v.level_of(15.0), None);
    }

    #[test]
    fn header_only_file_is_empty_dataset() {
        let f = write_tmp("water_content,temperature,pH,time,k_over_s,L,a,b\n");
        let d = load_csv(f.path(), &ProcessSchema::ozonation()).unwrap();
        assert!(d.is_empty());
    }

    #[test]
    fn non_numeric_cell_names_row_and_column() {
        let f = write_tmp(
            "water_content,temperature,pH,time,k_over_s,L,a,b\n0,10,7,30,abc,10,-20,-50\n",
        );
        let err = load_csv(f.path(), &ProcessSchema::ozonation()).unwrap_err();
        match err {
            Error::Cell { row, column, .. } => {
                assert_eq!(row, 1);
                assert_eq!(column, "k_over_s");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn header_mismatch_and_out_of_bounds() {
        let f = write_tmp("temperature,water_content,pH,time,k_over_s,L,a,b\n");
        assert!(matches!(
            load_csv(f.path(), &ProcessSchema::ozonation()),
            Err(Error::Header { .. })
        ));
        let f = write_tmp("water_content,temperature,pH,time,k_over_s,L,a,b\n0,10,7,30,1,10,-20,-50\n0,10,20,30,1,10,-20,-50\n");
        match load_csv(f.path(), &ProcessSchema::ozonation()) {
            Err(Error::Cell { row: 2, column, .. }) => assert_eq!(column, "pH"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            load_csv("/nonexistent/data.csv", &ProcessSchema::ozonation()),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn csv_round_trip_preserves_rows_in_order() {
        let s = ProcessSchema::ozonation();
        let d = synth_generate(&s, 25, &[0.01, 0.1, 0.1, 0.1], 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        d.write_csv(&p).unwrap();
        assert_eq!(load_csv(&p, &s).unwrap(), d);
    }

    #[test]
    fn split_sizes() {
        let s = ProcessSchema::ozonation();
        let d = synth_generate(&s, 129, &[0.0; 4], 1).unwrap();
        let (tr, te) = split(&d, 0.75, 9).unwrap();
        assert_eq!((tr.len(), te.len()), (97, 32));

        let one = ExperienceDataset::new(s.clone(), d.rows[..1].to_vec()).unwrap();
        let (tr, te) = split(&one, 0.75, 9).unwrap();
        assert_eq!((tr.len(), te.len()), (1, 0));

        let four = ExperienceDataset::new(s.clone(), d.rows[..4].to_vec()).unwrap();
        assert_eq!(
            split(&four, 0.75, 5).unwrap(),
            split(&four, 0.75, 5).unwrap()
        );

        let empty = ExperienceDataset::new(s, vec![]).unwrap();
        assert!(matches!(split(&empty, 0.75, 0), Err(Error::Empty(_))));
    }

    #[test]
    fn phantom_reference_point() {
        let y = ozonation_phantom(&[0.0, 0.0, 1.0, 60.0]);
        let expected = 0.3 + 2.3 * (-0.88f64).exp();
        assert!((y[0] - expected).abs() < 1e-12);
        assert!((y[0] - 1.2540).abs() < 1e-4);
    }

    #[test]
    fn phantom_stays_in_target_ranges() {
        let bounds = [(0.3, 2.6), (8.0, 22.0), (-36.0, -18.0), (-71.0, -38.0)];
        let s = ProcessSchema::ozonation();
        let mut visited = 0;
        for_each_grid_point(&s, |x| {
            visited += 1;
            for (y, (lo, hi)) in ozonation_phantom(x).into_iter().zip(bounds) {
                assert!(y >= lo && y <= hi, "{x:?} -> {y}");
            }
        });
        assert_eq!(visited, 36_960);
    }

    #[test]
    fn synth_rejects_zero_count_and_unknown_schema() {
        let s = ProcessSchema::ozonation();
        assert!(synth_generate(&s, 0, &[0.0; 4], 1).is_err());
        let other =
            ProcessSchema::new(vec![Variable::new("x", 0.0, 1.0, 0.5)], vec!["y".into()]).unwrap();
        assert!(matches!(
            synth_generate(&other, 5, &[0.0], 1),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn synth_is_seeded_and_on_grid() {
        let s = ProcessSchema::ozonation();
        let a = synth_generate(&s, 50, &[0.0; 4], 11).unwrap();
        assert_eq!(a, synth_generate(&s, 50, &[0.0; 4], 11).unwrap());
        for r in &a.rows {
            for (x, v) in r.inputs.iter().zip(&s.variables) {
                assert!(v.level_of(*x).is_some());
            }
            assert_eq!(r.outputs, ozonation_phantom(&r.inputs));
        }
    }
}
