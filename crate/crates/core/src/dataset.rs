//! Simulator runs on disk and the built-in design registry.

use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gp::TrainingSet;
use crate::testbed::{branin_modified, latin_hypercube, model_2d, toy_1d, Denominator};

const DESIGN_STREAM: u64 = 1;
const TEST_STREAM: u64 = 2;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Provenance {
    Builtin,
    File(PathBuf),
}

/// Per-column map `u = (x - offset) / scale` onto `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMap {
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
}

impl AffineMap {
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.offset)
            .zip(&self.scale)
            .map(|((v, o), s)| (v - o) / s)
            .collect()
    }

    pub fn inverse(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(&self.offset)
            .zip(&self.scale)
            .map(|((v, o), s)| v * s + o)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub inputs: DMatrix<f64>,
    pub outputs: DVector<f64>,
    pub provenance: Provenance,
    /// Original-scale map, set once inputs have been rescaled.
    pub scaling: Option<AffineMap>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        inputs: DMatrix<f64>,
        outputs: DVector<f64>,
        provenance: Provenance,
    ) -> Result<Self> {
        if inputs.nrows() != outputs.len() {
            return Err(Error::InvalidArgument(format!(
                "{} input rows but {} outputs",
                inputs.nrows(),
                outputs.len()
            )));
        }
        if let Some((a, b)) = duplicate_row(&inputs) {
            return Err(Error::InvalidArgument(format!(
                "rows {} and {} have identical inputs",
                a + 1,
                b + 1
            )));
        }
        Ok(Self {
            name: name.into(),
            inputs,
            outputs,
            provenance,
            scaling: None,
        })
    }

    pub fn n(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn p(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.inputs.row(i).iter().copied().collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n()).map(|i| self.row(i)).collect()
    }

    /// Min-max rescaling of the inputs onto `[0, 1]^p`. Constant columns are
    /// only shifted. A second pass leaves the data unchanged.
    pub fn rescaled(mut self) -> Self {
        let p = self.p();
        let mut offset = Vec::with_capacity(p);
        let mut scale = Vec::with_capacity(p);
        for c in 0..p {
            let col = self.inputs.column(c);
            let lo = col.min();
            let hi = col.max();
            offset.push(lo);
            scale.push(if hi > lo { hi - lo } else { 1.0 });
        }
        let step = AffineMap { offset, scale };
        for i in 0..self.n() {
            let u = step.forward(&self.row(i));
            for (c, v) in u.into_iter().enumerate() {
                self.inputs[(i, c)] = v.clamp(0.0, 1.0);
            }
        }
        // compose with any earlier map so `scaling` always maps back to the raw inputs
        self.scaling = Some(match self.scaling.take() {
            None => step,
            Some(prev) => AffineMap {
                offset: (0..p)
                    .map(|c| prev.offset[c] + prev.scale[c] * step.offset[c])
                    .collect(),
                scale: (0..p).map(|c| prev.scale[c] * step.scale[c]).collect(),
            },
        });
        self
    }

    pub fn training_set(&self) -> Result<TrainingSet> {
        TrainingSet::new(self.inputs.clone(), self.outputs.clone())
    }

    /// Writes `x1..xp,y` with a header.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(File::create(path)?);
        let header: Vec<String> = (1..=self.p())
            .map(|c| format!("x{c}"))
            .chain(["y".to_string()])
            .collect();
        writeln!(f, "{}", header.join(","))?;
        for i in 0..self.n() {
            let cells: Vec<String> = self
                .inputs
                .row(i)
                .iter()
                .chain(std::iter::once(&self.outputs[i]))
                .map(|v| format!("{v:?}"))
                .collect();
            writeln!(f, "{}", cells.join(","))?;
        }
        f.flush()?;
        Ok(())
    }
}

fn duplicate_row(m: &DMatrix<f64>) -> Option<(usize, usize)> {
    for i in 0..m.nrows() {
        for j in i + 1..m.nrows() {
            if m.row(i) == m.row(j) {
                return Some((i, j));
            }
        }
    }
    None
}

/// Reads a CSV with a header row; every column but the last is an input.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let shown = path.display().to_string();
    let parse_err = |line: usize, message: String| Error::Parse {
        path: shown.clone(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => parse_err(1, format!("{other:?}")),
        })?;
    let header = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let cols = header.len();
    if cols < 2 {
        return Err(parse_err(
            1,
            "header needs at least one input column and an output column".into(),
        ));
    }

    let mut values: Vec<f64> = Vec::new();
    let mut line_of_row: Vec<usize> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != cols {
            return Err(parse_err(
                line,
                format!("expected {cols} fields, found {}", record.len()),
            ));
        }
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(line, format!("column '{}': cannot parse '{field}'", &header[c])))?;
            if !v.is_finite() {
                return Err(parse_err(
                    line,
                    format!("column '{}': non-finite value '{field}'", &header[c]),
                ));
            }
            values.push(v);
        }
        line_of_row.push(line);
    }
    let n = line_of_row.len();
    if n == 0 {
        return Err(parse_err(1, "no data rows".into()));
    }
    let p = cols - 1;
    let inputs = DMatrix::from_fn(n, p, |i, c| values[i * cols + c]);
    let outputs = DVector::from_fn(n, |i, _| values[i * cols + p]);
    if let Some((a, b)) = duplicate_row(&inputs) {
        return Err(parse_err(
            line_of_row[b],
            format!("duplicate inputs of line {}", line_of_row[a]),
        ));
    }
    let name = path
        .file_stem()
        .map_or_else(|| shown.clone(), |s| s.to_string_lossy().into_owned());
    Dataset::new(name, inputs, outputs, Provenance::File(path.to_path_buf()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Builtin {
    Branin,
    Model2d,
    Toy1d,
}

impl Builtin {
    pub fn name(self) -> &'static str {
        match self {
            Builtin::Branin => "branin",
            Builtin::Model2d => "model2d",
            Builtin::Toy1d => "toy1d",
        }
    }

    pub fn dim(self) -> usize {
        match self {
            Builtin::Toy1d => 1,
            _ => 2,
        }
    }

    pub fn design_size(self) -> usize {
        match self {
            Builtin::Branin => 18,
            Builtin::Model2d => 20,
            Builtin::Toy1d => 8,
        }
    }

    /// Simulator at a point of the unit design cube.
    pub fn evaluate(self, u: &[f64], denominator: Denominator) -> Result<f64> {
        match self {
            Builtin::Branin => Ok(branin_modified(u)),
            Builtin::Model2d => model_2d(u, denominator),
            Builtin::Toy1d => Ok(toy_1d(10.0 * u[0])),
        }
    }

    fn sample(self, n: usize, seed: u64, stream: u64, denominator: Denominator) -> Result<Dataset> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let inputs = latin_hypercube(n, self.dim(), &mut rng);
        let outputs = (0..n)
            .map(|i| self.evaluate(&inputs.row(i).iter().copied().collect::<Vec<_>>(), denominator))
            .collect::<Result<Vec<f64>>>()?;
        Dataset::new(self.name(), inputs, DVector::from_vec(outputs), Provenance::Builtin)
    }

    /// The training design for `seed`.
    pub fn design(self, seed: u64, denominator: Denominator) -> Result<Dataset> {
        self.sample(self.design_size(), seed, DESIGN_STREAM, denominator)
    }

    /// An independent held-out LHS of `n` points.
    pub fn test_set(self, n: usize, seed: u64, denominator: Denominator) -> Result<Dataset> {
        self.sample(n, seed, TEST_STREAM, denominator)
    }
}

impl FromStr for Builtin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "branin" => Ok(Builtin::Branin),
            "model2d" => Ok(Builtin::Model2d),
            "toy1d" => Ok(Builtin::Toy1d),
            other => Err(Error::InvalidArgument(format!("unknown builtin dataset '{other}'"))),
        }
    }
}

/// `branin`, `model2d`, `toy1d` or `file:<path>`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DatasetRef {
    Builtin(Builtin),
    File(PathBuf),
}

impl fmt::Display for DatasetRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetRef::Builtin(b) => f.write_str(b.name()),
            DatasetRef::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl FromStr for DatasetRef {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().strip_prefix("file:") {
            Some(path) if !path.is_empty() => Ok(DatasetRef::File(PathBuf::from(path))),
            Some(_) => Err(Error::InvalidArgument("empty dataset path".into())),
            None => s.parse().map(DatasetRef::Builtin),
        }
    }
}

impl DatasetRef {
    pub fn resolve(&self, seed: u64, denominator: Denominator) -> Result<Dataset> {
        match self {
            DatasetRef::Builtin(b) => b.design(seed, denominator),
            DatasetRef::File(p) => load_dataset(p),
        }
    }
}
