//! Synthetic 2-D data and noise batches.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::rng::{SeededRng, NORMAL_BOUND};

/// Where the rows of a [`Batch`] came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Data,
    Noise,
    Generated,
}

/// An N×D sample matrix with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub data: Array2<f64>,
    pub seed: u64,
    pub source: Source,
}

impl Batch {
    pub fn new(data: Array2<f64>, seed: u64, source: Source) -> Result<Self> {
        if data.nrows() == 0 {
            return Err(Error::Shape("batch must contain at least one row".into()));
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite batch entry at flat index {bad}"
            )));
        }
        Ok(Self { data, seed, source })
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_matrix_csv(&self.data, w)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Writes a matrix with header `x0,x1,...` and one row per point.
pub fn write_matrix_csv<W: Write>(data: &Array2<f64>, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let header: Vec<String> = (0..data.ncols()).map(|j| format!("x{j}")).collect();
    wr.write_record(&header)?;
    for row in data.rows() {
        wr.write_record(row.iter().map(|v| v.to_string()))?;
    }
    wr.flush().map_err(|e| Error::Csv(e.to_string()))?;
    Ok(())
}

/// Reads a batch written by [`Batch::write_csv`]. Seed is unknown and set to 0.
pub fn read_batch_csv(path: &Path) -> Result<Batch> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rd = csv::Reader::from_reader(std::io::BufReader::new(file));
    let dim = rd.headers()?.len();
    if dim == 0 {
        return Err(Error::Csv(format!("{}: empty header", path.display())));
    }
    let mut flat = Vec::new();
    let mut rows = 0;
    for rec in rd.records() {
        let rec = rec?;
        if rec.len() != dim {
            return Err(Error::Csv(format!(
                "{}: row {} has {} fields, expected {dim}",
                path.display(),
                rows + 1,
                rec.len()
            )));
        }
        for field in rec.iter() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::Csv(format!("{}: bad number `{field}`", path.display()))
            })?;
            flat.push(v);
        }
        rows += 1;
    }
    let data = Array2::from_shape_vec((rows, dim), flat)
        .map_err(|e| Error::Shape(e.to_string()))?;
    Batch::new(data, 0, Source::Data)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DistributionKind {
    /// Eight isotropic modes on a circle of radius `2·scale`, std `0.1·scale`.
    EightGaussians,
    TwoMoons,
    Checkerboard,
    /// `scale · (mean + std·z)`.
    SingleGaussian { mean: [f64; 2], std: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistributionSpec {
    pub kind: DistributionKind,
    pub scale: f64,
}

const MOON_NOISE: f64 = 0.05;

impl DistributionSpec {
    pub fn new(kind: DistributionKind, scale: f64) -> Result<Self> {
        let spec = Self { kind, scale };
        spec.validate()?;
        Ok(spec)
    }

    pub fn eight_gaussians(scale: f64) -> Self {
        Self {
            kind: DistributionKind::EightGaussians,
            scale,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::config("data.scale", "must be positive and finite"));
        }
        if let DistributionKind::SingleGaussian { mean, std } = self.kind {
            if !(std.is_finite() && std > 0.0) {
                return Err(Error::config("data.std", "must be positive and finite"));
            }
            if mean.iter().any(|m| !m.is_finite()) {
                return Err(Error::config("data.mean", "must be finite"));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        2
    }

    /// Mixture component weights; always sum to one.
    pub fn weights(&self) -> Vec<f64> {
        match self.kind {
            DistributionKind::EightGaussians => vec![1.0 / 8.0; 8],
            DistributionKind::TwoMoons => vec![0.5; 2],
            DistributionKind::Checkerboard => vec![1.0 / 8.0; 8],
            DistributionKind::SingleGaussian { .. } => vec![1.0],
        }
    }

    /// Every emitted coordinate lies in `[-bound, bound]`.
    pub fn bound(&self) -> f64 {
        let k = match self.kind {
            DistributionKind::EightGaussians => 2.0 + 0.1 * NORMAL_BOUND,
            DistributionKind::TwoMoons => 1.5 * 1.3 + MOON_NOISE * NORMAL_BOUND,
            DistributionKind::Checkerboard => 2.0,
            DistributionKind::SingleGaussian { mean, std } => {
                mean[0].abs().max(mean[1].abs()) + std * NORMAL_BOUND
            }
        };
        self.scale * k
    }

    fn draw(&self, rng: &mut SeededRng) -> [f64; 2] {
        let s = self.scale;
        match self.kind {
            DistributionKind::EightGaussians => {
                let k = rng.below(8) as f64;
                let angle = k * std::f64::consts::FRAC_PI_4;
                let (x, y) = (2.0 * angle.cos(), 2.0 * angle.sin());
                [s * (x + 0.1 * rng.normal()), s * (y + 0.1 * rng.normal())]
            }
            DistributionKind::TwoMoons => {
                let upper = rng.below(2) == 0;
                let theta = std::f64::consts::PI * rng.uniform();
                let (x, y) = if upper {
                    (theta.cos(), theta.sin())
                } else {
                    (1.0 - theta.cos(), 0.5 - theta.sin())
                };
                [
                    s * (1.3 * (x - 0.5) + MOON_NOISE * rng.normal()),
                    s * (1.3 * (y - 0.25) + MOON_NOISE * rng.normal()),
                ]
            }
            DistributionKind::Checkerboard => {
                // 4×4 board on [-2,2]², cells with (col + row) even are filled.
                let cell = rng.below(8);
                let row = cell / 2;
                let col = 2 * (cell % 2) + (row % 2);
                let x = -2.0 + col as f64 + rng.uniform();
                let y = -2.0 + row as f64 + rng.uniform();
                [s * x, s * y]
            }
            DistributionKind::SingleGaussian { mean, std } => [
                s * (mean[0] + std * rng.normal()),
                s * (mean[1] + std * rng.normal()),
            ],
        }
    }
}

impl fmt::Display for DistributionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DistributionKind::EightGaussians => "eight-gaussians",
            DistributionKind::TwoMoons => "two-moons",
            DistributionKind::Checkerboard => "checkerboard",
            DistributionKind::SingleGaussian { .. } => "single-gaussian",
        })
    }
}

impl FromStr for DistributionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eight-gaussians" => Ok(DistributionKind::EightGaussians),
            "two-moons" => Ok(DistributionKind::TwoMoons),
            "checkerboard" => Ok(DistributionKind::Checkerboard),
            "single-gaussian" => Ok(DistributionKind::SingleGaussian {
                mean: [0.0, 0.0],
                std: 1.0,
            }),
            other => Err(Error::config(
                "data.kind",
                format!("unknown distribution `{other}`"),
            )),
        }
    }
}

/// Draws `n` points from `spec`; deterministic per `(spec, n, seed)`.
pub fn sample_data(spec: &DistributionSpec, n: usize, seed: u64) -> Result<Batch> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::config("n", "sample count must be at least 1"));
    }
    let mut rng = SeededRng::new(seed);
    let mut data = Array2::zeros((n, spec.dim()));
    for mut row in data.rows_mut() {
        let p = spec.draw(&mut rng);
        row[0] = p[0];
        row[1] = p[1];
    }
    Batch::new(data, seed, Source::Data)
}

/// `n × d` i.i.d. standard normals.
pub fn sample_noise(n: usize, d: usize, seed: u64) -> Result<Batch> {
    if n == 0 || d == 0 {
        return Err(Error::config("n", "noise batch needs n >= 1 and d >= 1"));
    }
    let mut rng = SeededRng::new(seed);
    let data = Array2::from_shape_simple_fn((n, d), || rng.normal());
    Batch::new(data, seed, Source::Noise)
}
