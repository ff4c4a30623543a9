use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, SeededRng};

/// Projections used by default for sliced Wasserstein distances.
pub const DEFAULT_PROJECTIONS: usize = 256;

const DIRECTION_STREAM: u64 = 0;
const SUBSAMPLE_STREAM: u64 = 1;

fn check_pair(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<()> {
    if a.nrows() == 0 || b.nrows() == 0 {
        return Err(Error::Shape("empty batch".into()));
    }
    if a.ncols() != b.ncols() {
        return Err(Error::Shape(format!(
            "batches have dimensions {} and {}",
            a.ncols(),
            b.ncols()
        )));
    }
    Ok(())
}

/// `projections × d` matrix of random unit directions.
pub fn projection_directions(d: usize, projections: usize, seed: u64) -> Array2<f64> {
    let mut rng = SeededRng::new(derive_seed(seed, DIRECTION_STREAM, 0));
    let mut dirs = Array2::zeros((projections, d));
    for mut row in dirs.rows_mut() {
        loop {
            row.iter_mut().for_each(|v| *v = rng.normal());
            let norm = row.dot(&row).sqrt();
            if norm > 1e-12 {
                row /= norm;
                break;
            }
        }
    }
    dirs
}

/// Rows of `x` reduced to `m` by a seeded draw without replacement; `x`
/// itself when it already has `m` rows.
fn subsample(x: ArrayView2<'_, f64>, m: usize, seed: u64) -> Array2<f64> {
    let n = x.nrows();
    if n == m {
        return x.to_owned();
    }
    let mut rng = SeededRng::new(derive_seed(seed, SUBSAMPLE_STREAM, n as u64));
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..m {
        let j = i + rng.below(n - i);
        idx.swap(i, j);
    }
    let mut keep = idx[..m].to_vec();
    keep.sort_unstable();
    x.select(Axis(0), &keep)
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|p, q| p.total_cmp(q));
    v
}

/// Mean over random unit directions of the 1-D 2-Wasserstein distance
/// between the projected samples. The larger batch is subsampled to the
/// size of the smaller one.
pub fn sliced_wasserstein(
    a: ArrayView2<'_, f64>,
    b: ArrayView2<'_, f64>,
    projections: usize,
    seed: u64,
) -> Result<f64> {
    check_pair(a, b)?;
    if projections == 0 {
        return Err(Error::config("projections", "must be at least 1"));
    }
    let m = a.nrows().min(b.nrows());
    let a = subsample(a, m, seed);
    let b = subsample(b, m, seed);
    let dirs = projection_directions(a.ncols(), projections, seed);
    let pa = a.dot(&dirs.t());
    let pb = b.dot(&dirs.t());
    let mut total = 0.0;
    for k in 0..projections {
        let qa = sorted(pa.column(k).to_vec());
        let qb = sorted(pb.column(k).to_vec());
        let ms = qa.iter().zip(&qb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / m as f64;
        total += ms.sqrt();
    }
    Ok(total / projections as f64)
}

fn mean_pair_distance(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> f64 {
    let mut sum = 0.0;
    for x in a.rows() {
        for y in b.rows() {
            sum += x
                .iter()
                .zip(y.iter())
                .map(|(p, q)| (p - q) * (p - q))
                .sum::<f64>()
                .sqrt();
        }
    }
    sum / (a.nrows() * b.nrows()) as f64
}

/// `2·E‖X−Y‖ − E‖X−X′‖ − E‖Y−Y′‖` over the empirical distributions.
pub fn energy_distance(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<f64> {
    check_pair(a, b)?;
    let cross = mean_pair_distance(a, b);
    let within_a = mean_pair_distance(a, a);
    let within_b = mean_pair_distance(b, b);
    // Rounding can leave a tiny negative value for nearly equal batches.
    Ok((2.0 * cross - within_a - within_b).max(0.0))
}

/// Ranks starting at 1, ties sharing their average rank.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation; NaN when either input is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Shape("spearman needs two equal-length series of length ≥ 2".into()));
    }
    let rx = ranks(x);
    let ry = ranks(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Metric names accepted by [`compute_metrics`].
pub const METRIC_NAMES: [&str; 2] = ["sliced-wasserstein", "energy"];

/// Evaluates the named metrics between two batches.
pub fn compute_metrics(
    a: ArrayView2<'_, f64>,
    b: ArrayView2<'_, f64>,
    names: &[String],
    seed: u64,
) -> Result<Vec<(String, f64)>> {
    check_pair(a, b)?;
    names
        .iter()
        .map(|name| {
            let v = match name.as_str() {
                "sliced-wasserstein" => sliced_wasserstein(a, b, DEFAULT_PROJECTIONS, seed)?,
                "energy" => energy_distance(a, b)?,
                other => {
                    return Err(Error::config(
                        "metric",
                        format!("unknown metric `{other}` (sliced-wasserstein, energy)"),
                    ))
                }
            };
            Ok((name.clone(), v))
        })
        .collect()
}

pub fn write_metrics_csv<W: Write>(metrics: &[(String, f64)], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["metric", "value"])?;
    for (name, v) in metrics {
        wr.write_record([name.clone(), v.to_string()])?;
    }
    wr.flush().map_err(|e| Error::Csv(e.to_string()))?;
    Ok(())
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<(String, f64)>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rd = csv::Reader::from_reader(f);
    if rd.headers()?.iter().collect::<Vec<_>>() != ["metric", "value"] {
        return Err(Error::Csv(format!("{}: expected header metric,value", path.display())));
    }
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let v: f64 = rec[1]
            .parse()
            .map_err(|_| Error::Csv(format!("bad metric value `{}`", &rec[1])))?;
        out.push((rec[0].to_string(), v));
    }
    Ok(out)
}
