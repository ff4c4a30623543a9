use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use crate::consistency::{consistency_map, kdc, TargetSettings};
use crate::error::{Error, Result};
use crate::flowmatch::{euler_solve, ot_path, VectorField};
use crate::rng::derive_seed;
use crate::synthdata::{sample_data, sample_noise, DistributionSpec};

/// Models and sampling protocol shared by the KDC profilers.
pub struct ProfileModels<'a, S: ?Sized, G: ?Sized, T: ?Sized> {
    pub student: &'a S,
    pub target: &'a G,
    pub teacher: &'a T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileSettings {
    /// Batches drawn per evaluation point.
    pub samples: usize,
    /// Rows per batch.
    pub batch: usize,
    /// Teacher solver step inside each interval.
    pub solver_step: f64,
    pub target: TargetSettings,
    pub seed: u64,
}

impl ProfileSettings {
    fn validate(&self) -> Result<()> {
        if self.samples == 0 || self.batch == 0 {
            return Err(Error::config("profile", "samples and batch must be positive"));
        }
        if !(self.solver_step > 0.0 && self.solver_step <= 1.0) {
            return Err(Error::config("profile.step", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Binned KDC statistics over `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct KdcProfile {
    /// `bins + 1` edges from 0 to 1.
    pub edges: Vec<f64>,
    pub mean: Vec<f64>,
    /// Population variance across batches.
    pub var: Vec<f64>,
    pub count: Vec<usize>,
    /// Distillation step used for every bin.
    pub l: f64,
    pub label: String,
}

impl KdcProfile {
    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["bin_lo", "bin_hi", "mean_kdc", "var_kdc", "count"])?;
        for i in 0..self.mean.len() {
            wr.write_record([
                self.edges[i].to_string(),
                self.edges[i + 1].to_string(),
                self.mean[i].to_string(),
                self.var[i].to_string(),
                self.count[i].to_string(),
            ])?;
        }
        wr.flush().map_err(|e| Error::Csv(e.to_string()))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

/// Batch of path points at `t`; batch `j` shares noise and data across
/// every evaluation point so trends are not masked by resampling noise.
fn path_batch(data: &DistributionSpec, s: &ProfileSettings, j: u64, t: f64) -> Result<Array2<f64>> {
    let x0 = sample_noise(s.batch, data.dim(), derive_seed(s.seed, 0, j))?;
    let x1 = sample_data(data, s.batch, derive_seed(s.seed, 1, j))?;
    ot_path(x0.data.view(), x1.data.view(), &[t])
}

/// KDC of the student estimate at `t` against the target network's map of
/// the teacher state at `min(t + l, 1)`.
fn kdc_at<S, G, T>(
    m: &ProfileModels<'_, S, G, T>,
    x_t: &Array2<f64>,
    t: f64,
    l: f64,
    s: &ProfileSettings,
) -> Result<f64>
where
    S: VectorField + ?Sized,
    G: VectorField + ?Sized,
    T: VectorField + ?Sized,
{
    let u = (t + l).min(1.0);
    let x_est = consistency_map(m.student, x_t.view(), t)?;
    let x_u = euler_solve(m.teacher, x_t.view(), t, u, s.solver_step)?;
    let x_target = consistency_map(m.target, x_u.view(), u)?;
    kdc(x_est.view(), x_target.view(), s.target.peak, s.target.kdc_floor)
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var)
}

/// KDC statistics at the center of each of `bins` equal bins over `[0, 1)`.
/// Intervals reaching past 1 are clamped.
pub fn kdc_profile<S, G, T>(
    m: &ProfileModels<'_, S, G, T>,
    data: &DistributionSpec,
    l: f64,
    bins: usize,
    s: &ProfileSettings,
) -> Result<KdcProfile>
where
    S: VectorField + ?Sized,
    G: VectorField + ?Sized,
    T: VectorField + ?Sized,
{
    s.validate()?;
    if bins == 0 {
        return Err(Error::config("profile.bins", "must be at least 1"));
    }
    if l.is_nan() || l <= 0.0 {
        return Err(Error::config("profile.l", "must be positive"));
    }
    let edges: Vec<f64> = (0..=bins).map(|i| i as f64 / bins as f64).collect();
    let mut profile = KdcProfile {
        edges,
        mean: Vec::with_capacity(bins),
        var: Vec::with_capacity(bins),
        count: Vec::with_capacity(bins),
        l,
        label: String::new(),
    };
    for b in 0..bins {
        let t = 0.5 * (profile.edges[b] + profile.edges[b + 1]);
        let mut vals = Vec::with_capacity(s.samples);
        for j in 0..s.samples as u64 {
            let x_t = path_batch(data, s, j, t)?;
            vals.push(kdc_at(m, &x_t, t, l, s)?);
        }
        let (mean, var) = mean_var(&vals);
        profile.mean.push(mean);
        profile.var.push(var);
        profile.count.push(vals.len());
    }
    Ok(profile)
}

/// Mean KDC at fixed `t` for each distillation step in `l_grid`.
pub fn kdc_vs_step<S, G, T>(
    m: &ProfileModels<'_, S, G, T>,
    data: &DistributionSpec,
    t: f64,
    l_grid: &[f64],
    s: &ProfileSettings,
) -> Result<Vec<(f64, f64)>>
where
    S: VectorField + ?Sized,
    G: VectorField + ?Sized,
    T: VectorField + ?Sized,
{
    s.validate()?;
    if !(0.0..1.0).contains(&t) {
        return Err(Error::config("t", format!("{t} outside [0, 1)")));
    }
    for &l in l_grid {
        if !(l > 0.0 && t + l <= 1.0) {
            return Err(Error::config("l", format!("step {l} must be positive with t + l ≤ 1")));
        }
    }
    let batches: Vec<Array2<f64>> = (0..s.samples as u64)
        .map(|j| path_batch(data, s, j, t))
        .collect::<Result<_>>()?;
    l_grid
        .iter()
        .map(|&l| {
            let vals = batches
                .iter()
                .map(|x_t| kdc_at(m, x_t, t, l, s))
                .collect::<Result<Vec<_>>>()?;
            Ok((l, mean_var(&vals).0))
        })
        .collect()
}
