//! Command-line front end.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::checkpoint::Checkpoint;
use crate::config::{Manifest, RunConfig};
use crate::consistency::TargetSettings;
use crate::distill::{distill, sample, teacher_sample, train_teacher};
use crate::error::{Error, Result};
use crate::eval::{
    compute_metrics, kdc_profile, kdc_vs_step, run_ablation, save_ablation_csv, strategy_median,
    write_metrics_csv, ProfileModels, ProfileSettings,
};
use crate::rng::RNG_NAME;
use crate::svg::{bar_chart, line_plot, Series};
use crate::synthdata::{read_batch_csv, sample_data};

/// Environment variable naming the directory for outputs without `--out`.
pub const OUT_DIR_ENV: &str = "CCM_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "ccm", version, about = "Curriculum consistency distillation on 2-D toy data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run configuration; defaults apply to every missing key.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides `experiment.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file or directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Default output directory.
    #[arg(long, env = OUT_DIR_ENV, default_value = ".", hide_env_values = true)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a data batch as CSV.
    GenData(Common),
    /// Train a flow-matching teacher checkpoint.
    TrainTeacher(Common),
    /// Distill a teacher into a consistency student.
    Distill {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        teacher: PathBuf,
    },
    /// Generate samples from a checkpoint.
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long, alias = "student")]
        checkpoint: PathBuf,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        nfe: Option<usize>,
        /// Integrate the velocity field with this many Euler steps instead
        /// of applying the consistency map (for teachers).
        #[arg(long)]
        ode_steps: Option<usize>,
    },
    /// Compare two CSV batches.
    Eval {
        #[command(flatten)]
        common: Common,
        a: PathBuf,
        b: PathBuf,
        /// Metric to compute; repeatable. Defaults to `eval.metrics`.
        #[arg(long)]
        metric: Vec<String>,
    },
    /// KDC-vs-t and KDC-vs-step profiles.
    ProfileKdc {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        teacher: PathBuf,
        /// Distilled checkpoint; repeatable. Each is profiled against its
        /// own target network. Without one, the warm-start pair is profiled.
        #[arg(long)]
        student: Vec<PathBuf>,
    },
    /// Distill, sample and score every configured strategy and seed.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        teacher: PathBuf,
    },
}

impl Common {
    fn config(&self) -> Result<RunConfig> {
        let cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        Ok(match self.seed {
            Some(s) => cfg.with_seed(s),
            None => cfg,
        })
    }

    fn out_path(&self, default_name: &str) -> PathBuf {
        self.out
            .clone()
            .unwrap_or_else(|| self.out_dir.join(default_name))
    }
}

/// `path` with `suffix` appended to its file name.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => create_dir(p),
        _ => Ok(()),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn base_manifest(cfg: &RunConfig, command: &str) -> Manifest {
    let mut m = Manifest::new(cfg.clone());
    m.set("command", command);
    m.set("rng", RNG_NAME);
    m.set("seed", cfg.seed);
    m
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(c) => cmd_gen_data(&c),
        Command::TrainTeacher(c) => cmd_train_teacher(&c),
        Command::Distill { common, teacher } => cmd_distill(&common, &teacher),
        Command::Sample {
            common,
            checkpoint,
            n,
            nfe,
            ode_steps,
        } => cmd_sample(&common, &checkpoint, n, nfe, ode_steps),
        Command::Eval {
            common,
            a,
            b,
            metric,
        } => cmd_eval(&common, &a, &b, &metric),
        Command::ProfileKdc {
            common,
            teacher,
            student,
        } => cmd_profile_kdc(&common, &teacher, &student),
        Command::Ablate { common, teacher } => cmd_ablate(&common, &teacher),
    }
}

pub fn cmd_gen_data(c: &Common) -> Result<()> {
    let cfg = c.config()?;
    let out = c.out_path("data.csv");
    ensure_parent(&out)?;
    sample_data(&cfg.data, cfg.data_n, cfg.seed)?.save_csv(&out)
}

pub fn cmd_train_teacher(c: &Common) -> Result<()> {
    let cfg = c.config()?;
    let out = c.out_path("teacher.ckpt");
    ensure_parent(&out)?;
    let (ckpt, log) = match train_teacher(&cfg.data, &cfg.architecture(), &cfg.teacher) {
        Ok(v) => v,
        Err(Error::Diverged {
            iteration,
            detail,
            last_good,
        }) => {
            last_good.save(&sibling(&out, ".last-good"))?;
            return Err(Error::Diverged {
                iteration,
                detail,
                last_good,
            });
        }
        Err(e) => return Err(e),
    };
    ckpt.save(&out)?;
    log.save_csv(&sibling(&out, ".runlog.csv"))?;
    let mut m = base_manifest(&cfg, "train-teacher");
    m.set("config_hash", format!("{:016x}", ckpt.meta.config_hash));
    m.save(&sibling(&out, ".manifest"))
}

pub fn cmd_distill(c: &Common, teacher_path: &Path) -> Result<()> {
    let cfg = c.config()?;
    let teacher = Checkpoint::load(teacher_path)?;
    let out = c.out_path("student.ckpt");
    ensure_parent(&out)?;
    let outcome = match distill(&cfg.distill, &cfg.data, &teacher) {
        Ok(v) => v,
        Err(Error::Diverged {
            iteration,
            detail,
            last_good,
        }) => {
            last_good.save(&sibling(&out, ".last-good"))?;
            return Err(Error::Diverged {
                iteration,
                detail,
                last_good,
            });
        }
        Err(e) => return Err(e),
    };
    outcome.checkpoint.save(&out)?;
    outcome.log.save_csv(&sibling(&out, ".runlog.csv"))?;
    let mut m = base_manifest(&cfg, "distill");
    m.set("calibrated_t_kdc", outcome.calibrated_t_kdc);
    m.set("resolved_strategy", outcome.schedule);
    m.set("warm_start", "teacher");
    m.set("teacher", teacher_path.display());
    m.set("teacher_config_hash", format!("{:016x}", teacher.meta.config_hash));
    m.set("config_hash", format!("{:016x}", outcome.checkpoint.meta.config_hash));
    m.save(&sibling(&out, ".manifest"))
}

pub fn cmd_sample(
    c: &Common,
    ckpt_path: &Path,
    n: Option<usize>,
    nfe: Option<usize>,
    ode_steps: Option<usize>,
) -> Result<()> {
    let cfg = c.config()?;
    let ckpt = Checkpoint::load(ckpt_path)?;
    let n = n.unwrap_or(cfg.sample.n);
    let batch = match ode_steps {
        Some(steps) => teacher_sample(ckpt.sampling_model(), n, steps, cfg.seed)?,
        None => sample(&ckpt, n, nfe.unwrap_or(cfg.sample.nfe), cfg.seed)?,
    };
    let out = c.out_path("samples.csv");
    ensure_parent(&out)?;
    batch.save_csv(&out)
}

pub fn cmd_eval(c: &Common, a: &Path, b: &Path, metrics: &[String]) -> Result<()> {
    let cfg = c.config()?;
    let a = read_batch_csv(a)?;
    let b = read_batch_csv(b)?;
    let names = if metrics.is_empty() {
        cfg.eval.metrics.clone()
    } else {
        metrics.to_vec()
    };
    let values = compute_metrics(a.data.view(), b.data.view(), &names, cfg.seed)?;
    let out = c.out_path("metrics.csv");
    ensure_parent(&out)?;
    let f = std::fs::File::create(&out).map_err(|e| Error::io(&out, e))?;
    write_metrics_csv(&values, std::io::BufWriter::new(f))
}

pub fn cmd_profile_kdc(c: &Common, teacher_path: &Path, students: &[PathBuf]) -> Result<()> {
    let cfg = c.config()?;
    let teacher = Checkpoint::load(teacher_path)?;
    let loaded = students
        .iter()
        .map(|p| Checkpoint::load(p))
        .collect::<Result<Vec<_>>>()?;
    let dir = c.out_path("profile");
    create_dir(&dir)?;
    let p = &cfg.profile;
    let settings = ProfileSettings {
        samples: p.samples,
        batch: p.batch,
        solver_step: p.solver_step,
        target: TargetSettings {
            peak: cfg.distill.peak,
            kdc_floor: cfg.distill.kdc_floor,
        },
        seed: cfg.seed,
    };
    let mut pairs = Vec::new();
    if loaded.is_empty() {
        pairs.push(("warm-start".to_string(), &teacher.model, &teacher.model));
    }
    for (path, ck) in students.iter().zip(&loaded) {
        let target = ck.target.as_ref().map_or(&ck.model, |t| &t.model);
        let name = path.file_stem().map_or("student".into(), |s| s.to_string_lossy().into_owned());
        pairs.push((name, &ck.model, target));
    }
    let mut t_series = Vec::new();
    let mut l_series = Vec::new();
    let mut m = base_manifest(&cfg, "profile-kdc");
    for (i, (name, student, target)) in pairs.into_iter().enumerate() {
        let models = ProfileModels {
            student,
            target,
            teacher: &teacher.model,
        };
        let mut profile = kdc_profile(&models, &cfg.data, p.l, p.bins, &settings)?;
        profile.label = name.clone();
        profile.save_csv(&dir.join(format!("profile-{i}.csv")))?;
        t_series.push(Series {
            label: name.clone(),
            points: profile.centers().into_iter().zip(profile.mean.iter().copied()).collect(),
        });
        let by_l = kdc_vs_step(&models, &cfg.data, p.t, &p.l_grid, &settings)?;
        let mut wr = csv::Writer::from_path(dir.join(format!("kdc-vs-step-{i}.csv")))?;
        wr.write_record(["l", "mean_kdc"])?;
        for (l, k) in &by_l {
            wr.write_record([l.to_string(), k.to_string()])?;
        }
        wr.flush().map_err(|e| Error::Csv(e.to_string()))?;
        l_series.push(Series {
            label: name.clone(),
            points: by_l,
        });
        m.set(&format!("pair{i}"), name);
    }
    write_text(
        &dir.join("profile.svg"),
        &line_plot("KDC over t", "t", "mean KDC", &t_series),
    )?;
    write_text(
        &dir.join("kdc-vs-step.svg"),
        &line_plot(&format!("KDC over l at t={}", p.t), "l", "mean KDC", &l_series),
    )?;
    m.set("teacher", teacher_path.display());
    m.save(&dir.join("manifest"))
}

pub fn cmd_ablate(c: &Common, teacher_path: &Path) -> Result<()> {
    let cfg = c.config()?;
    let teacher = Checkpoint::load(teacher_path)?;
    let dir = c.out_path("ablation");
    create_dir(&dir)?;
    let rows = run_ablation(
        &cfg.ablate.strategies,
        &cfg.distill,
        &cfg.data,
        &teacher,
        &cfg.ablate.seeds,
        &cfg.ablation_eval(),
    )?;
    save_ablation_csv(&rows, &dir.join("ablation.csv"))?;
    let mut names: Vec<String> = Vec::new();
    for r in &rows {
        if !names.contains(&r.strategy) {
            names.push(r.strategy.clone());
        }
    }
    let bars: Vec<(String, f64)> = names
        .iter()
        .map(|s| (s.clone(), strategy_median(&rows, s).unwrap_or(f64::NAN)))
        .collect();
    write_text(
        &dir.join("ablation.svg"),
        &bar_chart("median sliced Wasserstein (1 step)", "metric", &bars),
    )?;
    let mut m = base_manifest(&cfg, "ablate");
    m.set("teacher", teacher_path.display());
    m.save(&dir.join("manifest"))?;
    if rows.iter().all(|r| r.metric.is_none()) {
        return Err(Error::Numerical(format!(
            "every ablation run failed; first error: {}",
            rows[0].note
        )));
    }
    Ok(())
}
