//! Run configuration: a sectioned `key = value` text document.
//!
//! Grammar:
//!
//! ```text
//! document := line*
//! line     := blank | comment | section | entry
//! comment  := ('#' | ';') text
//! section  := '[' name ']'
//! entry    := key '=' value        (surrounding whitespace ignored)
//! ```
//!
//! Every key belongs to a section, appears at most once, and has a default.
//! Unknown sections or keys are rejected with their line number. Lists are
//! comma-separated, except `ablate.strategies`, which separates strategy
//! descriptors with `;` because descriptors contain spaces.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use crate::consistency::CurriculumSchedule;
use crate::distill::{DistillConfig, GanConfig, TeacherConfig};
use crate::error::{Error, Result};
use crate::eval::{AblationEval, DEFAULT_PROJECTIONS};
use crate::nnet::{Activation, Architecture};
use crate::synthdata::{DistributionKind, DistributionSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct NetConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub time_features: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        let a = Architecture::velocity(2);
        Self {
            hidden: a.hidden,
            activation: a.activation,
            time_features: a.time_features,
        }
    }
}

impl NetConfig {
    pub fn architecture(&self, data_dim: usize) -> Architecture {
        Architecture {
            data_dim,
            hidden: self.hidden.clone(),
            out_dim: data_dim,
            activation: self.activation,
            time_features: self.time_features,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleConfig {
    pub n: usize,
    pub nfe: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub metrics: Vec<String>,
    pub projections: usize,
    /// Points generated per ablation score.
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileConfig {
    pub bins: usize,
    pub samples: usize,
    pub batch: usize,
    /// Distillation step of the KDC-vs-t profile.
    pub l: f64,
    /// Fixed time of the KDC-vs-step sweep.
    pub t: f64,
    pub l_grid: Vec<f64>,
    pub solver_step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblateConfig {
    pub strategies: Vec<CurriculumSchedule>,
    pub seeds: Vec<u64>,
}

/// Every setting of every command.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DistributionSpec,
    /// Points written by `gen-data`.
    pub data_n: usize,
    pub net: NetConfig,
    pub teacher: TeacherConfig,
    pub distill: DistillConfig,
    pub sample: SampleConfig,
    pub eval: EvalConfig,
    pub profile: ProfileConfig,
    pub ablate: AblateConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data: DistributionSpec::eight_gaussians(1.0),
            data_n: 10_000,
            net: NetConfig::default(),
            teacher: TeacherConfig::default(),
            distill: DistillConfig::default(),
            sample: SampleConfig { n: 10_000, nfe: 1 },
            eval: EvalConfig {
                metrics: vec!["sliced-wasserstein".into(), "energy".into()],
                projections: DEFAULT_PROJECTIONS,
                samples: 10_000,
            },
            profile: ProfileConfig {
                bins: 10,
                samples: 8,
                batch: 256,
                l: 0.03,
                t: 0.3,
                l_grid: (1..=20).map(|i| i as f64 / 100.0).collect(),
                solver_step: 0.03,
            },
            ablate: AblateConfig {
                strategies: vec![
                    "ccm".parse().expect("valid descriptor"),
                    "static l=0.03 n=1 s=0.03".parse().expect("valid descriptor"),
                    CurriculumSchedule::GroundTruth,
                ],
                seeds: vec![0, 1, 2],
            },
        }
    }
}

struct Entry {
    value: String,
    line: usize,
}

/// Raw `section.key → value` map with line numbers.
struct Document {
    entries: BTreeMap<String, Entry>,
}

const SECTIONS: [&str; 11] = [
    "experiment", "data", "net", "teacher", "distill", "schedule", "gan", "sample", "eval",
    "profile", "ablate",
];

fn parse_document(text: &str, extra_sections: &[&str]) -> Result<Document> {
    let mut entries = BTreeMap::new();
    let mut section: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let s = raw.trim();
        if s.is_empty() || s.starts_with('#') || s.starts_with(';') {
            continue;
        }
        if let Some(name) = s.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| at_line(Error::config(s, "unterminated section header"), line))?
                .trim();
            if !SECTIONS.contains(&name) && !extra_sections.contains(&name) {
                return Err(at_line(Error::config(name, "unknown section"), line));
            }
            section = Some(name.to_string());
            continue;
        }
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| at_line(Error::config(s, "expected `key = value`"), line))?;
        let sec = section
            .as_ref()
            .ok_or_else(|| at_line(Error::config(k.trim(), "key outside any section"), line))?;
        let key = format!("{sec}.{}", k.trim());
        if entries.contains_key(&key) {
            return Err(at_line(Error::config(key, "duplicate key"), line));
        }
        entries.insert(
            key,
            Entry {
                value: v.trim().to_string(),
                line,
            },
        );
    }
    Ok(Document { entries })
}

fn at_line(e: Error, line: usize) -> Error {
    match e {
        Error::Config { key, msg, .. } => Error::Config {
            key,
            line: Some(line),
            msg,
        },
        other => other,
    }
}

impl Document {
    /// Removes and parses `key`, keeping `default` when absent.
    fn take<T>(&mut self, key: &str, default: T, parse: impl Fn(&str) -> Result<T>) -> Result<T> {
        match self.entries.remove(key) {
            None => Ok(default),
            Some(e) => parse(&e.value).map_err(|err| {
                let msg = match err {
                    Error::Config { msg, .. } => msg,
                    other => other.to_string(),
                };
                Error::Config {
                    key: key.to_string(),
                    line: Some(e.line),
                    msg,
                }
            }),
        }
    }

    fn take_num<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        self.take(key, default, |v| {
            v.parse()
                .map_err(|_| Error::config(key, format!("cannot parse `{v}`")))
        })
    }

    fn take_list<T: std::str::FromStr>(&mut self, key: &str, default: Vec<T>) -> Result<Vec<T>> {
        self.take(key, default, |v| parse_list(v, ','))
    }

    fn finish(self, allowed_prefix: &[&str]) -> Result<BTreeMap<String, String>> {
        let mut extra = BTreeMap::new();
        for (k, e) in self.entries {
            if allowed_prefix.iter().any(|p| k.starts_with(p)) {
                extra.insert(k, e.value);
            } else {
                return Err(Error::Config {
                    key: k,
                    line: Some(e.line),
                    msg: "unknown key".into(),
                });
            }
        }
        Ok(extra)
    }
}

fn parse_list<T: std::str::FromStr>(v: &str, sep: char) -> Result<Vec<T>> {
    v.split(sep)
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.parse()
                .map_err(|_| Error::config("list", format!("cannot parse element `{p}`")))
        })
        .collect()
}

fn parse_bool(v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::config("bool", format!("expected true or false, got `{v}`"))),
    }
}

fn join<T: fmt::Display>(v: &[T], sep: &str) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(sep)
}

fn config_err(key: &str, e: Error) -> Error {
    match e {
        Error::Config { msg, line, .. } => Error::Config {
            key: key.to_string(),
            line,
            msg,
        },
        other => other,
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with(text, &[]).map(|(c, _)| c)
    }

    /// Parses a document that may carry the extra `sections`, whose entries
    /// are returned raw as `section.key → value`.
    pub fn parse_with(text: &str, sections: &[&str]) -> Result<(Self, BTreeMap<String, String>)> {
        let mut doc = parse_document(text, sections)?;
        let d = RunConfig::default();

        let seed = doc.take_num("experiment.seed", d.seed)?;

        let mut kind: DistributionKind = doc.take("data.kind", d.data.kind, |v| v.parse())?;
        let scale = doc.take_num("data.scale", d.data.scale)?;
        if let DistributionKind::SingleGaussian { mean, std } = &mut kind {
            let m: Vec<f64> = doc.take_list("data.mean", mean.to_vec())?;
            *mean = m
                .try_into()
                .map_err(|_| Error::config("data.mean", "expects two comma-separated numbers"))?;
            *std = doc.take_num("data.std", *std)?;
        }
        let data = DistributionSpec { kind, scale };
        data.validate().map_err(|e| config_err("data", e))?;
        let data_n = doc.take_num("data.n", d.data_n)?;

        let net = NetConfig {
            hidden: doc.take_list("net.hidden", d.net.hidden.clone())?,
            activation: doc.take("net.activation", d.net.activation, |v| v.parse())?,
            time_features: doc.take_num("net.time_features", d.net.time_features)?,
        };

        let teacher = TeacherConfig {
            iterations: doc.take_num("teacher.iterations", d.teacher.iterations)?,
            batch: doc.take_num("teacher.batch", d.teacher.batch)?,
            lr: doc.take_num("teacher.lr", d.teacher.lr)?,
            seed,
        };
        teacher.validate()?;

        let dd = &d.distill;
        let distill = DistillConfig {
            schedule: doc.take("schedule.strategy", dd.schedule, |v| v.parse())?,
            distance: doc.take("distill.distance", dd.distance, |v| v.parse())?,
            iterations: doc.take_num("distill.iterations", dd.iterations)?,
            batch: doc.take_num("distill.batch", dd.batch)?,
            seed,
            lr: doc.take_num("distill.lr", dd.lr)?,
            target_ema: doc.take_num("distill.target_ema", dd.target_ema)?,
            student_ema: doc.take_num("distill.student_ema", dd.student_ema)?,
            gan: GanConfig {
                enabled: doc.take("gan.enabled", dd.gan.enabled, parse_bool)?,
                lambda: doc.take_num("gan.lambda", dd.gan.lambda)?,
                lr: doc.take_num("gan.lr", dd.gan.lr)?,
                literal: doc.take("gan.literal", dd.gan.literal, parse_bool)?,
            },
            peak: doc.take_num("distill.peak", dd.peak)?,
            kdc_floor: doc.take_num("distill.kdc_floor", dd.kdc_floor)?,
            calibration_batches: doc.take_num("distill.calibration_batches", dd.calibration_batches)?,
            t_max: doc.take_num("distill.t_max", dd.t_max)?,
        };
        distill.validate()?;

        let sample = SampleConfig {
            n: doc.take_num("sample.n", d.sample.n)?,
            nfe: doc.take_num("sample.nfe", d.sample.nfe)?,
        };
        let eval = EvalConfig {
            metrics: doc.take_list("eval.metrics", d.eval.metrics.clone())?,
            projections: doc.take_num("eval.projections", d.eval.projections)?,
            samples: doc.take_num("eval.samples", d.eval.samples)?,
        };
        let profile = ProfileConfig {
            bins: doc.take_num("profile.bins", d.profile.bins)?,
            samples: doc.take_num("profile.samples", d.profile.samples)?,
            batch: doc.take_num("profile.batch", d.profile.batch)?,
            l: doc.take_num("profile.l", d.profile.l)?,
            t: doc.take_num("profile.t", d.profile.t)?,
            l_grid: doc.take_list("profile.l_grid", d.profile.l_grid.clone())?,
            solver_step: doc.take_num("profile.solver_step", d.profile.solver_step)?,
        };
        let ablate = AblateConfig {
            strategies: doc.take("ablate.strategies", d.ablate.strategies.clone(), |v| {
                parse_list(v, ';')
            })?,
            seeds: doc.take_list("ablate.seeds", d.ablate.seeds.clone())?,
        };

        let prefixes: Vec<String> = sections.iter().map(|s| format!("{s}.")).collect();
        let prefixes: Vec<&str> = prefixes.iter().map(String::as_str).collect();
        let extra = doc.finish(&prefixes)?;
        let cfg = RunConfig {
            seed,
            data,
            data_n,
            net,
            teacher,
            distill,
            sample,
            eval,
            profile,
            ablate,
        };
        cfg.validate()?;
        Ok((cfg, extra))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: usize, key: &str| {
            if v == 0 {
                Err(Error::config(key, "must be at least 1"))
            } else {
                Ok(())
            }
        };
        positive(self.data_n, "data.n")?;
        positive(self.sample.n, "sample.n")?;
        positive(self.sample.nfe, "sample.nfe")?;
        positive(self.eval.projections, "eval.projections")?;
        positive(self.eval.samples, "eval.samples")?;
        positive(self.profile.bins, "profile.bins")?;
        positive(self.profile.samples, "profile.samples")?;
        positive(self.profile.batch, "profile.batch")?;
        if self.net.hidden.contains(&0) {
            return Err(Error::config("net.hidden", "widths must be positive"));
        }
        if !self.net.time_features.is_multiple_of(2) {
            return Err(Error::config("net.time_features", "must be even"));
        }
        for m in &self.eval.metrics {
            if !crate::eval::METRIC_NAMES.contains(&m.as_str()) {
                return Err(Error::config("eval.metrics", format!("unknown metric `{m}`")));
            }
        }
        if self.ablate.strategies.is_empty() || self.ablate.seeds.is_empty() {
            return Err(Error::config("ablate", "needs at least one strategy and one seed"));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Overrides the root seed of every stage.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.teacher.seed = seed;
        self.distill.seed = seed;
        self
    }

    pub fn architecture(&self) -> Architecture {
        self.net.architecture(self.data.dim())
    }

    pub fn ablation_eval(&self) -> AblationEval {
        AblationEval {
            samples: self.eval.samples,
            projections: self.eval.projections,
        }
    }
}

impl fmt::Display for RunConfig {
    /// Canonical form: every key, in a fixed order. Parsing it back yields
    /// an equal config.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "[experiment]\nseed = {}\n", self.seed)?;
        writeln!(f, "[data]\nkind = {}\nscale = {}", self.data.kind, self.data.scale)?;
        if let DistributionKind::SingleGaussian { mean, std } = self.data.kind {
            writeln!(f, "mean = {},{}\nstd = {}", mean[0], mean[1], std)?;
        }
        writeln!(f, "n = {}\n", self.data_n)?;
        writeln!(
            f,
            "[net]\nhidden = {}\nactivation = {}\ntime_features = {}\n",
            join(&self.net.hidden, ","),
            self.net.activation,
            self.net.time_features
        )?;
        let t = &self.teacher;
        writeln!(f, "[teacher]\niterations = {}\nbatch = {}\nlr = {}\n", t.iterations, t.batch, t.lr)?;
        let d = &self.distill;
        writeln!(
            f,
            "[distill]\niterations = {}\nbatch = {}\nlr = {}\ntarget_ema = {}\nstudent_ema = {}\n\
             distance = {}\npeak = {}\nkdc_floor = {}\ncalibration_batches = {}\nt_max = {}\n",
            d.iterations,
            d.batch,
            d.lr,
            d.target_ema,
            d.student_ema,
            d.distance,
            d.peak,
            d.kdc_floor,
            d.calibration_batches,
            d.t_max
        )?;
        writeln!(f, "[schedule]\nstrategy = {}\n", d.schedule)?;
        writeln!(
            f,
            "[gan]\nenabled = {}\nlambda = {}\nlr = {}\nliteral = {}\n",
            d.gan.enabled, d.gan.lambda, d.gan.lr, d.gan.literal
        )?;
        writeln!(f, "[sample]\nn = {}\nnfe = {}\n", self.sample.n, self.sample.nfe)?;
        writeln!(
            f,
            "[eval]\nmetrics = {}\nprojections = {}\nsamples = {}\n",
            join(&self.eval.metrics, ","),
            self.eval.projections,
            self.eval.samples
        )?;
        let p = &self.profile;
        writeln!(
            f,
            "[profile]\nbins = {}\nsamples = {}\nbatch = {}\nl = {}\nt = {}\nl_grid = {}\nsolver_step = {}\n",
            p.bins,
            p.samples,
            p.batch,
            p.l,
            p.t,
            join(&p.l_grid, ","),
            p.solver_step
        )?;
        write!(
            f,
            "[ablate]\nstrategies = {}\nseeds = {}\n",
            join(&self.ablate.strategies, "; "),
            join(&self.ablate.seeds, ",")
        )
    }
}

/// Config echo plus run facts, written next to command outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub config: RunConfig,
    pub facts: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(config: RunConfig) -> Self {
        Self {
            config,
            facts: BTreeMap::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl fmt::Display) {
        self.facts.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.facts.get(key).map(String::as_str)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let (config, extra) = RunConfig::parse_with(text, &["manifest"])?;
        let facts = extra
            .into_iter()
            .map(|(k, v)| (k.trim_start_matches("manifest.").to_string(), v))
            .collect();
        Ok(Self { config, facts })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

impl fmt::Display for Manifest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.config)?;
        writeln!(f, "[manifest]")?;
        for (k, v) in &self.facts {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_default() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn display_round_trips() {
        let mut cfg = RunConfig {
            data: DistributionSpec {
                kind: DistributionKind::SingleGaussian {
                    mean: [0.5, -1.25],
                    std: 0.1,
                },
                scale: 1.0,
            },
            ..RunConfig::default()
        };
        cfg.distill.lr = 1.0 / 3.0;
        cfg.distill.gan.enabled = true;
        cfg.ablate.strategies.push("ccm s=0.03 t_kdc=cal+10".parse().unwrap());
        let text = cfg.to_string();
        assert_eq!(RunConfig::parse(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_key_is_named_with_line() {
        let err = RunConfig::parse("[teacher]\niterations = 5\nlearning_rate = 1\n").unwrap_err();
        match err {
            Error::Config { key, line, .. } => {
                assert_eq!(key, "teacher.learning_rate");
                assert_eq!(line, Some(3));
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn bad_values_name_their_key() {
        for (text, key) in [
            ("[distill]\nlr = fast\n", "distill.lr"),
            ("[data]\nkind = spiral\n", "data.kind"),
            ("[schedule]\nstrategy = static n=0\n", "schedule.strategy"),
            ("seed = 1\n", "seed"),
            ("[nope]\n", "nope"),
        ] {
            match RunConfig::parse(text).unwrap_err() {
                Error::Config { key: k, .. } => assert_eq!(k, key, "{text}"),
                other => panic!("{other}"),
            }
        }
    }

    #[test]
    fn manifest_round_trips() {
        let mut m = Manifest::new(RunConfig::default().with_seed(7));
        m.set("calibrated_t_kdc", 63.5);
        m.set("warm_start", "teacher");
        let back = Manifest::parse(&m.to_string()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.get("calibrated_t_kdc"), Some("63.5"));
    }

    #[test]
    fn strategies_split_on_semicolons() {
        let cfg = RunConfig::parse("[ablate]\nstrategies = ccm; static l=0.06 n=2 s=0.03\nseeds = 4\n").unwrap();
        assert_eq!(cfg.ablate.strategies.len(), 2);
        assert_eq!(cfg.ablate.seeds, vec![4]);
    }
}
