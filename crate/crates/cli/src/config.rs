//! Run configuration: a TOML manifest whose values are overridden by flags.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use ssmrisk::risk::{ModelConfig, ModelId};
use ssmrisk::stats::EvalConfig;

use crate::InputArgs;

/// Invalid combination of arguments; maps to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Highd,
    Generic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    #[value(name = "cutin", alias = "cut-in")]
    CutIn,
    CarFollowing,
    Tailgate,
    Overtake,
    Empty,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub format: Option<InputFormat>,
    pub inputs: Vec<PathBuf>,
    pub recordings: Vec<String>,
    pub data_dir: Option<PathBuf>,
    pub layout: Option<PathBuf>,
    pub frame_rate: Option<f64>,
    pub configs: Vec<String>,
    pub ae: Option<PathBuf>,
    pub ae_linear: Option<PathBuf>,
    pub ae_tanh: Option<PathBuf>,
    pub ego: Option<u32>,
    pub significance: Option<f64>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub model: Option<ModelConfig>,
    pub eval: Option<EvalConfig>,
}

/// Where the scenes come from, after merging flags and the manifest.
#[derive(Debug, Clone)]
pub enum InputSpec {
    HighD { data_dir: PathBuf, recordings: Vec<String> },
    Generic { files: Vec<PathBuf>, layout: Option<PathBuf>, frame_rate: f64 },
}

#[derive(Debug, Clone)]
pub struct RiskRun {
    pub input: InputSpec,
    pub model_id: ModelId,
    pub model: ModelConfig,
    pub ae: Option<PathBuf>,
    pub ego: Option<u32>,
    pub out: PathBuf,
}

#[derive(Debug, Clone)]
pub struct EvalRun {
    pub input: InputSpec,
    pub models: Vec<ModelId>,
    pub model: ModelConfig,
    pub eval: EvalConfig,
    pub ae_linear: Option<PathBuf>,
    pub ae_tanh: Option<PathBuf>,
    pub out: PathBuf,
}

/// Expands `1-3,7` into `01, 02, 03, 07`; non-numeric ids pass through.
pub fn expand_recordings(specs: &[String]) -> anyhow::Result<Vec<String>> {
    let mut out = Vec::new();
    for part in specs.iter().flat_map(|s| s.split(',')).map(str::trim).filter(|s| !s.is_empty()) {
        let pad = |n: u32| format!("{n:02}");
        if let Some((a, b)) = part.split_once('-') {
            let (a, b): (u32, u32) = (
                a.trim().parse().map_err(|_| usage(format!("bad recording range `{part}`")))?,
                b.trim().parse().map_err(|_| usage(format!("bad recording range `{part}`")))?,
            );
            if a > b {
                return Err(usage(format!("empty recording range `{part}`")));
            }
            out.extend((a..=b).map(pad));
        } else if let Ok(n) = part.parse::<u32>() {
            out.push(pad(n));
        } else {
            out.push(part.to_string());
        }
    }
    Ok(out)
}

pub fn parse_models(ids: &[String]) -> anyhow::Result<Vec<ModelId>> {
    let mut models = Vec::new();
    for id in ids.iter().flat_map(|s| s.split(',')).map(str::trim).filter(|s| !s.is_empty()) {
        let m: ModelId = id.parse().map_err(|e: ssmrisk::Error| usage(e.to_string()))?;
        if !models.contains(&m) {
            models.push(m);
        }
    }
    Ok(models)
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<RunConfig> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if let Some(m) = &cfg.model {
            m.validate().with_context(|| format!("model section of {}", path.display()))?;
        }
        Ok(cfg)
    }

    pub fn input(&self, args: &InputArgs) -> anyhow::Result<InputSpec> {
        let format = args.format.or(self.format).unwrap_or(InputFormat::Generic);
        match format {
            InputFormat::Highd => {
                let data_dir = args
                    .data_dir
                    .clone()
                    .or_else(|| self.data_dir.clone())
                    .ok_or_else(|| usage("HighD input needs --data-dir or SSMRISK_DATA_DIR"))?;
                let specs = if args.recordings.is_empty() { &self.recordings } else { &args.recordings };
                let recordings = expand_recordings(specs)?;
                if recordings.is_empty() {
                    return Err(usage("HighD input needs at least one --recording"));
                }
                Ok(InputSpec::HighD { data_dir, recordings })
            }
            InputFormat::Generic => {
                let files = if args.inputs.is_empty() { self.inputs.clone() } else { args.inputs.clone() };
                if files.is_empty() {
                    return Err(usage("no input files given"));
                }
                let frame_rate = args.frame_rate.or(self.frame_rate).unwrap_or(25.0);
                if !(frame_rate > 0.0 && frame_rate.is_finite()) {
                    return Err(usage(format!("frame rate must be positive, got {frame_rate}")));
                }
                Ok(InputSpec::Generic { files, layout: args.layout.clone().or(self.layout.clone()), frame_rate })
            }
        }
    }

    fn model_config(&self) -> ModelConfig {
        self.model.clone().unwrap_or_default()
    }

    fn out(&self, flag: Option<PathBuf>) -> PathBuf {
        flag.or(self.out.clone()).unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn risk(
        &self,
        args: &InputArgs,
        config: Option<String>,
        ae: Option<PathBuf>,
        ego: Option<u32>,
        out: Option<PathBuf>,
    ) -> anyhow::Result<RiskRun> {
        let model = self.model_config();
        let model_id = match config {
            Some(id) => parse_models(&[id])?.into_iter().next().ok_or_else(|| usage("empty --config"))?,
            None => match self.configs.as_slice() {
                [] => model.model_id()?,
                [one] => parse_models(std::slice::from_ref(one))?[0],
                _ => return Err(usage("risk takes a single model; use eval for several")),
            },
        };
        Ok(RiskRun {
            input: self.input(args)?,
            model_id,
            model,
            ae: ae.or(self.ae.clone()),
            ego: ego.or(self.ego),
            out: self.out(out),
        })
    }

    pub fn eval(
        &self,
        args: &InputArgs,
        configs: Vec<String>,
        ae_linear: Option<PathBuf>,
        ae_tanh: Option<PathBuf>,
        significance: Option<f64>,
        out: Option<PathBuf>,
    ) -> anyhow::Result<EvalRun> {
        let ids = if configs.is_empty() { self.configs.clone() } else { configs };
        let models = if ids.is_empty() { ModelId::grid() } else { parse_models(&ids)? };
        if models.is_empty() {
            return Err(usage("no models selected"));
        }
        let mut eval = self.eval.unwrap_or_default();
        if let Some(s) = significance.or(self.significance) {
            eval.significance = s;
        }
        if !(eval.significance > 0.0 && eval.significance < 1.0) {
            return Err(usage(format!("significance must lie in (0, 1), got {}", eval.significance)));
        }
        Ok(EvalRun {
            input: self.input(args)?,
            models,
            model: self.model_config(),
            eval,
            ae_linear: ae_linear.or(self.ae_linear.clone()),
            ae_tanh: ae_tanh.or(self.ae_tanh.clone()),
            out: self.out(out),
        })
    }
}
