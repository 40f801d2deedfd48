use std::io::Write;

use serde::{Deserialize, Serialize};
use tagvocab::synth::{
    gen_pitman_yor_stream, gen_zipf_stream, write_folksonomy, write_stream_posts, FolksonomyGenConfig,
    FolksonomyGenerator, PitmanYorConfig, PostLengthModel, ZipfConfig,
};

use crate::args::{Model, SynthArgs};
use crate::error::{CliError, Result};
use crate::input::create_output;
use crate::run_report::RunReport;

pub const DEFAULT_LENGTH: u64 = 1_000_000;

/// Generator parameters from `--config`; every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthFile {
    pub n: Option<u64>,
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    pub vocabulary_cap: Option<u64>,
    pub d: Option<f64>,
    pub theta: Option<f64>,
    #[serde(default)]
    pub folksonomy: FolksonomyOverrides,
}

/// Changes to the folksonomy preset.
#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FolksonomyOverrides {
    pub mean_post_length: Option<f64>,
    pub length_tail_exponent: Option<f64>,
    pub length_crossover: Option<u32>,
    pub resource_popularity: Option<f64>,
    pub user_activity: Option<f64>,
    pub local_discount: Option<f64>,
    pub local_strength: Option<f64>,
    pub global_discount: Option<f64>,
    pub global_strength: Option<f64>,
    pub global_coupling: Option<f64>,
}

impl FolksonomyOverrides {
    fn apply(&self, cfg: &mut FolksonomyGenConfig) -> Result<()> {
        if self.mean_post_length.is_some() || self.length_tail_exponent.is_some() || self.length_crossover.is_some() {
            let m = cfg.post_length_model;
            cfg.post_length_model = PostLengthModel::with_mean(
                self.mean_post_length.unwrap_or_else(|| m.mean()),
                self.length_tail_exponent.unwrap_or(m.tail_exponent),
                self.length_crossover.unwrap_or(m.crossover),
            )?;
        }
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut cfg.resource_popularity, self.resource_popularity);
        set(&mut cfg.user_activity, self.user_activity);
        set(&mut cfg.local_tag_process.discount, self.local_discount);
        set(&mut cfg.local_tag_process.strength, self.local_strength);
        set(&mut cfg.global_tag_process.discount, self.global_discount);
        set(&mut cfg.global_tag_process.strength, self.global_strength);
        set(&mut cfg.global_coupling, self.global_coupling);
        Ok(())
    }
}

pub fn load_config(args: &SynthArgs) -> Result<SynthFile> {
    match &args.config {
        None => Ok(SynthFile::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
        }
    }
}

fn need<T>(v: Option<T>, what: &str) -> Result<T> {
    v.ok_or_else(|| CliError::Usage(format!("missing --{what}")))
}

pub fn synth(args: &SynthArgs, seed: Option<u64>, report: &mut RunReport) -> Result<()> {
    let file = load_config(args)?;
    let seed = seed.or(file.seed).unwrap_or(0);
    report.seed = seed;
    let n = args.n.or(file.n).unwrap_or(DEFAULT_LENGTH);
    if args.preset.is_some() && args.model != Model::Folksonomy {
        return Err(CliError::Usage("--preset applies to the folksonomy model".into()));
    }
    let mut out = create_output(&args.out)?;
    match args.model {
        Model::Zipf => {
            let cfg = ZipfConfig {
                alpha: need(args.alpha.or(file.alpha), "alpha")?,
                vocabulary_cap: args.vocabulary_cap.or(file.vocabulary_cap),
                seed,
            };
            let stream = gen_zipf_stream(&cfg, n)?;
            report.param("model", "zipf");
            report.param("config", &cfg);
            report.param("n", n);
            write_stream_posts(stream, &mut out)?;
        }
        Model::Py => {
            let cfg =
                PitmanYorConfig::new(need(args.d.or(file.d), "d")?, need(args.theta.or(file.theta), "theta")?, seed);
            let stream = gen_pitman_yor_stream(&cfg, n)?;
            report.param("model", "pitman_yor");
            report.param("config", cfg);
            report.param("n", n);
            write_stream_posts(stream, &mut out)?;
        }
        Model::Folksonomy => {
            let mut cfg = FolksonomyGenConfig::paper_like(n, seed);
            file.folksonomy.apply(&mut cfg)?;
            if let Some(d) = args.d {
                cfg.local_tag_process.discount = d;
            }
            if let Some(t) = args.theta {
                cfg.local_tag_process.strength = t;
            }
            let gen = FolksonomyGenerator::new(cfg.clone())?;
            report.param("model", "folksonomy");
            report.param("config", &cfg);
            let census = write_folksonomy(gen, &mut out)?;
            report.summary = Some(census.to_summary());
            if let Some(p) = &args.census {
                let mut w = create_output(p)?;
                w.write_all(
                    (serde_json::to_string_pretty(&census.to_summary()).expect("serializes") + "\n").as_bytes(),
                )?;
                w.flush()?;
                report.artifact(p.clone(), "generator_census");
            }
        }
    }
    out.flush()?;
    report.artifact(args.out.clone(), "synthetic_posts");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_keys() {
        let f: SynthFile = toml::from_str("n = 10\nd = 0.5\n[folksonomy]\nglobal_coupling = 0.1\n").unwrap();
        assert_eq!(f.n, Some(10));
        let mut cfg = FolksonomyGenConfig::paper_like(10, 0);
        f.folksonomy.apply(&mut cfg).unwrap();
        assert_eq!(cfg.global_coupling, 0.1);
        assert!(toml::from_str::<SynthFile>("bogus = 1\n").is_err());
    }

    #[test]
    fn mean_override_recalibrates_lengths() {
        let o = FolksonomyOverrides { mean_post_length: Some(2.0), ..Default::default() };
        let mut cfg = FolksonomyGenConfig::paper_like(10, 0);
        o.apply(&mut cfg).unwrap();
        assert!((cfg.post_length_model.mean() - 2.0).abs() < 1e-6);
    }
}
