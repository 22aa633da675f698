//! Flat `key = value` configuration files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use iqpkit::train::{GeneratorInit, MeasureMode, TrainConfig};
use iqpkit::Shots;

use crate::CliError;

/// Raw entries with the line each came from.
#[derive(Debug)]
pub struct KeyValues {
    entries: BTreeMap<String, (usize, String)>,
    base: PathBuf,
}

impl KeyValues {
    pub fn parse(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::config(i + 1, format!("expected `key = value`, got {line:?}")))?;
            let key = k.trim().to_string();
            if let Some((prev, _)) = entries.insert(key.clone(), (i + 1, v.trim().to_string())) {
                return Err(CliError::config(i + 1, format!("duplicate key {key:?} (first on line {prev})")));
            }
        }
        Ok(Self {
            entries,
            base: base.to_path_buf(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Removes and parses `key`.
    pub fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|e| CliError::config(line, format!("bad value for {key}: {e}"))),
        }
    }

    fn take_or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.take(key)?.unwrap_or(default))
    }

    /// Path value, relative to the config file's directory.
    pub fn take_path(&mut self, key: &str) -> Result<Option<PathBuf>, CliError> {
        Ok(self.take::<String>(key)?.map(|p| {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                self.base.join(p)
            }
        }))
    }

    fn take_list(&mut self, key: &str) -> Result<Option<Vec<u64>>, CliError> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((line, v)) => v
                .split(',')
                .map(|s| s.trim().parse::<u64>())
                .collect::<Result<Vec<_>, _>>()
                .map(Some)
                .map_err(|e| CliError::config(line, format!("bad list for {key}: {e}"))),
        }
    }

    fn line_of(&self, key: &str) -> usize {
        self.entries.get(key).map(|(l, _)| *l).unwrap_or(0)
    }

    /// Fails on the first key nobody consumed.
    pub fn finish(self) -> Result<(), CliError> {
        match self.entries.into_iter().min_by_key(|(_, (line, _))| *line) {
            None => Ok(()),
            Some((k, (line, _))) => Err(CliError::config(line, format!("unknown key {k:?}"))),
        }
    }
}

/// A training run as read from a config file.
#[derive(Clone, Debug)]
pub struct TrainSpec {
    pub dataset: PathBuf,
    pub test: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub n: Option<usize>,
    pub seeds: Vec<u64>,
    pub train: TrainConfig,
}

pub fn parse_train(mut kv: KeyValues) -> Result<TrainSpec, CliError> {
    let d = TrainConfig::default();
    let dataset = kv
        .take_path("dataset")?
        .ok_or_else(|| CliError::Config("missing required key `dataset`".into()))?;
    let test = kv.take_path("test")?;
    let target = kv.take_path("target")?;
    let n = kv.take("n")?;

    let measure_line = kv.line_of("measure");
    let measure_name: String = kv.take_or("measure", "adaptive".to_string())?;
    let sigma: f64 = kv.take_or("sigma", 0.0)?;
    let warm_k: f64 = kv.take_or("warm_k", 10.0)?;
    let measure = match measure_name.as_str() {
        "gaussian" => MeasureMode::Gaussian { sigma },
        "adaptive" => MeasureMode::Adaptive { sigma },
        "adaptive_warm" => MeasureMode::AdaptiveWarm { k: warm_k },
        other => return Err(CliError::config(measure_line, format!("unknown measure {other:?}"))),
    };

    let shots_total: usize = kv.take_or("shots", d.shots.total())?;
    let shots = match (kv.take::<usize>("shots_hidden")?, kv.take::<usize>("shots_visible")?) {
        (None, None) => Shots::Paired(shots_total),
        (Some(hidden), Some(visible)) => Shots::Cross { hidden, visible },
        _ => return Err(CliError::Config("shots_hidden and shots_visible go together".into())),
    };

    let init_line = kv.line_of("init");
    let init_name: String = kv.take_or("init", "moment_match".to_string())?;
    let init_scale: f64 = kv.take_or("init_scale", 0.1)?;
    let init = match init_name.as_str() {
        "moment_match" => GeneratorInit::MomentMatch,
        "moment_match_jitter" => GeneratorInit::MomentMatchJitter { scale: init_scale },
        "random_small" => GeneratorInit::RandomSmall { scale: init_scale },
        other => return Err(CliError::config(init_line, format!("unknown init {other:?}"))),
    };

    let train = TrainConfig {
        m_hidden: kv.take_or("m", d.m_hidden)?,
        max_weight: kv.take_or("max_weight", d.max_weight)?,
        measure,
        iterations: kv.take_or("iterations", d.iterations)?,
        freq_batch: kv.take_or("freq_batch", d.freq_batch)?,
        shots,
        eval_every: kv.take_or("eval_every", d.eval_every)?,
        eval_batch: kv.take_or("eval_batch", d.eval_batch)?,
        generator_lr: kv.take_or("generator_lr", d.generator_lr)?,
        kernel_lr: kv.take_or("kernel_lr", d.kernel_lr)?,
        kernel_decay: kv.take_or("kernel_decay", d.kernel_decay)?,
        kernel_decay_every: kv.take_or("kernel_decay_every", d.kernel_decay_every)?,
        beta1: kv.take_or("beta1", d.beta1)?,
        beta2: kv.take_or("beta2", d.beta2)?,
        init,
        wall_time: kv.take_or("wall_time", d.wall_time)?,
    };
    let seeds = kv.take_list("seeds")?.unwrap_or_else(|| vec![0]);
    kv.finish()?;
    if seeds.is_empty() {
        return Err(CliError::Config("seed list is empty".into()));
    }
    train.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(TrainSpec {
        dataset,
        test,
        target,
        n,
        seeds,
        train,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kv(text: &str) -> KeyValues {
        KeyValues::parse(text, Path::new("/cfg")).unwrap()
    }

    #[test]
    fn parses_a_full_config() {
        let spec = parse_train(kv("# comment\ndataset = d.txt\nmeasure = gaussian # inline\nsigma = 0.5\n\
             iterations = 10\nseeds = 1, 2,3\nshots_hidden = 4\nshots_visible = 6\n"))
        .unwrap();
        assert_eq!(spec.dataset, PathBuf::from("/cfg/d.txt"));
        assert_eq!(spec.seeds, vec![1, 2, 3]);
        assert_eq!(spec.train.measure, MeasureMode::Gaussian { sigma: 0.5 });
        assert_eq!(spec.train.shots, Shots::Cross { hidden: 4, visible: 6 });
        assert_eq!(spec.train.iterations, 10);
        assert_eq!(spec.train.freq_batch, 1000);
    }

    #[test]
    fn reports_line_numbers() {
        let err = parse_train(kv("dataset = d\n\nitrations = 5\n")).unwrap_err();
        assert_eq!(err.to_string(), "config line 3: unknown key \"itrations\"");
        let err = parse_train(kv("dataset = d\niterations = five\n")).unwrap_err();
        assert!(err.to_string().starts_with("config line 2: bad value for iterations"));
        let err = KeyValues::parse("a = 1\nnonsense\n", Path::new(".")).unwrap_err();
        assert!(err.to_string().starts_with("config line 2"));
        let err = parse_train(kv("dataset = d\nmeasure = laplace\n")).unwrap_err();
        assert!(err.to_string().starts_with("config line 2"));
    }
}
