//! Adversarial training: the generator descends the MMD estimate while an
//! FVSBN critic (in adaptive mode) ascends it.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::time::Instant;

use rand::Rng;

use crate::adam::AdamState;
use crate::circuit::IqpCircuit;
use crate::dist::{tvd, BitString, Dataset, ProbVector};
use crate::error::{Error, Result};
use crate::mmd::{mmd_batch, sample_frequencies};
use crate::rng::{derive_seed, stream_rng};
use crate::sim::{exact_visible_distribution, Shots};
use crate::spectral::{Fvsbn, GaussianMeasure, SpectralMeasure, FVSBN_EPS};

/// Widest model for which evaluation runs exact simulation.
pub const MAX_EVAL_BITS: usize = 16;

const INIT_TAG: u64 = 0x696e_6974;
const EVAL_TAG: u64 = 0x6576_616c;

/// `1e-4 · 0.9^{⌊iter/500⌋}`.
pub fn kernel_lr(iter: usize) -> f64 {
    TrainConfig::default().kernel_lr_at(iter)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MeasureMode {
    /// Fixed Gaussian kernel of bandwidth `sigma`.
    Gaussian { sigma: f64 },
    /// FVSBN critic started at the Gaussian measure of bandwidth `sigma`.
    Adaptive { sigma: f64 },
    /// FVSBN critic started at the sparse warm measure with strength `k`.
    AdaptiveWarm { k: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GeneratorInit {
    /// Single-qubit angles reproduce the data's one-bit marginals; all
    /// other angles are zero.
    MomentMatch,
    /// Every angle uniform in `[−scale, scale]`.
    RandomSmall { scale: f64 },
    /// [`GeneratorInit::MomentMatch`] plus uniform noise in
    /// `[−scale, scale]` on every angle.
    MomentMatchJitter { scale: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub m_hidden: usize,
    pub max_weight: usize,
    pub measure: MeasureMode,
    pub iterations: usize,
    pub freq_batch: usize,
    pub shots: Shots,
    pub eval_every: usize,
    /// Generated samples for the empirical TVD.
    pub eval_batch: usize,
    pub generator_lr: f64,
    pub kernel_lr: f64,
    pub kernel_decay: f64,
    pub kernel_decay_every: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub init: GeneratorInit,
    /// Record wall-clock milliseconds in the log (makes logs run-dependent).
    pub wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            m_hidden: 0,
            max_weight: 2,
            measure: MeasureMode::Adaptive { sigma: 0.0 },
            iterations: 1000,
            freq_batch: 1000,
            shots: Shots::Paired(1000),
            eval_every: 100,
            eval_batch: 1000,
            generator_lr: 1e-3,
            kernel_lr: 1e-4,
            kernel_decay: 0.9,
            kernel_decay_every: 500,
            beta1: 0.9,
            beta2: 0.999,
            init: GeneratorInit::MomentMatch,
            wall_time: false,
        }
    }
}

impl TrainConfig {
    pub fn kernel_lr_at(&self, iter: usize) -> f64 {
        self.kernel_lr * self.kernel_decay.powi((iter / self.kernel_decay_every) as i32)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::invalid(msg.to_string()));
        if self.max_weight == 0 {
            return bad("max_weight must be positive");
        }
        if self.iterations == 0 || self.eval_every == 0 || self.eval_batch == 0 {
            return bad("iterations, eval_every and eval_batch must be positive");
        }
        if self.freq_batch < 2 {
            return bad("freq_batch must be at least 2");
        }
        self.shots.halves()?;
        if self.kernel_decay_every == 0 {
            return bad("kernel_decay_every must be positive");
        }
        for (name, v) in [
            ("generator_lr", self.generator_lr),
            ("kernel_lr", self.kernel_lr),
            ("kernel_decay", self.kernel_decay),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("{name} must be finite and >= 0")));
            }
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1)")));
            }
        }
        match self.measure {
            MeasureMode::Gaussian { sigma } | MeasureMode::Adaptive { sigma } if !(sigma >= 0.0) => {
                bad("sigma must be >= 0")
            }
            MeasureMode::AdaptiveWarm { k } if !k.is_finite() => bad("warm strength must be finite"),
            _ => Ok(()),
        }
    }
}

/// Training inputs held in memory.
#[derive(Clone, Debug)]
pub struct TrainData {
    pub train: Dataset,
    /// Held-out rows for the empirical TVD; the training rows are used
    /// when absent.
    pub test: Option<Dataset>,
    /// Ground truth for the exact TVD.
    pub target: Option<ProbVector>,
}

impl TrainData {
    fn check(&self) -> Result<()> {
        let n = self.train.n();
        let widths = self
            .test
            .iter()
            .map(|d| d.n())
            .chain(self.target.iter().map(|t| t.n()));
        for w in widths {
            if w != n {
                return Err(Error::WidthMismatch { expected: n, actual: w });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub iter: usize,
    pub mmd: f64,
    pub exact_tvd: Option<f64>,
    pub empirical_tvd: Option<f64>,
    pub kernel_lr: f64,
    pub wall_ms: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    rows: Vec<LogRow>,
}

pub const LOG_HEADER: &str = "iter,mmd,exact_tvd,empirical_tvd,kernel_lr,wall_ms";

fn opt_field<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

fn fmt_real(v: f64) -> String {
    format!("{v:.17e}")
}

impl TrainLog {
    pub fn rows(&self) -> &[LogRow] {
        &self.rows
    }

    pub fn push(&mut self, row: LogRow) -> Result<()> {
        if let Some(last) = self.rows.last() {
            if row.iter <= last.iter {
                return Err(Error::invalid(format!(
                    "log iteration {} does not follow {}",
                    row.iter, last.iter
                )));
            }
        }
        self.rows.push(row);
        Ok(())
    }

    /// Last recorded exact TVD.
    pub fn final_exact_tvd(&self) -> Option<f64> {
        self.rows.iter().rev().find_map(|r| r.exact_tvd)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{LOG_HEADER}")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.iter,
                fmt_real(r.mmd),
                opt_field(&r.exact_tvd.map(fmt_real)),
                opt_field(&r.empirical_tvd.map(fmt_real)),
                fmt_real(r.kernel_lr),
                opt_field(&r.wall_ms)
            )?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut log = TrainLog::default();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            if i == 0 {
                if line.trim() != LOG_HEADER {
                    return Err(Error::parse(lineno, "unexpected log header"));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(Error::parse(lineno, "expected 6 fields"));
            }
            let real = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::parse(lineno, format!("bad number {s:?}: {e}")))
            };
            let opt_real = |s: &str| if s.is_empty() { Ok(None) } else { real(s).map(Some) };
            log.push(LogRow {
                iter: f[0].parse().map_err(|_| Error::parse(lineno, "bad iteration"))?,
                mmd: real(f[1])?,
                exact_tvd: opt_real(f[2])?,
                empirical_tvd: opt_real(f[3])?,
                kernel_lr: real(f[4])?,
                wall_ms: if f[5].is_empty() {
                    None
                } else {
                    Some(f[5].parse().map_err(|_| Error::parse(lineno, "bad wall_ms"))?)
                },
            })
            .map_err(|e| Error::parse(lineno, e.to_string()))?;
        }
        Ok(log)
    }
}

/// All gates up to `max_weight` with angles set by `init`.
pub fn init_generator(
    data: &Dataset,
    m_hidden: usize,
    max_weight: usize,
    init: GeneratorInit,
    seed: u64,
) -> Result<IqpCircuit> {
    let n = data.n();
    let mut c = IqpCircuit::all_gates(n, m_hidden, max_weight)?;
    let width = c.total_width();
    let mut angles = vec![0.0; c.num_gates()];
    if matches!(init, GeneratorInit::MomentMatch | GeneratorInit::MomentMatchJitter { .. }) {
        for (a, g) in angles.iter_mut().zip(c.gates()?) {
            if g.mask.weight() != 1 {
                continue;
            }
            let pos = (0..width).find(|&i| g.mask.bit(i)).expect("weight one");
            if pos < m_hidden {
                continue;
            }
            let z = data.z_expectation(BitString::unit(n, pos - m_hidden))?;
            *a = 0.5 * z.clamp(-1.0 + 1e-9, 1.0 - 1e-9).acos();
        }
    }
    let scale = match init {
        GeneratorInit::MomentMatch => 0.0,
        GeneratorInit::RandomSmall { scale } | GeneratorInit::MomentMatchJitter { scale } => scale,
    };
    if scale > 0.0 {
        let mut rng = stream_rng(derive_seed(seed, &[INIT_TAG]), 0);
        for a in angles.iter_mut() {
            *a += rng.random_range(-scale..=scale);
        }
    }
    c.set_angles(&angles)?;
    Ok(c)
}

/// Everything needed to continue a run exactly where it stopped.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    /// Completed iterations.
    pub iter: usize,
    pub circuit: IqpCircuit,
    pub critic: Option<Fvsbn>,
    pub generator_opt: AdamState,
    pub kernel_opt: Option<AdamState>,
}

const CIRCUIT_FILE: &str = "circuit.ckpt";
const CRITIC_FILE: &str = "critic.ckpt";
const GEN_OPT_FILE: &str = "generator.adam";
const KERNEL_OPT_FILE: &str = "kernel.adam";
const PROGRESS_FILE: &str = "progress";

/// Writes `bytes` to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

impl TrainState {
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut buf = Vec::new();
        self.circuit.write_checkpoint(&mut buf)?;
        write_atomic(&dir.join(CIRCUIT_FILE), &buf)?;
        if let Some(f) = &self.critic {
            let mut buf = Vec::new();
            f.write_checkpoint(&mut buf)?;
            write_atomic(&dir.join(CRITIC_FILE), &buf)?;
        }
        let mut buf = Vec::new();
        self.generator_opt.write_to(&mut buf)?;
        write_atomic(&dir.join(GEN_OPT_FILE), &buf)?;
        if let Some(k) = &self.kernel_opt {
            let mut buf = Vec::new();
            k.write_to(&mut buf)?;
            write_atomic(&dir.join(KERNEL_OPT_FILE), &buf)?;
        }
        // Written last so a partially saved directory is never taken as
        // newer than its contents.
        write_atomic(&dir.join(PROGRESS_FILE), format!("iter = {}\n", self.iter).as_bytes())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let open = |name: &str| -> Result<BufReader<fs::File>> { Ok(BufReader::new(fs::File::open(dir.join(name))?)) };
        let maybe = |name: &str| dir.join(name).exists();
        let progress = fs::read_to_string(dir.join(PROGRESS_FILE))?;
        let iter = progress
            .trim()
            .strip_prefix("iter = ")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::parse(1, "bad progress file"))?;
        Ok(Self {
            iter,
            circuit: IqpCircuit::read_checkpoint(open(CIRCUIT_FILE)?)?,
            critic: if maybe(CRITIC_FILE) {
                Some(Fvsbn::read_checkpoint(open(CRITIC_FILE)?)?)
            } else {
                None
            },
            generator_opt: AdamState::read_from(open(GEN_OPT_FILE)?)?,
            kernel_opt: if maybe(KERNEL_OPT_FILE) {
                Some(AdamState::read_from(open(KERNEL_OPT_FILE)?)?)
            } else {
                None
            },
        })
    }
}

pub struct Trainer<'a> {
    cfg: TrainConfig,
    data: &'a TrainData,
    seed: u64,
    state: TrainState,
    log: TrainLog,
    fixed: Option<GaussianMeasure>,
    eval_reference: Option<ProbVector>,
    started: Instant,
}

/// Final parameters and the log of a finished run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub circuit: IqpCircuit,
    pub critic: Option<Fvsbn>,
    pub log: TrainLog,
}

impl<'a> Trainer<'a> {
    pub fn new(cfg: TrainConfig, data: &'a TrainData, seed: u64) -> Result<Self> {
        cfg.validate()?;
        data.check()?;
        let n = data.train.n();
        let circuit = init_generator(&data.train, cfg.m_hidden, cfg.max_weight, cfg.init, seed)?;
        let critic = match cfg.measure {
            MeasureMode::Gaussian { .. } => None,
            MeasureMode::Adaptive { sigma } => Some(Fvsbn::init_gaussian(n, sigma, FVSBN_EPS)?),
            MeasureMode::AdaptiveWarm { k } => Some(Fvsbn::init_warm(n, k, FVSBN_EPS)?),
        };
        let state = TrainState {
            iter: 0,
            generator_opt: AdamState::new(circuit.num_gates(), cfg.generator_lr, cfg.beta1, cfg.beta2),
            kernel_opt: critic
                .as_ref()
                .map(|f| AdamState::new(f.num_params(), cfg.kernel_lr, cfg.beta1, cfg.beta2)),
            circuit,
            critic,
        };
        Self::resume(cfg, data, seed, state, TrainLog::default())
    }

    /// Continues from a saved state and the log written so far.
    pub fn resume(cfg: TrainConfig, data: &'a TrainData, seed: u64, state: TrainState, log: TrainLog) -> Result<Self> {
        cfg.validate()?;
        data.check()?;
        if state.circuit.n_visible() != data.train.n() {
            return Err(Error::WidthMismatch {
                expected: data.train.n(),
                actual: state.circuit.n_visible(),
            });
        }
        let adaptive = !matches!(cfg.measure, MeasureMode::Gaussian { .. });
        if adaptive != state.critic.is_some() || adaptive != state.kernel_opt.is_some() {
            return Err(Error::invalid("saved state does not match the measure mode"));
        }
        if log.rows().last().is_some_and(|r| r.iter > state.iter) {
            return Err(Error::invalid("log runs ahead of the saved state"));
        }
        let fixed = match cfg.measure {
            MeasureMode::Gaussian { sigma } => Some(GaussianMeasure::new(data.train.n(), sigma)?),
            _ => None,
        };
        let n = data.train.n();
        let eval_reference = if n <= MAX_EVAL_BITS {
            Some(data.test.as_ref().unwrap_or(&data.train).empirical()?)
        } else {
            None
        };
        Ok(Self {
            cfg,
            data,
            seed,
            state,
            log,
            fixed,
            eval_reference,
            started: Instant::now(),
        })
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn log(&self) -> &TrainLog {
        &self.log
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn is_done(&self) -> bool {
        self.state.iter >= self.cfg.iterations
    }

    fn measure(&self) -> &dyn SpectralMeasure {
        match (&self.fixed, &self.state.critic) {
            (Some(g), _) => g,
            (None, Some(f)) => f,
            (None, None) => unreachable!("checked at construction"),
        }
    }

    /// Exact and empirical TVD of the current generator.
    pub fn evaluate(&self, tag: u64) -> Result<(Option<f64>, Option<f64>)> {
        if self.data.train.n() > MAX_EVAL_BITS {
            return Ok((None, None));
        }
        let q = exact_visible_distribution(&self.state.circuit)?;
        let exact = match &self.data.target {
            Some(t) => Some(tvd(t, &q)?),
            None => None,
        };
        let mut rng = stream_rng(derive_seed(self.seed, &[EVAL_TAG, tag]), 0);
        let batch = q.sample(self.cfg.eval_batch, &mut rng)?;
        let reference = self.eval_reference.as_ref().expect("n within the evaluation cap");
        let empirical = tvd(&batch.empirical()?, reference)?;
        Ok((exact, Some(empirical)))
    }

    /// One generator update followed by one critic update, both from the
    /// gradients at the pre-step parameters.
    pub fn step(&mut self) -> Result<&LogRow> {
        let t = self.state.iter;
        let iter_seed = derive_seed(self.seed, &[t as u64]);
        let freqs = sample_frequencies(self.measure(), self.cfg.freq_batch, iter_seed);
        let batch = mmd_batch(
            &self.data.train,
            &self.state.circuit,
            &freqs,
            self.cfg.shots,
            iter_seed,
            true,
            self.state.critic.as_ref(),
        )?;
        let grad_theta = batch.grad_theta.expect("requested");
        let grad_gamma = batch.grad_gamma.map(|g| g.flat());
        let finite = batch.estimate.value.is_finite()
            && grad_theta.iter().all(|v| v.is_finite())
            && grad_gamma.iter().flatten().all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite(format!(
                "iteration {t}: loss {} or a gradient is not finite",
                batch.estimate.value
            )));
        }

        let mut angles = self.state.circuit.angles()?;
        self.state.generator_opt.step(&mut angles, &grad_theta)?;
        self.state.circuit.set_angles(&angles)?;

        let lr = self.cfg.kernel_lr_at(t);
        if let (Some(f), Some(opt), Some(g)) = (&mut self.state.critic, &mut self.state.kernel_opt, grad_gamma) {
            opt.lr = lr;
            let mut params = f.params();
            let ascent: Vec<f64> = g.iter().map(|v| -v).collect();
            opt.step(&mut params, &ascent)?;
            f.set_params(&params)?;
        }
        self.state.iter = t + 1;

        let (exact_tvd, empirical_tvd) = if self.state.iter % self.cfg.eval_every == 0 || self.is_done() {
            self.evaluate(self.state.iter as u64)?
        } else {
            (None, None)
        };
        self.log.push(LogRow {
            iter: self.state.iter,
            mmd: batch.estimate.value,
            exact_tvd,
            empirical_tvd,
            kernel_lr: lr,
            wall_ms: self.cfg.wall_time.then(|| self.started.elapsed().as_millis() as u64),
        })?;
        Ok(self.log.rows().last().expect("just pushed"))
    }

    /// Runs to the configured iteration count, calling `on_eval` after
    /// every evaluation row.
    pub fn run(&mut self, mut on_eval: impl FnMut(&Trainer) -> Result<()>) -> Result<()> {
        while !self.is_done() {
            let evaluated = self.step()?.empirical_tvd.is_some() || self.is_done();
            if evaluated {
                on_eval(self)?;
            }
        }
        Ok(())
    }

    pub fn finish(self) -> TrainOutcome {
        TrainOutcome {
            circuit: self.state.circuit,
            critic: self.state.critic,
            log: self.log,
        }
    }
}

/// Trains from scratch to `cfg.iterations`.
pub fn train(cfg: &TrainConfig, data: &TrainData, seed: u64) -> Result<TrainOutcome> {
    let mut t = Trainer::new(cfg.clone(), data, seed)?;
    t.run(|_| Ok(()))?;
    Ok(t.finish())
}
