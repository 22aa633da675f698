use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::Path;

use iqpkit::datasets::{builtin_parity, lemma3_instance, parity_exact_dist, parity_sample, worst_case_pair};
use iqpkit::dist::{read_distribution, walsh_char, write_distribution};
use iqpkit::mmd::{mmd_exact, mmd_exact_grad_theta};
use iqpkit::rng::{derive_seed, stream_rng};
use iqpkit::sim::exact_visible_distribution;
use iqpkit::dist::MAX_DENSE_BITS;
use iqpkit::spectral::FVSBN_EPS;
use iqpkit::train::{write_atomic, TrainData, TrainLog, TrainState, Trainer, MAX_EVAL_BITS};
use iqpkit::universality::{build_grid_circuit, build_universal_circuit, solve_two_bit_hidden};
use iqpkit::{tvd, BitString, Dataset, Fvsbn, GaussianMeasure, IqpCircuit, PointMassMeasure, SpectralMeasure};

use crate::config::{parse_train, KeyValues, TrainSpec};
use crate::{CliError, Command, DataKind, UniversalMode};

pub fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::GenData {
            n,
            kind,
            count,
            test_count,
            seed,
            out,
        } => gen_data(n, kind, count, test_count, seed, &out),
        Command::Train {
            config,
            seed,
            out,
            resume,
        } => {
            let text = fs::read_to_string(&config)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", config.display())))?;
            write_atomic(&out.join("config.txt"), text.as_bytes())?;
            let mut spec = parse_train(KeyValues::load(&config)?)?;
            if let Some(s) = seed {
                spec.seeds = vec![s];
            }
            train(&spec, &out, resume)
        }
        Command::Eval {
            checkpoint,
            target,
            data,
            batch,
            seed,
            out,
        } => eval(&checkpoint, target.as_deref(), data.as_deref(), batch, seed, &out),
        Command::Universality { target, mode, m, out } => universality(&target, mode, m, &out),
        Command::AdversarialCheck {
            n,
            sigma,
            eps,
            worst_n,
            seed,
            out,
        } => adversarial(n, sigma, eps, worst_n, seed, &out),
        Command::Replay { .. } => unreachable!("resolved in main"),
    }
}

fn save<F>(path: &Path, f: F) -> Result<(), CliError>
where
    F: FnOnce(&mut Vec<u8>) -> iqpkit::Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf)?;
    write_atomic(path, &buf)?;
    Ok(())
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Failed(format!("cannot open {}: {e}", path.display())))
}

fn real(v: f64) -> String {
    format!("{v:.17e}")
}

fn gen_data(n: usize, kind: DataKind, count: usize, test_count: usize, seed: u64, out: &Path) -> Result<(), CliError> {
    match kind {
        DataKind::Parity => {
            let h = builtin_parity(n)?;
            save(&out.join("parity.txt"), |w| h.write_to(w))?;
            let train = parity_sample(&h, count, derive_seed(seed, &[0]))?;
            let test = parity_sample(&h, test_count, derive_seed(seed, &[1]))?;
            save(&out.join("train.txt"), |w| train.write_to(w))?;
            save(&out.join("test.txt"), |w| test.write_to(w))?;
            if n <= MAX_EVAL_BITS {
                let p = parity_exact_dist(&h)?;
                save(&out.join("target.dist"), |w| write_distribution(&p, w))?;
            }
            println!("wrote {count} training and {test_count} test rows to {}", out.display());
        }
        DataKind::Worstcase => {
            let (p, q) = worst_case_pair(n, seed)?;
            save(&out.join("p.dist"), |w| write_distribution(&p, w))?;
            save(&out.join("q.dist"), |w| write_distribution(&q, w))?;
            println!("worst-case pair at n = {n}: TVD = {}", tvd(&p, &q)?);
        }
    }
    Ok(())
}

fn read_dataset(path: &Path) -> Result<Dataset, CliError> {
    Ok(Dataset::read_from(open(path)?)?)
}

fn seed_dir(out: &Path, seed: u64) -> std::path::PathBuf {
    out.join(format!("seed_{seed}"))
}

fn train(spec: &TrainSpec, out: &Path, resume: bool) -> Result<(), CliError> {
    let data = TrainData {
        train: read_dataset(&spec.dataset)?,
        test: spec.test.as_deref().map(read_dataset).transpose()?,
        target: match &spec.target {
            Some(p) => Some(read_distribution(open(p)?)?),
            None => None,
        },
    };
    if let Some(n) = spec.n {
        if n != data.train.n() {
            return Err(iqpkit::Error::WidthMismatch {
                expected: n,
                actual: data.train.n(),
            }
            .into());
        }
    }
    let mut logs = Vec::new();
    for &seed in &spec.seeds {
        let dir = seed_dir(out, seed);
        let ckpt = dir.join("checkpoint");
        let log_path = dir.join("log.csv");
        fs::create_dir_all(&dir)?;
        let mut trainer = if resume && ckpt.join("progress").exists() {
            let state = TrainState::load(&ckpt)?;
            let log = TrainLog::read_csv(open(&log_path)?)?;
            // Rows written after the last checkpoint are recomputed.
            let mut kept = TrainLog::default();
            for r in log.rows().iter().filter(|r| r.iter <= state.iter) {
                kept.push(r.clone())?;
            }
            Trainer::resume(spec.train.clone(), &data, seed, state, kept)?
        } else {
            Trainer::new(spec.train.clone(), &data, seed)?
        };
        let persist = |t: &Trainer| -> iqpkit::Result<()> {
            let mut buf = Vec::new();
            t.log().write_csv(&mut buf)?;
            write_atomic(&log_path, &buf)?;
            t.state().save(&ckpt)
        };
        trainer.run(|t| {
            if let Some(r) = t.log().rows().last() {
                println!(
                    "seed {seed} iter {}: mmd {:.6e} exact_tvd {} empirical_tvd {}",
                    r.iter,
                    r.mmd,
                    r.exact_tvd.map(|v| format!("{v:.6}")).unwrap_or_else(|| "-".into()),
                    r.empirical_tvd.map(|v| format!("{v:.6}")).unwrap_or_else(|| "-".into()),
                );
            }
            persist(t)
        })?;
        persist(&trainer)?;
        logs.push(trainer.finish().log);
    }
    save(&out.join("aggregate.csv"), |w| write_aggregate(&logs, w))
}

fn mean_std(v: &[f64]) -> Option<(f64, f64)> {
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = if v.len() < 2 {
        0.0
    } else {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Some((mean, std))
}

/// Mean and sample standard deviation across seeds at every iteration.
fn write_aggregate<W: Write>(logs: &[TrainLog], mut w: W) -> iqpkit::Result<()> {
    writeln!(
        w,
        "iter,seeds,mmd_mean,mmd_std,exact_tvd_mean,exact_tvd_std,empirical_tvd_mean,empirical_tvd_std"
    )?;
    let len = logs.iter().map(|l| l.rows().len()).min().unwrap_or(0);
    for i in 0..len {
        let rows: Vec<_> = logs.iter().map(|l| &l.rows()[i]).collect();
        let col = |f: &dyn Fn(&iqpkit::train::LogRow) -> Option<f64>| {
            let v: Vec<f64> = rows.iter().filter_map(|r| f(r)).collect();
            match mean_std(&v) {
                Some((m, s)) => format!("{},{}", real(m), real(s)),
                None => ",".to_string(),
            }
        };
        writeln!(
            w,
            "{},{},{},{},{}",
            rows[0].iter,
            rows.len(),
            col(&|r| Some(r.mmd)),
            col(&|r| r.exact_tvd),
            col(&|r| r.empirical_tvd)
        )?;
    }
    Ok(())
}

fn eval(
    checkpoint: &Path,
    target: Option<&Path>,
    data: Option<&Path>,
    batch: usize,
    seed: u64,
    out: &Path,
) -> Result<(), CliError> {
    let c = IqpCircuit::read_checkpoint(open(checkpoint)?)?;
    let n = c.n_visible();
    if n > MAX_EVAL_BITS {
        return Err(iqpkit::Error::SizeCap {
            what: "evaluation",
            requested: n,
            limit: MAX_EVAL_BITS,
        }
        .into());
    }
    let target = target.map(|p| read_distribution(open(p)?).map_err(CliError::from)).transpose()?;
    let data = data.map(read_dataset).transpose()?;
    let reference = match (&data, &target) {
        (Some(d), _) => d.empirical()?,
        (None, Some(t)) => t.clone(),
        (None, None) => return Err(CliError::Failed("eval needs --target or --data".into())),
    };
    if reference.n() != n {
        return Err(iqpkit::Error::WidthMismatch {
            expected: n,
            actual: reference.n(),
        }
        .into());
    }
    let q = exact_visible_distribution(&c)?;
    let mut rng = stream_rng(seed, 0);
    let generated = q.sample(batch, &mut rng)?.empirical()?;
    let mut rows = Vec::new();
    if let Some(t) = &target {
        rows.push(("exact_tvd", tvd(t, &q)?));
    }
    rows.push(("empirical_tvd", tvd(&generated, &reference)?));
    let flat = GaussianMeasure::new(n, 0.0)?;
    rows.push(("gaussian0_mmd", mmd_exact(&generated, &reference, &flat)?));
    save(&out.join("metrics.csv"), |w| {
        writeln!(w, "metric,value")?;
        for (k, v) in &rows {
            writeln!(w, "{k},{}", real(*v))?;
        }
        Ok(())
    })?;
    for (k, v) in &rows {
        println!("{k} = {v:.12e}");
    }
    Ok(())
}

fn universality(target: &Path, mode: UniversalMode, m: Option<usize>, out: &Path) -> Result<(), CliError> {
    let p = read_distribution(open(target)?)?;
    let n = p.n();
    let (c, bound, label) = match mode {
        UniversalMode::Exact => (build_universal_circuit(&p)?, 1e-9, "exact"),
        UniversalMode::Grid => {
            let m = m.ok_or_else(|| CliError::Failed("grid mode needs --m".into()))?;
            let bound = 2f64.powi(n as i32 - 1 - m as i32);
            (build_grid_circuit(&p, m)?, bound, "grid")
        }
        UniversalMode::Twobit => (solve_two_bit_hidden(&p)?, 1e-9, "twobit"),
    };
    let achieved = tvd(&p, &exact_visible_distribution(&c)?)?;
    let ok = achieved <= bound;
    save(&out.join("circuit.ckpt"), |w| c.write_checkpoint(w))?;
    let report = format!(
        "mode,n,m_hidden,tvd,bound,within_bound\n{label},{n},{},{},{},{ok}\n",
        c.m_hidden(),
        real(achieved),
        real(bound)
    );
    write_atomic(&out.join("report.csv"), report.as_bytes())?;
    print!("{report}");
    if !ok {
        return Err(CliError::Failed(format!("TVD {achieved:e} exceeds the bound {bound:e}")));
    }
    Ok(())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn adversarial(n: usize, sigma: f64, eps: f64, worst_n: Option<usize>, seed: u64, out: &Path) -> Result<(), CliError> {
    let mut lines = vec!["check,quantity,value,reference".to_string()];
    let mut push = |check: &str, q: &str, v: f64, r: Option<f64>| {
        lines.push(format!("{check},{q},{},{}", real(v), r.map(real).unwrap_or_default()));
    };

    let (u, c) = lemma3_instance(n)?;
    let q = exact_visible_distribution(&c)?;
    let g = GaussianMeasure::new(n, sigma)?;
    let ps = g.p_sigma();
    let pm = PointMassMeasure::new(BitString::unit(n, 0), eps)?;
    let decay = ps * (1.0 - ps).powi(n as i32 - 1);
    push("vanishing", "tvd", tvd(&u, &q)?, Some(2f64.sqrt() / 4.0));
    push("vanishing", "gaussian_mmd", mmd_exact(&u, &q, &g)?, Some(0.5 * decay));
    push("vanishing", "point_mass_mmd", mmd_exact(&u, &q, &pm)?, Some(0.5 * (1.0 - eps)));
    push("vanishing", "gaussian_grad_norm", norm(&mmd_exact_grad_theta(&u, &c, &g)?), Some(2.0 * decay));
    push("vanishing", "point_mass_grad_norm", norm(&mmd_exact_grad_theta(&u, &c, &pm)?), Some(2.0 * (1.0 - eps)));

    if let Some(wn) = worst_n {
        if wn > MAX_DENSE_BITS {
            return Err(iqpkit::Error::SizeCap {
                what: "worst-case pair",
                requested: wn,
                limit: MAX_DENSE_BITS,
            }
            .into());
        }
        let (p, q) = worst_case_pair(wn, seed)?;
        let (fp, fq) = (walsh_char(&p), walsh_char(&q));
        let max_phi = fp.max_nontrivial_abs();
        let ceiling = fp
            .values()
            .iter()
            .zip(fq.values())
            .skip(1)
            .map(|(a, b)| (a - b).powi(2))
            .fold(0.0, f64::max);
        push("worst_case", "tvd", tvd(&p, &q)?, Some(1.0));
        push("worst_case", "max_char_abs", max_phi, Some(2f64.powf(-(wn as f64) / 4.0)));
        push("worst_case", "spectral_ceiling", ceiling, None);
        let measures: Vec<(&str, Box<dyn SpectralMeasure>)> = vec![
            ("gaussian_mmd", Box::new(GaussianMeasure::new(wn, sigma)?)),
            ("point_mass_mmd", Box::new(PointMassMeasure::new(BitString::unit(wn, 0), eps)?)),
            ("fvsbn_mmd", Box::new(Fvsbn::init_gaussian(wn, sigma, FVSBN_EPS)?)),
        ];
        for (name, g) in &measures {
            let v = mmd_exact(&p, &q, g.as_ref())?;
            push("worst_case", name, v, Some(ceiling));
            if v > ceiling * (1.0 + 1e-12) {
                return Err(CliError::Failed(format!("{name} = {v:e} exceeds the ceiling {ceiling:e}")));
            }
        }
    }
    let text = lines.join("\n") + "\n";
    write_atomic(&out.join("report.csv"), text.as_bytes())?;
    print!("{text}");
    Ok(())
}
