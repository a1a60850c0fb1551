//! Experiment execution: build the configured world, fan runs out across a
//! bounded worker pool, and write a deterministic output tree.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use ada_ogd_core::dsq::{booleanize_query, dsq_answer, dsq_batch_size, LabeledPrior, RealQuery};
use ada_ogd_core::game::{
    evaluate_accuracy, run_aq_game_with, Analyst, DistSource, GameSetup, MixedAnalyst,
    OverfitAnalyst, RandomAnalyst, StaticAnalyst,
};
use ada_ogd_core::pso::{
    run_pso_game, BisectAdversary, ClassThresholds, PredicateClass, PsoAdversary, TrivialAdversary,
};
use ada_ogd_core::replay::{analyst_id_name, replay_run, Transcript};
use ada_ogd_core::rng::{mix64, RngStream, StreamId};
use ada_ogd_core::seedspace::{Distribution, Query, SeedSpace};
use ada_ogd_core::sketch::{
    batch_size, ip_est, ip_exact, ogd_regret_simulate, AbsAffineLoss, BatchMode, EstimateParams,
    GradientSketch,
};
use ada_ogd_core::MechanismParams;

use crate::config::{ExperimentConfig, Mode};
use crate::error::{CliError, CliResult};
use crate::report::{cell, Summary};
use crate::specs;

/// What one invocation produced, besides the files on disk.
#[derive(Debug)]
pub struct ExperimentReport {
    pub mode: Mode,
    pub out_dir: PathBuf,
    pub summary: Summary,
    /// False when an asserted property failed (replay mismatch, theory
    /// suite failure); the process should then exit nonzero.
    pub all_ok: bool,
    pub messages: Vec<String>,
}

pub fn space_of(config: &ExperimentConfig) -> CliResult<SeedSpace> {
    SeedSpace::new(config.mechanism.n).map_err(CliError::from)
}

pub fn build_distribution(config: &ExperimentConfig) -> CliResult<Distribution> {
    let space = space_of(config)?;
    let d = &config.distribution;
    match d.kind.as_str() {
        "uniform" => Ok(Distribution::uniform(space)),
        "point" => {
            let index = d
                .index
                .ok_or_else(|| CliError::validation("distribution.index", "point kind needs `index`"))?;
            Ok(Distribution::point_mass(space, index)?)
        }
        "pmf-file" => {
            let path = d.path.as_ref().expect("validated");
            let dist = Distribution::from_pmf_file(path)?;
            if dist.space() != space {
                return Err(CliError::validation(
                    "distribution.path",
                    format!(
                        "PMF file is over n={}, mechanism.n={}",
                        dist.space().bits(),
                        space.bits()
                    ),
                ));
            }
            Ok(dist)
        }
        "labeled" => Ok(build_prior(config)?.target_distribution()?),
        _ => unreachable!("validated"),
    }
}

pub fn build_prior(config: &ExperimentConfig) -> CliResult<LabeledPrior> {
    let n = config.mechanism.n;
    let label_spec = config
        .distribution
        .label
        .as_deref()
        .unwrap_or("parity");
    let label = specs::label_fn(label_spec, n - 1)?;
    Ok(LabeledPrior::uniform_features(n, label)?)
}

pub fn build_analyst(
    config: &ExperimentConfig,
    dist: Distribution,
) -> CliResult<Box<dyn Analyst + Send>> {
    let space = dist.space();
    Ok(match config.analyst.name.as_str() {
        "static" => {
            let spec = config.analyst.query.as_deref().expect("validated");
            Box::new(StaticAnalyst::new(dist, specs::seed_query(spec, space)?))
        }
        "random" => Box::new(RandomAnalyst::new(dist)),
        "overfit" => Box::new(OverfitAnalyst::new(dist, config.mechanism.rounds)),
        "mixed" => Box::new(MixedAnalyst::new(dist)),
        other => {
            return Err(CliError::validation(
                "analyst.name",
                format!("unknown analyst `{other}`"),
            ))
        }
    })
}

fn build_adversary(name: &str, dist: Distribution) -> CliResult<Box<dyn PsoAdversary + Send>> {
    Ok(match name {
        "trivial" => Box::new(TrivialAdversary::new(dist)),
        "bisect" => Box::new(BisectAdversary::new(dist)),
        other => {
            return Err(CliError::validation(
                "pso.adversary",
                format!("unknown adversary `{other}`"),
            ))
        }
    })
}

fn mechanism_params(config: &ExperimentConfig) -> CliResult<MechanismParams> {
    let m = &config.mechanism;
    Ok(MechanismParams::new(
        space_of(config)?,
        m.rounds,
        m.epsilon,
        m.delta,
        m.lambda,
        m.batch.to_mode()?,
    )?)
}

fn write(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents)?;
    Ok(())
}

/// Map seeds to per-seed results on a bounded pool, preserving seed order.
fn over_seeds<T, F>(seeds: &[u64], workers: usize, f: F) -> CliResult<Vec<(u64, T)>>
where
    T: Send,
    F: Fn(u64) -> CliResult<T> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::runtime(format!("worker pool: {e}")))?;
    let results: Vec<(u64, CliResult<T>)> =
        pool.install(|| seeds.par_iter().map(|&s| (s, f(s))).collect());
    let mut out = Vec::with_capacity(results.len());
    for (seed, r) in results {
        out.push((seed, r.map_err(|e| CliError::runtime(format!("seed {seed}: {e}")))?));
    }
    Ok(out)
}

/// Execute one experiment. Writes the resolved config, all per-run
/// artifacts, and the summary pair into `out_dir`; the whole tree is a pure
/// function of the resolved config.
pub fn run_experiment(
    config: &ExperimentConfig,
    workers: usize,
    verbose: bool,
) -> CliResult<ExperimentReport> {
    let out_dir = config.out_dir.clone();
    std::fs::create_dir_all(&out_dir)?;
    write(&out_dir.join("resolved_config.toml"), &config.to_toml())?;

    let (summary, all_ok, messages) = match config.mode {
        Mode::Aq => run_aq(config, workers, verbose, &out_dir)?,
        Mode::Pso => run_pso(config, workers, &out_dir)?,
        Mode::Dsq => run_dsq(config, workers, &out_dir)?,
        Mode::ReplayVerify => run_replay_verify(config, workers)?,
        Mode::TheoryCheck => run_theory_check(config)?,
    };

    write(&out_dir.join("summary.csv"), &summary.to_csv())?;
    write(&out_dir.join("summary.txt"), &summary.to_table())?;
    Ok(ExperimentReport {
        mode: config.mode,
        out_dir,
        summary,
        all_ok,
        messages,
    })
}

struct AqRun {
    csv: String,
    debug_csv: String,
    transcript: Vec<u8>,
    updates: usize,
    max_sketch: usize,
    budget_exhausted: bool,
    max_err: Option<f64>,
    mean_err: Option<f64>,
    pass: Option<bool>,
}

fn run_aq(
    config: &ExperimentConfig,
    workers: usize,
    verbose: bool,
    out_dir: &Path,
) -> CliResult<(Summary, bool, Vec<String>)> {
    let params = mechanism_params(config)?;
    let epsilon = config.mechanism.epsilon;
    let samples = config.mechanism.samples;
    let env_chosen = config.distribution.chooser == "environment";

    let runs = over_seeds(&config.seeds, workers, |seed| {
        let dist = build_distribution(config)?;
        let mut analyst = build_analyst(config, dist.clone())?;
        let setup = GameSetup {
            source: if env_chosen {
                DistSource::Environment(dist.clone())
            } else {
                DistSource::AnalystChosen
            },
            ground_truth: true,
        };
        let result = run_aq_game_with(analyst.as_mut(), &params, samples, seed, &setup)?;
        let (max_err, mean_err, pass) = if dist.pmf().is_some() {
            let report = evaluate_accuracy(&result, &dist, epsilon, None)?;
            let mean = report.per_round.iter().sum::<f64>() / report.per_round.len() as f64;
            (Some(report.max_error), Some(mean), Some(report.pass))
        } else {
            (None, None, None)
        };
        Ok(AqRun {
            csv: result.to_csv(),
            debug_csv: result.to_debug_csv(),
            transcript: result.transcript.to_bytes(),
            updates: result.update_count(),
            max_sketch: result.max_sketch_size(),
            budget_exhausted: result.budget_exhausted,
            max_err,
            mean_err,
            pass,
        })
    })?;

    let mut summary = Summary::new(&[
        "seed",
        "rounds",
        "updates",
        "max_sketch",
        "budget_exhausted",
        "max_abs_err",
        "mean_abs_err",
        "within_eps",
    ]);
    let mut messages = Vec::new();
    let opt = |v: Option<f64>| v.map(cell).unwrap_or_default();
    for (seed, run) in &runs {
        write(&out_dir.join(format!("run_{seed}.csv")), &run.csv)?;
        std::fs::write(
            out_dir.join(format!("transcript_{seed}.aogd")),
            &run.transcript,
        )?;
        if verbose {
            write(&out_dir.join(format!("debug_{seed}.csv")), &run.debug_csv)?;
        }
        summary.push(vec![
            seed.to_string(),
            config.mechanism.rounds.to_string(),
            run.updates.to_string(),
            run.max_sketch.to_string(),
            (run.budget_exhausted as u8).to_string(),
            opt(run.max_err),
            opt(run.mean_err),
            run.pass.map(|p| (p as u8).to_string()).unwrap_or_default(),
        ]);
        messages.push(format!(
            "seed {seed}: updates {} max_err {}",
            run.updates,
            opt(run.max_err)
        ));
    }
    // Aggregate over runs: worst max error, mean of means, pass fraction.
    let total_updates: usize = runs.iter().map(|(_, r)| r.updates).sum();
    let max_sketch = runs.iter().map(|(_, r)| r.max_sketch).max().unwrap_or(0);
    let exhausted = runs.iter().filter(|(_, r)| r.budget_exhausted).count();
    let max_err = runs
        .iter()
        .filter_map(|(_, r)| r.max_err)
        .fold(None::<f64>, |acc, v| Some(acc.map_or(v, |a| a.max(v))));
    let means: Vec<f64> = runs.iter().filter_map(|(_, r)| r.mean_err).collect();
    let mean_err = if means.is_empty() {
        None
    } else {
        Some(means.iter().sum::<f64>() / means.len() as f64)
    };
    let passes: Vec<bool> = runs.iter().filter_map(|(_, r)| r.pass).collect();
    let pass_cell = if passes.is_empty() {
        String::new()
    } else {
        cell(passes.iter().filter(|p| **p).count() as f64 / passes.len() as f64)
    };
    summary.push(vec![
        "aggregate".into(),
        (config.mechanism.rounds * runs.len() as u64).to_string(),
        total_updates.to_string(),
        max_sketch.to_string(),
        exhausted.to_string(),
        opt(max_err),
        opt(mean_err),
        pass_cell,
    ]);
    Ok((summary, true, messages))
}

fn run_pso(
    config: &ExperimentConfig,
    workers: usize,
    out_dir: &Path,
) -> CliResult<(Summary, bool, Vec<String>)> {
    let pso = config.pso.as_ref().expect("validated");
    let params = mechanism_params(config)?;
    let samples = config.mechanism.samples;
    let target = match pso.class.as_str() {
        "low" => PredicateClass::Low,
        _ => PredicateClass::High,
    };
    let thresholds = ClassThresholds {
        c_low: pso.c_low,
        c_high: pso.c_high,
    };

    let outcomes = over_seeds(&config.seeds, workers, |seed| {
        let dist = build_distribution(config)?;
        let mut adversary = build_adversary(&pso.adversary, dist)?;
        Ok(run_pso_game(
            adversary.as_mut(),
            &params,
            samples,
            seed,
            target,
            &thresholds,
        )?)
    })?;

    // Per-run report with the externally contracted columns.
    let mut report = Summary::new(&["seed", "class", "isolated", "p_mass", "log10_envelope"]);
    let mut isolated = 0u64;
    let mut successes = 0u64;
    let mut inconclusive = 0u64;
    for (seed, out) in &outcomes {
        report.push(vec![
            seed.to_string(),
            out.class.map(|c| c.label().to_string()).unwrap_or_default(),
            (out.isolated as u8).to_string(),
            cell(out.p_mass),
            cell(out.log10_envelope),
        ]);
        isolated += out.isolated as u64;
        match out.success {
            Some(true) => successes += 1,
            Some(false) => {}
            None => inconclusive += 1,
        }
    }
    write(&out_dir.join("pso_report.csv"), &report.to_csv())?;

    let decided = outcomes.len() as u64 - inconclusive;
    let mut summary = Summary::new(&["metric", "value"]);
    summary.push(vec!["adversary".into(), pso.adversary.clone()]);
    summary.push(vec!["target_class".into(), pso.class.clone()]);
    summary.push(vec!["trials".into(), outcomes.len().to_string()]);
    summary.push(vec!["isolated".into(), isolated.to_string()]);
    summary.push(vec!["successes".into(), successes.to_string()]);
    summary.push(vec!["inconclusive".into(), inconclusive.to_string()]);
    summary.push(vec![
        "success_rate".into(),
        if decided == 0 {
            String::new()
        } else {
            cell(successes as f64 / decided as f64)
        },
    ]);
    let messages = vec![format!(
        "{} trials: {isolated} isolated, {successes} successes, {inconclusive} inconclusive",
        outcomes.len()
    )];
    Ok((summary, true, messages))
}

struct DsqRun {
    rows: Vec<(String, f64, f64)>,
}

fn run_dsq(
    config: &ExperimentConfig,
    workers: usize,
    _out_dir: &Path,
) -> CliResult<(Summary, bool, Vec<String>)> {
    let dsq = config.dsq.as_ref().expect("validated");
    let space = space_of(config)?;
    let batch = if dsq.batch > 0 {
        dsq.batch
    } else {
        dsq_batch_size(dsq.epsilon, dsq.delta, dsq.queries.len() as u64)?
    };
    let rounds = batch
        .checked_mul(dsq.queries.len() as u64)
        .ok_or_else(|| CliError::validation("dsq.batch", "round budget overflows"))?;
    // The oracle halves both targets: half for the randomization, half for
    // the mechanism.
    let params = MechanismParams::new(
        space,
        rounds,
        dsq.epsilon / 2.0,
        dsq.delta / 2.0,
        0.5,
        config.mechanism.batch.to_mode()?,
    )?;

    let runs = over_seeds(&config.seeds, workers, |seed| {
        let prior = build_prior(config)?;
        let target = prior.target_distribution()?;
        let mut env = RngStream::new(seed, StreamId::Environment);
        let dataset = target.sample_dataset(config.mechanism.samples, &mut env)?;
        let mut mech = ada_ogd_core::Mechanism::new(
            params.clone(),
            dataset,
            RngStream::new(seed, StreamId::Mechanism),
        )?;
        let mut rows = Vec::new();
        for (qi, spec) in dsq.queries.iter().enumerate() {
            let phi = RealQuery::from_spec(spec)?;
            let salt = mix64(dsq.salt ^ seed).wrapping_add(qi as u64);
            let value = dsq_answer(&prior, &phi, &mut mech, batch, salt)?;
            let truth = prior.real_query_mean(&phi)?;
            rows.push((spec.clone(), value, truth));
        }
        Ok(DsqRun { rows })
    })?;

    let mut summary = Summary::new(&["seed", "query", "value", "ground_truth", "abs_err", "within_eps"]);
    let mut worst = 0.0f64;
    let mut within = 0u64;
    let mut total = 0u64;
    for (seed, run) in &runs {
        for (spec, value, truth) in &run.rows {
            let err = (value - truth).abs();
            worst = worst.max(err);
            total += 1;
            if err <= dsq.epsilon {
                within += 1;
            }
            summary.push(vec![
                seed.to_string(),
                spec.clone(),
                cell(*value),
                cell(*truth),
                cell(err),
                ((err <= dsq.epsilon) as u8).to_string(),
            ]);
        }
    }
    summary.push(vec![
        "aggregate".into(),
        format!("batch={batch}"),
        String::new(),
        String::new(),
        cell(worst),
        cell(within as f64 / total as f64),
    ]);
    let messages = vec![format!(
        "{total} oracle calls, {within} within ε={} (worst {worst})",
        dsq.epsilon
    )];
    Ok((summary, true, messages))
}

fn run_replay_verify(
    config: &ExperimentConfig,
    workers: usize,
) -> CliResult<(Summary, bool, Vec<String>)> {
    let input_dir = config
        .replay_verify
        .as_ref()
        .expect("validated")
        .input_dir
        .clone();
    let inner = ExperimentConfig::from_file(input_dir.join("resolved_config.toml"))?.resolve()?;
    if inner.mode != Mode::Aq {
        return Err(CliError::validation(
            "replay_verify.input_dir",
            "input directory does not hold an aq run",
        ));
    }

    let checks = over_seeds(&inner.seeds, workers, |seed| {
        let transcript = Transcript::read_file(input_dir.join(format!("transcript_{seed}.aogd")))?;
        let recorded_name = analyst_id_name(&transcript.header.analyst_id);
        if recorded_name != inner.analyst.name {
            return Err(CliError::runtime(format!(
                "transcript analyst `{recorded_name}` does not match config `{}`",
                inner.analyst.name
            )));
        }
        let dist = build_distribution(&inner)?;
        let mut analyst = build_analyst(&inner, dist)?;
        let replay = match replay_run(&transcript, analyst.as_mut(), seed) {
            Ok(r) => r,
            Err(ada_ogd_core::Error::ReplayDivergence { round }) => {
                return Ok((false, format!("diverged at round {round}")));
            }
            Err(e) => return Err(e.into()),
        };
        let csv = std::fs::read_to_string(input_dir.join(format!("run_{seed}.csv")))?;
        let mut recorded = Vec::new();
        for line in csv.lines().skip(1) {
            let answer = line
                .split(',')
                .nth(1)
                .ok_or_else(|| CliError::runtime(format!("run_{seed}.csv: malformed row")))?;
            recorded.push(answer.to_string());
        }
        if recorded.len() != replay.answers.len() {
            return Ok((
                false,
                format!("{} recorded rounds, {} replayed", recorded.len(), replay.answers.len()),
            ));
        }
        for (t, (rec, rep)) in recorded.iter().zip(&replay.answers).enumerate() {
            if *rec != rep.to_string() {
                return Ok((false, format!("answer mismatch at round {}", t + 1)));
            }
        }
        Ok((true, String::new()))
    })?;

    let mut summary = Summary::new(&["seed", "matched", "detail"]);
    let mut all_ok = true;
    let mut messages = Vec::new();
    for (seed, (matched, detail)) in &checks {
        summary.push(vec![
            seed.to_string(),
            (*matched as u8).to_string(),
            detail.clone(),
        ]);
        if !matched {
            all_ok = false;
            messages.push(format!("seed {seed}: {detail}"));
        }
    }
    summary.push(vec![
        "aggregate".into(),
        (all_ok as u8).to_string(),
        format!("{} runs", checks.len()),
    ]);
    Ok((summary, all_ok, messages))
}

fn run_theory_check(config: &ExperimentConfig) -> CliResult<(Summary, bool, Vec<String>)> {
    let theory = config.theory.clone().unwrap_or_default();
    let base = config.seeds[0];

    // Descent regret fuzz: random unit-bounded losses, random comparator.
    fn ball_vec(rng: &mut RngStream, dim: usize, scale: f64) -> Vec<f64> {
        let v: Vec<f64> = (0..dim).map(|_| rng.next_f64() * 2.0 - 1.0).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n == 0.0 {
            v
        } else {
            v.iter().map(|x| x / n * scale).collect()
        }
    }
    let mut regret_failures = 0u64;
    for k in 0..theory.regret_instances {
        let mut rng = RngStream::new(mix64(base).wrapping_add(k), StreamId::Environment);
        let dim = 1 + (rng.next_u64() % 8) as usize;
        let steps = 1 + (rng.next_u64() % 64) as usize;
        let alpha = 0.05 + rng.next_f64() * 1.95;
        let losses: Vec<AbsAffineLoss> = (0..steps)
            .map(|_| {
                let scale = rng.next_f64();
                AbsAffineLoss {
                    grad: ball_vec(&mut rng, dim, scale),
                    offset: rng.next_f64() * 2.0 - 1.0,
                }
            })
            .collect();
        let scale = rng.next_f64();
        let x_star = ball_vec(&mut rng, dim, scale);
        let report = ogd_regret_simulate(&losses, alpha, &x_star)
            .map_err(|e| CliError::runtime(format!("regret instance {k}: {e}")))?;
        if !report.within_bound() {
            regret_failures += 1;
        }
    }

    // Estimator concentration at (ε_est, δ_est) = (0.01, 0.01) with the
    // honest per-fixture Hoeffding batch.
    let (eps_est, delta_est) = (0.01, 0.01);
    let mut conc_failures = 0u64;
    let mut conc_total = 0u64;
    for f in 0..theory.concentration_fixtures {
        let n = [6u16, 8, 10][(f % 3) as usize];
        let space = SeedSpace::new(n)?;
        let mut rng = RngStream::new(base.wrapping_add(1000 + f), StreamId::Analyst);
        let mut sketch = GradientSketch::new(space, 0.5, 0.25)?;
        for _ in 0..(1 + mix64(f) % 8) {
            let sign = if rng.next_u64() % 2 == 0 { 1 } else { -1 };
            sketch.insert(sign, Query::random(space, &mut rng));
        }
        let query = Query::random(space, &mut rng);
        let exact = ip_exact(&query, &sketch)?;
        let width = 2.0 * sketch.len() as f64 * sketch.coef_magnitude();
        let batch = batch_size(eps_est, delta_est, 1, BatchMode::HoeffdingTight { range: width })?;
        let params = EstimateParams::new(eps_est, delta_est, batch)?;
        for t in 0..theory.concentration_trials_per_fixture {
            let mut mech_rng =
                RngStream::new(base.wrapping_add(f * 1_000_000 + t), StreamId::Mechanism);
            if (ip_est(&query, &sketch, &params, &mut mech_rng) - exact).abs() > eps_est {
                conc_failures += 1;
            }
            conc_total += 1;
        }
    }
    let conc_rate = conc_failures as f64 / conc_total as f64;
    let conc_pass = conc_rate <= delta_est + 0.01;
    let regret_pass = regret_failures == 0;

    let mut summary = Summary::new(&["check", "instances", "failures", "pass"]);
    summary.push(vec![
        "ogd-regret-bound".into(),
        theory.regret_instances.to_string(),
        regret_failures.to_string(),
        (regret_pass as u8).to_string(),
    ]);
    summary.push(vec![
        "ip-est-concentration".into(),
        conc_total.to_string(),
        conc_failures.to_string(),
        (conc_pass as u8).to_string(),
    ]);
    let all_ok = regret_pass && conc_pass;
    let messages = vec![
        format!("ogd-regret-bound: {regret_failures}/{} violations", theory.regret_instances),
        format!("ip-est-concentration: failure rate {conc_rate}"),
    ];
    Ok((summary, all_ok, messages))
}
