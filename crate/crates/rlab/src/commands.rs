//! One function per subcommand. Each reads its blocks from the config,
//! writes its report files into the output directory and returns a short
//! human-readable summary.

use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rand::Rng as _;
use rand_distr::StandardNormal;
use rlab_core::calo::{sample_size_schedule, Dataset, DatasetKind};
use rlab_core::nn::ModelSpec;
use rlab_core::rng::{derive_seed, tag};
use rlab_core::robustness::{
    boxplot, criterion_study, instance_seed, run_instances, sample_size_sweep, select_models, InstancePlan, Removal,
    RobustnessRecord, SelectionConfig, SelectionCriterion, SweepPlan,
};
use rlab_core::training::{train_instance, TrainedInstance};
use rlab_core::Executor;
use serde::Serialize;

use crate::config::{ExperimentConfig, GeneratorBlock, TrainerBlock};
use crate::error::{Error, Result};
use crate::external::ExternalTrainer;
use crate::format::{load_dataset, save_dataset, write_csv};
use crate::pool::Pool;
use crate::report::{self, boxplot_row, fmt_real, histogram, real, JsonLines, BOXPLOT_HEADER};

fn gauss(seed: u64) -> f64 {
    rlab_core::rng::from_seed(seed).sample(StandardNormal)
}

/// Everything a command needs besides its config.
pub struct Context<'a> {
    pub out: PathBuf,
    pub pool: &'a Pool,
}

impl Context<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

/// Outcome of a command; `diverged_only` selects the dedicated exit code.
pub struct Outcome {
    pub summary: String,
    pub diverged_only: bool,
}

impl Outcome {
    fn ok(summary: String) -> Self {
        Self { summary, diverged_only: false }
    }
}

fn generate(block: &GeneratorBlock, seed: u64, pool: &Pool) -> Result<Dataset> {
    let config = block.config()?;
    let seed = block.seed.unwrap_or(seed);
    let chunk = 1024u64;
    let n = block.events as u64;
    let parts = pool.map(n.div_ceil(chunk) as usize, |i| {
        let start = i as u64 * chunk;
        Dataset::generate_range(&config, seed, start..(start + chunk).min(n))
    });
    Ok(Dataset {
        records: parts.into_iter().flatten().collect(),
        provenance: Some(rlab_core::calo::Provenance { config, seed }),
    })
}

/// Train and test pools from the `[data]` block.
fn pools(cfg: &ExperimentConfig, pool: &Pool) -> Result<(Dataset, Dataset)> {
    let data = cfg.require(&cfg.data, "data")?;
    let all = match (&data.path, &data.generate) {
        (Some(p), None) => load_dataset(p)?,
        (None, Some(g)) => generate(g, cfg.seed, pool)?,
        _ => return Err(Error::Config("[data] needs exactly one of `path` or `generate`".into())),
    };
    if !(data.test_fraction > 0.0 && data.test_fraction < 1.0) {
        return Err(Error::Config("data.test_fraction must lie in (0, 1)".into()));
    }
    let (test, train) = all.split_fixed(data.test_fraction, derive_seed(cfg.seed, tag::SPLIT, 0))?;
    if test.is_empty() || train.is_empty() {
        return Err(Error::Data(format!("{} events cannot be split into train and test pools", all.len())));
    }
    Ok((train, test))
}

fn model(cfg: &ExperimentConfig) -> Result<ModelSpec> {
    cfg.require(&cfg.model, "model")?.resolve()
}

fn check_training(cfg: &ExperimentConfig) -> Result<()> {
    cfg.training.validate().map_err(|e| Error::Config(format!("training: {e}")))
}

pub fn gen_data(cfg: &ExperimentConfig, ctx: &Context) -> Result<Outcome> {
    let block = cfg.require(&cfg.generator, "generator")?;
    let data = generate(block, cfg.seed, ctx.pool)?;
    let path = ctx.path("dataset.rlab");
    let crc = save_dataset(&data, &path)?;
    if block.csv {
        write_csv(&data, &ctx.path("dataset.csv"))?;
    }
    let kind = match block.kind {
        DatasetKind::A => "A",
        DatasetKind::B => "B",
    };
    Ok(Outcome::ok(format!("{} kind-{kind} events written to {} (crc32 {crc:08x})\n", data.len(), path.display())))
}

/// Per-instance log line.
#[derive(Serialize)]
struct InstanceLine<'a> {
    model: &'a str,
    init_seed: u64,
    data_seed: Option<u64>,
    stop_epoch: usize,
    diverged: bool,
    #[serde(with = "real")]
    final_test_loss: f64,
    #[serde(with = "real::vec")]
    loss_trace: &'a [f64],
}

impl<'a> From<&'a TrainedInstance> for InstanceLine<'a> {
    fn from(t: &'a TrainedInstance) -> Self {
        Self {
            model: &t.model_spec_id,
            init_seed: t.init_seed,
            data_seed: t.data_seed,
            stop_epoch: t.stop_epoch,
            diverged: t.diverged,
            final_test_loss: t.final_test_loss,
            loss_trace: &t.loss_trace,
        }
    }
}

pub fn train(cfg: &ExperimentConfig, ctx: &Context) -> Result<Outcome> {
    check_training(cfg)?;
    let spec = model(cfg)?;
    let (train, test) = pools(cfg, ctx.pool)?;
    let init_seed = derive_seed(cfg.seed, tag::INIT, 0);
    let inst = train_instance(&spec, &train, &test, init_seed, &cfg.training)?;

    let mut log = JsonLines::create(&ctx.path("log.jsonl"))?;
    log.push(&InstanceLine::from(&inst))?;
    log.finish()?;
    if let Some(w) = &inst.weights {
        report::write_json(&ctx.path("weights.json"), w)?;
    }
    let rows: Vec<Vec<String>> =
        inst.loss_trace.iter().enumerate().map(|(e, &l)| vec![(e + 1).to_string(), fmt_real(l)]).collect();
    report::write_table(&ctx.path("trace.csv"), &["epoch", "loss"], &rows)?;
    let summary = format!(
        "model {}: {} parameters, {} train / {} test events\nstopped after {} epochs, final test loss {}{}\n",
        spec.name,
        spec.param_count()?,
        train.len(),
        test.len(),
        inst.stop_epoch,
        fmt_real(inst.final_test_loss),
        if inst.diverged { " (diverged)" } else { "" }
    );
    report::write_text(&ctx.path("summary.txt"), &summary)?;
    Ok(Outcome { summary, diverged_only: inst.diverged })
}

fn summary_lines(record: &RobustnessRecord) -> Result<String> {
    let s = record.statistics()?;
    let diverged = record.instances().iter().filter(|p| p.diverged).count();
    Ok(format!(
        "{}: n = {} ({} diverged)\n  mean {}  std {}\n  min {}  q1 {}  median {}  q3 {}  max {}  iqr {}\n",
        record.model_spec_id(),
        s.count,
        diverged,
        fmt_real(s.mean),
        fmt_real(s.std),
        fmt_real(s.min),
        fmt_real(s.q1),
        fmt_real(s.median),
        fmt_real(s.q3),
        fmt_real(s.max),
        fmt_real(s.iqr),
    ))
}

pub fn robustness(cfg: &ExperimentConfig, ctx: &Context) -> Result<Outcome> {
    check_training(cfg)?;
    let block = cfg.require(&cfg.robustness, "robustness")?;
    if block.k == 0 || block.train_size == 0 {
        return Err(Error::Config("robustness.k and robustness.train_size must be positive".into()));
    }
    let spec = model(cfg)?;
    let (train, test) = pools(cfg, ctx.pool)?;
    let test = match block.test_size {
        Some(n) => test.subsample(n, derive_seed(cfg.seed, tag::TEST, 0)).map_err(|e| Error::Data(e.to_string()))?,
        None => test,
    };
    let plan = InstancePlan { k: block.k, mode: block.mode, base_seed: cfg.seed, train_size: block.train_size };
    let (record, instances) = run_instances(&spec, &plan, &train, &test, &cfg.training, ctx.pool)?;

    let mut log = JsonLines::create(&ctx.path("log.jsonl"))?;
    for inst in &instances {
        log.push(&InstanceLine::from(inst))?;
    }
    log.finish()?;
    report::write_records(&ctx.path("records.json"), std::slice::from_ref(&record))?;
    let rows: Vec<Vec<String>> = instances
        .iter()
        .enumerate()
        .map(|(i, t)| {
            vec![
                i.to_string(),
                t.init_seed.to_string(),
                t.data_seed.map_or(String::new(), |d| d.to_string()),
                t.stop_epoch.to_string(),
                t.diverged.to_string(),
                fmt_real(t.final_test_loss),
            ]
        })
        .collect();
    report::write_table(
        &ctx.path("losses.csv"),
        &["instance", "init_seed", "data_seed", "stop_epoch", "diverged", "loss"],
        &rows,
    )?;
    let b = boxplot(record.losses())?;
    report::write_table(&ctx.path("boxplot.csv"), &BOXPLOT_HEADER, &[boxplot_row(record.len(), &b)])?;
    let hist: Vec<Vec<String>> =
        histogram(record.losses(), 20).into_iter().map(|(lo, hi, c)| vec![fmt_real(lo), fmt_real(hi), c.to_string()]).collect();
    report::write_table(&ctx.path("histogram.csv"), &["lo", "hi", "count"], &hist)?;

    let mode = serde_json::to_string(&block.mode)?;
    let summary = format!("mode {}, train size {}, test size {}\n{}", mode.trim_matches('"'), block.train_size, test.len(), summary_lines(&record)?);
    report::write_text(&ctx.path("summary.txt"), &summary)?;
    let diverged_only = !record.instances().is_empty() && record.instances().iter().all(|p| p.diverged);
    Ok(Outcome { summary, diverged_only })
}

/// What a selection campaign ranks.
#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
enum Candidate {
    Mock { mean: f64 },
    Spec(ModelSpec),
}

impl Candidate {
    fn name(&self, index: usize) -> String {
        match self {
            Candidate::Mock { .. } => format!("mock{index}"),
            Candidate::Spec(s) => s.name.clone(),
        }
    }
}

#[derive(Serialize)]
struct RoundLine<'a> {
    round: usize,
    trained: &'a [usize],
    removed: &'a [Removal],
    survivors: &'a [usize],
}

pub fn select(cfg: &ExperimentConfig, ctx: &Context) -> Result<Outcome> {
    let block = cfg.require(&cfg.selection, "selection")?;
    block.policy.validate().map_err(|e| Error::Config(format!("selection.policy: {e}")))?;
    let candidates: Vec<Candidate> = match &block.trainer {
        TrainerBlock::Mock { means, .. } => {
            if !block.models.is_empty() || block.search_space.is_some() {
                return Err(Error::Config("the mock trainer takes its candidates from `means`".into()));
            }
            means.iter().map(|&mean| Candidate::Mock { mean }).collect()
        }
        _ => {
            let mut specs = Vec::new();
            for m in &block.models {
                specs.push(m.resolve()?);
            }
            if let Some(space) = &block.search_space {
                specs.extend(space.enumerate().map_err(|e| Error::Config(format!("search_space: {e}")))?);
            }
            specs.into_iter().map(Candidate::Spec).collect()
        }
    };
    if candidates.is_empty() {
        return Err(Error::Config("selection has no candidates".into()));
    }
    let sel = SelectionConfig { criterion: block.criterion, k: block.k, max_rounds: block.max_rounds, base_seed: cfg.seed };
    sel.validate().map_err(|e| Error::Config(format!("selection: {e}")))?;

    let failure: Mutex<Option<Error>> = Mutex::new(None);
    let fail = |e: Error| -> rlab_core::Error {
        let msg = e.to_string();
        failure.lock().unwrap().get_or_insert(e);
        rlab_core::Error::Contract(msg)
    };
    let outcome = match &block.trainer {
        TrainerBlock::Mock { sigma, .. } => {
            let trainer = |c: &Candidate, _: usize, _: usize, seed: u64| match c {
                Candidate::Mock { mean } => Ok(mean + sigma * gauss(seed)),
                Candidate::Spec(_) => unreachable!("mock campaigns only hold mock candidates"),
            };
            select_models(&candidates, &sel, &block.policy, &trainer, ctx.pool)
        }
        TrainerBlock::Train { train_size } => {
            check_training(cfg)?;
            let (train, test) = pools(cfg, ctx.pool)?;
            let train_size = *train_size;
            let trainer = |c: &Candidate, _: usize, _: usize, seed: u64| {
                let Candidate::Spec(spec) = c else { unreachable!("training needs model specs") };
                let sample = train.bootstrap_sample(train_size, derive_seed(seed, tag::DATA, 0))?;
                Ok(train_instance(spec, &sample, &test, derive_seed(seed, tag::INIT, 0), &cfg.training)?.final_test_loss)
            };
            // Instances inside a round already run in parallel.
            select_models(&candidates, &sel, &block.policy, &trainer, ctx.pool)
        }
        TrainerBlock::External { command } => {
            let ext = ExternalTrainer::new(command)?;
            let trainer = |c: &Candidate, i: usize, round: usize, seed: u64| ext.loss(c, i, round, seed).map_err(fail);
            select_models(&candidates, &sel, &block.policy, &trainer, ctx.pool)
        }
    };
    let outcome = match outcome {
        Ok(o) => o,
        Err(e) => return Err(failure.into_inner().unwrap().unwrap_or(Error::Core(e))),
    };

    let names: Vec<String> = candidates.iter().enumerate().map(|(i, c)| c.name(i)).collect();
    let records: Vec<RobustnessRecord> = outcome
        .losses
        .iter()
        .enumerate()
        .map(|(s, ls)| {
            let mut r = RobustnessRecord::new(names[s].clone());
            for (round, &l) in ls.iter().enumerate() {
                let p = rlab_core::robustness::InstanceProvenance {
                    init_seed: instance_seed(cfg.seed, s, round + 1),
                    data_seed: None,
                    stop_epoch: 0,
                    diverged: !l.is_finite(),
                };
                r.push(l, p);
            }
            r
        })
        .collect();
    report::write_records(&ctx.path("records.json"), &records)?;
    report::write_json(&ctx.path("ledger.json"), &outcome.ledger)?;
    let mut log = JsonLines::create(&ctx.path("log.jsonl"))?;
    for r in &outcome.ledger.rounds {
        log.push(&RoundLine { round: r.round, trained: &r.trained, removed: &r.removed, survivors: &r.survivors })?;
    }
    log.finish()?;
    let rows: Vec<Vec<String>> = outcome
        .ledger
        .rounds
        .iter()
        .map(|r| vec![r.round.to_string(), r.trained.len().to_string(), r.removed.len().to_string(), r.survivors.len().to_string()])
        .collect();
    report::write_table(&ctx.path("rounds.csv"), &["round", "trained", "removed", "survivors"], &rows)?;
    let winners: Vec<&Candidate> = outcome.winners.iter().map(|&w| &candidates[w]).collect();
    report::write_json(&ctx.path("winners.json"), &winners)?;

    let l = &outcome.ledger;
    let mut summary = format!(
        "{} candidates, criterion {}, {} rounds\ntrainings {} of exhaustive {} ({:.1}%)\n",
        l.candidates,
        block.criterion.label(),
        l.rounds.len(),
        l.total_trainings,
        l.exhaustive_cost,
        100.0 * l.total_trainings as f64 / l.exhaustive_cost as f64
    );
    for &w in &outcome.winners {
        summary.push_str(&format!("winner {} ({} instances)\n", names[w], l.instance_counts[w]));
    }
    if l.tie {
        summary.push_str("tie: the last round would have removed every survivor\n");
    }
    report::write_text(&ctx.path("summary.txt"), &summary)?;
    let mut losses = outcome.losses.iter().flatten().peekable();
    let diverged_only = losses.peek().is_some() && losses.all(|l| !l.is_finite());
    Ok(Outcome { summary, diverged_only })
}

pub fn sweep(cfg: &ExperimentConfig, ctx: &Context) -> Result<Outcome> {
    check_training(cfg)?;
    let block = cfg.require(&cfg.sweep, "sweep")?;
    let sizes: Vec<usize> = match (&block.indices, &block.sizes) {
        (Some(ix), None) => ix.iter().map(|&i| sample_size_schedule(i)).collect::<rlab_core::Result<_>>().map_err(|e| Error::Config(e.to_string()))?,
        (None, Some(s)) => s.clone(),
        _ => return Err(Error::Config("[sweep] needs exactly one of `indices` or `sizes`".into())),
    };
    if block.k == 0 || sizes.is_empty() || sizes.contains(&0) {
        return Err(Error::Config("sweep needs k >= 1 and positive sizes".into()));
    }
    let spec = model(cfg)?;
    let (train, test) = pools(cfg, ctx.pool)?;
    let plan = SweepPlan { k: block.k, base_seed: cfg.seed, test_size: block.test_size };
    let rows = sample_size_sweep(&spec, &sizes, &plan, &train, &test, &cfg.training, ctx.pool)
        .map_err(|e| match e {
            rlab_core::Error::Contract(m) if m.contains("exceeds the test pool") => Error::Data(m),
            e => Error::Core(e),
        })?;

    let table: Vec<Vec<String>> = rows.iter().map(|r| boxplot_row(r.n, &r.boxplot)).collect();
    report::write_table(&ctx.path("sweep.csv"), &BOXPLOT_HEADER, &table)?;
    let mut log = JsonLines::create(&ctx.path("log.jsonl"))?;
    #[derive(Serialize)]
    struct Line {
        n: usize,
        instance: usize,
        #[serde(with = "real")]
        loss: f64,
    }
    let mut losses = Vec::new();
    for r in &rows {
        for (i, &loss) in r.losses.iter().enumerate() {
            log.push(&Line { n: r.n, instance: i, loss })?;
            losses.push(vec![r.n.to_string(), i.to_string(), fmt_real(loss)]);
        }
    }
    log.finish()?;
    report::write_table(&ctx.path("losses.csv"), &["n", "instance", "loss"], &losses)?;
    let mut summary = format!("model {}, k = {}\n", spec.name, block.k);
    for r in &rows {
        summary.push_str(&format!(
            "n {:>6}: median {}  iqr {}\n",
            r.n,
            fmt_real(r.boxplot.median),
            fmt_real(r.boxplot.q3 - r.boxplot.q1)
        ));
    }
    report::write_text(&ctx.path("summary.txt"), &summary)?;
    let mut losses = rows.iter().flat_map(|r| &r.losses).peekable();
    let diverged_only = losses.peek().is_some() && losses.all(|l| !l.is_finite());
    Ok(Outcome { summary, diverged_only })
}

pub fn report(cfg: &ExperimentConfig, ctx: &Context) -> Result<Outcome> {
    let block = cfg.require(&cfg.report, "report")?;
    if block.inputs.is_empty() {
        return Err(Error::Config("report.inputs is empty".into()));
    }
    let mut records = Vec::new();
    for p in &block.inputs {
        records.extend(report::read_records(p)?);
    }
    if records.is_empty() || records.iter().any(|r| r.is_empty()) {
        return Err(Error::Data("report needs records with at least one instance each".into()));
    }
    let criteria = block.criteria.clone().unwrap_or_else(|| SelectionCriterion::STUDY.to_vec());
    for c in &criteria {
        c.validate().map_err(|e| Error::Config(e.to_string()))?;
    }
    let curves = criterion_study(&records, &criteria)?;

    let mut values = Vec::new();
    let mut ecdf_rows = Vec::new();
    for c in &curves {
        for (r, &v) in records.iter().zip(&c.values) {
            values.push(vec![c.criterion.label(), r.model_spec_id().to_string(), fmt_real(v)]);
        }
        for &(v, f) in &c.ecdf {
            ecdf_rows.push(vec![c.criterion.label(), fmt_real(v), fmt_real(f)]);
        }
    }
    report::write_table(&ctx.path("criteria.csv"), &["criterion", "model", "value"], &values)?;
    report::write_table(&ctx.path("ecdf.csv"), &["criterion", "value", "fraction"], &ecdf_rows)?;
    let mut header = vec!["model"];
    header.extend(BOXPLOT_HEADER);
    let mut boxes = Vec::new();
    let mut summary = String::new();
    for r in &records {
        let mut row = vec![r.model_spec_id().to_string()];
        row.extend(boxplot_row(r.len(), &boxplot(r.losses())?));
        boxes.push(row);
        summary.push_str(&summary_lines(r)?);
    }
    report::write_table(&ctx.path("boxplots.csv"), &header, &boxes)?;
    report::write_text(&ctx.path("summary.txt"), &summary)?;
    Ok(Outcome::ok(summary))
}

/// Runs `command` and stores the effective config beside its outputs.
pub fn run(command: &str, cfg: &ExperimentConfig, out: &Path, pool: &Pool) -> Result<Outcome> {
    std::fs::create_dir_all(out).map_err(Error::io(out))?;
    let ctx = Context { out: out.to_path_buf(), pool };
    let outcome = match command {
        "gen-data" => gen_data(cfg, &ctx),
        "train" => train(cfg, &ctx),
        "robustness" => robustness(cfg, &ctx),
        "select" => select(cfg, &ctx),
        "sweep" => sweep(cfg, &ctx),
        "report" => report(cfg, &ctx),
        other => Err(Error::Config(format!("unknown command {other}"))),
    }?;
    let mut stored = cfg.clone();
    stored.out = Some(out.to_path_buf());
    report::write_text(&ctx.path("config.toml"), &stored.to_toml()?)?;
    Ok(outcome)
}
