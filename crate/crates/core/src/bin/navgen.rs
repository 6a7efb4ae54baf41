use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use navgen::agent::{rollout, Mode};
use navgen::checkpoint::Checkpoint;
use navgen::config::RunConfig;
use navgen::data::{generate, read_split, world_ref, write_split, Split};
use navgen::eval::{evaluate, report, EvalOptions, SplitReport};
use navgen::inspect::{episode_streams, golden, trace};
use navgen::params::ModelParams;
use navgen::tasks::TaskKind;
use navgen::train::{curve_csv, LossRecord, Trainer};
use navgen::{Error, Result};
use rand::SeedableRng;

#[derive(Parser)]
#[command(
    name = "navgen",
    version,
    about = "Multi-task navigation agents on procedural worlds"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate worlds and episode files for every split.
    GenData {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train both stages and write a checkpoint and loss curve.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Run inference rollouts and score them.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated task kinds; all by default.
        #[arg(long, value_delimiter = ',')]
        tasks: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        exclude_kind: Vec<String>,
        /// JSON report path; a table is always printed.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Overrides the configuration stored in the checkpoint.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Score teacher actions and gold outputs instead of the model.
        #[arg(long)]
        oracle: bool,
        #[arg(long)]
        csv: bool,
    },
    /// Dump the streams of one episode, and its rollout given a checkpoint.
    Inspect {
        #[arg(long)]
        episode: String,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::standard()),
    }
}

fn parse_kinds(names: &[String]) -> Result<Vec<TaskKind>> {
    names
        .iter()
        .map(|n| {
            TaskKind::parse(n.trim())
                .ok_or_else(|| Error::Config(format!("unknown task kind {n:?}")))
        })
        .collect()
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn gen_data(config: Option<&Path>, out_dir: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let seeds = cfg.seeds();
    let splits = generate(&cfg.world, &cfg.tasks, &cfg.data, seeds.world, seeds.data)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    print!("{:<12}", "split");
    for k in TaskKind::ALL {
        print!("{:>8}", k.name());
    }
    println!("{:>8}", "worlds");
    for (split, d) in &splits {
        write_split(&out_dir.join(split.name()), d)?;
        print!("{:<12}", split.name());
        for k in TaskKind::ALL {
            print!("{:>8}", d.episodes.get(&k).map_or(0, Vec::len));
        }
        println!("{:>8}", d.worlds.len());
    }
    write(&out_dir.join("config.toml"), &cfg.to_toml())
}

fn checkpoint_losses(ckpt: &Checkpoint) -> Vec<LossRecord> {
    ckpt.notes
        .get("curve")
        .and_then(|v| serde_json::from_value(v.clone()).ok())
        .unwrap_or_default()
}

fn train(config: Option<&Path>, data: &Path, out: &Path, resume: Option<&Path>) -> Result<()> {
    let cfg = load_config(config)?;
    let d = read_split(&data.join(Split::Train.name()), false)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let (mut trainer, mut curve) = match resume {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            if ck.params.cfg != cfg.model {
                return Err(Error::Config(format!(
                    "{}: model section differs from the checkpoint",
                    path.display()
                )));
            }
            let curve = checkpoint_losses(&ck);
            (
                Trainer::from_checkpoint(&d, ck, cfg.train.clone(), cfg.agent.clone())?,
                curve,
            )
        }
        None => {
            let p = ModelParams::init(&cfg.model, cfg.seeds().model)?;
            (
                Trainer::new(&d, p, cfg.train.clone(), cfg.agent.clone())?,
                Vec::new(),
            )
        }
    };
    let notes = |trainer: &Trainer, curve: &[LossRecord]| {
        let mut ck = trainer.checkpoint();
        ck.notes.insert("config".into(), cfg.to_toml().into());
        ck.notes
            .insert("data_ref".into(), world_ref(&d.worlds).into());
        ck.notes.insert(
            "curve".into(),
            serde_json::to_value(curve).expect("curve serializes"),
        );
        ck
    };
    let save_every = cfg.train.save_every;
    let total = cfg.train.total_steps();
    while !trainer.finished() {
        let until = if save_every == 0 {
            total
        } else {
            (trainer.step / save_every + 1) * save_every
        };
        let log_every = cfg.train.log_every;
        let result = trainer.run_until(until, |r| {
            if r.step % log_every == 0 {
                eprintln!(
                    "step {:>6} {} {:?} loss {:.5}",
                    r.step,
                    r.stage.name(),
                    r.mode,
                    r.loss
                );
            }
        });
        curve.extend(trainer.curve.drain(..));
        if let Err(e) = result {
            write(&out.join("loss.csv"), &curve_csv(&curve, 1))?;
            return Err(e);
        }
        notes(&trainer, &curve).save(&out.join("checkpoint.nvgn"))?;
        write(&out.join("loss.csv"), &curve_csv(&curve, log_every))?;
    }
    write(&out.join("config.toml"), &cfg.to_toml())?;
    eprintln!("wrote {}", out.join("checkpoint.nvgn").display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn eval(
    checkpoint: &Path,
    data: &Path,
    tasks: &[String],
    exclude: &[String],
    report_path: Option<&Path>,
    config: Option<&Path>,
    oracle: bool,
    csv: bool,
) -> Result<()> {
    let ck = Checkpoint::load(checkpoint)?;
    let cfg = match (config, ck.notes.get("config").and_then(|v| v.as_str())) {
        (Some(p), _) => RunConfig::load(p)?,
        (None, Some(text)) => RunConfig::from_toml(text)?,
        (None, None) => RunConfig::standard(),
    };
    let mut kinds = if tasks.is_empty() {
        TaskKind::ALL.to_vec()
    } else {
        parse_kinds(tasks)?
    };
    let excluded = parse_kinds(exclude)?;
    kinds.retain(|k| !excluded.contains(k));
    let opts = EvalOptions {
        kinds,
        threshold: cfg.eval.threshold,
        max_episodes: cfg.eval.max_episodes,
        oracle,
        seed: cfg.seeds().eval,
    };
    let mut reports: Vec<SplitReport> = Vec::new();
    for split in &cfg.eval.splits {
        let d = read_split(&data.join(split.name()), false)?;
        let rows = evaluate(&ck.params, &d, &cfg.agent, &opts)?;
        let r = report(split.name(), rows)?;
        println!("== {} ==", split.name());
        if csv {
            print!("{}", r.summary.csv());
        } else {
            print!("{}", r.summary.table());
        }
        reports.push(r);
    }
    if let Some(path) = report_path {
        let json = serde_json::to_string_pretty(&reports).expect("report serializes");
        write(path, &json)?;
    }
    Ok(())
}

fn inspect(
    episode_id: &str,
    data: &Path,
    checkpoint: Option<&Path>,
    config: Option<&Path>,
) -> Result<()> {
    let split = Split::ALL
        .into_iter()
        .filter(|s| episode_id.starts_with(&format!("{}-", s.name())))
        .max_by_key(|s| s.name().len())
        .ok_or_else(|| Error::Validation(format!("{episode_id}: id names no split")))?;
    let d = read_split(&data.join(split.name()), false)?;
    let episode = d
        .episodes
        .values()
        .flatten()
        .find(|e| e.episode_id == episode_id)
        .ok_or_else(|| Error::Validation(format!("{episode_id}: no such episode")))?;
    let world = &d.worlds[episode.world];
    let cfg = load_config(config)?;
    let ck = checkpoint.map(Checkpoint::load).transpose()?;
    let params = match &ck {
        Some(c) => c.params.clone(),
        None => ModelParams::init(&cfg.model, cfg.seeds().model)?,
    };
    print!(
        "{}",
        golden(
            episode,
            &episode_streams(&params, world, episode.world, episode)?
        )
    );
    if ck.is_some() && episode.kind.navigates() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seeds().eval);
        let traj = rollout(
            world,
            episode.world,
            episode,
            &params,
            Mode::Infer,
            &cfg.agent,
            &mut rng,
        )?;
        println!("# trajectory");
        print!("{}", trace(world, &traj));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::GenData { config, out_dir } => gen_data(config.as_deref(), out_dir),
        Cmd::Train {
            config,
            data,
            out,
            resume,
        } => train(config.as_deref(), data, out, resume.as_deref()),
        Cmd::Eval {
            checkpoint,
            data,
            tasks,
            exclude_kind,
            report,
            config,
            oracle,
            csv,
        } => eval(
            checkpoint,
            data,
            tasks,
            exclude_kind,
            report.as_deref(),
            config.as_deref(),
            *oracle,
            *csv,
        ),
        Cmd::Inspect {
            episode,
            data,
            checkpoint,
            config,
        } => inspect(episode, data, checkpoint.as_deref(), config.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
