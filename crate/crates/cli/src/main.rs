use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use procfair::data::{generate_synthetic, load_csv, preprocess, split, write_csv, Dataset, Schema, SyntheticConfig};
use procfair::explain::{grad_explanations, shap_explanations, Background};
use procfair::harness::{
    compare_scenarios, config_hash, emit_sensitive_attributions, p_sweep, presets, run_once,
    run_scenario, write_atomic, write_output_meta, write_p_sweep_csv, ResultBundle, ScenarioConfig,
};
use procfair::harness::presets::{PSweepPreset, SweepPreset};
use procfair::linexp::{sweep_p_ws, Axis, SweepConfig};
use procfair::model::{linear_train, load_model, save_model, GradTarget, ModelFile};
use procfair::pairing::select_eval_pairs;
use procfair::train::{evaluate, train, EvalConfig, Mode, TrainConfig};
use procfair::{Error, Result};

#[derive(Parser)]
#[command(name = "procfair", version, about = "Procedural fairness experiments")]
struct Cli {
    /// Seed for data generation, splitting, training and evaluation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON configuration file; its meaning depends on the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (a file path for `generate`).
    #[arg(long, global = true, env = "PROCFAIR_OUT")]
    out: Option<PathBuf>,
    /// Number of repetitions for scenario runs.
    #[arg(long, global = true)]
    reps: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset as CSV plus a reload schema.
    Generate {
        #[arg(long, default_value_t = 0.65)]
        p: f64,
        #[arg(long, default_value_t = 20_000)]
        n: usize,
    },
    /// Train a model on the training split. `--config` takes a train config.
    Train(TrainArgs),
    /// Evaluate a saved model on the test split. `--config` takes an
    /// evaluation config.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Run or compare scenarios.
    #[command(subcommand)]
    Scenario(ScenarioCmd),
    /// Linear-model and bias-level sweeps.
    #[command(subcommand)]
    Sweep(SweepCmd),
    /// Dump explanations.
    #[command(subcommand)]
    Explain(ExplainCmd),
    /// Built-in configurations.
    #[command(subcommand)]
    Presets(PresetsCmd),
}

#[derive(Args)]
struct DataArgs {
    /// CSV file; synthetic data is generated when omitted.
    #[arg(long, requires = "schema")]
    data: Option<PathBuf>,
    /// Column roles for `--data`.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Synthetic bias parameter.
    #[arg(long, default_value_t = 0.65)]
    p: f64,
    /// Synthetic row count.
    #[arg(long, default_value_t = 20_000)]
    n: usize,
    #[arg(long, default_value_t = 0.8)]
    split_ratio: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    BceOnly,
    Procedural,
    DpRegularized,
    Linear,
}

#[derive(Clone, Copy, ValueEnum)]
enum TargetArg {
    Logit,
    Probability,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long, value_enum)]
    grad_target: Option<TargetArg>,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Subcommand)]
enum ScenarioCmd {
    /// Run every repetition of a scenario and write its result bundle.
    Run {
        /// Built-in scenario to run instead of `--config`.
        #[arg(long, conflicts_with = "config")]
        preset: Option<String>,
        /// Replace an existing bundle.
        #[arg(long)]
        overwrite: bool,
    },
    /// Rank-sum tests between result bundles.
    Compare {
        #[arg(required = true, num_args = 2..)]
        bundles: Vec<PathBuf>,
        /// Metric to compare; repeatable. Defaults to every non-timing metric.
        #[arg(long)]
        metric: Vec<String>,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
}

#[derive(Subcommand)]
enum SweepCmd {
    /// Sensitive-weight sweep at one bias level. `--config` takes a sweep
    /// config or sweep preset. Defaults: p 0.65, w_s -5:5:51.
    Ws {
        #[arg(long)]
        p: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        ws: Option<Axis>,
    },
    /// Procedural training across bias levels. `--config` takes a scenario or
    /// p-sweep preset. Default p 0.5:0.65:20.
    P {
        #[arg(long)]
        p: Option<Axis>,
    },
    /// Bias level by sensitive weight surface. `--config` takes a sweep
    /// config or sweep preset. Defaults: p 0.3:0.7:50, w_s -5:5:50.
    Grid {
        #[arg(long)]
        p: Option<Axis>,
        #[arg(long, allow_hyphen_values = true)]
        ws: Option<Axis>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Grad,
    KernelShap,
}

#[derive(Subcommand)]
enum ExplainCmd {
    /// Explanations of test rows and sensitive-feature SHAP values over the
    /// evaluation pairs. Uses `--model`, or trains the first repetition of
    /// the scenario in `--config`.
    Dump {
        #[arg(long, conflicts_with = "config")]
        model: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "kernel-shap")]
        method: MethodArg,
        /// Explain only the first N test rows.
        #[arg(long)]
        rows: Option<usize>,
        #[command(flatten)]
        data: DataArgs,
    },
}

#[derive(Subcommand)]
enum PresetsCmd {
    List,
    /// Write every preset as JSON into `--out`.
    Export,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed.unwrap_or(0);
    let out_dir = || cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    match &cli.command {
        Command::Generate { p, n } => {
            let data = generate_synthetic(&SyntheticConfig { n_points: *n, p: *p, seed })?;
            let path = match &cli.out {
                Some(o) if o.extension().is_some_and(|e| e == "csv") => o.clone(),
                _ => out_dir().join(format!("synthetic_p{p}_seed{seed}.csv")),
            };
            write_csv(&data, &path)?;
            let schema = path.with_extension("schema.json");
            write_atomic(&schema, serde_json::to_string_pretty(&data.export_schema())?.as_bytes())?;
            let hash = config_hash(&json!({ "generate": { "p": p, "n": n, "seed": seed } }));
            write_output_meta(&path, &hash)?;
            println!("{} ({} rows), schema {}", path.display(), data.n_rows(), schema.display());
        }
        Command::Train(args) => cmd_train(&cli, args, seed)?,
        Command::Evaluate { model, data } => {
            let (train_set, test) = load_split(data, seed)?;
            let cfg: EvalConfig = match &cli.config {
                Some(p) => read_json(p)?,
                None => EvalConfig::default(),
            };
            let cfg = EvalConfig { mmd: procfair::fairness::MmdConfig { seed, ..cfg.mmd }, ..cfg };
            let pairs = select_eval_pairs(&test, cfg.n_pairs)?;
            let bg = Background::sample(&train_set, cfg.background_size, seed)?;
            let report = match load_model(model)? {
                ModelFile::Mlp(m) => evaluate(&m, &test, &pairs, &bg, &cfg)?,
                ModelFile::Linear(m) => evaluate(&m, &test, &pairs, &bg, &cfg)?,
            };
            let text = serde_json::to_string_pretty(&report)?;
            let path = out_dir().join("report.json");
            write_atomic(&path, text.as_bytes())?;
            let hash = config_hash(&json!({ "evaluate": { "model": model, "seed": seed, "eval": cfg, "data": data_key(data) } }));
            write_output_meta(&path, &hash)?;
            println!("{text}");
        }
        Command::Scenario(ScenarioCmd::Run { preset, overwrite }) => {
            let mut cfg = match (preset, &cli.config) {
                (Some(name), _) => presets::scenarios()
                    .into_iter()
                    .find(|s| &s.id == name)
                    .ok_or_else(|| Error::InvalidInput(format!("unknown preset `{name}`")))?,
                (None, Some(path)) => ScenarioConfig::from_file(path)?,
                (None, None) => return Err(Error::InvalidInput("scenario run needs --config or --preset".into())),
            };
            if let Some(r) = cli.reps {
                cfg.repetitions = r;
            }
            if let Some(s) = cli.seed {
                cfg.master_seed = s;
            }
            let bundle = run_scenario(&cfg)?;
            let path = bundle.write(&out_dir(), *overwrite)?;
            for rep in bundle.repetitions.iter().filter(|r| r.error.is_some()) {
                let e = rep.error.as_ref().expect("filtered");
                eprintln!("repetition {} failed in {}: {}", rep.index, e.stage, e.message);
            }
            for (name, s) in &bundle.aggregate {
                println!("{name:>14}  {:.4} ± {:.4}  (n={})", s.mean, s.std, s.n);
            }
            println!("{}", path.display());
        }
        Command::Scenario(ScenarioCmd::Compare { bundles, metric, alpha }) => {
            let loaded = bundles.iter().map(|p| ResultBundle::from_file(p)).collect::<Result<Vec<_>>>()?;
            let table = compare_scenarios(&loaded, metric, *alpha)?;
            for r in &table.rows {
                let mark = if r.significant { "*" } else { "" };
                println!(
                    "{} vs {}  {:<10} {:.4} vs {:.4}  p={:.4}{mark}",
                    r.first, r.second, r.metric, r.mean_first, r.mean_second, r.p_value
                );
            }
            if let Some(dir) = &cli.out {
                let path = dir.join("comparison.csv");
                write_atomic(&path, &table.to_csv()?)?;
                let hashes: Vec<&str> = loaded.iter().map(|b| b.config_hash.as_str()).collect();
                write_output_meta(&path, &config_hash(&json!({ "compare": hashes, "alpha": alpha, "metrics": metric })))?;
            }
        }
        Command::Sweep(cmd) => cmd_sweep(&cli, cmd)?,
        Command::Explain(ExplainCmd::Dump { model, method, rows, data }) => {
            cmd_explain(&cli, model.as_deref(), *method, *rows, data, seed)?
        }
        Command::Presets(PresetsCmd::List) => {
            for (name, _) in presets::exports() {
                println!("{}", name.trim_end_matches(".json"));
            }
        }
        Command::Presets(PresetsCmd::Export) => {
            let dir = out_dir();
            for (name, text) in presets::exports() {
                write_atomic(&dir.join(&name), text.as_bytes())?;
            }
            println!("{}", dir.display());
        }
    }
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
    Ok(serde_json::from_str(&text)?)
}

fn data_key(args: &DataArgs) -> serde_json::Value {
    json!({
        "data": args.data, "schema": args.schema, "p": args.p, "n": args.n, "split_ratio": args.split_ratio,
    })
}

fn load_split(args: &DataArgs, seed: u64) -> Result<(Dataset, Dataset)> {
    let data = match (&args.data, &args.schema) {
        (Some(path), Some(schema)) => {
            let schema = Schema::from_json_file(schema)?;
            preprocess(&load_csv(path, &schema)?, &schema)?
        }
        _ => generate_synthetic(&SyntheticConfig { n_points: args.n, p: args.p, seed })?,
    };
    split(&data, args.split_ratio, seed)
}

fn cmd_train(cli: &Cli, args: &TrainArgs, seed: u64) -> Result<()> {
    let mut cfg: TrainConfig = match &cli.config {
        Some(p) => read_json(p)?,
        None => TrainConfig::default(),
    };
    cfg.seed = seed;
    let linear = matches!(args.mode, Some(ModeArg::Linear));
    if let Some(m) = args.mode {
        cfg.mode = match m {
            ModeArg::BceOnly | ModeArg::Linear => Mode::BceOnly,
            ModeArg::Procedural => Mode::Procedural,
            ModeArg::DpRegularized => Mode::DpRegularized,
        };
    }
    if let Some(t) = args.grad_target {
        cfg.grad_target = match t {
            TargetArg::Logit => GradTarget::Logit,
            TargetArg::Probability => GradTarget::Probability,
        };
    }
    cfg.alpha = args.alpha.unwrap_or(cfg.alpha);
    cfg.beta = args.beta.unwrap_or(cfg.beta);
    cfg.epochs = args.epochs.unwrap_or(cfg.epochs);
    cfg.hidden = args.hidden.unwrap_or(cfg.hidden);
    if linear {
        cfg.lr = args.lr.unwrap_or(SweepConfig::default().lr);
    } else {
        cfg.lr = args.lr.unwrap_or(cfg.lr);
    }
    cfg.validate()?;

    let (train_set, _) = load_split(&args.data, seed)?;
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    let hash = config_hash(&json!({ "train": cfg, "linear": linear, "data": data_key(&args.data) }));
    let model_path = dir.join("model.json");
    if linear {
        let params = linear_train(&train_set, cfg.epochs, cfg.lr, seed)?;
        save_model(&ModelFile::Linear(params), &model_path)?;
    } else {
        let (params, history) = train(&train_set, &cfg)?;
        save_model(&ModelFile::Mlp(params), &model_path)?;
        let hist_path = dir.join("history.csv");
        history.write_csv(&hist_path)?;
        write_output_meta(&hist_path, &hash)?;
        let last = history.epochs.last().expect("at least one epoch");
        println!("final loss {:.6} in {:.2}s", last.total, history.seconds);
    }
    write_output_meta(&model_path, &hash)?;
    println!("{}", model_path.display());
    Ok(())
}

fn cmd_sweep(cli: &Cli, cmd: &SweepCmd) -> Result<()> {
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    // a sweep preset supplies axes and seed; a bare sweep config only settings
    let preset = |default: SweepPreset| -> Result<SweepPreset> {
        let Some(path) = &cli.config else { return Ok(default) };
        let value: serde_json::Value = read_json(path)?;
        if value.get("ws").is_some() {
            return Ok(serde_json::from_value(value)?);
        }
        Ok(SweepPreset { config: serde_json::from_value(value)?, ..default })
    };
    let (path, hash) = match cmd {
        SweepCmd::Ws { p, ws } => {
            let mut pr = preset(presets::ws_sweep_linear())?;
            if let Some(p) = p {
                pr.p = Axis::new(*p, *p, 1)?;
            }
            run_linear_sweep(cli, pr, *ws, None, &dir.join("sweep_ws.csv"))?
        }
        SweepCmd::Grid { p, ws } => {
            let pr = preset(presets::p_ws_grid_linear())?;
            run_linear_sweep(cli, pr, *ws, *p, &dir.join("sweep_grid.csv"))?
        }
        SweepCmd::P { p } => {
            let mut pr = presets::p_sweep_procedural();
            if let Some(path) = &cli.config {
                let value: serde_json::Value = read_json(path)?;
                pr = if value.get("base").is_some() {
                    serde_json::from_value(value)?
                } else {
                    PSweepPreset { base: ScenarioConfig::from_file(path)?, ..pr }
                };
            }
            pr.p = p.unwrap_or(pr.p);
            if let Some(r) = cli.reps {
                pr.base.repetitions = r;
            }
            if let Some(s) = cli.seed {
                pr.base.master_seed = s;
            }
            pr.base.validate()?;
            let points = p_sweep(&pr.base, pr.p)?;
            let path = dir.join("sweep_p.csv");
            write_p_sweep_csv(&points, &path)?;
            for pt in &points {
                println!("p={:.4}  dp={:.4}  gpf_fae={:.4}  acc={:.4}", pt.p, pt.dp, pt.gpf_fae, pt.acc);
            }
            (path, config_hash(&pr))
        }
    };
    write_output_meta(&path, &hash)?;
    println!("{}", path.display());
    Ok(())
}

fn run_linear_sweep(cli: &Cli, mut pr: SweepPreset, ws: Option<Axis>, p: Option<Axis>, path: &Path) -> Result<(PathBuf, String)> {
    pr.ws = ws.unwrap_or(pr.ws);
    pr.p = p.unwrap_or(pr.p);
    if let Some(s) = cli.seed {
        pr.seed = s;
    }
    let grid = sweep_p_ws(pr.p, pr.ws, &pr.config, pr.seed)?;
    grid.write_csv(path)?;
    Ok((path.to_path_buf(), config_hash(&pr)))
}

fn cmd_explain(
    cli: &Cli,
    model: Option<&Path>,
    method: MethodArg,
    rows: Option<usize>,
    data: &DataArgs,
    seed: u64,
) -> Result<()> {
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    let (model, train_set, test, eval, hash) = match (model, &cli.config) {
        (Some(path), _) => {
            let (train_set, test) = load_split(data, seed)?;
            let eval = EvalConfig::default();
            let hash = config_hash(&json!({ "explain": { "model": path, "seed": seed, "data": data_key(data) } }));
            (load_model(path)?, train_set, test, eval, hash)
        }
        (None, Some(path)) => {
            let mut cfg = ScenarioConfig::from_file(path)?;
            if let Some(s) = cli.seed {
                cfg.master_seed = s;
            }
            let (params, _, _, prepared) =
                run_once(&cfg, cfg.master_seed).map_err(|e| Error::InvalidInput(format!("{}: {}", e.stage, e.message)))?;
            let hash = config_hash(&json!({ "explain": { "scenario": cfg } }));
            (ModelFile::Mlp(params), prepared.train, prepared.test, cfg.eval, hash)
        }
        (None, None) => return Err(Error::InvalidInput("explain dump needs --model or --config".into())),
    };
    let n = rows.unwrap_or(test.n_rows()).min(test.n_rows());
    let row_ids: Vec<usize> = (0..n).collect();
    let bg = Background::sample(&train_set, eval.background_size, seed)?;
    let pairs = select_eval_pairs(&test, eval.n_pairs)?;
    let budget = eval.shap_budget;
    let set = match (&model, method) {
        (ModelFile::Mlp(m), MethodArg::Grad) => grad_explanations(m, &test, &row_ids)?,
        (ModelFile::Linear(_), MethodArg::Grad) => {
            return Err(Error::InvalidInput("grad explanations of a linear model are its weights".into()))
        }
        (ModelFile::Mlp(m), MethodArg::KernelShap) => shap_explanations(m, &test, &row_ids, &bg, budget, seed)?,
        (ModelFile::Linear(m), MethodArg::KernelShap) => shap_explanations(m, &test, &row_ids, &bg, budget, seed)?,
    };
    let exp_path = dir.join("explanations.csv");
    set.write_csv(&test, &exp_path)?;
    write_output_meta(&exp_path, &hash)?;

    let sens_path = dir.join("sensitive_attributions.csv");
    let summary = match &model {
        ModelFile::Mlp(m) => emit_sensitive_attributions(m, &test, &pairs, &bg, budget, seed, &sens_path)?,
        ModelFile::Linear(m) => emit_sensitive_attributions(m, &test, &pairs, &bg, budget, seed, &sens_path)?,
    };
    write_output_meta(&sens_path, &hash)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    println!("{}\n{}", exp_path.display(), sens_path.display());
    Ok(())
}
