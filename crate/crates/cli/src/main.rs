//! `marginprop` command-line runner.

use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use marginprop::costmodel::{
    count_ops, mlp_infer_cost_conventional, mlp_infer_cost_mp, mlp_train_cost_conventional, mlp_train_cost_mp, mp_cost,
    mvm_cost, svm_infer_cost_conventional, svm_infer_cost_mp, CostReport,
};
use marginprop::data::{
    export_grid, gen_separable, gen_xor, load_csv, read_dataset_csv, write_dataset_csv, write_grid_csv, GridBounds,
    Schema,
};
use marginprop::quantize::{precision_sweep, write_sweep_csv};
use marginprop::trainer::evaluate;
use marginprop::{train, Dataset, Model, ModelKind, TrainConfig};

#[derive(Parser)]
#[command(name = "marginprop", version, about = "Margin-propagation networks: training, evaluation and cost models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic 2-D dataset as CSV.
    GenData(GenDataArgs),
    /// Train a model and write it as JSON.
    Train(TrainArgs),
    /// Print overall and per-class accuracy as JSON.
    Eval(EvalArgs),
    /// Write decision values on a 2-D lattice as CSV.
    Grid(GridArgs),
    /// Fixed-point accuracy for a range of bit widths as CSV.
    QuantizeSweep(SweepArgs),
    /// Operation counts and energy from the closed-form cost model.
    Cost(CostArgs),
    /// Measured solver sparsity and operation counts as JSON.
    Sparsity(SparsityArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum DataKind {
    Xor,
    Separable,
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long, value_enum)]
    kind: DataKind,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Split {
    Train,
    Test,
}

/// Dataset input: an encoded CSV, or a raw file read through a schema.
#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    data: PathBuf,
    /// Schema JSON for raw files; the file is split and scaled per the schema.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Split to use with `--schema`.
    #[arg(long, value_enum, default_value = "train")]
    split: Split,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_parser = parse_kind)]
    model: ModelKind,
    #[command(flatten)]
    data: DataArgs,
    /// Config file, JSON or `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Training curve CSV.
    #[arg(long)]
    curve: Option<PathBuf>,
    /// Worker threads for per-sample gradients.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model_file: PathBuf,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long)]
    model_file: PathBuf,
    /// Points per axis.
    #[arg(long, default_value_t = 101)]
    resolution: usize,
    /// `x_min,x_max,y_min,y_max`.
    #[arg(long, value_parser = parse_bounds, default_value = "0,1,0,1")]
    bounds: GridBounds,
    /// Output CSV; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    model_file: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Total bit widths, e.g. `4..16` or `8,12,16`.
    #[arg(long, value_parser = parse_ints, default_value = "4..16")]
    bits: Ints,
    /// Output CSV; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    /// MVM vs one MP solve over `N` terms.
    Primitive,
    /// One epoch of MLP training over `T` samples.
    MlpTrain,
    /// One MLP forward pass.
    MlpInfer,
    /// One kernel-machine decision over `S` support vectors.
    SvmInfer,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

/// Each size accepts a value, an inclusive range `a..b`, or a list `a,b,c`.
#[derive(Args)]
struct CostArgs {
    #[arg(long, value_enum)]
    family: Family,
    #[arg(long = "I", value_parser = parse_ints, default_value = "2")]
    i: Ints,
    #[arg(long = "J", value_parser = parse_ints, default_value = "10")]
    j: Ints,
    #[arg(long = "T", value_parser = parse_ints, default_value = "100")]
    t: Ints,
    #[arg(long = "S", value_parser = parse_ints, default_value = "100")]
    s: Ints,
    #[arg(long = "N", value_parser = parse_ints, default_value = "10")]
    n: Ints,
    /// Sparsity factor, a value or list.
    #[arg(long = "F", value_parser = parse_floats, default_value = "1")]
    f: Floats,
    /// Bit width.
    #[arg(long = "d", value_parser = parse_ints, default_value = "10")]
    d: Ints,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Output file; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SparsityArgs {
    #[arg(long)]
    model_file: PathBuf,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Clone, Debug)]
struct Ints(Vec<usize>);

#[derive(Clone, Debug)]
struct Floats(Vec<f64>);

fn parse_kind(s: &str) -> std::result::Result<ModelKind, String> {
    s.parse().map_err(|_| {
        let names: Vec<&str> = ModelKind::ALL.iter().map(|k| k.name()).collect();
        format!("expected one of {}", names.join(", "))
    })
}

fn parse_ints(s: &str) -> std::result::Result<Ints, String> {
    let int = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("`{t}` is not a non-negative integer"));
    let values = if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (int(a)?, int(b)?);
        if a > b {
            return Err(format!("empty range {s}"));
        }
        (a..=b).collect()
    } else {
        s.split(',').map(int).collect::<std::result::Result<Vec<_>, _>>()?
    };
    Ok(Ints(values))
}

fn parse_floats(s: &str) -> std::result::Result<Floats, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("`{t}` is not a number")))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map(Floats)
}

fn parse_bounds(s: &str) -> std::result::Result<GridBounds, String> {
    let v = parse_floats(s)?.0;
    let [x_min, x_max, y_min, y_max] = v[..] else {
        return Err("expected x_min,x_max,y_min,y_max".into());
    };
    Ok(GridBounds { x_min, x_max, y_min, y_max })
}

/// Bad flag values or configuration; exits 1.
#[derive(Debug)]
struct Usage(String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn exit_code(e: &anyhow::Error) -> u8 {
    use marginprop::Error as E;
    if e.downcast_ref::<Usage>().is_some() {
        return 1;
    }
    match e.downcast_ref::<E>() {
        Some(E::InvalidConfig(_) | E::InvalidCostParams(_)) => 1,
        _ => 2,
    }
}

fn load_data(args: &DataArgs) -> Result<Dataset> {
    let ctx = || format!("reading {}", args.data.display());
    let Some(schema_path) = &args.schema else {
        return read_dataset_csv(&args.data).with_context(ctx);
    };
    let schema = Schema::from_json_file(schema_path).with_context(|| format!("reading {}", schema_path.display()))?;
    let split = load_csv(&args.data, &schema).with_context(ctx)?;
    Ok(match args.split {
        Split::Train => split.train,
        Split::Test => split.test,
    })
}

fn load_model(path: &Path) -> Result<Model> {
    Model::load(path).with_context(|| format!("reading {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

/// Runs `body` against the named file, or stdout.
fn with_output(path: Option<&Path>, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match path {
        Some(p) => {
            let mut w = create(p)?;
            body(&mut w)?;
            w.flush()?;
        }
        None => {
            let mut w = io::stdout().lock();
            body(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn print_json(v: &Value) -> Result<()> {
    with_output(None, |w| {
        serde_json::to_writer_pretty(&mut *w, v)?;
        Ok(writeln!(w)?)
    })
}

fn gen_data(a: GenDataArgs) -> Result<()> {
    let data = match a.kind {
        DataKind::Xor => gen_xor(a.n, a.seed)?,
        DataKind::Separable => gen_separable(a.n, a.seed)?,
    };
    write_dataset_csv(&data, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            TrainConfig::parse_for(a.model, &text).with_context(|| format!("in {}", p.display()))?
        }
        None => TrainConfig::for_kind(a.model),
    }
    .with_env_seed()?;
    if let Some(t) = a.threads {
        if t == 0 {
            return Err(Usage("--threads must be at least 1".into()).into());
        }
        cfg.threads = t;
    }
    let data = load_data(&a.data)?;
    let (model, curve) = train(a.model, &data, &cfg)?;
    model.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    if let Some(p) = &a.curve {
        let mut w = create(p)?;
        curve.write_csv(&mut w)?;
        w.flush()?;
    }
    let eval = evaluate(&model, &data)?;
    print_json(&json!({ "model": a.model.name(), "seed": cfg.seed, "train": eval.to_json() }))
}

fn eval_cmd(a: EvalArgs) -> Result<()> {
    let model = load_model(&a.model_file)?;
    let data = load_data(&a.data)?;
    print_json(&evaluate(&model, &data)?.to_json())
}

fn grid_cmd(a: GridArgs) -> Result<()> {
    let model = load_model(&a.model_file)?;
    let points = export_grid(&model, a.bounds, a.resolution)?;
    with_output(a.out.as_deref(), |w| Ok(write_grid_csv(&points, w)?))
}

fn sweep_cmd(a: SweepArgs) -> Result<()> {
    let model = load_model(&a.model_file)?;
    let data = load_data(&a.data)?;
    let bits: Vec<u32> = a.bits.0.iter().map(|&d| d as u32).collect();
    let rows = precision_sweep(&model, &data, &bits)?;
    with_output(a.out.as_deref(), |w| Ok(write_sweep_csv(&rows, w)?))
}

struct CostRow {
    params: Vec<(&'static str, Value)>,
    conventional: CostReport,
    mp: CostReport,
}

fn cartesian(axes: &[(&'static str, Vec<Value>)]) -> Vec<Vec<(&'static str, Value)>> {
    axes.iter().fold(vec![Vec::new()], |acc, (name, values)| {
        acc.into_iter()
            .flat_map(|prefix| {
                values.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push((*name, v.clone()));
                    p
                })
            })
            .collect()
    })
}

fn cost_rows(a: &CostArgs) -> Result<Vec<CostRow>> {
    let ints = |v: &Ints| v.0.iter().map(|&x| Value::from(x)).collect::<Vec<_>>();
    let floats = |v: &Floats| v.0.iter().map(|&x| Value::from(x)).collect::<Vec<_>>();
    let axes: Vec<(&'static str, Vec<Value>)> = match a.family {
        Family::Primitive => vec![("N", ints(&a.n)), ("F", floats(&a.f)), ("d", ints(&a.d))],
        Family::MlpTrain => vec![
            ("I", ints(&a.i)),
            ("J", ints(&a.j)),
            ("T", ints(&a.t)),
            ("F", floats(&a.f)),
            ("d", ints(&a.d)),
        ],
        Family::MlpInfer => vec![("I", ints(&a.i)), ("J", ints(&a.j)), ("F", floats(&a.f)), ("d", ints(&a.d))],
        Family::SvmInfer => vec![("S", ints(&a.s)), ("F", floats(&a.f)), ("d", ints(&a.d))],
    };
    cartesian(&axes)
        .into_iter()
        .map(|params| {
            let get = |k: &str| params.iter().find(|(n, _)| *n == k).map(|(_, v)| v.clone()).unwrap_or(Value::Null);
            let u = |k: &str| get(k).as_u64().unwrap_or(0) as usize;
            let (f, d) = (get("F").as_f64().unwrap_or(1.0), u("d") as u32);
            let (conventional, mp) = match a.family {
                Family::Primitive => (mvm_cost(u("N"), d)?, mp_cost(u("N"), f, d)?),
                Family::MlpTrain => (
                    mlp_train_cost_conventional(u("I"), u("J"), u("T"), d)?,
                    mlp_train_cost_mp(u("I"), u("J"), u("T"), f, d)?,
                ),
                Family::MlpInfer => (
                    mlp_infer_cost_conventional(u("I"), u("J"), d)?,
                    mlp_infer_cost_mp(u("I"), u("J"), f, d)?,
                ),
                Family::SvmInfer => (svm_infer_cost_conventional(u("S"), d)?, svm_infer_cost_mp(u("S"), f, d)?),
            };
            Ok(CostRow {
                params,
                conventional,
                mp,
            })
        })
        .collect()
}

fn report_json(r: &CostReport) -> Value {
    json!({
        "counts": r.counts,
        "elementary_ops": r.elementary_ops,
        "energy_pj": r.energy_pj,
        "energy_extrapolated": r.energy_extrapolated,
    })
}

fn cost_cmd(a: CostArgs) -> Result<()> {
    let rows = cost_rows(&a)?;
    with_output(a.out.as_deref(), |w| {
        match a.format {
            Format::Json => {
                let items: Vec<Value> = rows
                    .iter()
                    .map(|r| {
                        let params: serde_json::Map<String, Value> =
                            r.params.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
                        json!({
                            "params": params,
                            "conventional": report_json(&r.conventional),
                            "mp": report_json(&r.mp),
                        })
                    })
                    .collect();
                serde_json::to_writer_pretty(&mut *w, &items)?;
                writeln!(w)?;
            }
            Format::Csv => {
                let Some(first) = rows.first() else { return Ok(()) };
                let mut header: Vec<&str> = first.params.iter().map(|(k, _)| *k).collect();
                header.extend(["ops_conventional", "ops_mp", "energy_pj_conventional", "energy_pj_mp", "mults_mp"]);
                writeln!(w, "{}", header.join(","))?;
                for r in &rows {
                    let mut cells: Vec<String> = r.params.iter().map(|(_, v)| v.to_string()).collect();
                    cells.extend(
                        [
                            r.conventional.elementary_ops,
                            r.mp.elementary_ops,
                            r.conventional.energy_pj,
                            r.mp.energy_pj,
                            r.mp.counts.mults,
                        ]
                        .map(|x| x.to_string()),
                    );
                    writeln!(w, "{}", cells.join(","))?;
                }
            }
        }
        Ok(())
    })
}

fn sparsity_cmd(a: SparsityArgs) -> Result<()> {
    let model = load_model(&a.model_file)?;
    let data = load_data(&a.data)?;
    let counts = count_ops(&model, &data)?;
    let mean = counts
        .mean_active_fraction()
        .ok_or_else(|| Usage("model made no solver calls".into()))?;
    print_json(&json!({
        "model": model.kind().name(),
        "samples": data.len(),
        "mean_active_fraction": mean,
        "counts": counts,
    }))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Grid(a) => grid_cmd(a),
        Command::QuantizeSweep(a) => sweep_cmd(a),
        Command::Cost(a) => cost_cmd(a),
        Command::Sparsity(a) => sparsity_cmd(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
