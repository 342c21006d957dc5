use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use psclab::aes::{key_fingerprint, Block};
use psclab::cpa::{
    compute_mtd, median, recover_key, run_trial, write_curve_csv, write_report_csv, write_summary_json, Mtd,
    TrialOptions,
};
use psclab::platform::synthesize_traces;
use psclab::platform::traceset::{create_output, TraceSet};
use psclab::rng;
use psclab::scenario::ScenarioSpec;
use psclab::Error;
use rand::RngCore;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "psclab", version, about = "Simulated remote power side-channel lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize one trace file per sensor.
    Synth(SynthArgs),
    /// Recover the key from a trace file (no key needed).
    Attack(AttackArgs),
    /// Measure minimum traces to disclosure against a known key.
    Mtd(MtdArgs),
    /// Repeat synthesis and MTD measurement over independent seeds.
    Repeat(RepeatArgs),
    /// Vary one scenario field and tabulate the MTD.
    Sweep(SweepArgs),
    /// Scenario file tools.
    #[command(subcommand)]
    Scenario(ScenarioCmd),
    /// Trace file tools.
    #[command(subcommand)]
    Trace(TraceCmd),
}

#[derive(Subcommand)]
enum ScenarioCmd {
    /// Parse and build a scenario file, print its digest.
    Validate { file: PathBuf },
}

#[derive(Subcommand)]
enum TraceCmd {
    /// Print the header of a trace file.
    Info { file: PathBuf },
}

#[derive(Args)]
struct OutputArgs {
    #[arg(long)]
    out: PathBuf,
    /// Overwrite existing outputs.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct KeyArgs {
    /// 32 hex digits, or `random` to derive one from the seed.
    #[arg(long, default_value = "random")]
    key: String,
    /// Write the key itself into the manifest, not only its fingerprint.
    #[arg(long)]
    emit_key: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[command(flatten)]
    key: KeyArgs,
    #[arg(long)]
    traces: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct AttackArgs {
    file: PathBuf,
    /// Correlate only the tenth-round samples.
    #[arg(long)]
    window: bool,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct MtdArgs {
    file: PathBuf,
    #[arg(long)]
    key: String,
    #[arg(long, default_value_t = 100)]
    step: usize,
    #[arg(long)]
    window: bool,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct CampaignArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[command(flatten)]
    key: KeyArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Traces synthesized per trial.
    #[arg(long, default_value_t = 10_000)]
    budget: usize,
    #[arg(long, default_value_t = 100)]
    step: usize,
    #[arg(long)]
    window: bool,
    /// Sensor the headline MTD is taken from (0 left, 1 right).
    #[arg(long, default_value_t = 0)]
    sensor: usize,
}

#[derive(Args)]
struct RepeatArgs {
    #[command(flatten)]
    campaign: CampaignArgs,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    campaign: CampaignArgs,
    /// Scenario field: a shorthand such as `ros_per_slice` or a JSON pointer.
    #[arg(long)]
    axis: String,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<String>,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    #[command(flatten)]
    output: OutputArgs,
}

/// CLI failure carrying its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidArgument(_) => 1,
            Error::Precondition(_) => 3,
            _ => 2,
        };
        Failure { code, message: e.to_string() }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: 1, message: message.into() }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Attack(a) => attack(a),
        Command::Mtd(a) => mtd(a),
        Command::Repeat(a) => repeat(a),
        Command::Sweep(a) => sweep(a),
        Command::Scenario(ScenarioCmd::Validate { file }) => validate(&file),
        Command::Trace(TraceCmd::Info { file }) => info(&file),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("psclab: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn parse_key(text: &str) -> Result<Block, Failure> {
    if text.len() != 32 {
        return Err(usage(format!("key must be 32 hex digits, got {} characters", text.len())));
    }
    Block::from_hex(text).map_err(|e| usage(format!("bad key: {e}")))
}

/// Explicit key, or one derived from the seed so runs stay replayable.
fn resolve_key(args: &KeyArgs, seed: u64) -> Result<Block, Failure> {
    if args.key == "random" {
        let mut k = Block::ZERO;
        rng::stream(seed, "key", 0).fill_bytes(&mut k.0);
        Ok(k)
    } else {
        parse_key(&args.key)
    }
}

fn key_record(key: &Block, args: &KeyArgs) -> Value {
    let mut v = json!({
        "source": if args.key == "random" { "random" } else { "explicit" },
        "fingerprint": key_fingerprint(key),
    });
    if args.emit_key {
        v["hex"] = json!(key.to_hex());
    }
    v
}

fn load_scenario(path: &Path) -> Result<ScenarioSpec, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure { code: 2, message: format!("{}: {e}", path.display()) })?;
    Ok(ScenarioSpec::from_json(&text)?)
}

fn load_traces(path: &Path) -> Result<TraceSet, Failure> {
    TraceSet::load(path).map_err(|e| Failure { code: 2, message: format!("{}: {e}", path.display()) })
}

/// Output files of one command. Every target is checked before anything is
/// written, so a refused run leaves no partial output.
struct Outputs {
    dir: PathBuf,
    force: bool,
}

impl Outputs {
    fn prepare(args: &OutputArgs, names: &[&str]) -> Result<Self, Failure> {
        fs::create_dir_all(&args.out).map_err(|e| Failure {
            code: 2,
            message: format!("cannot create {}: {e}", args.out.display()),
        })?;
        if !args.force {
            for n in names {
                let p = args.out.join(n);
                if p.exists() {
                    return Err(Failure {
                        code: 3,
                        message: format!("{} exists; pass --force to overwrite", p.display()),
                    });
                }
            }
        }
        Ok(Outputs { dir: args.out.clone(), force: args.force })
    }

    fn write(&self, name: &str, body: impl FnOnce(&mut BufWriter<fs::File>) -> psclab::Result<()>) -> CmdResult {
        let file = create_output(&self.dir.join(name), self.force)?;
        let mut w = BufWriter::new(file);
        body(&mut w)?;
        w.flush().map_err(Error::from)?;
        Ok(())
    }

    fn json(&self, name: &str, value: &Value) -> CmdResult {
        self.write(name, |w| write_summary_json(value, w))
    }
}

fn manifest(command: &str, mut fields: Value) -> Value {
    fields["command"] = json!(command);
    fields["tool_version"] = json!(env!("CARGO_PKG_VERSION"));
    fields
}

fn synth(a: SynthArgs) -> CmdResult {
    let spec = load_scenario(&a.scenario)?;
    let key = resolve_key(&a.key, a.seed)?;
    if a.traces == 0 {
        return Err(usage("--traces must be at least 1"));
    }
    let sets = synthesize_traces(&spec, &key, a.traces, a.seed)?;
    let names: Vec<String> = (0..sets.len()).map(|i| format!("sensor{i}.psct")).collect();
    let mut all: Vec<&str> = names.iter().map(String::as_str).collect();
    all.push("manifest.json");
    let out = Outputs::prepare(&a.output, &all)?;
    for (set, name) in sets.iter().zip(&names) {
        out.write(name, |w| set.write_to(w))?;
    }
    out.json(
        "manifest.json",
        &manifest(
            "synth",
            json!({
                "scenario_digest": hex_digest(&spec),
                "scenario": spec,
                "key": key_record(&key, &a.key),
                "seed": a.seed,
                "traces": a.traces,
                "files": names,
            }),
        ),
    )?;
    println!("wrote {} trace files ({} traces) to {}", sets.len(), a.traces, a.output.out.display());
    Ok(())
}

fn hex_digest(spec: &ScenarioSpec) -> String {
    hex::encode(spec.digest())
}

fn attack(a: AttackArgs) -> CmdResult {
    let traces = load_traces(&a.file)?;
    let report = recover_key(&traces, a.window)?;
    let out = Outputs::prepare(&a.output, &["report.csv", "summary.json"])?;
    out.write("report.csv", |w| write_report_csv(&report, w))?;
    out.json(
        "summary.json",
        &manifest(
            "attack",
            json!({
                "input": a.file,
                "scenario_digest": hex::encode(traces.scenario_digest),
                "sensor_id": traces.sensor_id,
                "traces": traces.len(),
                "use_window": a.window,
                "recovered_round10_key": report.recovered_round10_key,
                "recovered_master_key": report.recovered_master_key,
            }),
        ),
    )?;
    println!("{}", report.recovered_master_key);
    Ok(())
}

fn mtd(a: MtdArgs) -> CmdResult {
    let key = parse_key(&a.key)?;
    if a.step == 0 {
        return Err(usage("--step must be at least 1"));
    }
    let traces = load_traces(&a.file)?;
    let r = compute_mtd(&traces, &key, a.step, a.window)?;
    let out = Outputs::prepare(&a.output, &["report.csv", "curve.csv", "summary.json"])?;
    out.write("report.csv", |w| write_report_csv(&r.final_report, w))?;
    out.write("curve.csv", |w| write_curve_csv(&r.history, w))?;
    out.json(
        "summary.json",
        &manifest(
            "mtd",
            json!({
                "input": a.file,
                "scenario_digest": hex::encode(traces.scenario_digest),
                "key_fingerprint": key_fingerprint(&key),
                "step": a.step,
                "use_window": a.window,
                "traces": traces.len(),
                "mtd": r.overall,
                "per_byte_mtd": r.per_byte,
                "bytes_correct": r.final_report.bytes_correct,
                "recovered_round10_key": r.final_report.recovered_round10_key,
                "recovered_master_key": r.final_report.recovered_master_key,
            }),
        ),
    )?;
    println!("MTD {}", r.overall);
    Ok(())
}

struct CampaignSetup {
    spec: ScenarioSpec,
    key: Block,
    opts: TrialOptions,
}

fn setup(c: &CampaignArgs) -> Result<CampaignSetup, Failure> {
    let spec = load_scenario(&c.scenario)?;
    let key = resolve_key(&c.key, c.seed)?;
    if c.budget == 0 || c.step == 0 {
        return Err(usage("--budget and --step must be at least 1"));
    }
    if c.sensor >= spec.tdc.len() {
        return Err(usage(format!("--sensor must be below {}", spec.tdc.len())));
    }
    let opts = TrialOptions { step: c.step, sensor: c.sensor, use_window: c.window, seed: c.seed };
    Ok(CampaignSetup { spec, key, opts })
}

fn campaign_record(c: &CampaignArgs, s: &CampaignSetup) -> Value {
    json!({
        "scenario_digest": hex_digest(&s.spec),
        "scenario": s.spec,
        "key": key_record(&s.key, &c.key),
        "seed": c.seed,
        "budget": c.budget,
        "step": c.step,
        "use_window": c.window,
        "sensor": c.sensor,
    })
}

/// MTD and bytes recovered at the budget, for every sensor of one trial.
fn trial_all_sensors(s: &CampaignSetup, budget: usize, trial: usize) -> psclab::Result<Vec<(Mtd, u8)>> {
    let seed = psclab::cpa::trial_seed(s.opts.seed, trial);
    let sets = synthesize_traces(&s.spec, &s.key, budget, seed)?;
    sets.iter()
        .map(|t| {
            let r = compute_mtd(t, &s.key, s.opts.step.min(budget), s.opts.use_window)?;
            Ok((r.overall, r.bytes_correct_at_end()))
        })
        .collect()
}

fn repeat(a: RepeatArgs) -> CmdResult {
    if a.trials == 0 {
        return Err(usage("--trials must be at least 1"));
    }
    let s = setup(&a.campaign)?;
    let out = Outputs::prepare(&a.output, &["trials.csv", "summary.json"])?;
    let mut rows = Vec::new();
    for t in 0..a.trials {
        let r = run_trial(&s.spec, &s.key, a.campaign.budget, &s.opts, t)?;
        rows.push((t, r.final_report.trial_seed.unwrap_or_default(), r.overall, r.bytes_correct_at_end()));
        println!("trial {t}: MTD {}", r.overall);
    }
    out.write("trials.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["trial", "seed", "mtd", "bytes_correct"])?;
        for (t, seed, m, b) in &rows {
            c.write_record([t.to_string(), seed.to_string(), mtd_cell(*m), b.to_string()])?;
        }
        c.flush().map_err(Error::from)
    })?;
    let ok = rows.iter().filter(|r| r.2 != Mtd::NotReached).count();
    let mtds: Vec<f64> = rows.iter().map(|r| r.2.as_f64()).collect();
    let mut fields = campaign_record(&a.campaign, &s);
    fields["trials"] = json!(a.trials);
    fields["success_rate"] = json!(ok as f64 / a.trials as f64);
    fields["median_mtd"] = finite(median(mtds.clone()));
    fields["min_mtd"] = finite(mtds.iter().copied().fold(f64::INFINITY, f64::min));
    fields["max_mtd"] = finite(mtds.iter().copied().fold(0.0, f64::max));
    out.json("summary.json", &manifest("repeat", fields))?;
    println!("success rate {}/{}", ok, a.trials);
    Ok(())
}

fn finite(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!("not reached")
    }
}

fn mtd_cell(m: Mtd) -> String {
    match m {
        Mtd::Reached(n) => n.to_string(),
        Mtd::NotReached => "not_reached".into(),
    }
}

fn sweep(a: SweepArgs) -> CmdResult {
    if a.trials == 0 {
        return Err(usage("--trials must be at least 1"));
    }
    let base = setup(&a.campaign)?;
    // resolve every value first so a bad axis fails before any work
    let specs = a
        .values
        .iter()
        .map(|v| base.spec.with_axis(&a.axis, v).map(|s| (v.clone(), s)))
        .collect::<psclab::Result<Vec<_>>>()?;
    let out = Outputs::prepare(&a.output, &["sweep.csv", "summary.json"])?;
    let sensors = base.spec.tdc.len();
    let mut table = Vec::new();
    for (value, spec) in specs {
        let s = CampaignSetup { spec, key: base.key, opts: base.opts };
        let mut per_sensor: Vec<Vec<(Mtd, u8)>> = vec![Vec::new(); sensors];
        for t in 0..a.trials {
            for (k, r) in trial_all_sensors(&s, a.campaign.budget, t)?.into_iter().enumerate() {
                per_sensor[k].push(r);
            }
        }
        let summary: Vec<(f64, u8)> = per_sensor
            .iter()
            .map(|rs| {
                (
                    median(rs.iter().map(|r| r.0.as_f64()).collect()),
                    rs.iter().map(|r| r.1).min().unwrap_or(0),
                )
            })
            .collect();
        println!("{} = {}: MTD {}", a.axis, value, cell(summary[a.campaign.sensor].0));
        table.push((value, summary));
    }
    out.write("sweep.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        let mut header = vec!["value".to_string(), "mtd".into(), "bytes_at_budget".into()];
        for k in 0..sensors {
            header.push(format!("mtd_sensor{k}"));
            header.push(format!("bytes_sensor{k}"));
        }
        c.write_record(&header)?;
        for (value, summary) in &table {
            let head = summary[a.campaign.sensor];
            let mut row = vec![value.clone(), cell(head.0), head.1.to_string()];
            for (m, b) in summary {
                row.push(cell(*m));
                row.push(b.to_string());
            }
            c.write_record(&row)?;
        }
        c.flush().map_err(Error::from)
    })?;
    let mut fields = campaign_record(&a.campaign, &base);
    fields["axis"] = json!(a.axis);
    fields["values"] = json!(a.values);
    fields["trials"] = json!(a.trials);
    out.json("summary.json", &manifest("sweep", fields))?;
    Ok(())
}

fn cell(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        "not_reached".into()
    }
}

fn validate(file: &Path) -> CmdResult {
    let spec = load_scenario(file)?;
    let built = psclab::scenario::make_scenario(&spec)?;
    let bbox = built.grid.victim_bbox().expect("victim placed");
    println!("scenario ok");
    println!("digest {}", hex_digest(&spec));
    println!("samples per trace {}", spec.samples_per_trace());
    println!("victim flip-flop box {}x{} slices", bbox.width(), bbox.height());
    println!("activity sources {}", built.sources.len());
    println!("fence slices {}", built.grid.fence_elements.len());
    for (i, s) in built.grid.sensor_positions.iter().enumerate() {
        println!("sensor {i} at ({}, {})", s.x, s.y);
    }
    Ok(())
}

fn info(file: &Path) -> CmdResult {
    let t = load_traces(file)?;
    let v = json!({
        "traces": t.len(),
        "samples_per_trace": t.samples_per_trace(),
        "tap_count": t.tap_count,
        "window": t.window,
        "sensor_id": t.sensor_id,
        "negate": t.negate,
        "scenario_digest": hex::encode(t.scenario_digest),
    });
    println!("{}", serde_json::to_string_pretty(&v).expect("json"));
    Ok(())
}
