//! `stochmatch`: command-line front-end for stochastic arrival-departure matching.
//!
//! Exit codes: 0 success, 1 domain violation, 2 usage or parse error,
//! 3 resource cap exceeded.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_traits::ToPrimitive;
use serde_json::json;

use stochmatch::policies::PolicyEstimate;
use stochmatch::{
    chi_star, estimate_opt, evaluate_policy_exact, evaluate_policy_mc, exact_opt, make_sn_family, parse_scenario,
    policy_by_name, run_adaptive, sample_instantiation, sample_value, validate_model, Error, Estimate, EstimatorConfig,
    Limits, Rational, StochasticModel,
};

#[derive(Parser)]
#[command(
    name = "stochmatch",
    version,
    about = "Matching in stochastic arrival-departure graphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario file against the model rules.
    Validate { path: PathBuf },
    /// Expected hindsight optimum, exactly or by Monte-Carlo.
    Opt(OptArgs),
    /// Optimal adaptive value by Bellman recursion.
    ChiStar(ChiStarArgs),
    /// Expected matching size of a policy.
    Run(RunArgs),
    /// chi_star / opt over a model family.
    Ratio(RatioArgs),
    /// Dump sampled instantiations as JSON lines.
    Sample(SampleArgs),
}

#[derive(Args)]
struct OptArgs {
    /// Scenario path or generator such as `sn:4`.
    source: String,
    #[arg(long, conflicts_with = "fpras")]
    exact: bool,
    /// Exact rational arithmetic (with --exact).
    #[arg(long, requires = "exact")]
    rational: bool,
    /// Monte-Carlo estimation with accuracy EPS and confidence DELTA.
    #[arg(long, num_args = 2, value_names = ["EPS", "DELTA"])]
    fpras: Option<Vec<f64>>,
    /// Samples per run.
    #[arg(long, requires = "fpras", conflicts_with = "paper_k")]
    k: Option<u64>,
    /// Use the literal n^4/eps^2 samples per run.
    #[arg(long, requires = "fpras")]
    paper_k: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Args)]
struct ChiStarArgs {
    source: String,
    #[arg(long)]
    rational: bool,
    /// Write the DP table as JSON.
    #[arg(long, value_name = "PATH")]
    export_table: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    source: String,
    #[arg(long)]
    policy: String,
    #[arg(long, conflicts_with = "exact")]
    samples: Option<u64>,
    #[arg(long)]
    exact: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Estimator settings for split-matching-fpras.
    #[arg(long, default_value_t = 0.25)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.25)]
    delta: f64,
    #[arg(long, default_value_t = 2000)]
    k: u64,
    /// Write one JSON trace per sampled instantiation.
    #[arg(long, value_name = "PATH", requires = "samples")]
    traces: Option<PathBuf>,
}

#[derive(Args)]
struct RatioArgs {
    #[arg(long, default_value = "sn")]
    family: String,
    #[arg(long)]
    from: usize,
    #[arg(long)]
    to: usize,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    source: String,
    #[arg(long)]
    count: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

/// Failure with its exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_resource_cap() {
            3
        } else if e.is_syntax() {
            2
        } else {
            1
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::usage(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Validate { path } => cmd_validate(&path),
        Command::Opt(args) => cmd_opt(&args),
        Command::ChiStar(args) => cmd_chi_star(&args),
        Command::Run(args) => cmd_run(&args),
        Command::Ratio(args) => cmd_ratio(&args),
        Command::Sample(args) => cmd_sample(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

/// `%.12g`-style formatting: 12 significant digits, trailing zeros trimmed.
fn fmt_num(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-5..12).contains(&exp) {
        let s = format!("{:.11e}", x);
        let (mantissa, e) = s.split_once('e').expect("exponent form");
        return format!("{}e{}", trim_zeros(mantissa), e);
    }
    let decimals = (11 - exp).max(0) as usize;
    trim_zeros(&format!("{:.*}", decimals, x)).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn load_source(source: &str) -> Result<StochasticModel, Failure> {
    if let Some(rest) = source.strip_prefix("sn:") {
        let n: usize = rest
            .parse()
            .map_err(|_| Failure::usage(format!("bad generator `{source}`: expected sn:N")))?;
        return Ok(make_sn_family(n)?);
    }
    let text = fs::read_to_string(source).map_err(|e| Failure::usage(format!("cannot read {source}: {e}")))?;
    Ok(parse_scenario(&text)?)
}

fn write_output(path: Option<&Path>, text: &str) -> CmdResult {
    match path {
        Some(p) => fs::write(p, text)?,
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn rational_f64(q: &Rational) -> f64 {
    q.to_f64().unwrap_or(f64::NAN)
}

fn cmd_validate(path: &Path) -> CmdResult {
    let text = fs::read_to_string(path).map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))?;
    match parse_scenario(&text) {
        Ok(model) => {
            println!("{}", validate_model(&model));
            Ok(())
        }
        Err(e) if e.is_syntax() => Err(e.into()),
        Err(e) => {
            println!("{e}");
            Err(Failure {
                code: 1,
                message: "model is invalid".into(),
            })
        }
    }
}

fn estimate_json(est: &Estimate) -> serde_json::Value {
    json!({
        "value": est.value,
        "samples_used": est.samples_used,
        "runs": est.runs,
        "degenerate_zero": est.degenerate_zero,
        "zero_probability": est.zero_probability,
        "max_run_std_dev": est.max_run_std_dev,
        "run_values": est.run_values,
    })
}

fn cmd_opt(args: &OptArgs) -> CmdResult {
    let model = load_source(&args.source)?;
    let limits = Limits::from_env();
    let (text, detail) = if args.exact {
        if args.rational {
            let v: Rational = exact_opt(&model, &limits)?;
            (
                v.to_string(),
                json!({"mode": "exact", "value": v.to_string(), "approx": rational_f64(&v)}),
            )
        } else {
            let v: f64 = exact_opt(&model, &limits)?;
            (fmt_num(v), json!({"mode": "exact", "value": v}))
        }
    } else if let Some(fp) = &args.fpras {
        let mut cfg = EstimatorConfig::new(fp[0], fp[1], args.seed);
        match (args.k, args.paper_k) {
            (Some(k), _) => cfg = cfg.with_samples(k),
            (None, true) => {}
            (None, false) => return Err(Failure::usage("--fpras needs --k K or --paper-k")),
        }
        let est = estimate_opt(&model, &cfg)?;
        let mut detail = estimate_json(&est);
        detail["mode"] = json!("fpras");
        detail["epsilon"] = json!(cfg.epsilon);
        detail["delta"] = json!(cfg.delta);
        detail["seed"] = json!(cfg.seed);
        (fmt_num(est.value), detail)
    } else {
        return Err(Failure::usage("choose --exact or --fpras EPS DELTA"));
    };
    match args.format {
        Format::Text => println!("{text}"),
        Format::Json => println!("{}", serde_json::to_string_pretty(&detail).expect("json")),
    }
    Ok(())
}

fn cmd_chi_star(args: &ChiStarArgs) -> CmdResult {
    let model = load_source(&args.source)?;
    let limits = Limits::from_env();
    let (text, table_json) = if args.rational {
        let (v, table) = chi_star::<Rational>(&model, &limits)?;
        (v.to_string(), table.to_json())
    } else {
        let (v, table) = chi_star::<f64>(&model, &limits)?;
        (fmt_num(v), table.to_json())
    };
    if let Some(path) = &args.export_table {
        let mut body = serde_json::to_string_pretty(&table_json).expect("json");
        body.push('\n');
        fs::write(path, body)?;
    }
    println!("{text}");
    Ok(())
}

fn cmd_run(args: &RunArgs) -> CmdResult {
    let model = load_source(&args.source)?;
    let limits = Limits::from_env();
    let cfg = EstimatorConfig::new(args.epsilon, args.delta, args.seed).with_samples(args.k);
    cfg.validate()?;
    let policy = policy_by_name(&args.policy, &model, &cfg, &limits)?;
    if args.exact {
        let v: f64 = evaluate_policy_exact(&model, policy.as_ref(), &limits)?;
        println!("{}", fmt_num(v));
        return Ok(());
    }
    let Some(samples) = args.samples else {
        return Err(Failure::usage("choose --samples N or --exact"));
    };
    let PolicyEstimate { mean, std_error, .. } = evaluate_policy_mc(&model, policy.as_ref(), samples, args.seed)?;
    println!("{} {}", fmt_num(mean), fmt_num(std_error));
    if let Some(path) = &args.traces {
        let mut body = String::new();
        for i in 0..samples {
            let inst = sample_instantiation(&model, args.seed, i)?;
            let trace = run_adaptive(&model, policy.as_ref(), &inst)?;
            body.push_str(&serde_json::to_string(&json!({"index": i, "trace": trace})).expect("json"));
            body.push('\n');
        }
        fs::write(path, body)?;
    }
    Ok(())
}

fn cmd_ratio(args: &RatioArgs) -> CmdResult {
    if args.family != "sn" {
        return Err(Failure::usage(format!(
            "unknown family `{}`; only `sn` is available",
            args.family
        )));
    }
    if args.from == 0 || args.from > args.to {
        return Err(Failure::usage("need 1 <= --from <= --to"));
    }
    let limits = Limits::from_env();
    let mut csv = String::from("n,chi_star,opt,ratio\n");
    for n in args.from..=args.to {
        let model = make_sn_family(n)?;
        let (chi, _) = chi_star::<Rational>(&model, &limits)?;
        let opt: Rational = exact_opt(&model, &limits)?;
        let ratio = chi.clone() / opt.clone();
        csv.push_str(&format!(
            "{n},{},{},{}\n",
            fmt_num(rational_f64(&chi)),
            fmt_num(rational_f64(&opt)),
            fmt_num(rational_f64(&ratio))
        ));
    }
    write_output(args.out.as_deref(), &csv)
}

fn cmd_sample(args: &SampleArgs) -> CmdResult {
    let model = load_source(&args.source)?;
    let mut body = String::new();
    for i in 0..args.count {
        let inst = sample_instantiation(&model, args.seed, i)?;
        let line = json!({
            "index": i,
            "death_times": inst.iter().map(|(v, t)| [v.0, t]).collect::<Vec<_>>(),
            "opt": sample_value(&model, &inst),
        });
        body.push_str(&serde_json::to_string(&line).expect("json"));
        body.push('\n');
    }
    write_output(args.out.as_deref(), &body)
}
