use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::Value;

use ifmr::selftest;
use ifmr::sim::{self, Manifest, Row, Scheme, SimConfig, SimOutput};

#[derive(Parser, Debug)]
#[command(name = "ifmr", version, about = "Monte Carlo experiments for integer-forcing message recovering receivers")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON configuration file; missing keys take their defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output CSV path. The manifest is written next to it as `<stem>.manifest.json`.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Override a config value by dotted key, e.g. `search.r_max=4` or `schemes=["ifmr"]`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Mean achievable rate of every scheme over the SNR grid.
    RateSweep,
    /// Outage probability at `target_rate` over the SNR grid.
    Outage,
    /// Throughput over `target_rate_grid` at each SNR point.
    Throughput,
    /// Mean iterations of the alternating search over the SNR grid.
    Convergence,
    /// The alternating search against the exhaustive oracle, with crossing SNRs at `target_rate`.
    Gap,
    /// Randomized invariant checks.
    Selftest,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::RateSweep => "rate-sweep",
            Command::Outage => "outage",
            Command::Throughput => "throughput",
            Command::Convergence => "convergence",
            Command::Gap => "gap",
            Command::Selftest => "selftest",
        }
    }
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Runtime(String),
}

impl Failure {
    fn exit(self) -> ExitCode {
        match self {
            Failure::Config(m) => {
                eprintln!("config error: {m}");
                ExitCode::from(1)
            }
            Failure::Runtime(m) => {
                eprintln!("error: {m}");
                ExitCode::from(2)
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.exit(),
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    if cli.command == Command::Selftest {
        return run_selftest(cli);
    }
    let cfg = load_config(cli.config.as_deref(), &cli.overrides, cli.seed)?;
    check_command(cli.command, &cfg)?;

    let out_csv = cli.out.clone().unwrap_or_else(|| PathBuf::from(format!("{}.csv", cli.command.name())));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| Failure::Runtime(format!("thread pool: {e}")))?;
    let threads = pool.current_num_threads();

    let start = Instant::now();
    let output = pool.install(|| sim::run(&cfg)).map_err(|e| Failure::Runtime(e.to_string()))?;
    let wall_time_s = start.elapsed().as_secs_f64();

    let rows = match cli.command {
        Command::Throughput => output.rows_at(&cfg.target_rate_grid),
        _ => output.rows(),
    };
    log_points(&output, &rows);

    let crossings = if cli.command == Command::Gap {
        let c: Vec<(Scheme, Option<f64>)> =
            [Scheme::Ifmr, Scheme::Oracle].into_iter().map(|s| (s, output.crossing(s, cfg.target_rate))).collect();
        report_gap(&c, cfg.target_rate);
        c
    } else {
        Vec::new()
    };

    write_outputs(&out_csv, &rows, &Manifest {
        command: cli.command.name(),
        config: &cfg,
        overrides: &cli.overrides,
        version: sim::VERSION,
        threads,
        wall_time_s,
        crossings,
    })
}

fn run_selftest(cli: &Cli) -> Result<(), Failure> {
    let checks = selftest::run_all(cli.seed.unwrap_or(1));
    for c in &checks {
        let verdict = if c.passed() { "PASS" } else { "FAIL" };
        println!("{verdict} {} ({} instances, {} failures, {:.2} s): {}", c.name, c.instances, c.failures, c.elapsed_s, c.detail);
    }
    if let Some(path) = &cli.out {
        let file = File::create(path).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))?;
        serde_json::to_writer_pretty(BufWriter::new(file), &checks).map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    let failed = checks.iter().filter(|c| !c.passed()).count();
    if failed > 0 {
        return Err(Failure::Runtime(format!("{failed} selftest check(s) failed")));
    }
    Ok(())
}

/// Reads the config file (or starts from defaults), applies `--set`
/// overrides and `--seed`, then parses and validates.
fn load_config(path: Option<&Path>, overrides: &[String], seed: Option<u64>) -> Result<SimConfig, Failure> {
    let mut value = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::Config(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str::<Value>(&text).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?
        }
        None => Value::Object(Default::default()),
    };
    let defaults = serde_json::to_value(SimConfig::default()).expect("config serializes");
    for item in overrides {
        apply_override(&mut value, &defaults, item)?;
    }
    if let Some(s) = seed {
        apply_override(&mut value, &defaults, &format!("seed={s}"))?;
    }
    let cfg: SimConfig = serde_json::from_value(value).map_err(|e| Failure::Config(e.to_string()))?;
    cfg.validate().map_err(|e| Failure::Config(e.to_string()))?;
    Ok(cfg)
}

/// Sets `key` (dotted path) to `value`, parsed as JSON when possible and as
/// a string otherwise. Keys must exist in the file or in the defaults.
fn apply_override(root: &mut Value, defaults: &Value, item: &str) -> Result<(), Failure> {
    let (key, raw) = item.split_once('=').ok_or_else(|| Failure::Config(format!("override `{item}` is not KEY=VALUE")))?;
    let new: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let unknown = || Failure::Config(format!("unknown key `{key}`"));
    let parts: Vec<&str> = key.split('.').collect();
    let mut node = root;
    let mut schema = Some(defaults);
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        schema = schema.and_then(|s| s.get(*part));
        match node {
            Value::Object(map) => {
                if !map.contains_key(*part) && schema.is_none() {
                    return Err(unknown());
                }
                if last {
                    map.insert(part.to_string(), new);
                    return Ok(());
                }
                let fill = schema.cloned().unwrap_or(Value::Null);
                node = map.entry(part.to_string()).or_insert(fill);
            }
            Value::Array(items) => {
                let idx: usize = part.parse().map_err(|_| unknown())?;
                let slot = items.get_mut(idx).ok_or_else(unknown)?;
                if last {
                    *slot = new;
                    return Ok(());
                }
                node = slot;
            }
            _ => return Err(unknown()),
        }
    }
    Err(unknown())
}

fn check_command(command: Command, cfg: &SimConfig) -> Result<(), Failure> {
    let need = |scheme: Scheme| {
        if cfg.schemes.contains(&scheme) {
            Ok(())
        } else {
            Err(Failure::Config(format!("schemes: `{}` needs scheme `{}`", command.name(), scheme.name())))
        }
    };
    match command {
        Command::Throughput if cfg.target_rate_grid.is_empty() => {
            Err(Failure::Config("target_rate_grid: `throughput` needs at least one target rate".into()))
        }
        Command::Convergence => need(Scheme::Ifmr),
        Command::Gap => need(Scheme::Ifmr).and_then(|_| need(Scheme::Oracle)),
        _ => Ok(()),
    }
}

fn log_points(output: &SimOutput, rows: &[Row]) {
    for &snr in &output.config.snr_grid_db {
        let parts: Vec<String> = output
            .config
            .schemes
            .iter()
            .filter_map(|&s| rows.iter().find(|r| r.snr_db == snr && r.scheme == s))
            .map(|r| format!("{} {:.3}", r.scheme.name(), r.mean_rate))
            .collect();
        eprintln!("snr {snr} dB: {}", parts.join(", "));
    }
}

fn report_gap(crossings: &[(Scheme, Option<f64>)], level: f64) {
    let fmt = |v: Option<f64>| v.map_or("not reached".to_string(), |x| format!("{x:.2} dB"));
    for (s, c) in crossings {
        println!("{} reaches {level} bit/channel use at {}", s.name(), fmt(*c));
    }
    if let [(_, Some(alg)), (_, Some(orc))] = crossings {
        println!("gap {:.2} dB", alg - orc);
    }
}

fn manifest_path(csv: &Path) -> PathBuf {
    let stem = csv.file_stem().and_then(|s| s.to_str()).unwrap_or("results");
    csv.with_file_name(format!("{stem}.manifest.json"))
}

fn write_outputs(csv: &Path, rows: &[Row], manifest: &Manifest) -> Result<(), Failure> {
    let io = |p: &Path, e: std::io::Error| Failure::Runtime(format!("cannot write {}: {e}", p.display()));
    let file = File::create(csv).map_err(|e| io(csv, e))?;
    sim::write_csv(rows, BufWriter::new(file)).map_err(|e| io(csv, e))?;
    let mpath = manifest_path(csv);
    let file = File::create(&mpath).map_err(|e| io(&mpath, e))?;
    serde_json::to_writer_pretty(BufWriter::new(file), manifest).map_err(|e| Failure::Runtime(e.to_string()))?;
    eprintln!("wrote {} and {}", csv.display(), mpath.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn defaults() -> Value {
        serde_json::to_value(SimConfig::default()).unwrap()
    }

    fn err_text(r: Result<(), Failure>) -> String {
        match r {
            Err(Failure::Config(m)) => m,
            _ => panic!("expected a config error"),
        }
    }

    #[test]
    fn overrides_follow_dotted_paths() {
        let mut v = json!({"k": 2});
        apply_override(&mut v, &defaults(), "search.r_max=3").unwrap();
        apply_override(&mut v, &defaults(), "schemes=[\"mmse\"]").unwrap();
        apply_override(&mut v, &defaults(), "trials=7").unwrap();
        assert_eq!(v["search"]["r_max"], json!(3));
        assert_eq!(v["search"]["delta"], json!(1e-3));
        assert_eq!(v["schemes"], json!(["mmse"]));
        let cfg: SimConfig = serde_json::from_value(v).unwrap();
        assert_eq!((cfg.k, cfg.trials, cfg.search.r_max), (2, 7, 3));
    }

    #[test]
    fn array_elements_can_be_set() {
        let mut v = json!({"rho2": [[1.0, 0.5], [0.5, 1.0]]});
        apply_override(&mut v, &defaults(), "rho2.0.1=0.25").unwrap();
        assert_eq!(v["rho2"][0][1], json!(0.25));
        assert!(err_text(apply_override(&mut v, &defaults(), "rho2.5.0=1")).contains("rho2.5.0"));
    }

    #[test]
    fn unknown_keys_are_named() {
        let mut v = json!({});
        assert!(err_text(apply_override(&mut v, &defaults(), "bogus=1")).contains("`bogus`"));
        assert!(err_text(apply_override(&mut v, &defaults(), "search.nope=1")).contains("`search.nope`"));
        assert!(err_text(apply_override(&mut v, &defaults(), "trials")).contains("KEY=VALUE"));
    }

    #[test]
    fn manifest_sits_next_to_csv() {
        assert_eq!(manifest_path(Path::new("out/fig3.csv")), PathBuf::from("out/fig3.manifest.json"));
    }
}
