use nouk::cli;
use std::path::PathBuf;
use std::process::ExitCode;

const USAGE: &str = "\
usage: nouk <subcommand> --config PATH [--seed U64] [--threads N] [--out DIR] [--format csv|json]

subcommands: evolve, apply, deriv, mild, fit-theta, holder, zygmund, schauder, check
environment: NOUK_THREADS sets the default thread count
exit codes:  0 success, 2 configuration error, 3 numerical failure, 4 failed invariant suite";

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match run(&args) {
        Ok(code) => code,
        Err((code, message)) => {
            eprintln!("nouk: {message}");
            ExitCode::from(code)
        }
    }
}

fn run(args: &[String]) -> Result<ExitCode, (u8, String)> {
    if args.is_empty() || args[0] == "--help" || args[0] == "-h" {
        println!("{USAGE}");
        return Ok(ExitCode::SUCCESS);
    }
    if args[0] == "--version" {
        println!("{}", cli::VERSION);
        return Ok(ExitCode::SUCCESS);
    }
    let subcommand = args[0].clone();
    let mut config_path: Option<PathBuf> = None;
    let mut seed_override: Option<u64> = None;
    let mut threads_override: Option<usize> = None;
    let mut out_dir = PathBuf::from(".");
    let mut format_override: Option<cli::OutputFormat> = None;

    let mut i = 1;
    while i < args.len() {
        let flag = args[i].as_str();
        let value = |i: usize| -> Result<&String, (u8, String)> {
            args.get(i + 1)
                .ok_or_else(|| (2, format!("flag {flag} needs a value\n{USAGE}")))
        };
        match flag {
            "--config" => {
                config_path = Some(PathBuf::from(value(i)?));
                i += 2;
            }
            "--seed" => {
                seed_override = Some(
                    value(i)?
                        .parse()
                        .map_err(|e| (2, format!("--seed: {e}")))?,
                );
                i += 2;
            }
            "--threads" => {
                threads_override = Some(
                    value(i)?
                        .parse()
                        .map_err(|e| (2, format!("--threads: {e}")))?,
                );
                i += 2;
            }
            "--out" => {
                out_dir = PathBuf::from(value(i)?);
                i += 2;
            }
            "--format" => {
                format_override = Some(
                    cli::OutputFormat::parse(value(i)?).map_err(|e| (2, e.to_string()))?,
                );
                i += 2;
            }
            other => return Err((2, format!("unknown flag `{other}`\n{USAGE}"))),
        }
    }
    let config_path = config_path.ok_or((2, format!("--config is required\n{USAGE}")))?;
    let text = std::fs::read_to_string(&config_path)
        .map_err(|e| (2, format!("cannot read {}: {e}", config_path.display())))?;
    let mut cfg = cli::RunConfig::parse(&text).map_err(|e| (2, e.to_string()))?;
    if let Some(seed) = seed_override {
        cfg.run.seed = seed;
    }
    if let Some(threads) = threads_override {
        cfg.run.threads = threads.max(1);
    } else if let Ok(env_threads) = std::env::var("NOUK_THREADS") {
        if let Ok(n) = env_threads.parse::<usize>() {
            cfg.run.threads = n.max(1);
        }
    }
    if let Some(f) = format_override {
        cfg.run.format = f;
    }
    let format = cfg.run.format;
    let out = cli::run_command(&mut cfg, &subcommand)
        .map_err(|e| (cli::exit_code_for(&e) as u8, e.to_string()))?;
    let written = cli::write_outputs(&out, &out_dir, format)
        .map_err(|e| (3u8, e.to_string()))?;
    println!("{}", out.summary);
    for path in written {
        println!("wrote {}", path.display());
    }
    if out.suite_failed {
        return Ok(ExitCode::from(4));
    }
    Ok(ExitCode::SUCCESS)
}
