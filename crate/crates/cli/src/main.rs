use std::path::PathBuf;
use std::process::ExitCode;

const USAGE: &str = "usage: nlselab <command> [--config FILE] [--key value ...] --outdir DIR

commands: simulate, drift, defect-order, symplectic-check, stability,
          cfl, spectrum-check, convergence

Configuration is flat key=value (one per line, `#` comments); command-line
`--key value` flags override file entries. NLSELAB_THREADS caps the worker
count.";

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.is_empty() || args[0] == "--help" || args[0] == "-h" {
        eprintln!("{USAGE}");
        return ExitCode::from(1);
    }

    let command = args[0].clone();
    let mut config_path: Option<PathBuf> = None;
    let mut outdir: Option<PathBuf> = None;
    let mut overrides: Vec<(String, String)> = vec![("command".into(), command)];
    let mut i = 1;
    while i < args.len() {
        let flag = &args[i];
        let Some(key) = flag.strip_prefix("--") else {
            eprintln!("unexpected argument `{flag}`\n{USAGE}");
            return ExitCode::from(1);
        };
        let Some(value) = args.get(i + 1) else {
            eprintln!("flag --{key} needs a value\n{USAGE}");
            return ExitCode::from(1);
        };
        match key {
            "config" => config_path = Some(PathBuf::from(value)),
            "outdir" => outdir = Some(PathBuf::from(value)),
            _ => overrides.push((key.to_string(), value.clone())),
        }
        i += 2;
    }
    let Some(outdir) = outdir else {
        eprintln!("--outdir is required\n{USAGE}");
        return ExitCode::from(1);
    };

    let file_text = match &config_path {
        Some(p) => match std::fs::read_to_string(p) {
            Ok(t) => Some(t),
            Err(e) => {
                eprintln!("cannot read {}: {e}", p.display());
                return ExitCode::from(1);
            }
        },
        None => None,
    };

    // Full validation happens before anything is written.
    let cfg = match nlselab::parse_config(file_text.as_deref(), &overrides) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(1);
        }
    };

    match nlselab::run(&cfg, &outdir) {
        Ok(out) => ExitCode::from(out.exit_code as u8),
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(1)
        }
    }
}
