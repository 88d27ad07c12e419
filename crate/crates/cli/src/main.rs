mod commands;
mod config;

use std::path::Path;
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches};
use fput_core::io::Manifest;
use fput_core::{Error, ErrorClass, Result};

use config::{RunConfig, COMMANDS};

fn cli() -> clap::Command {
    let mut app = clap::Command::new("fput")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Solitary waves in FPUT lattices with random spring heterogeneity")
        .subcommand_required(true)
        .arg(
            Arg::new("threads")
                .long("threads")
                .global(true)
                .value_parser(clap::value_parser!(usize))
                .help("cap on worker threads (default: all cores)"),
        )
        .after_help(format!(
            "Outputs go to the `out` key, or to ${}/<command> (default root `{}`).",
            config::OUTPUT_ROOT_VAR,
            config::DEFAULT_OUTPUT_ROOT
        ));
    for c in COMMANDS {
        let mut sub = clap::Command::new(c.name).about(c.about).arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .action(ArgAction::Append)
                .help("key = value file; later files and flags override earlier ones"),
        );
        for k in c.keys {
            let help = if k.default.is_empty() { k.doc.to_string() } else { format!("{} [default: {}]", k.doc, k.default) };
            sub = sub.arg(
                Arg::new(k.name)
                    .long(k.name.replace('_', "-"))
                    .value_name(k.name.to_uppercase())
                    .allow_hyphen_values(true)
                    .help(help),
            );
        }
        app = app.subcommand(sub);
    }
    app
}

fn resolve(name: &str, m: &ArgMatches) -> Result<RunConfig> {
    let command = config::command(name).ok_or_else(|| Error::Config(format!("unknown command {name}")))?;
    let mut cfg = RunConfig::defaults(command);
    if let Some(files) = m.get_many::<String>("config") {
        for f in files {
            let text = std::fs::read_to_string(f).map_err(|e| Error::Config(format!("{f}: {e}")))?;
            cfg.apply_text(&text, f)?;
        }
    }
    for k in command.keys {
        if let Some(v) = m.get_one::<String>(k.name) {
            cfg.set(k.name, v)?;
        }
    }
    Ok(cfg)
}

fn execute(m: &ArgMatches) -> Result<()> {
    if let Some(&n) = m.get_one::<usize>("threads") {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let (name, sub) = m.subcommand().ok_or_else(|| Error::Config("no command".into()))?;
    let cfg = resolve(name, sub)?;
    let out = cfg.out_dir();
    std::fs::create_dir_all(&out)?;
    let mut manifest = Manifest::default();
    for (k, v) in cfg.entries() {
        manifest.push(k, v);
    }
    let comments = vec![
        format!("fput {}", env!("CARGO_PKG_VERSION")),
        format!("rerun: fput {name} --config {}", Path::new(&out).join("manifest.txt").display()),
        format!("threads: {}", rayon::current_num_threads()),
    ];
    manifest.write(out.join("manifest.txt"), &comments)?;
    commands::run(&cfg, &out)?;
    println!("{}", out.display());
    Ok(())
}

fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Config => 2,
        ErrorClass::Solver => 3,
        ErrorClass::Coherence => 4,
        ErrorClass::Convergence => 5,
    }
}

fn class_name(class: ErrorClass) -> &'static str {
    match class {
        ErrorClass::Config => "config",
        ErrorClass::Solver => "solver",
        ErrorClass::Coherence => "coherence",
        ErrorClass::Convergence => "convergence",
    }
}

fn fail(class: ErrorClass, message: &str) -> ExitCode {
    let code = exit_code(class);
    eprintln!("fput-error code={code} class={} message={message:?}", class_name(class));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ").to_string();
            return fail(ErrorClass::Config, &first);
        }
    };
    match execute(&matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.class(), &e.to_string()),
    }
}
