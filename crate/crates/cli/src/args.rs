//! Flag parsing: `SUBCOMMAND --key value ...`, optionally merged over a
//! `key = value` config file given with `--config`. Values stay strings until a
//! subcommand asks for them.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use clap::error::ErrorKind;
use clap::{Arg, ArgAction, Command};

#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub type ArgResult<T> = Result<T, UsageError>;

fn usage(msg: impl Into<String>) -> UsageError {
    UsageError(msg.into())
}

/// Flags accepted by every subcommand.
pub const COMMON: &[&str] = &["seed", "out", "format", "threads", "config"];

pub const SUBCOMMANDS: &[(&str, &[&str])] = &[
    ("sample", &["alpha", "sigma", "n"]),
    ("estimate", &["in", "k1", "k2", "hill-k"]),
    ("calibrate", &["alphas", "k1", "k2", "reps"]),
    (
        "simulate",
        &["potential", "alpha", "epsilon", "sigma", "eta", "steps", "w0", "thin", "drift"],
    ),
    ("levy-path", &["alpha", "dim", "horizon", "dt"]),
    (
        "exit-times",
        &[
            "minima", "saddles", "alpha", "epsilon", "eta", "reps", "delta", "source", "max-steps", "mode", "drift",
        ],
    ),
    ("occupation", &["minima", "saddles", "alpha", "epsilon", "eta", "steps", "start"]),
    ("generator", &["minima", "saddles", "alpha"]),
    ("flat-valley", &["alphas", "epsilon", "eta", "steps", "inits"]),
    (
        "measure",
        &[
            "data", "n", "d", "classes", "data-seed", "idx-images", "idx-labels", "csv", "subsample", "hidden",
            "activation", "loss", "b", "eta", "iterations", "log-every",
        ],
    ),
];

pub fn allowed(sub: &str) -> Option<Vec<&'static str>> {
    SUBCOMMANDS
        .iter()
        .find(|(name, _)| *name == sub)
        .map(|(_, flags)| flags.iter().chain(COMMON).copied().collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub subcommand: String,
    pub params: BTreeMap<String, String>,
}

fn parse_config_file(text: &str) -> ArgResult<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("config line {}: expected key = value", i + 1)))?;
        out.push((k.trim().trim_start_matches("--").to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn command() -> Command {
    let flag = |name: &'static str| {
        Arg::new(name)
            .long(name)
            .value_name("VALUE")
            .allow_hyphen_values(true)
            .action(ArgAction::Set)
    };
    let mut cmd = Command::new("heavytail")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Heavy-tailed noise: sampling, tail-index estimation, SDE exit times, gradient-noise measurement")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .after_help(
            "ranges: lo:hi:count or a comma list\n\
             exit codes: 0 ok, 1 other, 2 usage, 3 domain or empty input, 4 io/format/csv,\n\
             5 degenerate, blow-up, divergence, ill-posed, insufficient data",
        );
    for (name, flags) in SUBCOMMANDS {
        let mut sub = Command::new(*name);
        for f in flags.iter().chain(COMMON) {
            sub = sub.arg(flag(f));
        }
        cmd = cmd.subcommand(sub);
    }
    cmd
}

/// Parses `argv` (without the program name). `Err(Ok(text))` carries help or
/// version output.
pub fn parse_args(argv: &[String]) -> Result<RunConfig, Result<String, UsageError>> {
    let matches = command()
        .try_get_matches_from(std::iter::once("heavytail".to_string()).chain(argv.iter().cloned()))
        .map_err(|e| match e.kind() {
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => Ok(e.render().to_string()),
            _ => Err(usage(e.render().to_string().trim_end().trim_start_matches("error: "))),
        })?;
    let (sub, m) = matches.subcommand().expect("subcommand required");
    let flags = allowed(sub).expect("registered subcommand");

    let mut params = BTreeMap::new();
    if let Some(path) = m.get_one::<String>("config") {
        let text = std::fs::read_to_string(path).map_err(|e| Err(usage(format!("cannot read config `{path}`: {e}"))))?;
        for (k, v) in parse_config_file(&text).map_err(Err)? {
            if k == "config" {
                return Err(Err(usage("config files cannot include other config files")));
            }
            if !flags.contains(&k.as_str()) {
                return Err(Err(usage(format!("unknown key `{k}` in config for `{sub}`"))));
            }
            params.insert(k, v);
        }
    }
    for id in m.ids() {
        let k = id.as_str();
        if k == "config" {
            continue;
        }
        if let Some(v) = m.get_one::<String>(k) {
            params.insert(k.to_string(), v.clone());
        }
    }
    Ok(RunConfig {
        subcommand: sub.to_string(),
        params,
    })
}

impl RunConfig {
    pub fn raw(&self, key: &str) -> Option<&str> {
        self.params.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> ArgResult<Option<T>> {
        self.raw(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| usage(format!("`--{key}`: cannot parse `{v}` as {}", type_name::<T>())))
            })
            .transpose()
    }

    pub fn or<T: FromStr>(&self, key: &str, default: T) -> ArgResult<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn required<T: FromStr>(&self, key: &str) -> ArgResult<T> {
        self.get(key)?.ok_or_else(|| usage(format!("missing required flag `--{key}`")))
    }

    pub fn list(&self, key: &str) -> ArgResult<Option<Vec<f64>>> {
        self.raw(key).map(|v| parse_list(v).map_err(|e| usage(format!("`--{key}`: {e}")))).transpose()
    }

    pub fn required_list(&self, key: &str) -> ArgResult<Vec<f64>> {
        self.list(key)?.ok_or_else(|| usage(format!("missing required flag `--{key}`")))
    }

    pub fn seed(&self) -> ArgResult<u64> {
        self.or("seed", 0)
    }
}

fn type_name<T>() -> &'static str {
    let full = std::any::type_name::<T>();
    match full {
        "f64" => "a real number",
        "u64" | "usize" => "a nonnegative integer",
        _ => full.rsplit("::").next().unwrap_or(full),
    }
}

/// Comma-separated reals, or `lo:hi:count` for `count` evenly spaced values with
/// both endpoints included.
pub fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [lo, hi, count] => {
            let lo: f64 = lo.trim().parse().map_err(|_| format!("bad range start `{lo}`"))?;
            let hi: f64 = hi.trim().parse().map_err(|_| format!("bad range end `{hi}`"))?;
            let n: usize = count.trim().parse().map_err(|_| format!("bad range count `{count}`"))?;
            match n {
                0 => Err("range count must be at least 1".into()),
                1 => Ok(vec![lo]),
                _ => Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()),
            }
        }
        [single] => single
            .split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|_| format!("bad number `{x}`")))
            .collect(),
        _ => Err(format!("expected a comma list or lo:hi:count, got `{s}`")),
    }
}
