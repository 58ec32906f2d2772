use std::ffi::OsString;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Arg, Command};

/// Parses `key = value` lines. Blank lines and lines starting with `#` are skipped.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("config line {}: expected key = value, got {line:?}", i + 1))?;
        let k = k.trim();
        if k.is_empty() {
            bail!("config line {}: empty key", i + 1);
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn long_names(arg: &Arg) -> Vec<String> {
    let mut names: Vec<String> = arg.get_long().map(str::to_string).into_iter().collect();
    names.extend(
        arg.get_all_aliases()
            .unwrap_or_default()
            .into_iter()
            .map(str::to_string),
    );
    names
}

fn given_on_command_line(args: &[OsString], names: &[String]) -> bool {
    args.iter().filter_map(|a| a.to_str()).any(|a| {
        names.iter().any(|n| {
            let flag = format!("--{n}");
            a == flag || a.starts_with(&format!("{flag}="))
        })
    })
}

/// Splices the entries of the `--config` file into `args` right after the
/// subcommand name, skipping keys the command line already sets. Returns
/// `args` unchanged when no config file is named.
pub fn expand_config(cmd: &Command, args: Vec<OsString>) -> Result<Vec<OsString>> {
    let strs: Vec<Option<&str>> = args.iter().map(|a| a.to_str()).collect();
    let mut path = None;
    for (i, a) in strs.iter().enumerate().skip(1) {
        match a {
            Some("--config") => path = args.get(i + 1).cloned(),
            Some(s) if s.starts_with("--config=") => path = Some(s["--config=".len()..].into()),
            _ => {}
        }
    }
    let Some(path) = path else { return Ok(args) };
    let Some((pos, sub)) = strs
        .iter()
        .enumerate()
        .skip(1)
        .find_map(|(i, a)| a.and_then(|s| cmd.find_subcommand(s)).map(|c| (i, c)))
    else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("cannot read config file {}", path.to_string_lossy()))?;
    let mut extra: Vec<OsString> = Vec::new();
    for (key, value) in parse_config(&text)? {
        let arg = sub
            .get_arguments()
            .chain(cmd.get_arguments())
            .find(|a| long_names(a).contains(&key))
            .filter(|a| a.get_id() != "config")
            .ok_or_else(|| anyhow!("config key {key:?} is not a flag of `{}`", sub.get_name()))?;
        if given_on_command_line(&args, &long_names(arg)) {
            continue;
        }
        let flag = format!("--{}", arg.get_long().expect("found by long name"));
        if arg.get_action().takes_values() {
            extra.push(format!("{flag}={value}").into());
        } else {
            let on: bool = value
                .parse()
                .map_err(|_| anyhow!("config key {key:?} expects true or false, got {value:?}"))?;
            if on {
                extra.push(flag.into());
            }
        }
    }
    let mut out = args[..=pos].to_vec();
    out.extend(extra);
    out.extend_from_slice(&args[pos + 1..]);
    Ok(out)
}
