//! TOML configuration files.
//!
//! Top-level keys apply to every subcommand that has a flag of that name;
//! keys under a `[subcommand]` table apply to that subcommand only. Keys are
//! flag names without the leading dashes (`noise_sigma` and `noise-sigma` are
//! the same key). A value given on the command line always wins.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use clap::Command;

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub section: Option<String>,
    pub key: String,
    pub value: String,
}

impl Entry {
    fn place(&self) -> String {
        match &self.section {
            Some(s) => format!("[{s}] {}", self.key),
            None => self.key.clone(),
        }
    }
}

fn scalar(v: &toml::Value) -> Option<String> {
    match v {
        toml::Value::String(s) => Some(s.clone()),
        toml::Value::Integer(i) => Some(i.to_string()),
        toml::Value::Float(f) => Some(f.to_string()),
        toml::Value::Boolean(b) => Some(b.to_string()),
        toml::Value::Array(items) => items
            .iter()
            .map(scalar)
            .collect::<Option<Vec<_>>>()
            .map(|v| v.join(",")),
        _ => None,
    }
}

fn entry(section: Option<&str>, key: &str, v: &toml::Value) -> Result<Entry, String> {
    let section = section.map(str::to_string);
    let key = key.replace('_', "-");
    let value = scalar(v).ok_or_else(|| format!("{key}: unsupported value {v}"))?;
    Ok(Entry { section, key, value })
}

pub fn parse(text: &str) -> Result<Vec<Entry>, String> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| e.message().to_string())?;
    let mut out = Vec::new();
    for (key, v) in &table {
        match v {
            toml::Value::Table(t) => {
                for (k, v) in t {
                    out.push(entry(Some(key), k, v)?);
                }
            }
            v => out.push(entry(None, key, v)?),
        }
    }
    Ok(out)
}

pub fn load(path: &Path) -> Result<Vec<Entry>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse(&text).map_err(|e| format!("{}: {e}", path.display()))
}

/// The value of `--config` and the subcommand name, read from raw arguments.
pub fn locate(args: &[OsString], cmd: &Command) -> (Option<OsString>, Option<(usize, String)>) {
    let mut config = None;
    let mut sub = None;
    let mut i = 1;
    while i < args.len() {
        let a = args[i].to_string_lossy();
        if a == "--config" {
            config = args.get(i + 1).cloned();
            i += 2;
            continue;
        }
        if let Some(v) = a.strip_prefix("--config=") {
            config = Some(OsString::from(v));
        } else if sub.is_none() && cmd.find_subcommand(a.as_ref()).is_some() {
            sub = Some((i, a.to_string()));
        }
        i += 1;
    }
    (config, sub)
}

fn long_names(cmd: &Command) -> Vec<(String, bool, bool)> {
    cmd.get_arguments()
        .filter_map(|a| {
            let takes_value = a.get_action().takes_values();
            let multiple = matches!(a.get_action(), clap::ArgAction::Append);
            a.get_long().map(|l| (l.to_string(), takes_value, multiple))
        })
        .collect()
}

fn given(args: &[OsString], long: &str) -> bool {
    let flag = format!("--{long}");
    let prefix = format!("--{long}=");
    args.iter().any(|a| {
        let a = a.to_string_lossy();
        a == flag || a.starts_with(&prefix)
    })
}

/// Arguments with the configured values inserted after the subcommand name,
/// skipping every flag the user already passed.
pub fn merge(
    args: &[OsString],
    entries: &[Entry],
    cmd: &Command,
    sub_at: usize,
    sub: &str,
) -> Result<Vec<OsString>, String> {
    let sub_cmd = cmd.find_subcommand(sub).expect("located subcommand exists");
    let mut known = long_names(cmd);
    known.extend(long_names(sub_cmd));
    let anywhere = |key: &str| {
        cmd.get_subcommands()
            .any(|s| long_names(s).iter().any(|(l, _, _)| l == key))
    };
    let mut inserted = Vec::new();
    for e in entries {
        if let Some(section) = &e.section {
            if cmd.find_subcommand(section).is_none() {
                return Err(format!("unknown section [{section}]"));
            }
            if section != sub {
                continue;
            }
        }
        let Some((long, takes_value, multiple)) = known.iter().find(|(l, _, _)| *l == e.key) else {
            if e.section.is_none() && anywhere(&e.key) {
                continue;
            }
            return Err(format!("unknown key {}", e.place()));
        };
        if long == "config" {
            return Err("a config file cannot name another".into());
        }
        if given(args, long) {
            continue;
        }
        if !takes_value {
            match e.value.as_str() {
                "true" => inserted.push(OsString::from(format!("--{long}"))),
                "false" => {}
                other => return Err(format!("{} expects true or false, got {other:?}", e.place())),
            }
        } else if *multiple {
            for v in e.value.split(',').map(str::trim).filter(|v| !v.is_empty()) {
                inserted.push(OsString::from(format!("--{long}")));
                inserted.push(OsString::from(v));
            }
        } else {
            inserted.push(OsString::from(format!("--{long}")));
            inserted.push(OsString::from(&e.value));
        }
    }
    let mut out = args[..=sub_at].to_vec();
    out.extend(inserted);
    out.extend_from_slice(&args[sub_at + 1..]);
    Ok(out)
}
