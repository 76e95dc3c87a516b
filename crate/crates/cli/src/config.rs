//! Layering of a TOML config file under the command line.
//!
//! Every top-level key of the file names a long flag of the chosen
//! subcommand or a global flag. Keys whose flag was not given on the command
//! line are appended to the argument list, so clap parses and validates file
//! values exactly like typed ones.

use std::ffi::OsString;
use std::path::Path;

use clap::parser::ValueSource;
use clap::{ArgMatches, Command};

use crate::CliError;

fn find_config_path(argv: &[OsString]) -> Option<OsString> {
    let mut iter = argv.iter();
    while let Some(a) = iter.next() {
        let s = a.to_string_lossy();
        if s == "--" {
            break;
        }
        if s == "--config" {
            return iter.next().cloned();
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some(v.into());
        }
    }
    None
}

fn toml_scalar(key: &str, value: &toml::Value) -> Result<String, CliError> {
    Ok(match value {
        toml::Value::String(s) => s.clone(),
        toml::Value::Integer(i) => i.to_string(),
        toml::Value::Float(f) => f.to_string(),
        toml::Value::Boolean(b) => b.to_string(),
        _ => {
            return Err(CliError::Usage(format!(
                "config key `{key}` must be a string, number or boolean"
            )))
        }
    })
}

fn given_on_command_line(matches: &ArgMatches, id: &str) -> bool {
    matches!(matches.try_get_raw(id), Ok(Some(_))) && matches.value_source(id) == Some(ValueSource::CommandLine)
}

/// Returns `argv` extended with the file's values. The caller parses the
/// result again.
pub fn merge_config_file(cmd: &Command, argv: Vec<OsString>) -> Result<(Vec<OsString>, Vec<String>), CliError> {
    let Some(path) = find_config_path(&argv) else {
        return Ok((argv, Vec::new()));
    };
    let path = Path::new(&path);
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read config file {}: {e}", path.display())))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| CliError::Usage(format!("config file {}: {e}", path.display())))?;
    let matches = cmd.clone().try_get_matches_from(&argv).map_err(CliError::Clap)?;
    let (sub_name, sub_matches) = matches.subcommand().expect("subcommand is required");
    let sub_cmd = cmd.find_subcommand(sub_name).expect("parsed subcommand exists");

    let mut extra = Vec::new();
    let mut from_file = Vec::new();
    for (key, value) in &table {
        let id = key.replace('-', "_");
        if key == "config" {
            return Err(CliError::Usage("config files cannot include other config files".into()));
        }
        let known = sub_cmd
            .get_arguments()
            .chain(cmd.get_arguments())
            .any(|a| a.get_id() == id.as_str());
        if !known {
            return Err(CliError::Usage(format!(
                "config key `{key}` is not a flag of `{sub_name}`"
            )));
        }
        if given_on_command_line(sub_matches, &id) || given_on_command_line(&matches, &id) {
            continue;
        }
        extra.push(OsString::from(format!(
            "--{}={}",
            key.replace('_', "-"),
            toml_scalar(key, value)?
        )));
        from_file.push(id);
    }
    let mut argv = argv;
    let insert_at = argv.iter().position(|a| a == "--").unwrap_or(argv.len());
    argv.splice(insert_at..insert_at, extra);
    Ok((argv, from_file))
}

/// `name = value (source)` for every argument of the subcommand, globals first.
pub fn describe(cmd: &Command, matches: &ArgMatches, from_file: &[String]) -> Vec<String> {
    let mut lines = Vec::new();
    let Some((sub_name, sub_matches)) = matches.subcommand() else {
        return lines;
    };
    let sub_cmd = cmd.find_subcommand(sub_name).expect("parsed subcommand exists");
    for arg in cmd.get_arguments().chain(sub_cmd.get_arguments()) {
        let id = arg.get_id().as_str();
        if id == "help" || id == "version" {
            continue;
        }
        let Ok(Some(raw)) = sub_matches.try_get_raw(id) else {
            continue;
        };
        let value: Vec<String> = raw.map(|v| v.to_string_lossy().into_owned()).collect();
        let source = match sub_matches.value_source(id) {
            _ if from_file.iter().any(|f| f == id) => "file",
            Some(ValueSource::CommandLine) => "flag",
            Some(ValueSource::DefaultValue) => "default",
            Some(ValueSource::EnvVariable) => "env",
            _ => "other",
        };
        lines.push(format!("{} = {} ({source})", id.replace('_', "-"), value.join(",")));
    }
    lines
}
