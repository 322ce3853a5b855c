//! `--config` files: one `key = value` per line, `#` comments.
//!
//! Entries become `--key value` arguments placed before the command-line flags,
//! so explicit flags win. `key = true` becomes a bare `--key`; `false` drops it.

use std::ffi::OsString;
use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use sapstop::io::parse_key_values;

fn config_path(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(rest) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(rest));
        }
    }
    None
}

/// Expands the config file named on the command line, if any, into `argv`.
pub fn expand(argv: Vec<OsString>) -> Result<Vec<OsString>, sapstop::Error> {
    if argv.len() < 2 {
        return Ok(argv);
    }
    let Some(path) = config_path(&argv[2..]) else {
        return Ok(argv);
    };
    let pairs = parse_key_values(BufReader::new(File::open(&path)?))?;
    let mut out: Vec<OsString> = argv[..2].to_vec();
    for (k, v) in pairs {
        let flag = format!("--{}", k.replace('_', "-"));
        match v.as_str() {
            "true" => out.push(flag.into()),
            "false" => {}
            _ => {
                out.push(flag.into());
                out.push(v.into());
            }
        }
    }
    out.extend(argv[2..].iter().cloned());
    Ok(out)
}
