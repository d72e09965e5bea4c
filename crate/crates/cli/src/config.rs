//! Layered settings: command-line flag, then the subcommand's section of the
//! config file, then its `[global]` section, then `HOROUF_SEED` for the seed,
//! then the built-in default. Every resolved value is recorded so it can be
//! written back out as the run's config.

use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use ini::Ini;

use crate::CliError;

pub const FILE_NAME: &str = "run_config.ini";
pub const SEED_ENV: &str = "HOROUF_SEED";

pub struct Settings {
    file: Ini,
    section: &'static str,
    resolved: Vec<(String, String)>,
}

impl Settings {
    pub fn load(path: Option<&Path>, section: &'static str) -> Result<Self, CliError> {
        let file = match path {
            Some(p) => Ini::load_from_file(p)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?,
            None => Ini::new(),
        };
        Ok(Self {
            file,
            section,
            resolved: Vec::new(),
        })
    }

    fn from_file(&self, key: &str) -> Option<&str> {
        self.file
            .get_from(Some(self.section), key)
            .or_else(|| self.file.get_from(Some("global"), key))
    }

    fn parse<T: FromStr>(key: &str, raw: &str, origin: &str) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        raw.trim()
            .parse()
            .map_err(|e| CliError::Usage(format!("{origin} value {raw:?} for {key}: {e}")))
    }

    /// Optional setting; nothing is recorded when it resolves to `None`.
    pub fn opt<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let value = match flag {
            Some(v) => Some(v),
            None => match self.from_file(key) {
                Some(raw) => Some(Self::parse(key, raw, "config")?),
                None => None,
            },
        };
        if let Some(v) = &value {
            self.resolved.push((key.to_string(), v.to_string()));
        }
        Ok(value)
    }

    pub fn get<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        match self.opt(key, flag)? {
            Some(v) => Ok(v),
            None => {
                self.resolved.push((key.to_string(), default.to_string()));
                Ok(default)
            }
        }
    }

    pub fn required<T>(&mut self, key: &str, flag: Option<T>) -> Result<T, CliError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        self.opt(key, flag)?
            .ok_or_else(|| CliError::Usage(format!("missing required setting --{}", key.replace('_', "-"))))
    }

    /// Boolean switch: set by the flag, or by `key = true` in the file.
    pub fn switch(&mut self, key: &str, flag: bool) -> Result<bool, CliError> {
        let v = if flag {
            true
        } else {
            match self.from_file(key) {
                Some(raw) => Self::parse(key, raw, "config")?,
                None => false,
            }
        };
        self.resolved.push((key.to_string(), v.to_string()));
        Ok(v)
    }

    /// Seed with the `HOROUF_SEED` fallback before the default of 0.
    pub fn seed(&mut self, flag: Option<u64>) -> Result<u64, CliError> {
        if flag.is_none() && self.from_file("seed").is_none() {
            if let Ok(raw) = std::env::var(SEED_ENV) {
                let v: u64 = Self::parse("seed", &raw, SEED_ENV)?;
                self.resolved.push(("seed".into(), v.to_string()));
                return Ok(v);
            }
        }
        self.get("seed", flag, 0)
    }

    pub fn to_ini(&self) -> Ini {
        let mut out = Ini::new();
        for (k, v) in &self.resolved {
            out.with_section(Some(self.section)).set(k.as_str(), v.as_str());
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut text = Vec::new();
        self.to_ini()
            .write_to(&mut text)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let mut body = format!("# horouf {} {}\n", env!("CARGO_PKG_VERSION"), self.section).into_bytes();
        body.extend(text);
        std::fs::write(path, body).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }
}

/// Comma-separated list, e.g. `256,128` or `0,0.01,0.05`.
#[derive(Debug, Clone, PartialEq)]
pub struct List<T>(pub Vec<T>);

impl<T: FromStr> FromStr for List<T>
where
    T::Err: Display,
{
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(Self(Vec::new()));
        }
        s.split(',')
            .map(|p| p.trim().parse().map_err(|e: T::Err| format!("{p:?}: {e}")))
            .collect::<Result<_, _>>()
            .map(Self)
    }
}

impl<T: Display> Display for List<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}
