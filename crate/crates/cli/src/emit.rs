//! Result files. Text files open with `# ` comment lines carrying the command,
//! the configuration hash and the master seed; JSON documents carry the same
//! fields under `header`.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use serde::Serialize;

use crate::config::RunConfig;
use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// A column name with a one-line description for the file header.
pub type Column = (&'static str, &'static str);

#[derive(Debug)]
pub struct Emitter {
    dir: PathBuf,
    command: &'static str,
    hash: String,
    seed: Option<u64>,
    written: Vec<PathBuf>,
    notes: Vec<String>,
}

/// Files written by a run and a short human-readable summary.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub files: Vec<PathBuf>,
    pub summary: Vec<String>,
}

#[derive(Serialize)]
struct Header<'a> {
    command: &'a str,
    config_hash: &'a str,
    master_seed: Option<u64>,
}

#[derive(Serialize)]
struct Document<'a, T: Serialize> {
    schema_version: u32,
    header: Header<'a>,
    config: &'a crate::config::Command,
    results: &'a T,
}

/// Shortest representation that reads back to the same value, in exponent
/// form for very small or large magnitudes.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if x.is_finite() && a != 0.0 && !(1e-4..1e15).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

impl Emitter {
    pub fn new(cfg: &RunConfig) -> Result<Self, CliError> {
        fs::create_dir_all(&cfg.out_dir)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", cfg.out_dir.display())))?;
        Ok(Self {
            dir: cfg.out_dir.clone(),
            command: cfg.command.name(),
            hash: cfg.hash(),
            seed: cfg.command.seed(),
            written: Vec::new(),
            notes: Vec::new(),
        })
    }

    /// Adds a line to the run summary.
    pub fn note(&mut self, line: String) {
        self.notes.push(line);
    }

    pub fn finish(self) -> RunOutput {
        RunOutput {
            files: self.written,
            summary: self.notes,
        }
    }

    fn header(&self, notes: &[String]) -> String {
        let seed = self.seed.map_or_else(|| "none".to_string(), |s| s.to_string());
        let mut out = format!(
            "# bbm-lab {}\n# config_hash: {}\n# master_seed: {seed}\n",
            self.command, self.hash
        );
        for n in notes {
            let _ = writeln!(out, "# {n}");
        }
        out
    }

    fn column_doc(out: &mut String, columns: &[Column]) {
        out.push_str("# columns:\n");
        for (name, doc) in columns {
            let _ = writeln!(out, "#   {name}: {doc}");
        }
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(format!("{}{name}", self.command));
        fs::write(&path, contents).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        self.written.push(path);
        Ok(())
    }

    /// Comma-separated table with a header row after the comment block.
    pub fn csv(&mut self, name: &str, columns: &[Column], rows: &[Vec<String>]) -> Result<(), CliError> {
        let mut out = self.header(&[]);
        Self::column_doc(&mut out, columns);
        let names: Vec<&str> = columns.iter().map(|c| c.0).collect();
        out.push_str(&names.join(","));
        out.push('\n');
        for row in rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        self.write(name, &out)
    }

    /// Whitespace-delimited numeric blocks separated by two blank lines, so
    /// gnuplot can address them with `index`.
    pub fn dat(&mut self, name: &str, notes: &[String], columns: &[Column], blocks: &[Vec<Vec<f64>>]) -> Result<(), CliError> {
        let mut out = self.header(notes);
        Self::column_doc(&mut out, columns);
        for (i, block) in blocks.iter().enumerate() {
            if i > 0 {
                out.push_str("\n\n");
            }
            for row in block {
                let cells: Vec<String> = row.iter().map(|&x| num(x)).collect();
                out.push_str(&cells.join(" "));
                out.push('\n');
            }
        }
        self.write(name, &out)
    }

    pub fn json<T: Serialize>(&mut self, cfg: &RunConfig, results: &T) -> Result<(), CliError> {
        let doc = Document {
            schema_version: SCHEMA_VERSION,
            header: Header {
                command: self.command,
                config_hash: &self.hash,
                master_seed: self.seed,
            },
            config: &cfg.command,
            results,
        };
        let mut text = serde_json::to_string_pretty(&doc).expect("results serialize");
        text.push('\n');
        self.write(".json", &text)
    }

    /// The resolved configuration, loadable with `--config`.
    pub fn config(&mut self, cfg: &RunConfig) -> Result<(), CliError> {
        let text = format!("{}{}", self.header(&[]), cfg.to_toml());
        self.write(".toml", &text)
    }
}
