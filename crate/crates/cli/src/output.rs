//! Artifact emission: CSV tables and SVG figures, each prefixed with
//! metadata (tool version, config hash, seed, grid) so any file can be
//! traced to the run that produced it. Writes are atomic (temp file in
//! the target directory, then rename), and a failed command removes the
//! artifacts it had already written, so an output directory never holds
//! a partial run.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::AppError;

/// Prints a progress line to stdout, ignoring a closed pipe. Artifacts
/// are the real output of every command; a consumer that stops reading
/// the commentary (`regrowth solve | head`) must not abort the run.
macro_rules! say {
    ($($arg:tt)*) => {{
        use ::std::io::Write as _;
        let _ = ::std::writeln!(::std::io::stdout(), $($arg)*);
    }};
}

/// Prints a diagnostic line to stderr, ignoring a closed pipe.
macro_rules! say_err {
    ($($arg:tt)*) => {{
        use ::std::io::Write as _;
        let _ = ::std::writeln!(::std::io::stderr(), $($arg)*);
    }};
}

pub(crate) use {say, say_err};

/// Header fields stamped into every artifact.
#[derive(Debug, Clone)]
pub struct Metadata {
    pub config_hash: u64,
    pub seed: u64,
    pub grid: String,
}

impl Metadata {
    fn comment_lines(&self) -> [String; 4] {
        [
            format!("regrowth {}", env!("CARGO_PKG_VERSION")),
            format!("config: fnv1a64:{:016x}", self.config_hash),
            format!("seed: {}", self.seed),
            format!("grid: {}", self.grid),
        ]
    }
}

/// Shortest-round-trip decimal formatting (Rust's float Display), used
/// for every numeric CSV field so reruns are byte-identical.
pub fn fmt_f64(value: f64) -> String {
    format!("{value}")
}

/// Tracks the files a command has produced, removing them if the
/// command later fails.
pub struct ArtifactSet {
    dir: PathBuf,
    meta: Metadata,
    written: Vec<PathBuf>,
}

impl ArtifactSet {
    pub fn new(dir: &Path, meta: Metadata) -> Result<Self, AppError> {
        fs::create_dir_all(dir)?;
        Ok(ArtifactSet {
            dir: dir.to_path_buf(),
            meta,
            written: Vec::new(),
        })
    }

    /// Writes one CSV artifact: '#' metadata lines, a header row, then
    /// the data rows.
    pub fn write_csv(
        &mut self,
        name: &str,
        extra_comments: &[String],
        header: &str,
        rows: &[String],
    ) -> Result<(), AppError> {
        let mut text = String::new();
        for line in self.meta.comment_lines() {
            writeln!(text, "# {line}").unwrap();
        }
        for line in extra_comments {
            writeln!(text, "# {line}").unwrap();
        }
        writeln!(text, "{header}").unwrap();
        for row in rows {
            writeln!(text, "{row}").unwrap();
        }
        self.write_atomic(name, &text)
    }

    /// Writes one SVG artifact with the metadata as an XML comment ahead
    /// of the root element.
    pub fn write_svg(&mut self, name: &str, svg_body: &str) -> Result<(), AppError> {
        let mut text = String::from("<!--\n");
        for line in self.meta.comment_lines() {
            writeln!(text, "  {line}").unwrap();
        }
        text.push_str("-->\n");
        text.push_str(svg_body);
        self.write_atomic(name, &text)
    }

    fn write_atomic(&mut self, name: &str, content: &str) -> Result<(), AppError> {
        let target = self.dir.join(name);
        let tmp = self.dir.join(format!(".{name}.tmp"));
        fs::write(&tmp, content).map_err(|e| {
            self.discard();
            AppError::from(e)
        })?;
        fs::rename(&tmp, &target).map_err(|e| {
            let _ = fs::remove_file(&tmp);
            self.discard();
            AppError::from(e)
        })?;
        self.written.push(target);
        Ok(())
    }

    pub fn path_of(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Removes everything written so far (failure cleanup).
    pub fn discard(&self) {
        for path in &self.written {
            let _ = fs::remove_file(path);
        }
    }
}

/// Reads a CSV artifact written by [`ArtifactSet::write_csv`]: skips '#'
/// comments, returns the header fields and rows.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), AppError> {
    if !path.exists() {
        return Err(AppError::MissingArtifact(path.to_path_buf()));
    }
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines
        .next()
        .ok_or_else(|| AppError::Config(format!("{}: empty table", path.display())))?
        .split(',')
        .map(str::to_string)
        .collect();
    let rows = lines
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    Ok((header, rows))
}
