use std::fs::{self, File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::CliError;

/// A freshly created output directory. Files inside are never overwritten.
#[derive(Debug)]
pub struct RunDir {
    path: PathBuf,
}

impl RunDir {
    /// `explicit` if given, else `<root>/<command>-<unix seconds>`. An
    /// existing directory is an error.
    pub fn create(explicit: Option<&Path>, root: &Path, command: &str) -> Result<Self, CliError> {
        let path = match explicit {
            Some(p) => p.to_path_buf(),
            None => {
                let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
                root.join(format!("{command}-{secs}"))
            }
        };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|source| CliError::RunDir { path: path.clone(), source })?;
        }
        fs::create_dir(&path).map_err(|source| CliError::RunDir { path: path.clone(), source })?;
        Ok(Self { path })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn create_file(&self, name: &str) -> io::Result<BufWriter<File>> {
        Ok(BufWriter::new(OpenOptions::new().write(true).create_new(true).open(self.path.join(name))?))
    }

    pub fn write(&self, name: &str, contents: &str) -> io::Result<()> {
        let mut f = self.create_file(name)?;
        f.write_all(contents.as_bytes())?;
        f.flush()
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        Ok(self.write(name, &text)?)
    }
}
