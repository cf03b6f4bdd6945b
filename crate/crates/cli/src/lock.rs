use std::fs::{self, OpenOptions};
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};

use crate::error::{CliError, Result};

pub const LOCK_NAME: &str = ".breathnet.lock";

/// Advisory exclusive lock on a workdir, released on drop.
#[derive(Debug)]
pub struct WorkdirLock {
    path: PathBuf,
}

impl WorkdirLock {
    pub fn acquire(workdir: &Path, command: &str) -> Result<Self> {
        fs::create_dir_all(workdir)?;
        let path = workdir.join(LOCK_NAME);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "pid {} command {command}", std::process::id())?;
                Ok(WorkdirLock { path })
            }
            Err(e) if e.kind() == ErrorKind::AlreadyExists => {
                let holder = fs::read_to_string(&path).unwrap_or_default();
                Err(CliError::data(format!(
                    "workdir {} is locked ({}); remove {} if no other command is running",
                    workdir.display(),
                    holder.trim(),
                    path.display()
                )))
            }
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for WorkdirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn second_holder_is_refused_until_release() {
        let dir = tempfile::tempdir().unwrap();
        let a = WorkdirLock::acquire(dir.path(), "train").unwrap();
        let err = WorkdirLock::acquire(dir.path(), "explain").unwrap_err();
        assert!(err.message.contains("locked"));
        drop(a);
        WorkdirLock::acquire(dir.path(), "explain").unwrap();
    }
}
