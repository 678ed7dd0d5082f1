//! Run directories: config, seed, results, and a single-owner lock file.

use anyhow::{bail, Context, Result};
use std::fs;
use std::path::{Path, PathBuf};

/// An output directory owned by one process at a time.
pub struct RunDir {
    path: PathBuf,
    lock: PathBuf,
}

impl RunDir {
    /// Creates (or reuses) the directory and takes the lock. Fails if
    /// another process holds it.
    pub fn acquire(path: &Path) -> Result<RunDir> {
        fs::create_dir_all(path)
            .with_context(|| format!("creating run directory {}", path.display()))?;
        let lock = path.join(".lock");
        match fs::OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(_) => {}
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                bail!(
                    "run directory {} is locked by another process (remove {} if stale)",
                    path.display(),
                    lock.display()
                );
            }
            Err(e) => return Err(e).context("creating lock file"),
        }
        Ok(RunDir {
            path: path.to_path_buf(),
            lock,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let target = self.path.join(name);
        fs::write(&target, contents)
            .with_context(|| format!("writing {}", target.display()))?;
        Ok(())
    }

    pub fn write_json<T: serde::Serialize>(&self, name: &str, value: &T) -> Result<()> {
        self.write(name, serde_json::to_string_pretty(value)?)
    }
}

impl Drop for RunDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn second_acquire_fails_until_released() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("run");
        let first = RunDir::acquire(&dir).unwrap();
        assert!(RunDir::acquire(&dir).is_err());
        drop(first);
        let again = RunDir::acquire(&dir).unwrap();
        again.write("results.txt", "ok").unwrap();
        assert_eq!(fs::read_to_string(dir.join("results.txt")).unwrap(), "ok");
    }
}
