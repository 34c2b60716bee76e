//! File-based global writer lock.

use std::fs::{self, OpenOptions};
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, MutexGuard};
use std::time::{Duration, Instant};

pub const LOCK_FILE: &str = "writer.lock";

/// Serializes writers inside this process with a mutex and across
/// processes with an exclusively created lock file holding the owner pid.
#[derive(Debug)]
pub struct WriterLock {
    path: PathBuf,
    local: Mutex<()>,
    timeout: Duration,
}

pub struct WriterGuard<'a> {
    path: &'a Path,
    _local: MutexGuard<'a, ()>,
}

impl Drop for WriterGuard<'_> {
    fn drop(&mut self) {
        if let Err(e) = fs::remove_file(self.path) {
            log::warn!("releasing {}: {e}", self.path.display());
        }
    }
}

fn owner_alive(path: &Path) -> bool {
    let Some(pid) = fs::read_to_string(path).ok().and_then(|t| t.trim().parse::<u32>().ok()) else {
        return false;
    };
    if pid == std::process::id() {
        // the in-process mutex is held, so this is a leftover
        return false;
    }
    if Path::new("/proc/self").exists() {
        Path::new(&format!("/proc/{pid}")).exists()
    } else {
        true
    }
}

impl WriterLock {
    pub fn new(dir: &Path, timeout: Duration) -> Self {
        Self {
            path: dir.join(LOCK_FILE),
            local: Mutex::new(()),
            timeout,
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Blocks until the lock is held or the timeout passes. A lock file
    /// whose owner is gone is taken over.
    pub fn acquire(&self) -> std::io::Result<WriterGuard<'_>> {
        let local = self.local.lock().unwrap_or_else(|p| p.into_inner());
        let start = Instant::now();
        loop {
            match OpenOptions::new().write(true).create_new(true).open(&self.path) {
                Ok(mut f) => {
                    write!(f, "{}", std::process::id())?;
                    return Ok(WriterGuard {
                        path: &self.path,
                        _local: local,
                    });
                }
                Err(e) if e.kind() == ErrorKind::AlreadyExists => {
                    if !owner_alive(&self.path) {
                        log::warn!("removing stale {}", self.path.display());
                        let _ = fs::remove_file(&self.path);
                        continue;
                    }
                    if start.elapsed() >= self.timeout {
                        return Err(std::io::Error::new(
                            ErrorKind::WouldBlock,
                            format!("{} is held by another process", self.path.display()),
                        ));
                    }
                    std::thread::sleep(Duration::from_millis(20));
                }
                Err(e) => return Err(e),
            }
        }
    }
}
