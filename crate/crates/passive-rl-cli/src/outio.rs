//! Output-directory plumbing: every artifact is written inside the declared
//! directory, atomically (temp file then rename), so a crashed or concurrent
//! run never leaves a half-written CSV behind.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use passive_rl::{Error, Result};

#[derive(Debug, Clone)]
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn new(root: &Path) -> Result<OutDir> {
        fs::create_dir_all(root)?;
        Ok(OutDir { root: root.to_path_buf() })
    }

    /// Writes `contents` to `<root>/<name>` via a temporary sibling and an
    /// atomic rename. `name` must be a bare file name; paths that would
    /// escape the directory are refused.
    pub fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        if name.is_empty()
            || name.contains(['/', '\\'])
            || name.starts_with('.')
            || name == ".."
        {
            return Err(Error::invalid(format!("artifact name `{name}` must be a bare file name")));
        }
        let tmp = self.root.join(format!(".tmp.{name}"));
        fs::write(&tmp, contents)?;
        let target = self.root.join(name);
        fs::rename(&tmp, &target)?;
        Ok(target)
    }

    /// Standard run-metadata artifact: the command, the resolved master
    /// seed, and the full config echo, one `key,value` row each.
    pub fn write_run_meta(
        &self,
        command: &str,
        seed: u64,
        echo: &[(String, String)],
        extra: &[(String, String)],
    ) -> Result<PathBuf> {
        let mut out = String::from("key,value\n");
        let _ = writeln!(out, "command,{command}");
        let _ = writeln!(out, "master_seed,{seed}");
        for (key, value) in echo {
            let _ = writeln!(out, "config.{key},{value}");
        }
        for (key, value) in extra {
            let _ = writeln!(out, "{key},{value}");
        }
        self.write("run_meta.csv", &out)
    }
}
