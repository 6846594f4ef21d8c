//! Artifact directory: study subdirectories, config echo, failure marker
//! and a sha256 manifest over every file.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest";
pub const FAILED: &str = "FAILED";
pub const CONFIG_ECHO: &str = "config.echo";

#[derive(Debug, Clone)]
pub struct Artifacts {
    root: PathBuf,
}

impl Artifacts {
    /// Opens `root`, dropping the outputs of a previous run of `studies`.
    pub fn prepare(root: &Path, studies: &[&str]) -> io::Result<Self> {
        fs::create_dir_all(root)?;
        for name in [MANIFEST, FAILED, CONFIG_ECHO] {
            let p = root.join(name);
            if p.exists() {
                fs::remove_file(p)?;
            }
        }
        for s in studies {
            let p = root.join(s);
            if p.exists() {
                fs::remove_dir_all(p)?;
            }
        }
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&self, rel: &str, bytes: &[u8]) -> io::Result<PathBuf> {
        let p = self.root.join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&p, bytes)?;
        Ok(p)
    }

    pub fn mark_failed(&self, message: &str) -> io::Result<()> {
        self.write(FAILED, format!("{message}\n").as_bytes()).map(|_| ())
    }

    /// `<sha256>  <relative path>` per file, sorted by path.
    pub fn write_manifest(&self) -> io::Result<String> {
        let mut files = Vec::new();
        collect_files(&self.root, &self.root, &mut files)?;
        files.retain(|f| f != MANIFEST);
        files.sort();
        let mut text = String::new();
        for rel in files {
            let digest = Sha256::digest(fs::read(self.root.join(&rel))?);
            text.push_str(&format!("{}  {rel}\n", hex::encode(digest)));
        }
        fs::write(self.root.join(MANIFEST), &text)?;
        Ok(text)
    }
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            let rel = path.strip_prefix(root).expect("inside root");
            out.push(rel.to_string_lossy().replace('\\', "/"));
        }
    }
    Ok(())
}
