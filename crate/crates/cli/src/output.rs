//! Output tree that records every file it writes, and the manifest listing
//! them with SHA-256 checksums.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub files: Vec<FileEntry>,
}

pub struct OutputTree {
    root: PathBuf,
    /// Relative path (forward slashes) to entry, kept sorted.
    files: BTreeMap<String, FileEntry>,
}

impl OutputTree {
    pub fn create(root: &Path) -> io::Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self { root: root.to_path_buf(), files: BTreeMap::new() })
    }

    /// Reopens a finished tree so more files can be added to its manifest.
    pub fn reopen(root: &Path) -> io::Result<Self> {
        let text = fs::read_to_string(root.join(MANIFEST))?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        Ok(Self { root: root.to_path_buf(), files: m.files.into_iter().map(|f| (f.path.clone(), f)).collect() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> io::Result<()> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(&path, bytes)?;
        let entry = FileEntry { path: rel.to_string(), bytes: bytes.len() as u64, sha256: hex::encode(Sha256::digest(bytes)) };
        self.files.insert(rel.to_string(), entry);
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> io::Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
        text.push('\n');
        self.write(rel, text.as_bytes())
    }

    pub fn finish(self) -> io::Result<Manifest> {
        let m = Manifest { files: self.files.into_values().collect() };
        let mut text = serde_json::to_string_pretty(&m).map_err(io::Error::other)?;
        text.push('\n');
        fs::write(self.root.join(MANIFEST), text)?;
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_lists_every_write_with_checksums() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = OutputTree::create(dir.path()).unwrap();
        t.write("b/x.csv", b"abc").unwrap();
        t.write("a.txt", b"").unwrap();
        let m = t.finish().unwrap();
        let paths: Vec<&str> = m.files.iter().map(|f| f.path.as_str()).collect();
        assert_eq!(paths, ["a.txt", "b/x.csv"]);
        assert_eq!(m.files[1].sha256, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        assert_eq!(m.files[0].sha256, "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");

        let mut again = OutputTree::reopen(dir.path()).unwrap();
        again.write("c.svg", b"<svg/>").unwrap();
        assert_eq!(again.finish().unwrap().files.len(), 3);
    }
}
