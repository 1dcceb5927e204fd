//! Repository acquisition and deterministic text-file traversal.

use std::path::{Path, PathBuf};
use std::process::Command;

use globset::{Glob, GlobSet, GlobSetBuilder};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use walkdir::WalkDir;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("repository locator is empty")]
    EmptyLocator,
    #[error("project name is empty")]
    EmptyName,
    #[error("path does not exist: {0}")]
    PathNotFound(PathBuf),
    #[error("remote unreachable or clone failed: {0}")]
    RemoteUnreachable(String),
    #[error("revision {revision} not found: {detail}")]
    RevisionNotFound { revision: String, detail: String },
    #[error("invalid ignore pattern {pattern}: {detail}")]
    BadIgnorePattern { pattern: String, detail: String },
    #[error("cannot read {path}: {source}")]
    Unreadable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Where a repository comes from: a local path or a git URL.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepoSource {
    pub locator: String,
    pub name: String,
    #[serde(default)]
    pub revision: Option<String>,
}

impl RepoSource {
    pub fn new(locator: impl Into<String>, name: impl Into<String>) -> Self {
        Self {
            locator: locator.into(),
            name: name.into(),
            revision: None,
        }
    }

    pub fn with_revision(mut self, revision: impl Into<String>) -> Self {
        self.revision = Some(revision.into());
        self
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        if self.locator.trim().is_empty() {
            return Err(IngestError::EmptyLocator);
        }
        if self.name.trim().is_empty() {
            return Err(IngestError::EmptyName);
        }
        Ok(())
    }
}

/// One text file of a repository working tree.
#[derive(Debug, Clone, PartialEq)]
pub struct FileRecord {
    /// Repo-relative path with forward slashes.
    pub relative_path: String,
    pub content: String,
    pub byte_len: usize,
    /// Lower-cased file extension, when there is one.
    pub language_tag: Option<String>,
}

fn run_git(args: &[&str]) -> Result<(), String> {
    let output = Command::new("git")
        .args(args)
        .output()
        .map_err(|e| format!("failed to run git: {e}"))?;
    if output.status.success() {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&output.stderr).trim().to_string())
    }
}

/// Materialize a working tree for `source` under `workdir`.
///
/// Local directories pass through untouched when no revision is requested.
/// Everything else is cloned with git into `workdir/<name>` (any previous
/// clone there is replaced) and checked out at the requested revision.
pub fn acquire(source: &RepoSource, workdir: &Path) -> Result<PathBuf, IngestError> {
    source.validate()?;
    let locator = source
        .locator
        .strip_prefix("file://")
        .unwrap_or(&source.locator);
    let is_remote = source.locator.contains("://") && !source.locator.starts_with("file://")
        || source.locator.starts_with("git@");

    if !is_remote {
        let path = PathBuf::from(locator);
        if !path.is_dir() {
            return Err(IngestError::PathNotFound(path));
        }
        if source.revision.is_none() {
            return Ok(path);
        }
    }

    std::fs::create_dir_all(workdir)?;
    let dest = workdir.join(&source.name);
    if dest.exists() {
        std::fs::remove_dir_all(&dest)?;
    }
    run_git(&[
        "clone",
        "--quiet",
        locator,
        dest.to_str().unwrap_or_default(),
    ])
    .map_err(IngestError::RemoteUnreachable)?;
    if let Some(revision) = &source.revision {
        run_git(&[
            "-C",
            dest.to_str().unwrap_or_default(),
            "checkout",
            "--quiet",
            revision,
        ])
        .map_err(|detail| IngestError::RevisionNotFound {
            revision: revision.clone(),
            detail,
        })?;
    }
    Ok(dest)
}

/// Directory names, file names, and extension globs skipped by default:
/// VCS metadata, build artifacts, lockfiles, and media/binary formats.
pub const DEFAULT_IGNORE_PATTERNS: &[&str] = &[
    ".git",
    ".hg",
    ".svn",
    "target",
    "node_modules",
    "dist",
    "build",
    "__pycache__",
    ".venv",
    "venv",
    ".tox",
    ".mypy_cache",
    ".pytest_cache",
    ".idea",
    "Cargo.lock",
    "package-lock.json",
    "yarn.lock",
    "pnpm-lock.yaml",
    "poetry.lock",
    "Pipfile.lock",
    "uv.lock",
    "Gemfile.lock",
    "composer.lock",
    "*.png",
    "*.jpg",
    "*.jpeg",
    "*.gif",
    "*.bmp",
    "*.ico",
    "*.svg",
    "*.webp",
    "*.pdf",
    "*.zip",
    "*.tar",
    "*.gz",
    "*.tgz",
    "*.bz2",
    "*.xz",
    "*.7z",
    "*.jar",
    "*.class",
    "*.pyc",
    "*.so",
    "*.dylib",
    "*.dll",
    "*.exe",
    "*.o",
    "*.a",
    "*.woff",
    "*.woff2",
    "*.ttf",
    "*.otf",
    "*.eot",
    "*.mp3",
    "*.mp4",
    "*.mov",
    "*.avi",
    "*.webm",
    "*.wav",
    "*.flac",
    "*.ogg",
];

/// Compiled glob rules matched against repo-relative paths and every
/// individual path component.
pub struct IgnoreRules {
    set: GlobSet,
}

impl IgnoreRules {
    pub fn from_patterns<S: AsRef<str>>(patterns: &[S]) -> Result<Self, IngestError> {
        let mut builder = GlobSetBuilder::new();
        for p in patterns {
            let p = p.as_ref();
            let glob = Glob::new(p).map_err(|e| IngestError::BadIgnorePattern {
                pattern: p.to_string(),
                detail: e.to_string(),
            })?;
            builder.add(glob);
        }
        let set = builder.build().map_err(|e| IngestError::BadIgnorePattern {
            pattern: "<set>".to_string(),
            detail: e.to_string(),
        })?;
        Ok(Self { set })
    }

    /// Default rules plus any extra user patterns.
    pub fn with_defaults<S: AsRef<str>>(extra: &[S]) -> Result<Self, IngestError> {
        let mut patterns: Vec<String> = DEFAULT_IGNORE_PATTERNS
            .iter()
            .map(|s| s.to_string())
            .collect();
        patterns.extend(extra.iter().map(|s| s.as_ref().to_string()));
        Self::from_patterns(&patterns)
    }

    fn matches(&self, relative: &str) -> bool {
        if self.set.is_match(relative) {
            return true;
        }
        relative.split('/').any(|part| self.set.is_match(part))
    }
}

impl Default for IgnoreRules {
    fn default() -> Self {
        Self::with_defaults::<&str>(&[]).expect("default patterns compile")
    }
}

fn relative_slash_path(root: &Path, path: &Path) -> String {
    path.strip_prefix(root)
        .unwrap_or(path)
        .components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

fn looks_binary(bytes: &[u8]) -> bool {
    bytes.iter().take(8192).any(|&b| b == 0)
}

/// Enumerate the text files under `root` in depth-first order, children
/// sorted case-sensitively within each directory. Ignored and binary files
/// are skipped before/without being decoded; unreadable files are skipped
/// with a warning rather than failing the walk.
pub fn traverse(root: &Path, rules: &IgnoreRules) -> Result<Vec<FileRecord>, IngestError> {
    if !root.is_dir() {
        return Err(IngestError::PathNotFound(root.to_path_buf()));
    }
    let mut records = Vec::new();
    let walker = WalkDir::new(root)
        .follow_links(false)
        .sort_by(|a, b| a.file_name().cmp(b.file_name()))
        .into_iter()
        .filter_entry(|entry| {
            if entry.depth() == 0 {
                return true;
            }
            let rel = relative_slash_path(root, entry.path());
            !rules.matches(&rel)
        });

    for entry in walker {
        let entry = match entry {
            Ok(e) => e,
            Err(e) => {
                log::warn!("skipping unreadable entry: {e}");
                continue;
            }
        };
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = relative_slash_path(root, entry.path());
        let bytes = match std::fs::read(entry.path()) {
            Ok(b) => b,
            Err(e) => {
                log::warn!("skipping unreadable file {rel}: {e}");
                continue;
            }
        };
        if looks_binary(&bytes) {
            continue;
        }
        let content = match String::from_utf8(bytes) {
            Ok(c) => c,
            Err(_) => continue, // not valid text
        };
        let language_tag = entry
            .path()
            .extension()
            .map(|e| e.to_string_lossy().to_lowercase());
        records.push(FileRecord {
            byte_len: content.len(),
            relative_path: rel,
            content,
            language_tag,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(root: &Path, rel: &str, content: &str) {
        let path = root.join(rel);
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(path, content).unwrap();
    }

    #[test]
    fn traverse_skips_binary_extensions() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "a.py", "print('a')");
        write(dir.path(), "sub/b.py", "print('b')");
        write(dir.path(), "img.png", "not really an image");
        let records = traverse(dir.path(), &IgnoreRules::default()).unwrap();
        let paths: Vec<&str> = records.iter().map(|r| r.relative_path.as_str()).collect();
        assert_eq!(paths, vec!["a.py", "sub/b.py"]);
    }

    #[test]
    fn traverse_empty_dir_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let records = traverse(dir.path(), &IgnoreRules::default()).unwrap();
        assert!(records.is_empty());
    }

    #[test]
    fn traverse_skips_nul_bytes() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "ok.txt", "hello");
        fs::write(dir.path().join("blob.dat"), b"abc\x00def").unwrap();
        let records = traverse(dir.path(), &IgnoreRules::default()).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].relative_path, "ok.txt");
        assert!(records.iter().all(|r| !r.content.contains('\0')));
    }

    #[test]
    fn traverse_skips_vcs_dirs() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), ".git/config", "[core]");
        write(dir.path(), "src/lib.rs", "fn x() {}");
        let records = traverse(dir.path(), &IgnoreRules::default()).unwrap();
        let paths: Vec<&str> = records.iter().map(|r| r.relative_path.as_str()).collect();
        assert_eq!(paths, vec!["src/lib.rs"]);
    }

    #[test]
    fn traverse_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["z.txt", "a.txt", "m/inner.txt", "b/deep/leaf.txt"] {
            write(dir.path(), name, name);
        }
        let one = traverse(dir.path(), &IgnoreRules::default()).unwrap();
        let two = traverse(dir.path(), &IgnoreRules::default()).unwrap();
        assert_eq!(one, two);
    }

    #[test]
    fn traverse_depth_first_lexicographic() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "b.txt", "b");
        write(dir.path(), "a/x.txt", "x");
        write(dir.path(), "a/c/y.txt", "y");
        write(dir.path(), "z.txt", "z");
        let records = traverse(dir.path(), &IgnoreRules::default()).unwrap();
        let paths: Vec<&str> = records.iter().map(|r| r.relative_path.as_str()).collect();
        assert_eq!(paths, vec!["a/c/y.txt", "a/x.txt", "b.txt", "z.txt"]);
    }

    #[test]
    fn traverse_returned_paths_exist_under_root() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "one.md", "# one");
        write(dir.path(), "two/three.md", "# three");
        let records = traverse(dir.path(), &IgnoreRules::default()).unwrap();
        for r in &records {
            assert!(dir.path().join(&r.relative_path).is_file());
        }
    }

    #[test]
    fn acquire_local_dir_passes_through() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "f.txt", "x");
        let source = RepoSource::new(dir.path().to_string_lossy(), "fixture");
        let work = tempfile::tempdir().unwrap();
        let root = acquire(&source, work.path()).unwrap();
        assert_eq!(root, dir.path());
    }

    #[test]
    fn acquire_missing_path_errors() {
        let source = RepoSource::new("/definitely/not/here", "nope");
        let work = tempfile::tempdir().unwrap();
        assert!(matches!(
            acquire(&source, work.path()),
            Err(IngestError::PathNotFound(_))
        ));
    }

    #[test]
    fn acquire_bad_host_errors() {
        let source = RepoSource::new("https://nonexistent.invalid/repo.git", "bad");
        let work = tempfile::tempdir().unwrap();
        assert!(matches!(
            acquire(&source, work.path()),
            Err(IngestError::RemoteUnreachable(_))
        ));
    }

    #[test]
    fn empty_locator_rejected() {
        let source = RepoSource::new("", "x");
        let work = tempfile::tempdir().unwrap();
        assert!(matches!(
            acquire(&source, work.path()),
            Err(IngestError::EmptyLocator)
        ));
    }
}
