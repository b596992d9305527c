use std::io::Write;
use std::path::{Component, Path, PathBuf};

use anyhow::Context;

/// Writes through a temporary file in the target directory and renames it
/// into place, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("temp file in {}", dir.display()))?;
    // Temp files start out owner-only; give outputs ordinary permissions.
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file()
            .set_permissions(std::fs::Permissions::from_mode(0o644))
            .with_context(|| format!("permissions of {}", path.display()))?;
    }
    tmp.write_all(bytes)
        .and_then(|_| tmp.as_file().sync_all())
        .with_context(|| format!("writing {}", path.display()))?;
    tmp.persist(path).with_context(|| format!("renaming into {}", path.display()))?;
    log::debug!("wrote {}", path.display());
    Ok(())
}

pub fn read_text(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn read_bytes(path: &Path) -> anyhow::Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("reading {}", path.display()))
}

/// Directory holding `path`, `.` for bare file names.
pub fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// Re-expresses `rel` (relative to `from`) relative to `to`. Falls back to
/// an absolute path when the two directories share no prefix.
pub fn rebase(rel: &str, from: &Path, to: &Path) -> anyhow::Result<String> {
    let target = Path::new(rel);
    if target.is_absolute() {
        return Ok(rel.to_string());
    }
    let abs = std::path::absolute(from.join(target))?;
    let to = std::path::absolute(to)?;
    let norm = |p: &Path| -> Vec<PathBuf> {
        let mut out: Vec<PathBuf> = Vec::new();
        for c in p.components() {
            match c {
                Component::CurDir => {}
                Component::ParentDir => {
                    out.pop();
                }
                other => out.push(PathBuf::from(other.as_os_str())),
            }
        }
        out
    };
    let (a, b) = (norm(&abs), norm(&to));
    let common = a.iter().zip(&b).take_while(|(x, y)| x == y).count();
    if common == 0 {
        return Ok(abs.to_string_lossy().into_owned());
    }
    let mut out = PathBuf::new();
    for _ in common..b.len() {
        out.push("..");
    }
    for part in &a[common..] {
        out.push(part);
    }
    Ok(out.to_string_lossy().replace('\\', "/"))
}
