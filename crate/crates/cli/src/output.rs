use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Shortest round-trip representation; infinities as `inf`/`-inf`.
pub fn fmt(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else if v == 0.0 {
        "0".into()
    } else {
        format!("{v}")
    }
}

/// Routes tables to files under `--out` (summary to stdout) or to stdout (summary to stderr).
/// Nothing is written until `finish`, so a failing run leaves no artifacts.
pub struct Output {
    dir: Option<PathBuf>,
    files: Vec<(String, String)>,
    summary: Vec<String>,
}

impl Output {
    pub fn new(dir: &Option<PathBuf>) -> Self {
        Self { dir: dir.clone(), files: Vec::new(), summary: Vec::new() }
    }

    pub fn file(&mut self, name: &str, content: &str) -> std::io::Result<()> {
        self.files.push((name.to_string(), content.to_string()));
        Ok(())
    }

    pub fn summary(&mut self, line: &str) {
        self.summary.push(line.to_string());
    }

    pub fn finish(self) -> std::io::Result<()> {
        match &self.dir {
            Some(dir) => {
                fs::create_dir_all(dir)?;
                for (name, content) in &self.files {
                    fs::write(Path::new(dir).join(name), content)?;
                }
                let mut out = std::io::stdout().lock();
                for line in &self.summary {
                    writeln!(out, "{line}")?;
                }
            }
            None => {
                let mut out = std::io::stdout().lock();
                for (_, content) in &self.files {
                    out.write_all(content.as_bytes())?;
                }
                for line in &self.summary {
                    eprintln!("{line}");
                }
            }
        }
        Ok(())
    }
}
