//! `key=value` run manifests written next to every output.

use std::fmt::Display;
use std::path::{Path, PathBuf};

use ssrno::pipeline::MetricsReport;

#[derive(Debug, Clone, Default)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        let mut m = Self::default();
        m.set("command", command);
        m.set("tool_version", env!("CARGO_PKG_VERSION"));
        m
    }

    pub fn set(&mut self, key: &str, value: impl Display) -> &mut Self {
        let value = value.to_string().replace('\n', " ");
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
        self
    }

    pub fn path(&mut self, key: &str, path: &Path) -> &mut Self {
        self.set(key, path.display())
    }

    pub fn metrics(&mut self, m: &MetricsReport) -> &mut Self {
        self.set("metric.mrae", m.mrae).set("metric.psnr", m.psnr).set("metric.sam", m.sam).set("metric.ssim", m.ssim)
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.render())
    }
}

/// `out.ext` → `out.ext.manifest`; directories get `manifest.txt` inside.
pub fn manifest_path(output: &Path) -> PathBuf {
    if output.is_dir() {
        return output.join("manifest.txt");
    }
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest");
    output.with_file_name(name)
}
