use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use pseudospec::config::RunConfig;
use pseudospec::Result;
use serde_json::json;

pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self { root: root.to_path_buf() })
    }

    /// Writes `name` (relative to the output directory) and returns it.
    pub fn write(&self, name: &str, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<String> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut w = BufWriter::new(fs::File::create(&path)?);
        body(&mut w)?;
        w.flush()?;
        Ok(name.to_string())
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<String> {
        self.write(name, |w| Ok(w.write_all(text.as_bytes())?))
    }

    /// `manifest.json`: everything needed to rerun the command bit-exactly.
    pub fn write_manifest(&self, command: &str, cfg: &RunConfig, files: &[String]) -> Result<()> {
        let model = cfg.model()?;
        let manifest = json!({
            "command": command,
            "code_version": env!("CARGO_PKG_VERSION"),
            "config_hash": cfg.hash(),
            "model_hash": model.fingerprint(),
            "engine": cfg.simulation.engine.as_str(),
            "seed": cfg.simulation.seed,
            "shots": cfg.simulation.shots,
            "outputs": files,
            "config": cfg.to_toml(),
        });
        self.write_text("manifest.json", &serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }
}

/// Time in fs as used in file names.
pub fn time_label(t: f64) -> String {
    format!("{t}")
}
