use std::path::{Path, PathBuf};

use crate::backend::BackendKind;
use crate::error::{Error, Result};
use crate::harness::WorkloadKind;

/// Parameters of a stash-size sweep over the (Z, L) grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExperimentConfig {
    /// N; `None` uses N = 2^L for every cell.
    pub capacity: Option<u64>,
    pub block_size: u32,
    pub bucket_sizes: Vec<u32>,
    pub heights: Vec<u32>,
    pub workload: WorkloadKind,
    pub accesses: u64,
    pub seed: u64,
    pub backend: BackendKind,
    pub integrity: bool,
    pub output: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            capacity: None,
            block_size: 64,
            bucket_sizes: vec![4],
            heights: vec![10],
            workload: WorkloadKind::Uniform,
            accesses: 100_000,
            seed: 0,
            backend: BackendKind::Memory,
            integrity: false,
            output: PathBuf::from("results"),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let usage = |m: &str| Err(Error::Usage(m.into()));
        if self.bucket_sizes.is_empty() || self.heights.is_empty() {
            return usage("at least one Z and one L are required");
        }
        if self.bucket_sizes.contains(&0) {
            return usage("every Z must be at least 1");
        }
        if self.heights.contains(&0) {
            return usage("every L must be at least 1");
        }
        if self.accesses == 0 {
            return usage("access count must be at least 1");
        }
        if self.block_size == 0 {
            return usage("block size must be at least 1");
        }
        if self.capacity == Some(0) {
            return usage("capacity must be at least 1");
        }
        Ok(())
    }

    /// N for a cell of height `height`.
    pub fn capacity_for(&self, height: u32) -> u64 {
        self.capacity.unwrap_or(1u64 << height)
    }

    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Usage(format!("{key}: {v:?} is not a valid number")))
        }
        fn list(key: &str, v: &str) -> Result<Vec<u32>> {
            v.split(',').map(|x| num(key, x.trim())).collect()
        }
        match key {
            "capacity" | "n" => self.capacity = Some(num(key, value)?),
            "block_size" | "b" => self.block_size = num(key, value)?,
            "z" | "bucket_sizes" => self.bucket_sizes = list(key, value)?,
            "l" | "heights" => self.heights = list(key, value)?,
            "workload" => self.workload = value.parse()?,
            "accesses" => self.accesses = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "backend" => self.backend = value.parse()?,
            "integrity" => {
                self.integrity = match value {
                    "true" | "1" | "on" => true,
                    "false" | "0" | "off" => false,
                    _ => return Err(Error::Usage(format!("integrity: {value:?} is not a flag"))),
                }
            }
            "output" => self.output = value.into(),
            _ => return Err(Error::Usage(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Reads `key=value` lines; blank lines and `#` comments are ignored.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                location: format!("{origin}:{}", n + 1),
                message: "expected key=value".into(),
            })?;
            self.set(&key.trim().to_ascii_lowercase(), value.trim())
                .map_err(|e| Error::Parse {
                    location: format!("{origin}:{}", n + 1),
                    message: e.to_string(),
                })?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text(&std::fs::read_to_string(path)?, &path.display().to_string())?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_key_value_text() {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text(
            "# sweep\nZ = 1,2,3,4\nL=8, 10\naccesses=1000\nworkload=sequential\n\nintegrity=on\nbackend=file:/tmp/t\nN=512\n",
            "cfg",
        )
        .unwrap();
        assert_eq!(cfg.bucket_sizes, vec![1, 2, 3, 4]);
        assert_eq!(cfg.heights, vec![8, 10]);
        assert_eq!(cfg.accesses, 1000);
        assert_eq!(cfg.workload, WorkloadKind::Sequential);
        assert!(cfg.integrity);
        assert_eq!(cfg.backend, BackendKind::File("/tmp/t".into()));
        assert_eq!(cfg.capacity_for(10), 512);
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_bad_input() {
        let mut cfg = ExperimentConfig::default();
        let err = cfg.apply_text("z=4\nbogus", "cfg").unwrap_err();
        assert!(err.to_string().contains("cfg:2"), "{err}");
        assert!(cfg.apply_text("colour=red", "cfg").is_err());
        cfg.bucket_sizes = vec![0];
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig {
            accesses: 0,
            ..ExperimentConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig {
            heights: vec![0],
            ..ExperimentConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert_eq!(ExperimentConfig::default().capacity_for(6), 64);
    }
}
