//! On-disk layout of a forge run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use helson_core::forge::{ChiAssignment, ForgeOutput, Ledger, StageRecord};
use helson_core::targets::{hex_digest, ZeroPoleSpec};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::{io_err, CliError};

pub const CHI_FILE: &str = "chi.txt";
pub const LEDGER_FILE: &str = "ledger.json";
pub const REPORT_FILE: &str = "report.json";
pub const SPEC_FILE: &str = "spec.json";
pub const CONFIG_FILE: &str = "run.cfg";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Files whose digests the manifest records.
pub const DIGESTED: [&str; 5] = [CHI_FILE, LEDGER_FILE, REPORT_FILE, SPEC_FILE, CONFIG_FILE];

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LedgerFile {
    pub config_digest: String,
    pub spec_digest: String,
    pub theta: f64,
    pub depth: usize,
    pub x_built: f64,
    pub stages: Vec<StageRecord>,
    pub constants: Vec<f64>,
    pub breakpoints: Vec<f64>,
    /// `r[k][j-1] = r_j(x_k)`.
    pub r: Vec<Vec<Complex64>>,
}

impl LedgerFile {
    pub fn from_output(out: &ForgeOutput) -> Self {
        LedgerFile {
            config_digest: out.report.config_digest.clone(),
            spec_digest: out.report.spec_digest.clone(),
            theta: out.ledger.theta,
            depth: out.ledger.depth,
            x_built: out.report.x_built,
            stages: out.report.stages.clone(),
            constants: out.report.constants.clone(),
            breakpoints: out.ledger.breakpoints().to_vec(),
            r: out.ledger.r_table(),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct SelfChecks {
    pub stage_audit_passed: bool,
    pub running_violations: usize,
    pub closing_violations: usize,
    pub realization_violations: usize,
}

impl SelfChecks {
    pub fn passed(&self) -> bool {
        self.stage_audit_passed && self.realization_violations == 0
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_digest: String,
    pub spec_digest: String,
    /// SHA-256 of every artifact in the run directory.
    pub files: BTreeMap<String, String>,
    pub checks: SelfChecks,
    /// Seconds since the Unix epoch; not part of any digest.
    pub created_unix: u64,
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| io_err("cannot read", path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| io_err("cannot write", path, e))
}

pub fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("artifact serializes");
    s.push('\n');
    s
}

pub fn load_spec(path: &Path) -> Result<ZeroPoleSpec, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read spec {}: {e}", path.display())))?;
    ZeroPoleSpec::from_json(&text).map_err(|e| CliError::Validation(format!("spec {}: {e}", path.display())))
}

/// A run directory read back from disk, with the header digests checked
/// against the stored configuration and spec.
pub struct StoredRun {
    pub dir: PathBuf,
    pub config: RunConfig,
    pub spec: ZeroPoleSpec,
    pub chi: ChiAssignment,
    pub ledger_file: LedgerFile,
    pub manifest: Manifest,
}

impl StoredRun {
    pub fn load(dir: &Path) -> Result<Self, CliError> {
        if !dir.is_dir() {
            return Err(CliError::Validation(format!("{} is not a run directory", dir.display())));
        }
        let config = RunConfig::load(&dir.join(CONFIG_FILE))?;
        let spec = load_spec(&dir.join(SPEC_FILE))?;
        let chi = ChiAssignment::parse(&read_text(&dir.join(CHI_FILE))?)
            .map_err(|e| CliError::Corrupt(format!("{CHI_FILE}: {e}")))?;
        let ledger_file: LedgerFile = serde_json::from_str(&read_text(&dir.join(LEDGER_FILE))?)
            .map_err(|e| CliError::Corrupt(format!("{LEDGER_FILE}: {e}")))?;
        let manifest: Manifest = serde_json::from_str(&read_text(&dir.join(MANIFEST_FILE))?)
            .map_err(|e| CliError::Corrupt(format!("{MANIFEST_FILE}: {e}")))?;
        let run = StoredRun { dir: dir.to_path_buf(), config, spec, chi, ledger_file, manifest };
        run.check_digests()?;
        Ok(run)
    }

    /// Config and spec digests embedded in every artifact agree.
    pub fn check_digests(&self) -> Result<(), CliError> {
        let cfg = self.config.forge.digest();
        let spec = self.spec.digest();
        let embedded = [
            (CHI_FILE, self.chi.config_hash.clone().unwrap_or_default(), self.chi.spec_hash.clone()),
            (LEDGER_FILE, self.ledger_file.config_digest.clone(), self.ledger_file.spec_digest.clone()),
            (MANIFEST_FILE, self.manifest.config_digest.clone(), self.manifest.spec_digest.clone()),
        ];
        for (name, c, s) in embedded {
            if c != cfg {
                return Err(CliError::Corrupt(format!("{name}: config digest {c} does not match {CONFIG_FILE} ({cfg})")));
            }
            if s != spec {
                return Err(CliError::Corrupt(format!("{name}: spec digest {s} does not match {SPEC_FILE} ({spec})")));
            }
        }
        Ok(())
    }

    /// Files whose current digest differs from the manifest.
    pub fn changed_files(&self) -> Result<Vec<String>, CliError> {
        let mut changed = Vec::new();
        for name in DIGESTED {
            let bytes = std::fs::read(self.dir.join(name)).map_err(|e| io_err("cannot read", &self.dir.join(name), e))?;
            if self.manifest.files.get(name) != Some(&hex_digest(&bytes)) {
                changed.push(name.to_string());
            }
        }
        Ok(changed)
    }

    /// Ledger recomputed from the stored character.
    pub fn rebuild_ledger(&self) -> Result<Ledger, CliError> {
        helson_core::forge::recompute_ledger(&self.chi, &self.spec, &self.config.forge)
            .map_err(|e| CliError::Runtime(format!("ledger replay: {e}")))
    }
}
