use serde::Serialize;
use ssie2d::linalg::ConditionEstimate;
use ssie2d::operators::CacheStats;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Default, Serialize)]
pub struct Unknowns {
    pub penetrable: usize,
    pub pec: usize,
    pub total: usize,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct PhaseTimings {
    pub mesh: f64,
    pub dsao: f64,
    pub fill: f64,
    pub solve: f64,
    pub post: f64,
}

impl PhaseTimings {
    pub fn add(&mut self, other: &PhaseTimings) {
        self.mesh += other.mesh;
        self.dsao += other.dsao;
        self.fill += other.fill;
        self.solve += other.solve;
        self.post += other.post;
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct CacheReport {
    pub computed: usize,
    pub reused: usize,
    pub loaded: usize,
}

impl From<CacheStats> for CacheReport {
    fn from(s: CacheStats) -> Self {
        CacheReport {
            computed: s.computed,
            reused: s.reused,
            loaded: s.loaded,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    pub value: Option<f64>,
    pub kind: String,
}

impl From<ConditionEstimate> for ConditionReport {
    fn from(c: ConditionEstimate) -> Self {
        ConditionReport {
            value: c.value.is_finite().then_some(c.value),
            kind: c.kind.as_str().to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub command: String,
    pub status: String,
    pub frequency_hz: Option<f64>,
    pub unknowns: Unknowns,
    pub timings: PhaseTimings,
    pub cache: CacheReport,
    pub condition: Option<ConditionReport>,
    pub residual: Option<f64>,
    pub message: Option<String>,
    pub manifest: Vec<String>,
}

impl RunReport {
    pub fn new(command: &str) -> Self {
        RunReport {
            command: command.to_string(),
            status: "ok".into(),
            frequency_hz: None,
            unknowns: Unknowns::default(),
            timings: PhaseTimings::default(),
            cache: CacheReport::default(),
            condition: None,
            residual: None,
            message: None,
            manifest: Vec::new(),
        }
    }

    /// Writes `report.json` into `dir`; the report lists itself last.
    pub fn write(&mut self, dir: &Path) -> std::io::Result<PathBuf> {
        let path = dir.join("report.json");
        self.manifest.push("report.json".into());
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        std::fs::write(&path, text + "\n")?;
        Ok(path)
    }
}

/// Round-trip formatting: 17 significant digits.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

pub struct Table {
    writer: csv::Writer<std::fs::File>,
}

impl Table {
    pub fn create(dir: &Path, name: &str, header: &[&str], manifest: &mut Vec<String>) -> anyhow::Result<Self> {
        let mut writer = csv::Writer::from_path(dir.join(name))?;
        writer.write_record(header)?;
        manifest.push(name.to_string());
        Ok(Table { writer })
    }

    pub fn row<I, S>(&mut self, fields: I) -> anyhow::Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields)?;
        Ok(())
    }

    pub fn finish(mut self) -> anyhow::Result<()> {
        self.writer.flush()?;
        Ok(())
    }
}
