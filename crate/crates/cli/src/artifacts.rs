//! Artifact layout: CSV tables with a leading `#` provenance line, and a
//! versioned `report.json`.

use std::fs;
use std::path::{Path, PathBuf};

use graphflow_core::flow::{SnapshotKind, Trajectory};
use graphflow_core::initdata::GeneratorSpec;
use graphflow_core::{EstimateReport, State, Surface};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::Format;
use crate::{CliError, CliResult};

/// Version of the `report.json` layout.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Writes artifacts into one directory, honoring the requested formats.
#[derive(Debug, Clone)]
pub struct ArtifactWriter {
    dir: PathBuf,
    formats: Vec<Format>,
    csv_preamble: String,
}

impl ArtifactWriter {
    /// Creates the directory. `embedded` is the config recorded in every CSV.
    pub fn create(
        dir: &Path,
        formats: &[Format],
        embedded: &Value,
        seed: Option<u64>,
    ) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| {
            CliError::Usage(format!(
                "output directory {} is not writable: {e}",
                dir.display()
            ))
        })?;
        let seed = seed.map_or("none".to_string(), |s| s.to_string());
        Ok(Self {
            dir: dir.to_path_buf(),
            formats: formats.to_vec(),
            csv_preamble: format!(
                "# graphflow {} seed={seed} config={}\n",
                graphflow_core::VERSION,
                serde_json::to_string(embedded).expect("config serializes")
            ),
        })
    }

    /// A writer for a subdirectory with the same formats and preamble.
    pub fn subdir(&self, name: &str) -> CliResult<Self> {
        let dir = self.dir.join(name);
        fs::create_dir_all(&dir).map_err(|source| CliError::Write {
            path: dir.clone(),
            source,
        })?;
        Ok(Self {
            dir,
            ..self.clone()
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn write(&self, name: &str, contents: &str) -> CliResult<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|source| CliError::Write { path, source })
    }

    /// Writes `body` (header line first) behind the provenance line.
    pub fn csv(&self, name: &str, body: &str) -> CliResult<()> {
        if !self.formats.contains(&Format::Csv) {
            return Ok(());
        }
        self.write(name, &format!("{}{body}", self.csv_preamble))
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> CliResult<()> {
        if !self.formats.contains(&Format::Json) {
            return Ok(());
        }
        let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
        text.push('\n');
        self.write(name, &text)
    }

    pub fn series(&self, traj: &Trajectory) -> CliResult<()> {
        self.csv("series.csv", &traj.series_csv())
    }

    /// One `snapshot_<k>.csv` per scheduled snapshot, numbered in time order.
    /// Writes `snapshot_<k>.csv` per scheduled snapshot and returns their times.
    pub fn snapshots(&self, traj: &Trajectory) -> CliResult<Vec<f64>> {
        let mut times = Vec::new();
        for snap in traj
            .snapshots
            .iter()
            .filter(|s| s.kind == SnapshotKind::Scheduled)
        {
            let k = times.len();
            self.csv(&format!("snapshot_{k}.csv"), &snapshot_csv(&snap.state))?;
            times.push(snap.time());
        }
        Ok(times)
    }

    /// Series of one monitor as `<file_stem>.csv`.
    pub fn monitor(&self, file_stem: &str, report: &EstimateReport) -> CliResult<()> {
        self.csv(&format!("{file_stem}.csv"), &report.series_csv())
    }
}

/// Grid indices, parameter coordinates and the `F` (immersion) or `f`
/// (graph) components at every lattice point.
pub fn snapshot_csv(state: &State) -> String {
    let lat = state.lattice();
    let n = lat.dim();
    let fields = state.fields();
    let symbol = if state.is_graph() { "f" } else { "F" };
    let mut header: Vec<String> = (0..n).map(|a| format!("i{a}")).collect();
    header.extend((0..n).map(|a| format!("u{a}")));
    header.extend((0..fields.len()).map(|c| format!("{symbol}{c}")));
    let mut out = header.join(",");
    out.push('\n');
    for i in 0..lat.len() {
        let mut row: Vec<String> = lat.multi_index(i).iter().map(|v| v.to_string()).collect();
        row.extend(lat.coords(i).iter().map(|v| format!("{v:e}")));
        row.extend(fields.iter().map(|f| format!("{:e}", f[i])));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Where the initial data comes from, for the provenance block.
pub fn data_source(spec: &GeneratorSpec) -> &'static str {
    match spec {
        GeneratorSpec::Circle { .. } => "exact shrinking circle, R(t) = sqrt(R0^2 - 2t)",
        GeneratorSpec::Sphere { .. } => "exact shrinking sphere, R(t) = sqrt(R0^2 - 4t)",
        GeneratorSpec::Torus { .. } => "Clifford-type product torus of circles",
        GeneratorSpec::CornerGraph { .. } => "Lipschitz corner graph (triangle waves), optionally mollified",
        GeneratorSpec::RandomFourier { .. } => "seeded band-limited random Fourier data",
        GeneratorSpec::LawsonOsserman { .. } => {
            "Lawson-Osserman minimal cone f(x) = (sqrt(5)/2) q(x)/|x|, q the Hopf quadratic, windowed to a periodic box"
        }
    }
}

/// Common top-level fields of every `report.json`.
pub fn report_header(
    command: &str,
    config: &Value,
    generator: Option<&GeneratorSpec>,
    seed: Option<u64>,
) -> Value {
    json!({
        "schema": "graphflow.report",
        "schema_version": REPORT_SCHEMA_VERSION,
        "command": command,
        "config": config,
        "seed": seed,
        "provenance": {
            "generator": generator.map(|g| serde_json::to_value(g).expect("generator serializes")),
            "data_source": generator.map(data_source),
        },
        "versions": {
            "graphflow_core": graphflow_core::VERSION,
            "graphflow_cli": env!("CARGO_PKG_VERSION"),
            "report_schema": REPORT_SCHEMA_VERSION,
        },
    })
}

/// Merges `extra` into the object `base`.
pub fn merged(mut base: Value, extra: Value) -> Value {
    if let (Some(b), Value::Object(e)) = (base.as_object_mut(), extra) {
        b.extend(e);
    }
    base
}
