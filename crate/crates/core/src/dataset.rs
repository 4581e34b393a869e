//! Dataset file format: one JSON manifest per dataset plus one delimited
//! table per demonstration (rows = timesteps, columns = channels, header row
//! of channel names matching manifest order). Values are written with the
//! shortest representation that parses back to the identical 64-bit float.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::ObservationFrame;
use crate::model::{Interaction, SensorLayout};
use crate::synth::{GroundTruth, SynthDataset};

pub const DATASET_FORMAT_VERSION: &str = "1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: String,
    pub seed: u64,
    pub config_hash: String,
    pub timestep: f64,
    pub layout: SensorLayout,
    pub demos: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<String>,
}

/// A dataset loaded from disk.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub layout: SensorLayout,
    pub demos: Vec<Interaction>,
    pub truth: Option<GroundTruth>,
    pub manifest: DatasetManifest,
}

fn parse_err(path: &Path, detail: impl std::fmt::Display) -> Error {
    Error::Parse(format!("{}: {detail}", path.display()))
}

fn check_name(name: &str) -> Result<()> {
    if name.contains(',') || name.contains('\n') || name.contains('\r') {
        return Err(Error::Layout(format!("channel name '{name}' contains a delimiter")));
    }
    Ok(())
}

/// Writes one interaction as a delimited table with a channel-name header.
pub fn write_table(path: &Path, interaction: &Interaction) -> Result<()> {
    let layout = interaction.layout();
    let mut out = String::new();
    let names: Vec<&str> = layout.channels().iter().map(|c| c.name.as_str()).collect();
    for n in &names {
        check_name(n)?;
    }
    out.push_str(&names.join(","));
    out.push('\n');
    for t in 0..interaction.len() {
        for d in 0..interaction.dim() {
            if d > 0 {
                out.push(',');
            }
            out.push_str(&format!("{}", interaction.value(d, t)));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a table written by [`write_table`], checking the header against the
/// expected layout order.
pub fn read_table(path: &Path, layout: &SensorLayout, timestep: f64) -> Result<Interaction> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| parse_err(path, "empty table"))?;
    let names: Vec<&str> = header.split(',').collect();
    let expected: Vec<&str> = layout.channels().iter().map(|c| c.name.as_str()).collect();
    if names != expected {
        return Err(parse_err(
            path,
            format!("header does not match manifest layout order (got {} columns)", names.len()),
        ));
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|v| v.parse::<f64>()).collect();
        let row = row.map_err(|e| parse_err(path, format!("line {}: {e}", lineno + 2)))?;
        if row.len() != layout.len() {
            return Err(parse_err(
                path,
                format!("line {}: {} values for {} channels", lineno + 2, row.len(), layout.len()),
            ));
        }
        rows.push(row);
    }
    Interaction::from_rows(layout.clone(), &rows, timestep)
}

fn demo_file_name(index: usize) -> String {
    format!("demo_{index:03}.csv")
}

/// Writes a generated dataset: manifest, per-demo tables, and the ground
/// truth sidecar. The directory is created if needed; the manifest is
/// written last so a complete manifest implies a complete dataset.
pub fn write_dataset(
    dir: &Path,
    dataset: &SynthDataset,
    seed: u64,
    config_hash: &str,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let timestep = dataset.demos.first().map(|d| d.timestep()).unwrap_or(1.0 / 30.0);
    let mut demo_files = Vec::with_capacity(dataset.demos.len());
    for (i, demo) in dataset.demos.iter().enumerate() {
        let name = demo_file_name(i);
        write_table(&dir.join(&name), demo)?;
        demo_files.push(name);
    }
    let truth_file = "ground_truth.json".to_string();
    fs::write(
        dir.join(&truth_file),
        serde_json::to_string_pretty(&dataset.truth)
            .map_err(|e| Error::Parse(e.to_string()))?,
    )?;
    let manifest = DatasetManifest {
        format_version: DATASET_FORMAT_VERSION.to_string(),
        seed,
        config_hash: config_hash.to_string(),
        timestep,
        layout: dataset.layout.clone(),
        demos: demo_files,
        ground_truth: Some(truth_file),
    };
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).map_err(|e| Error::Parse(e.to_string()))?,
    )?;
    Ok(())
}

/// Loads a dataset directory written by [`write_dataset`].
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest_path = dir.join("manifest.json");
    let text = fs::read_to_string(&manifest_path)?;
    let manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| parse_err(&manifest_path, e))?;
    if manifest.format_version != DATASET_FORMAT_VERSION {
        return Err(parse_err(
            &manifest_path,
            format!(
                "unsupported dataset format version '{}' (expected '{DATASET_FORMAT_VERSION}')",
                manifest.format_version
            ),
        ));
    }
    let layout = manifest.layout.clone();
    let demos: Result<Vec<Interaction>> = manifest
        .demos
        .iter()
        .map(|f| read_table(&dir.join(f), &layout, manifest.timestep))
        .collect();
    let truth = match &manifest.ground_truth {
        Some(f) => {
            let p = dir.join(f);
            let text = fs::read_to_string(&p)?;
            Some(serde_json::from_str(&text).map_err(|e| parse_err(&p, e))?)
        }
        None => None,
    };
    Ok(Dataset { layout, demos: demos?, truth, manifest })
}

/// Writes an observed-channel frame sequence; masked entries are empty
/// cells. The step duration rides in a leading comment line.
pub fn write_frames(path: &Path, names: &[String], frames: &[ObservationFrame]) -> Result<()> {
    for n in names {
        check_name(n)?;
    }
    let mut out = String::new();
    let dur = frames.first().map(|f| f.step_duration).unwrap_or(1.0 / 30.0);
    out.push_str(&format!("# step_duration={dur}\n"));
    out.push_str(&names.join(","));
    out.push('\n');
    for f in frames {
        if f.values.len() != names.len() {
            return Err(Error::Filter(format!(
                "frame has {} values for {} channels",
                f.values.len(),
                names.len()
            )));
        }
        let row: Vec<String> = f
            .values
            .iter()
            .map(|v| v.map(|x| format!("{x}")).unwrap_or_default())
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a frame file written by [`write_frames`], checking channel names.
pub fn read_frames(path: &Path, expected_names: &[String]) -> Result<Vec<ObservationFrame>> {
    let text = fs::read_to_string(path)?;
    let mut step_duration = 1.0 / 30.0;
    let mut lines = text.lines().peekable();
    while let Some(line) = lines.peek() {
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(v) = rest.trim().strip_prefix("step_duration=") {
                step_duration =
                    v.parse().map_err(|e| parse_err(path, format!("step_duration: {e}")))?;
            }
            lines.next();
        } else {
            break;
        }
    }
    let header = lines.next().ok_or_else(|| parse_err(path, "missing header"))?;
    let names: Vec<&str> = header.split(',').collect();
    let expected: Vec<&str> = expected_names.iter().map(|s| s.as_str()).collect();
    if names != expected {
        return Err(parse_err(path, "frame header does not match the model's observed channels"));
    }
    let mut frames = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let values: Result<Vec<Option<f64>>> = line
            .split(',')
            .map(|cell| {
                if cell.is_empty() {
                    Ok(None)
                } else {
                    cell.parse::<f64>()
                        .map(Some)
                        .map_err(|e| parse_err(path, format!("line {}: {e}", lineno + 2)))
                }
            })
            .collect();
        let values = values?;
        if values.len() != expected.len() {
            return Err(parse_err(
                path,
                format!("line {}: {} cells for {} channels", lineno + 2, values.len(), expected.len()),
            ));
        }
        frames.push(ObservationFrame { values, step_duration });
    }
    if frames.is_empty() {
        return Err(parse_err(path, "no frames"));
    }
    Ok(frames)
}

/// Hash of a canonical config serialization, embedded in every output file.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    use sha2::{Digest, Sha256};
    let canon = serde_json::to_string(config).map_err(|e| Error::Parse(e.to_string()))?;
    let mut hasher = Sha256::new();
    hasher.update(canon.as_bytes());
    Ok(format!("{:x}", hasher.finalize()))
}

/// Resolves a path under a base directory.
pub fn join(base: &Path, name: &str) -> PathBuf {
    base.join(name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_dataset, ScenarioConfig};
    use proptest::prelude::*;

    fn small_config() -> ScenarioConfig {
        ScenarioConfig {
            n_joints: 2,
            n_force_sensors: 6,
            n_groups: 2,
            n_pose_markers: 1,
            n_output_forces: 1,
            duration_range: (50, 60),
            seed: 5,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn dataset_round_trip_bit_exact() {
        let tmp = tempfile::tempdir().unwrap();
        let ds = generate_dataset(&small_config(), 3).unwrap();
        write_dataset(tmp.path(), &ds, 5, "deadbeef").unwrap();
        let loaded = load_dataset(tmp.path()).unwrap();
        assert_eq!(loaded.layout, ds.layout);
        assert_eq!(loaded.demos.len(), 3);
        for (a, b) in loaded.demos.iter().zip(&ds.demos) {
            assert_eq!(a, b); // bit-exact float round-trip
        }
        assert_eq!(loaded.truth.unwrap(), ds.truth);
        assert_eq!(loaded.manifest.seed, 5);
        assert_eq!(loaded.manifest.config_hash, "deadbeef");
    }

    #[test]
    fn table_rejects_reordered_header() {
        let tmp = tempfile::tempdir().unwrap();
        let ds = generate_dataset(&small_config(), 2).unwrap();
        let path = tmp.path().join("demo.csv");
        write_table(&path, &ds.demos[0]).unwrap();
        // swap two header names
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let header: Vec<&str> = lines[0].split(',').collect();
        let mut swapped = header.clone();
        swapped.swap(0, 1);
        lines[0] = swapped.join(",");
        std::fs::write(&path, lines.join("\n")).unwrap();
        assert!(read_table(&path, &ds.layout, 0.033).is_err());
    }

    #[test]
    fn frames_round_trip_with_masking() {
        let tmp = tempfile::tempdir().unwrap();
        let names = vec!["a".to_string(), "b".to_string()];
        let frames = vec![
            ObservationFrame { values: vec![Some(1.25), None], step_duration: 0.05 },
            ObservationFrame { values: vec![None, None], step_duration: 0.05 },
            ObservationFrame { values: vec![Some(-3.5e-7), Some(2.0)], step_duration: 0.05 },
        ];
        let path = tmp.path().join("frames.csv");
        write_frames(&path, &names, &frames).unwrap();
        let loaded = read_frames(&path, &names).unwrap();
        assert_eq!(loaded, frames);
    }

    #[test]
    fn config_hash_is_stable() {
        let c = small_config();
        assert_eq!(config_hash(&c).unwrap(), config_hash(&c.clone()).unwrap());
        let other = ScenarioConfig { seed: 6, ..c };
        assert_ne!(config_hash(&other).unwrap(), config_hash(&small_config()).unwrap());
    }

    proptest! {
        // shortest-repr formatting parses back to the identical bits
        #[test]
        fn float_format_round_trips(v in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            let s = format!("{v}");
            let back: f64 = s.parse().unwrap();
            prop_assert_eq!(v.to_bits(), back.to_bits());
        }
    }
}
