use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::Context;
use rayon::prelude::*;
use ssmrisk::ingest::{parse_generic_named, parse_highd};
use ssmrisk::model::{LaneLayout, Scene};

use crate::config::{usage, InputSpec};

fn open(path: &Path) -> anyhow::Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

/// Input files with directories expanded to their `*.csv` entries, sorted.
fn expand_files(paths: &[PathBuf]) -> anyhow::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<_>>()?;
            entries.retain(|e| e.extension().is_some_and(|x| x == "csv") && !is_sidecar(e));
            entries.sort();
            out.extend(entries);
        } else {
            out.push(p.clone());
        }
    }
    if out.is_empty() {
        return Err(usage("no CSV inputs found"));
    }
    Ok(out)
}

/// CSVs written next to scenes that are not scenes themselves.
fn is_sidecar(path: &Path) -> bool {
    path.file_name().is_some_and(|n| n == "expected.csv")
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "generic".to_string(), |s| s.to_string_lossy().into_owned())
}

fn layout_for(file: &Path, explicit: Option<&Path>) -> anyhow::Result<LaneLayout> {
    let dir = file.parent().unwrap_or(Path::new("."));
    let candidates = match explicit {
        Some(p) => vec![p.to_path_buf()],
        None => vec![dir.join(format!("{}.layout.toml", stem(file))), dir.join("layout.toml")],
    };
    let path = candidates
        .iter()
        .find(|p| p.is_file())
        .ok_or_else(|| usage(format!("no lane layout for {} (pass --layout)", file.display())))?;
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    LaneLayout::from_toml_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_highd(dir: &Path, recording: &str) -> anyhow::Result<Scene> {
    let file = |suffix: &str| dir.join(format!("{recording}_{suffix}.csv"));
    let (tracks, meta, rec) = (file("tracks"), file("tracksMeta"), file("recordingMeta"));
    parse_highd(open(&tracks)?, open(&meta)?, open(&rec)?)
        .with_context(|| format!("recording {recording} in {}", dir.display()))
}

/// Loads every scene of the input, in input order.
pub fn load_scenes(spec: &InputSpec) -> anyhow::Result<Vec<Scene>> {
    match spec {
        InputSpec::HighD { data_dir, recordings } => recordings.par_iter().map(|r| load_highd(data_dir, r)).collect(),
        InputSpec::Generic { files, layout, frame_rate } => {
            let files = expand_files(files)?;
            files
                .par_iter()
                .map(|f| {
                    let layout = layout_for(f, layout.as_deref())?;
                    parse_generic_named(open(f)?, &layout, *frame_rate, &stem(f))
                        .with_context(|| format!("reading {}", f.display()))
                })
                .collect()
        }
    }
}
