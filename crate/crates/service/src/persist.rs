//! Write-through persistence: one directory per simulation holding the
//! scenario, the seed, and one file per completed round.

use std::fs;
use std::path::Path;

use cascade_core::{Error, Result, Scenario};
use serde::{Deserialize, Serialize};

use crate::model::RoundRecord;

#[derive(Serialize, Deserialize)]
struct Meta {
    id: String,
    seed: u64,
}

pub(crate) struct Saved {
    pub id: String,
    pub seed: u64,
    pub scenario: Scenario,
    pub rounds: Vec<RoundRecord>,
}

pub(crate) fn create(dir: &Path, id: &str, scenario: &Scenario, seed: u64) -> Result<()> {
    let root = dir.join(id);
    fs::create_dir_all(root.join("rounds"))?;
    fs::write(root.join("scenario.json"), scenario.to_json_pretty())?;
    let meta = Meta {
        id: id.to_string(),
        seed,
    };
    fs::write(root.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub(crate) fn write_round(dir: &Path, id: &str, record: &RoundRecord) -> Result<()> {
    let path = dir
        .join(id)
        .join("rounds")
        .join(format!("{:06}.json", record.trace.round));
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, serde_json::to_vec(record)?)?;
    fs::rename(tmp, path)?;
    Ok(())
}

pub(crate) fn list(dir: &Path) -> Result<Vec<Saved>> {
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<std::io::Result<_>>()?;
    entries.sort_by_key(|e| e.file_name());
    let mut out = Vec::new();
    for entry in entries {
        let root = entry.path();
        if !root.join("meta.json").exists() {
            continue;
        }
        let meta: Meta = serde_json::from_str(&fs::read_to_string(root.join("meta.json"))?)?;
        let scenario = Scenario::from_json_str(&fs::read_to_string(root.join("scenario.json"))?, None)?;
        let mut files: Vec<_> = fs::read_dir(root.join("rounds"))?
            .collect::<std::io::Result<Vec<_>>>()?
            .into_iter()
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        let mut rounds = Vec::with_capacity(files.len());
        for (k, f) in files.iter().enumerate() {
            let record: RoundRecord = serde_json::from_str(&fs::read_to_string(f)?)?;
            if record.trace.round != k as u32 + 1 {
                return Err(Error::precondition(format!(
                    "{}: round files are not contiguous",
                    meta.id
                )));
            }
            rounds.push(record);
        }
        out.push(Saved {
            id: meta.id,
            seed: meta.seed,
            scenario,
            rounds,
        });
    }
    Ok(out)
}
