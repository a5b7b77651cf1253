//! JSON Lines episode logs: one episode object per line, steps inline.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::Deserialize;

use crate::episode::{ActionSpace, ActionValue, Episode, GroundTruth, Step, SCHEMA_VERSION};
use crate::error::{Error, Result};

#[derive(Deserialize)]
struct RawEpisode {
    #[serde(default)]
    v: Option<u32>,
    id: String,
    env_id: String,
    action_space: ActionSpace,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    episode_index: Option<u64>,
    #[serde(default)]
    label: Option<GroundTruth>,
    #[serde(default)]
    steps: Option<Vec<Step>>,
    // Imported logs that only carry episode totals.
    #[serde(default)]
    proxy_return: Option<f64>,
    #[serde(default)]
    true_return: Option<f64>,
    #[serde(flatten)]
    extra: BTreeMap<String, serde_json::Value>,
}

impl RawEpisode {
    fn into_episode(self, line: usize, position: u64) -> Result<Episode> {
        let v = self.v.unwrap_or(SCHEMA_VERSION);
        if v != SCHEMA_VERSION {
            return Err(Error::invalid(format!(
                "line {line}: unsupported schema version {v}"
            )));
        }
        let steps = match (self.steps, self.proxy_return, self.true_return) {
            (Some(steps), _, _) => steps,
            (None, Some(proxy), Some(truth)) => vec![Step {
                t: 0,
                action: match self.action_space {
                    ActionSpace::Discrete(_) => ActionValue::Discrete(0),
                    ActionSpace::Continuous(d) => ActionValue::Continuous(vec![0.0; d as usize]),
                },
                obs_features: Vec::new(),
                proxy_reward: proxy,
                true_reward: truth,
                reward_checksum: 0,
            }],
            _ => {
                return Err(Error::invalid(format!(
                    "line {line}: episode has neither steps nor proxy/true returns"
                )))
            }
        };
        Ok(Episode {
            v,
            id: self.id,
            env_id: self.env_id,
            action_space: self.action_space,
            seed: self.seed,
            episode_index: self.episode_index.unwrap_or(position),
            label: self.label,
            steps,
            extra: self.extra,
        })
    }
}

/// Reads every episode in a log. Blank lines are skipped; a missing
/// `episode_index` defaults to the episode's position in the file.
pub fn read_episodes<R: Read>(reader: R) -> Result<Vec<Episode>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawEpisode =
            serde_json::from_str(&line).map_err(|source| Error::Parse { line: i + 1, source })?;
        let position = out.len() as u64;
        out.push(raw.into_episode(i + 1, position)?);
    }
    Ok(out)
}

pub fn parse_episode(line: &str) -> Result<Episode> {
    let raw: RawEpisode = serde_json::from_str(line).map_err(|source| Error::Parse { line: 1, source })?;
    raw.into_episode(1, 0)
}

pub fn write_episodes<W: Write>(writer: W, episodes: &[Episode]) -> Result<()> {
    let mut w = BufWriter::new(writer);
    for e in episodes {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// The JSONL bytes [`write_episodes`] would produce.
pub fn episodes_to_bytes(episodes: &[Episode]) -> Vec<u8> {
    let mut out = Vec::new();
    write_episodes(&mut out, episodes).expect("writing to memory");
    out
}

pub fn serialize_episode(e: &Episode) -> String {
    serde_json::to_string(e).expect("episodes always serialize")
}

pub fn read_episodes_file(path: &Path) -> Result<Vec<Episode>> {
    read_episodes(File::open(path)?)
}

pub fn write_episodes_file(path: &Path, episodes: &[Episode]) -> Result<()> {
    write_episodes(File::create(path)?, episodes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_fields_survive_read_and_are_dropped_on_write() {
        let line = r#"{"v":1,"id":"a","env_id":"x","action_space":{"discrete":2},"seed":3,"episode_index":4,"notes":"hi","steps":[{"t":0,"action":1,"proxy_reward":0.1,"true_reward":0.2,"reward_checksum":"00000000000000ff"}]}"#;
        let e = parse_episode(line).unwrap();
        assert_eq!(e.extra.get("notes").and_then(|v| v.as_str()), Some("hi"));
        assert_eq!(e.steps[0].reward_checksum, 255);
        assert!(!serialize_episode(&e).contains("notes"));
    }

    #[test]
    fn missing_index_defaults_to_file_order() {
        let log = concat!(
            r#"{"id":"a","env_id":"x","action_space":{"continuous":2},"proxy_return":3.0,"true_return":2.5}"#,
            "\n\n",
            r#"{"id":"b","env_id":"x","action_space":{"discrete":3},"steps":[{"t":0,"action":0,"proxy_reward":1,"true_reward":1,"reward_checksum":0}]}"#,
            "\n"
        );
        let eps = read_episodes(log.as_bytes()).unwrap();
        assert_eq!(eps.len(), 2);
        assert_eq!(eps[0].episode_index, 0);
        assert_eq!(eps[1].episode_index, 1);
        assert_eq!(eps[0].steps.len(), 1);
        assert_eq!(eps[0].steps[0].action, ActionValue::Continuous(vec![0.0, 0.0]));
        assert_eq!(eps[0].proxy_return(), 3.0);
    }

    #[test]
    fn wrong_version_and_bad_json_are_errors() {
        let bad_v = r#"{"v":2,"id":"a","env_id":"x","action_space":{"discrete":2},"steps":[]}"#;
        assert!(parse_episode(bad_v).is_err());
        let err = read_episodes("{\"id\":\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }
}
