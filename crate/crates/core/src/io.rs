//! File formats: instance CSV with its `.meta` sidecar, completion CSV and
//! profile JSON. The grammar is described in `docs/formats.md`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    CompletionRecord, DayProfiles, DurationPercentiles, FunctionId, FunctionProfile, Instance, Invocation, Micros,
};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {err}")]
    Io { path: PathBuf, err: std::io::Error },
    #[error("{path}: {err}")]
    Csv { path: PathBuf, err: csv::Error },
    #[error("{path}: {err}")]
    Json { path: PathBuf, err: serde_json::Error },
    #[error("{path}:{line}: {reason}")]
    Meta { path: PathBuf, line: usize, reason: String },
}

impl FormatError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        FormatError::Io {
            path: path.to_path_buf(),
            err: source,
        }
    }

    fn csv(path: &Path, source: csv::Error) -> Self {
        FormatError::Csv {
            path: path.to_path_buf(),
            err: source,
        }
    }

    fn meta(path: &Path, line: usize, reason: impl Into<String>) -> Self {
        FormatError::Meta {
            path: path.to_path_buf(),
            line,
            reason: reason.into(),
        }
    }
}

/// Location of the metadata file that accompanies an instance CSV.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    let mut s = csv_path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

#[derive(Debug, Serialize, Deserialize)]
struct InvocationRow {
    seq: u64,
    func: u32,
    release_us: Micros,
    processing_us: Micros,
}

#[derive(Debug, Serialize, Deserialize)]
struct CompletionRow {
    seq: u64,
    func: u32,
    release_us: Micros,
    completion_us: Micros,
    processing_us: Micros,
}

/// An instance plus free-form annotations carried in its sidecar
/// (target load, seed, below-target flag and so on).
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceFile {
    pub instance: Instance,
    pub notes: BTreeMap<String, String>,
}

pub fn write_instance(csv_path: &Path, inst: &Instance, notes: &BTreeMap<String, String>) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_path(csv_path).map_err(|e| FormatError::csv(csv_path, e))?;
    for inv in &inst.invocations {
        w.serialize(InvocationRow {
            seq: inv.seq,
            func: inv.func.0,
            release_us: inv.release,
            processing_us: inv.processing,
        })
        .map_err(|e| FormatError::csv(csv_path, e))?;
    }
    if inst.invocations.is_empty() {
        w.write_record(["seq", "func", "release_us", "processing_us"])
            .map_err(|e| FormatError::csv(csv_path, e))?;
    }
    w.flush().map_err(|e| FormatError::io(csv_path, e))?;

    let meta_path = sidecar_path(csv_path);
    fs::write(&meta_path, render_meta(inst, notes)).map_err(|e| FormatError::io(&meta_path, e))
}

fn join<T: ToString>(xs: impl IntoIterator<Item = T>) -> String {
    xs.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn render_meta(inst: &Instance, notes: &BTreeMap<String, String>) -> String {
    let mut out = String::new();
    out.push_str(&format!("horizon_us={}\n", inst.horizon));
    out.push_str(&format!("processors={}\n", inst.processors));
    out.push_str(&format!("functions={}\n", inst.profiles.len()));
    for p in &inst.profiles {
        let id = p.id.0;
        assert!(!p.name.contains(['\n', '\r']), "function name contains a line break");
        out.push_str(&format!("function.{id}.name={}\n", p.name));
        out.push_str(&format!(
            "function.{id}.percentiles_us={}\n",
            join(p.durations.as_array())
        ));
        out.push_str(&format!("function.{id}.rates={}\n", join(&p.rates)));
    }
    for (k, v) in notes {
        assert!(!k.contains(['=', '\n']) && !v.contains('\n'), "malformed note {k:?}");
        out.push_str(&format!("note.{k}={v}\n"));
    }
    out
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Option<Vec<T>> {
    if s.is_empty() {
        return Some(Vec::new());
    }
    s.split(',').map(|x| x.trim().parse().ok()).collect()
}

#[derive(Default)]
struct PartialProfile {
    name: Option<String>,
    percentiles: Option<[Micros; 7]>,
    rates: Option<Vec<u32>>,
}

/// Horizon, processor count, profiles and notes read from a sidecar.
type Meta = (Micros, usize, Vec<FunctionProfile>, BTreeMap<String, String>);

fn parse_meta(path: &Path, text: &str) -> Result<Meta, FormatError> {
    let mut horizon = None;
    let mut processors = None;
    let mut count: Option<usize> = None;
    let mut partial: BTreeMap<u32, PartialProfile> = BTreeMap::new();
    let mut notes = BTreeMap::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.trim_end_matches('\r');
        if raw.trim().is_empty() || raw.starts_with('#') {
            continue;
        }
        let (key, value) = raw
            .split_once('=')
            .ok_or_else(|| FormatError::meta(path, line, "expected key=value"))?;
        let bad = |what: &str| FormatError::meta(path, line, format!("invalid {what}: {value:?}"));
        match key {
            "horizon_us" => horizon = Some(value.parse::<Micros>().map_err(|_| bad(key))?),
            "processors" => processors = Some(value.parse::<usize>().map_err(|_| bad(key))?),
            "functions" => count = Some(value.parse::<usize>().map_err(|_| bad(key))?),
            _ => {
                if let Some(note) = key.strip_prefix("note.") {
                    notes.insert(note.to_string(), value.to_string());
                    continue;
                }
                let rest = key
                    .strip_prefix("function.")
                    .ok_or_else(|| FormatError::meta(path, line, format!("unknown key {key:?}")))?;
                let (id, field) = rest
                    .split_once('.')
                    .ok_or_else(|| FormatError::meta(path, line, format!("unknown key {key:?}")))?;
                let id: u32 = id.parse().map_err(|_| bad("function id"))?;
                let entry = partial.entry(id).or_default();
                match field {
                    "name" => entry.name = Some(value.to_string()),
                    "percentiles_us" => {
                        let v: Vec<Micros> = parse_list(value).ok_or_else(|| bad(field))?;
                        let arr: [Micros; 7] = v.try_into().map_err(|_| bad("percentile count"))?;
                        entry.percentiles = Some(arr);
                    }
                    "rates" => entry.rates = Some(parse_list(value).ok_or_else(|| bad(field))?),
                    _ => return Err(FormatError::meta(path, line, format!("unknown key {key:?}"))),
                }
            }
        }
    }

    let missing = |k: &str| FormatError::meta(path, 0, format!("missing {k}"));
    let horizon = horizon.ok_or_else(|| missing("horizon_us"))?;
    let processors = processors.ok_or_else(|| missing("processors"))?;
    let count = count.ok_or_else(|| missing("functions"))?;
    if partial.len() != count || partial.keys().enumerate().any(|(i, &id)| i as u32 != id) {
        return Err(FormatError::meta(
            path,
            0,
            format!("function entries must be numbered 0..{count}"),
        ));
    }
    let mut profiles = Vec::with_capacity(count);
    for (id, p) in partial {
        let field = |f: &str| missing(&format!("function.{id}.{f}"));
        profiles.push(FunctionProfile {
            id: FunctionId(id),
            name: p.name.ok_or_else(|| field("name"))?,
            rates: p.rates.ok_or_else(|| field("rates"))?,
            durations: DurationPercentiles::from_array(p.percentiles.ok_or_else(|| field("percentiles_us"))?),
        });
    }
    Ok((horizon, processors, profiles, notes))
}

pub fn read_instance(csv_path: &Path) -> Result<InstanceFile, FormatError> {
    let meta_path = sidecar_path(csv_path);
    let text = fs::read_to_string(&meta_path).map_err(|e| FormatError::io(&meta_path, e))?;
    let (horizon, processors, profiles, notes) = parse_meta(&meta_path, &text)?;

    let mut r = csv::Reader::from_path(csv_path).map_err(|e| FormatError::csv(csv_path, e))?;
    let mut invocations = Vec::new();
    for row in r.deserialize::<InvocationRow>() {
        let row = row.map_err(|e| FormatError::csv(csv_path, e))?;
        invocations.push(Invocation {
            seq: row.seq,
            func: FunctionId(row.func),
            release: row.release_us,
            processing: row.processing_us,
        });
    }
    Ok(InstanceFile {
        instance: Instance {
            horizon,
            processors,
            profiles,
            invocations,
        },
        notes,
    })
}

pub fn write_completions<W: Write>(out: W, records: &[CompletionRecord]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    if records.is_empty() {
        w.write_record(["seq", "func", "release_us", "completion_us", "processing_us"])?;
    }
    for r in records {
        w.serialize(CompletionRow {
            seq: r.seq,
            func: r.func.0,
            release_us: r.release,
            completion_us: r.completion,
            processing_us: r.processing,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_completions<R: Read>(input: R) -> Result<Vec<CompletionRecord>, csv::Error> {
    csv::Reader::from_reader(input)
        .deserialize::<CompletionRow>()
        .map(|row| {
            row.map(|r| CompletionRecord {
                seq: r.seq,
                func: FunctionId(r.func),
                release: r.release_us,
                completion: r.completion_us,
                processing: r.processing_us,
            })
        })
        .collect()
}

/// Top-level shape of a profiles JSON file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileLibrary {
    pub days: Vec<DayProfiles>,
}

pub fn write_profiles(path: &Path, lib: &ProfileLibrary) -> Result<(), FormatError> {
    let text = serde_json::to_string_pretty(lib).map_err(|e| FormatError::Json {
        path: path.to_path_buf(),
        err: e,
    })?;
    fs::write(path, text + "\n").map_err(|e| FormatError::io(path, e))
}

pub fn read_profiles(path: &Path) -> Result<ProfileLibrary, FormatError> {
    let text = fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| FormatError::Json {
        path: path.to_path_buf(),
        err: e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MINUTE;
    use proptest::prelude::*;

    fn arb_instance() -> impl Strategy<Value = Instance> {
        let profile = (
            "[a-zA-Z0-9_=. -]{0,12}",
            prop::array::uniform7(0u64..1_000_000),
            prop::collection::vec(0u32..5_000, 3),
        );
        (
            1usize..64,
            prop::collection::vec(profile, 1..5),
            prop::collection::vec((0u64..3 * MINUTE, 1u64..u64::MAX / 4, any::<u32>()), 0..50),
        )
            .prop_map(|(m, profs, invs)| {
                let profiles: Vec<FunctionProfile> = profs
                    .into_iter()
                    .enumerate()
                    .map(|(i, (name, mut pct, rates))| {
                        pct.sort_unstable();
                        pct[6] += 1;
                        FunctionProfile {
                            id: FunctionId(i as u32),
                            name,
                            rates,
                            durations: DurationPercentiles::from_array(pct),
                        }
                    })
                    .collect();
                let n = profiles.len() as u32;
                let mut rows: Vec<_> = invs.into_iter().map(|(r, p, f)| (r, f % n, p)).collect();
                rows.sort_unstable();
                Instance {
                    horizon: 3 * MINUTE,
                    processors: m,
                    invocations: rows
                        .into_iter()
                        .enumerate()
                        .map(|(seq, (release, f, processing))| Invocation {
                            seq: seq as u64,
                            func: FunctionId(f),
                            release,
                            processing,
                        })
                        .collect(),
                    profiles,
                }
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn instance_round_trip_is_exact(inst in arb_instance()) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("i.csv");
            let mut notes = BTreeMap::new();
            notes.insert("target_load".to_string(), "0.9".to_string());
            write_instance(&path, &inst, &notes).unwrap();
            let back = read_instance(&path).unwrap();
            prop_assert_eq!(back.instance, inst);
            prop_assert_eq!(back.notes, notes);
        }

        #[test]
        fn completion_round_trip(rows in prop::collection::vec((any::<u32>(), 0u64..1 << 40, 1u64..1 << 40, 0u64..1 << 40), 0..30)) {
            let recs: Vec<_> = rows
                .into_iter()
                .enumerate()
                .map(|(i, (f, r, p, d))| CompletionRecord {
                    seq: i as u64,
                    func: FunctionId(f),
                    release: r,
                    completion: r + p + d,
                    processing: p,
                })
                .collect();
            let mut buf = Vec::new();
            write_completions(&mut buf, &recs).unwrap();
            prop_assert_eq!(read_completions(buf.as_slice()).unwrap(), recs);
        }
    }

    #[test]
    fn completion_header() {
        let mut buf = Vec::new();
        write_completions(&mut buf, &[]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "seq,func,release_us,completion_us,processing_us\n"
        );
    }

    #[test]
    fn missing_sidecar_names_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        fs::write(&path, "seq,func,release_us,processing_us\n").unwrap();
        let err = read_instance(&path).unwrap_err().to_string();
        assert!(err.contains("x.csv.meta"), "{err}");
    }

    #[test]
    fn meta_errors_carry_line_numbers() {
        let p = Path::new("m");
        let err = parse_meta(p, "horizon_us=60000000\nprocessors=two\n").unwrap_err();
        assert!(err.to_string().starts_with("m:2:"), "{err}");
        let err = parse_meta(p, "horizon_us=1\nprocessors=1\nfunctions=1\nfunction.0.name=a\n").unwrap_err();
        assert!(err.to_string().contains("function.0.rates"), "{err}");
    }

    #[test]
    fn profiles_round_trip() {
        let lib = ProfileLibrary {
            days: vec![DayProfiles {
                day: 3,
                functions: vec![FunctionProfile {
                    id: FunctionId(0),
                    name: "f".into(),
                    rates: vec![1, 0, 2],
                    durations: DurationPercentiles::point_mass(1_000),
                }],
            }],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        write_profiles(&path, &lib).unwrap();
        assert_eq!(read_profiles(&path).unwrap(), lib);
    }
}
