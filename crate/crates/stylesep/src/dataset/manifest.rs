//! JSONL manifest reading and writing.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::types::{UtteranceRecord, MAX_DURATION_S, MIN_DURATION_S};
use super::DatasetError;

/// Outcome of reading one manifest: accepted records plus per-record
/// rejection reasons (line number, reason). Malformed records do not abort
/// the file.
#[derive(Debug)]
pub struct IngestReport {
    pub records: Vec<UtteranceRecord>,
    pub rejected: Vec<(usize, String)>,
}

/// Read and validate a manifest. The duration filter rejects clips outside
/// [3 s, 15 s]; schema violations reject the record with the serde message.
pub fn ingest_manifest(path: impl AsRef<Path>) -> Result<IngestReport, DatasetError> {
    let path = path.as_ref();
    let f = std::fs::File::open(path)
        .map_err(|e| DatasetError::Io { path: path.display().to_string(), source: e })?;
    let reader = BufReader::new(f);
    let mut report = IngestReport { records: Vec::new(), rejected: Vec::new() };
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| DatasetError::Io { path: path.display().to_string(), source: e })?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<UtteranceRecord>(&line) {
            Ok(rec) => {
                if rec.duration_s < MIN_DURATION_S {
                    report.rejected.push((lineno + 1, format!("{}: duration<3s", rec.id)));
                } else if rec.duration_s > MAX_DURATION_S {
                    report.rejected.push((lineno + 1, format!("{}: duration>15s", rec.id)));
                } else {
                    report.records.push(rec);
                }
            }
            Err(e) => report.rejected.push((lineno + 1, format!("validation error: {}", e))),
        }
    }
    Ok(report)
}

pub fn write_manifest(path: impl AsRef<Path>, records: &[UtteranceRecord]) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let mut f = std::fs::File::create(path)
        .map_err(|e| DatasetError::Io { path: path.display().to_string(), source: e })?;
    for r in records {
        let line = serde_json::to_string(r).expect("record serializes");
        writeln!(f, "{}", line).map_err(|e| DatasetError::Io { path: path.display().to_string(), source: e })?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"{"id":"u1","path":"wav/u1.wav","duration_s":3.5,"speaker_id":"spk0","emotion":"happy","pitch":"high","gender":"female","accent":"us","tempo":"fast","transcript":"hi"}"#;

    #[test]
    fn accepts_well_formed_record() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        std::fs::write(&p, format!("{}\n", GOOD)).unwrap();
        let rep = ingest_manifest(&p).unwrap();
        assert_eq!(rep.records.len(), 1);
        assert!(rep.rejected.is_empty());
        assert_eq!(rep.records[0].id, "u1");
    }

    #[test]
    fn short_clip_rejected_with_reason() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        let short = GOOD.replace("3.5", "2.1");
        std::fs::write(&p, format!("{}\n{}\n", short, GOOD)).unwrap();
        let rep = ingest_manifest(&p).unwrap();
        assert_eq!(rep.records.len(), 1);
        assert_eq!(rep.rejected.len(), 1);
        assert!(rep.rejected[0].1.contains("duration<3s"), "{}", rep.rejected[0].1);
    }

    #[test]
    fn missing_attribute_field_is_record_level_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        let broken = GOOD.replace(r#""accent":"us","#, "");
        std::fs::write(&p, format!("{}\n{}\n", broken, GOOD)).unwrap();
        let rep = ingest_manifest(&p).unwrap();
        // The file keeps going: one good record survives.
        assert_eq!(rep.records.len(), 1);
        assert_eq!(rep.rejected.len(), 1);
        assert!(rep.rejected[0].1.contains("accent"), "{}", rep.rejected[0].1);
    }

    #[test]
    fn roundtrips_through_write() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        std::fs::write(&p, format!("{}\n", GOOD)).unwrap();
        let rep = ingest_manifest(&p).unwrap();
        let p2 = dir.path().join("m2.jsonl");
        write_manifest(&p2, &rep.records).unwrap();
        let rep2 = ingest_manifest(&p2).unwrap();
        assert_eq!(rep2.records.len(), 1);
        assert_eq!(rep2.records[0].attributes, rep.records[0].attributes);
    }
}
