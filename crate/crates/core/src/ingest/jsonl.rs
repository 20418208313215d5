use std::io::{BufRead, Write};

use super::{IngestError, InstructionRecord};

/// Write one JSON object per line, newline-terminated.
pub fn write_jsonl<W: Write>(records: &[InstructionRecord], mut out: W) -> Result<(), IngestError> {
    for rec in records {
        serde_json::to_writer(&mut out, rec).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Read canonical JSONL. Blank lines are ignored; line numbers in errors are
/// 1-based physical lines.
pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<InstructionRecord>, IngestError> {
    let mut records = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: InstructionRecord =
            serde_json::from_str(&line).map_err(|e| IngestError::MalformedJsonl {
                line: idx + 1,
                reason: e.to_string(),
            })?;
        records.push(rec);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_round_trip() {
        let mut buf = Vec::new();
        write_jsonl(&[], &mut buf).unwrap();
        assert!(buf.is_empty());
        assert!(read_jsonl(&buf[..]).unwrap().is_empty());
    }

    #[test]
    fn one_record_one_line_five_keys() {
        let rec = InstructionRecord::new("q".into(), "".into(), "a\nb".into(), "src".into());
        let mut buf = Vec::new();
        write_jsonl(std::slice::from_ref(&rec), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1);
        let value: serde_json::Value = serde_json::from_str(text.trim_end()).unwrap();
        let obj = value.as_object().unwrap();
        assert_eq!(obj.len(), 5);
        for key in ["instruction", "input", "output", "source_tag", "id"] {
            assert!(obj.contains_key(key), "{key}");
        }
    }

    #[test]
    fn malformed_line_number() {
        let good = r#"{"instruction":"q","input":"","output":"a","source_tag":"s","id":"x"}"#;
        let text = format!("{good}\n\n{{not json\n");
        match read_jsonl(text.as_bytes()) {
            Err(IngestError::MalformedJsonl { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let missing = r#"{"instruction":"q","input":"","output":"a","id":"x"}"#;
        assert!(read_jsonl(missing.as_bytes()).is_err());
    }

    #[test]
    fn no_trailing_newline_needed() {
        let good = r#"{"instruction":"q","input":"","output":"a","source_tag":"s","id":"x"}"#;
        assert_eq!(read_jsonl(good.as_bytes()).unwrap().len(), 1);
    }

    proptest! {
        #[test]
        fn round_trip_identity(
            rows in proptest::collection::vec((any::<String>(), any::<String>(), any::<String>(), "[a-zA-Z]{1,8}"), 0..100)
        ) {
            let recs: Vec<_> = rows
                .into_iter()
                .map(|(i, inp, o, s)| InstructionRecord::new(i, inp, o, s))
                .collect();
            let mut buf = Vec::new();
            write_jsonl(&recs, &mut buf).unwrap();
            prop_assert_eq!(buf.iter().filter(|b| **b == b'\n').count(), recs.len());
            prop_assert_eq!(read_jsonl(&buf[..]).unwrap(), recs);
        }
    }
}
