//! Strict RFC 4180 reader.
//!
//! Rows are numbered by logical record, header included, so the first data
//! row under a header is row 2.

use super::{IngestError, RawRecord};

/// Parse CSV bytes into raw records tagged with `source_tag`.
///
/// With `has_header` unset, columns are named `col1..colN`. Every row must
/// carry the same number of fields as the first record; blank lines are
/// skipped.
pub fn parse_csv(
    bytes: &[u8],
    has_header: bool,
    source_tag: &str,
) -> Result<Vec<RawRecord>, IngestError> {
    let text = std::str::from_utf8(bytes).map_err(|e| IngestError::MalformedCsv {
        row: row_of_offset(bytes, e.valid_up_to()),
        reason: "invalid UTF-8".into(),
    })?;
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let rows = split_records(text)?;

    let mut rows = rows.into_iter();
    let (header, first_data) = if has_header {
        match rows.next() {
            Some((_, h)) => (h, None),
            None => return Ok(Vec::new()),
        }
    } else {
        match rows.next() {
            Some(first) => {
                let names = (1..=first.1.len()).map(|i| format!("col{i}")).collect();
                (names, Some(first))
            }
            None => return Ok(Vec::new()),
        }
    };

    let width = header.len();
    let mut out = Vec::new();
    for (row, fields) in first_data.into_iter().chain(rows) {
        if fields.len() != width {
            return Err(IngestError::MalformedCsv {
                row,
                reason: format!("expected {width} fields, found {}", fields.len()),
            });
        }
        let fields = header.iter().cloned().zip(fields).collect();
        out.push(RawRecord::new(source_tag, fields, row)?);
    }
    Ok(out)
}

fn row_of_offset(bytes: &[u8], offset: usize) -> usize {
    1 + bytes[..offset].iter().filter(|b| **b == b'\n').count()
}

#[derive(PartialEq)]
enum State {
    FieldStart,
    Unquoted,
    Quoted,
    QuoteInQuoted,
}

/// Tokenise into (row_number, fields). Blank physical lines produce no record.
fn split_records(text: &str) -> Result<Vec<(usize, Vec<String>)>, IngestError> {
    let mut records = Vec::new();
    let mut fields: Vec<String> = Vec::new();
    let mut field = String::new();
    let mut state = State::FieldStart;
    let mut row = 1usize;

    let malformed = |row: usize, reason: &str| IngestError::MalformedCsv {
        row,
        reason: reason.to_string(),
    };

    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        match state {
            State::FieldStart | State::Unquoted => match c {
                '"' if state == State::FieldStart => state = State::Quoted,
                '"' => return Err(malformed(row, "quote inside unquoted field")),
                ',' => {
                    fields.push(std::mem::take(&mut field));
                    state = State::FieldStart;
                }
                '\r' | '\n' => {
                    if c == '\r' && chars.peek() == Some(&'\n') {
                        chars.next();
                    }
                    let blank = fields.is_empty() && field.is_empty() && state == State::FieldStart;
                    if !blank {
                        fields.push(std::mem::take(&mut field));
                        records.push((row, std::mem::take(&mut fields)));
                        row += 1;
                    }
                    state = State::FieldStart;
                }
                _ => {
                    field.push(c);
                    state = State::Unquoted;
                }
            },
            State::Quoted => match c {
                '"' => state = State::QuoteInQuoted,
                _ => field.push(c),
            },
            State::QuoteInQuoted => match c {
                '"' => {
                    field.push('"');
                    state = State::Quoted;
                }
                ',' => {
                    fields.push(std::mem::take(&mut field));
                    state = State::FieldStart;
                }
                '\r' | '\n' => {
                    if c == '\r' && chars.peek() == Some(&'\n') {
                        chars.next();
                    }
                    fields.push(std::mem::take(&mut field));
                    records.push((row, std::mem::take(&mut fields)));
                    row += 1;
                    state = State::FieldStart;
                }
                _ => return Err(malformed(row, "unexpected character after closing quote")),
            },
        }
    }

    match state {
        State::Quoted => return Err(malformed(row, "unbalanced quote")),
        State::FieldStart if fields.is_empty() && field.is_empty() => {}
        _ => {
            fields.push(field);
            records.push((row, fields));
        }
    }
    Ok(records)
}
