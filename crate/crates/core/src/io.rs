//! Line-delimited JSON and CSV readers/writers for the on-disk formats.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::pipeline::{Event, EventKind};

pub fn read_jsonl<T: DeserializeOwned, R: BufRead>(reader: R) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line)
            .map_err(|e| Error::Data(format!("line {}: {e}", lineno + 1)))?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_jsonl<'a, T, W, I>(mut writer: W, items: I) -> Result<()>
where
    T: Serialize + 'a,
    W: Write,
    I: IntoIterator<Item = &'a T>,
{
    for item in items {
        serde_json::to_writer(&mut writer, item)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

const CSV_FIXED: [&str; 4] = ["user_id", "ts_hours", "kind", "badge_count"];

/// Events from CSV with a header row. Columns other than the four fixed ones
/// are numeric features; empty cells are treated as absent.
pub fn read_events_csv<R: std::io::Read>(reader: R) -> Result<Vec<Event>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("CSV header lacks column {name:?}")))
    };
    let (uid, ts, kind) = (col("user_id")?, col("ts_hours")?, col("kind")?);
    let badge = headers.iter().position(|h| h == "badge_count");
    let feature_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| !CSV_FIXED.contains(h))
        .map(|(i, h)| (i, h.to_owned()))
        .collect();

    let mut events = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::Data(format!("CSV row {}: bad {what}", row + 2));
        let kind = match &rec[kind] {
            "notification_send" => EventKind::NotificationSend,
            "visit" => EventKind::Visit,
            _ => return Err(bad("kind")),
        };
        let badge_count = match badge.map(|b| &rec[b]) {
            None | Some("") => None,
            Some(s) => Some(s.parse().map_err(|_| bad("badge_count"))?),
        };
        let mut raw_features = BTreeMap::new();
        for (i, name) in &feature_cols {
            if !rec[*i].is_empty() {
                raw_features.insert(name.clone(), rec[*i].parse().map_err(|_| bad(name))?);
            }
        }
        events.push(Event {
            user_id: rec[uid].to_owned(),
            timestamp: rec[ts].parse().map_err(|_| bad("ts_hours"))?,
            kind,
            badge_count,
            raw_features,
        });
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_and_jsonl_events_agree() {
        let csv = "user_id,ts_hours,kind,badge_count,network\n\
                   a,0.5,notification_send,1,3.0\n\
                   a,2,visit,,\n";
        let from_csv = read_events_csv(csv.as_bytes()).unwrap();
        let jsonl = r#"{"user_id":"a","ts_hours":0.5,"kind":"notification_send","badge_count":1,"features":{"network":3.0}}
{"user_id":"a","ts_hours":2.0,"kind":"visit"}
"#;
        let from_json: Vec<Event> = read_jsonl(jsonl.as_bytes()).unwrap();
        assert_eq!(from_csv, from_json);
    }

    #[test]
    fn jsonl_errors_name_the_line() {
        let err = read_jsonl::<Event, _>("\n{\"user_id\":1}\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn csv_rejects_unknown_kind() {
        let csv = "user_id,ts_hours,kind\na,1,click\n";
        assert!(read_events_csv(csv.as_bytes()).is_err());
    }
}
