//! Tweet records and the CSV replay format.

use std::io::Read;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::TextPrepError;

/// Which account collection a tweet came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AccountSet {
    S1,
    S2,
}

impl AccountSet {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "S1" => Some(Self::S1),
            "S2" => Some(Self::S2),
            _ => None,
        }
    }
}

/// A raw collected tweet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tweet {
    pub id: String,
    pub account: String,
    pub posted_at: DateTime<Utc>,
    pub text: String,
    pub account_set: AccountSet,
}

/// One parsed CSV row: the tweet plus an optional relevance label and the
/// 1-based source line it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct TweetRow {
    pub tweet: Tweet,
    pub label: Option<bool>,
    pub line: u64,
}

const REQUIRED_HEADER: [&str; 5] = ["id", "account", "posted_at", "account_set", "text"];

/// Streaming reader for the tweet CSV format:
/// `id,account,posted_at,account_set,text[,label]` with RFC 4180 quoting,
/// ISO-8601 `posted_at`, and `label` in `{0,1}` when present.
///
/// Yields one result per data row so callers can choose between strict
/// (first error aborts) and lenient (count and skip) handling.
pub struct TweetCsvReader<R: Read> {
    records: csv::StringRecordsIntoIter<R>,
    has_label: bool,
    header_error: Option<TextPrepError>,
}

impl<R: Read> TweetCsvReader<R> {
    pub fn new(reader: R) -> Self {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(reader);
        let mut has_label = false;
        let mut header_error = None;
        match rdr.headers() {
            Ok(headers) => {
                let fields: Vec<&str> = headers.iter().map(str::trim).collect();
                if fields.len() < REQUIRED_HEADER.len()
                    || fields[..REQUIRED_HEADER.len()] != REQUIRED_HEADER
                {
                    header_error = Some(TextPrepError::Format {
                        line: 1,
                        message: format!(
                            "expected header id,account,posted_at,account_set,text[,label], got {:?}",
                            fields.join(",")
                        ),
                    });
                } else if fields.len() == REQUIRED_HEADER.len() + 1 && fields[5] == "label" {
                    has_label = true;
                } else if fields.len() > REQUIRED_HEADER.len() {
                    header_error = Some(TextPrepError::Format {
                        line: 1,
                        message: format!("unexpected extra columns: {:?}", &fields[5..]),
                    });
                }
            }
            Err(e) => {
                header_error = Some(TextPrepError::Format {
                    line: 1,
                    message: e.to_string(),
                });
            }
        }
        Self {
            records: rdr.into_records(),
            has_label,
            header_error,
        }
    }

    /// Whether the header declared a trailing `label` column.
    pub fn has_label(&self) -> bool {
        self.has_label
    }

    fn parse_record(
        &self,
        record: &csv::StringRecord,
        line: u64,
    ) -> Result<TweetRow, TextPrepError> {
        let expected = REQUIRED_HEADER.len() + usize::from(self.has_label);
        if record.len() != expected {
            return Err(TextPrepError::Format {
                line,
                message: format!("expected {expected} fields, got {}", record.len()),
            });
        }
        let field = |i: usize| record.get(i).unwrap_or("");
        let id = field(0).trim();
        if id.is_empty() {
            return Err(TextPrepError::Format {
                line,
                message: "empty id".to_owned(),
            });
        }
        let posted_at = DateTime::parse_from_rfc3339(field(2).trim())
            .map_err(|e| TextPrepError::Format {
                line,
                message: format!("bad posted_at {:?}: {e}", field(2)),
            })?
            .with_timezone(&Utc);
        let account_set =
            AccountSet::parse(field(3).trim()).ok_or_else(|| TextPrepError::Format {
                line,
                message: format!("bad account_set {:?} (expected S1 or S2)", field(3)),
            })?;
        let text = field(4);
        if text.is_empty() {
            return Err(TextPrepError::Format {
                line,
                message: "empty text".to_owned(),
            });
        }
        let label = if self.has_label {
            match field(5).trim() {
                "0" => Some(false),
                "1" => Some(true),
                other => {
                    return Err(TextPrepError::Format {
                        line,
                        message: format!("bad label {other:?} (expected 0 or 1)"),
                    })
                }
            }
        } else {
            None
        };
        Ok(TweetRow {
            tweet: Tweet {
                id: id.to_owned(),
                account: field(1).trim().to_owned(),
                posted_at,
                text: text.to_owned(),
                account_set,
            },
            label,
            line,
        })
    }
}

impl<R: Read> Iterator for TweetCsvReader<R> {
    type Item = Result<TweetRow, TextPrepError>;

    fn next(&mut self) -> Option<Self::Item> {
        if let Some(err) = self.header_error.take() {
            return Some(Err(err));
        }
        match self.records.next()? {
            Ok(record) => {
                let line = record
                    .position()
                    .map(csv::Position::line)
                    .unwrap_or_default();
                Some(self.parse_record(&record, line))
            }
            Err(e) => {
                let line = e
                    .position()
                    .map(csv::Position::line)
                    .unwrap_or_default();
                Some(Err(TextPrepError::Format {
                    line,
                    message: e.to_string(),
                }))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "id,account,posted_at,account_set,text";

    #[test]
    fn reads_plain_rows() {
        let data = format!("{HEADER}\n1,sec,2017-01-31T10:00:00Z,S1,hello kernel\n");
        let rows: Vec<_> = TweetCsvReader::new(data.as_bytes())
            .collect::<Result<_, _>>()
            .unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].tweet.id, "1");
        assert_eq!(rows[0].tweet.account_set, AccountSet::S1);
        assert_eq!(rows[0].label, None);
    }

    #[test]
    fn reads_quoted_text_with_commas() {
        let data = format!("{HEADER}\n2,sec,2017-01-31T10:00:00Z,S2,\"a, b, and c\"\n");
        let rows: Vec<_> = TweetCsvReader::new(data.as_bytes())
            .collect::<Result<_, _>>()
            .unwrap();
        assert_eq!(rows[0].tweet.text, "a, b, and c");
    }

    #[test]
    fn labeled_variant() {
        let data = format!("{HEADER},label\n1,s,2017-01-31T10:00:00Z,S1,x,1\n");
        let reader = TweetCsvReader::new(data.as_bytes());
        assert!(reader.has_label());
        let rows: Vec<_> = reader.collect::<Result<_, _>>().unwrap();
        assert_eq!(rows[0].label, Some(true));
    }

    #[test]
    fn bad_timestamp_reports_line() {
        let data = format!("{HEADER}\n1,s,not-a-date,S1,x\n");
        let err = TweetCsvReader::new(data.as_bytes()).next().unwrap().unwrap_err();
        match err {
            TextPrepError::Format { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn bad_header_is_an_error() {
        let data = "a,b,c\n1,2,3\n";
        let err = TweetCsvReader::new(data.as_bytes()).next().unwrap().unwrap_err();
        assert!(matches!(err, TextPrepError::Format { line: 1, .. }));
    }

    #[test]
    fn lenient_iteration_continues_after_bad_row() {
        let data = format!(
            "{HEADER}\n1,s,bad,S1,x\n2,s,2017-01-31T10:00:00Z,S1,fine\n"
        );
        let results: Vec<_> = TweetCsvReader::new(data.as_bytes()).collect();
        assert_eq!(results.len(), 2);
        assert!(results[0].is_err());
        assert_eq!(results[1].as_ref().unwrap().tweet.text, "fine");
    }
}
