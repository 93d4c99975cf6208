//! Pilot-survey data: ingestion of free-form responses and statement
//! ratings, and the confusion-matrix evaluation of predicted ratings.

use super::{LlmError, ParticipantRecord, RatedStatement, RatingDistribution};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// Ratings of the validation survey: participants x statements, where the
/// statements are the (typically five) slate statements being validated.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ValidationTable {
    /// Distinct statement texts in first-seen order.
    pub statements: Vec<String>,
    /// Participant ids in first-seen order.
    pub participants: Vec<String>,
    /// `(participant index, statement index) -> rating`.
    pub ratings: BTreeMap<(usize, usize), u8>,
}

impl ValidationTable {
    /// Dense participants-x-statements matrix; errors if any pair is
    /// missing.
    pub fn dense_matrix(&self) -> Result<Vec<Vec<f64>>, LlmError> {
        let mut rows = Vec::with_capacity(self.participants.len());
        for (pi, pid) in self.participants.iter().enumerate() {
            let mut row = Vec::with_capacity(self.statements.len());
            for si in 0..self.statements.len() {
                match self.ratings.get(&(pi, si)) {
                    Some(&r) => row.push(r as f64),
                    None => {
                        return Err(LlmError::Ingestion(format!(
                            "participant {pid} has no rating for statement {si}"
                        )))
                    }
                }
            }
            rows.push(row);
        }
        Ok(rows)
    }
}

#[derive(Debug, Default)]
pub struct PilotData {
    pub participants: Vec<ParticipantRecord>,
    pub validation: ValidationTable,
}

#[derive(Debug, Deserialize)]
struct FreeformRow {
    participant_id: String,
    question_key: String,
    answer_text: String,
}

#[derive(Debug, Deserialize)]
struct RatingRow {
    participant_id: String,
    statement_text: String,
    rating: i64,
    #[serde(default)]
    explanation: String,
}

/// Ingest a pilot-data directory. Expected files (CSV or JSON lines):
/// - `freeform_responses.{csv,jsonl}` with fields
///   `participant_id,question_key,answer_text`
/// - `statement_ratings.{csv,jsonl}` with fields
///   `participant_id,statement_text,rating,explanation`
///
/// Ratings outside 0..=4 are a validation error; unknown or missing fields
/// are ingestion errors naming the field.
pub fn ingest_pilot_data(dir: &Path) -> Result<PilotData, LlmError> {
    let freeform: Vec<FreeformRow> = read_rows(
        dir,
        "freeform_responses",
        &["participant_id", "question_key", "answer_text"],
    )?;
    let ratings: Vec<RatingRow> = read_rows(
        dir,
        "statement_ratings",
        &["participant_id", "statement_text", "rating"],
    )?;

    let mut participants: Vec<ParticipantRecord> = Vec::new();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    for row in freeform {
        let idx = *index.entry(row.participant_id.clone()).or_insert_with(|| {
            participants.push(ParticipantRecord {
                id: row.participant_id.clone(),
                freeform_responses: Vec::new(),
                rated_statements: Vec::new(),
                summary: None,
            });
            participants.len() - 1
        });
        participants[idx]
            .freeform_responses
            .push((row.question_key, row.answer_text));
    }

    let mut validation = ValidationTable::default();
    let mut stmt_index: BTreeMap<String, usize> = BTreeMap::new();
    let mut part_index: BTreeMap<String, usize> = BTreeMap::new();
    for row in ratings {
        if !(0..=4).contains(&row.rating) {
            return Err(LlmError::Validation(format!(
                "rating {} for participant {} is outside the 0-4 scale",
                row.rating, row.participant_id
            )));
        }
        let rating = row.rating as u8;
        // ratings attach to the participant record when one exists
        if let Some(&idx) = index.get(&row.participant_id) {
            participants[idx].rated_statements.push(RatedStatement {
                statement: row.statement_text.clone(),
                rating,
                explanation: row.explanation.clone(),
            });
        }
        let si = *stmt_index
            .entry(row.statement_text.clone())
            .or_insert_with(|| {
                validation.statements.push(row.statement_text.clone());
                validation.statements.len() - 1
            });
        let pi = *part_index
            .entry(row.participant_id.clone())
            .or_insert_with(|| {
                validation.participants.push(row.participant_id.clone());
                validation.participants.len() - 1
            });
        validation.ratings.insert((pi, si), rating);
    }

    Ok(PilotData {
        participants,
        validation,
    })
}

fn read_rows<T: serde::de::DeserializeOwned>(
    dir: &Path,
    stem: &str,
    required: &[&str],
) -> Result<Vec<T>, LlmError> {
    let csv_path = dir.join(format!("{stem}.csv"));
    let jsonl_path = dir.join(format!("{stem}.jsonl"));
    if csv_path.exists() {
        read_csv(&csv_path, required)
    } else if jsonl_path.exists() {
        read_jsonl(&jsonl_path)
    } else {
        Err(LlmError::Ingestion(format!(
            "neither {stem}.csv nor {stem}.jsonl found in {}",
            dir.display()
        )))
    }
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, LlmError> {
    let content = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (lineno, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        rows.push(
            serde_json::from_str(line).map_err(|e| {
                LlmError::Ingestion(format!("{}:{}: {e}", path.display(), lineno + 1))
            })?,
        );
    }
    Ok(rows)
}

/// Minimal RFC-4180 CSV reader: quoted fields, embedded commas, quotes, and
/// newlines. Header row names the fields.
fn read_csv<T: serde::de::DeserializeOwned>(
    path: &Path,
    required: &[&str],
) -> Result<Vec<T>, LlmError> {
    let content = std::fs::read_to_string(path)?;
    let mut records = parse_csv(&content);
    if records.is_empty() {
        return Ok(Vec::new());
    }
    let header = records.remove(0);
    for field in required {
        if !header.iter().any(|h| h == field) {
            return Err(LlmError::Ingestion(format!(
                "{}: missing required column '{field}'",
                path.display()
            )));
        }
    }
    let mut rows = Vec::with_capacity(records.len());
    for (lineno, record) in records.into_iter().enumerate() {
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != header.len() {
            return Err(LlmError::Ingestion(format!(
                "{}: record {} has {} fields, header has {}",
                path.display(),
                lineno + 2,
                record.len(),
                header.len()
            )));
        }
        let map: serde_json::Map<String, serde_json::Value> = header
            .iter()
            .zip(record)
            .map(|(h, v)| {
                // numeric columns parse as numbers so serde can type them
                let value = match v.parse::<i64>() {
                    Ok(n) if h == "rating" => serde_json::Value::from(n),
                    _ => serde_json::Value::from(v),
                };
                (h.clone(), value)
            })
            .collect();
        rows.push(
            serde_json::from_value(serde_json::Value::Object(map)).map_err(|e| {
                LlmError::Ingestion(format!("{}: record {}: {e}", path.display(), lineno + 2))
            })?,
        );
    }
    Ok(rows)
}

fn parse_csv(content: &str) -> Vec<Vec<String>> {
    let mut records = Vec::new();
    let mut record = Vec::new();
    let mut field = String::new();
    let mut quoted = false;
    let mut chars = content.chars().peekable();
    while let Some(c) = chars.next() {
        if quoted {
            match c {
                '"' if chars.peek() == Some(&'"') => {
                    chars.next();
                    field.push('"');
                }
                '"' => quoted = false,
                _ => field.push(c),
            }
        } else {
            match c {
                '"' => quoted = true,
                ',' => record.push(std::mem::take(&mut field)),
                '\r' => {}
                '\n' => {
                    record.push(std::mem::take(&mut field));
                    records.push(std::mem::take(&mut record));
                }
                _ => field.push(c),
            }
        }
    }
    if !field.is_empty() || !record.is_empty() {
        record.push(field);
        records.push(record);
    }
    records
}

/// Predictions to compare against actual integer ratings.
#[derive(Debug, Clone)]
pub enum Predictions {
    /// Full predicted distributions; rows of the matrix average them.
    Distributions(Vec<RatingDistribution>),
    /// Expected values; rows histogram them into unit-width bins centered
    /// on the levels 0-4.
    Expectations(Vec<f64>),
}

/// 5x5 row-normalized confusion matrix: row = actual rating, column =
/// predicted level. Rows with no observations are zero and flagged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub rows: [[f64; 5]; 5],
    pub empty_rows: Vec<usize>,
}

pub fn confusion_matrix(
    predicted: &Predictions,
    actual: &[u8],
) -> Result<ConfusionMatrix, LlmError> {
    let len = match predicted {
        Predictions::Distributions(d) => d.len(),
        Predictions::Expectations(e) => e.len(),
    };
    if len != actual.len() {
        return Err(LlmError::LengthMismatch {
            predicted: len,
            actual: actual.len(),
        });
    }
    if let Some(&bad) = actual.iter().find(|&&a| a > 4) {
        return Err(LlmError::Validation(format!(
            "actual rating {bad} is outside the 0-4 scale"
        )));
    }
    let mut sums = [[0.0f64; 5]; 5];
    let mut counts = [0usize; 5];
    for (i, &a) in actual.iter().enumerate() {
        let row = a as usize;
        counts[row] += 1;
        match predicted {
            Predictions::Distributions(dists) => {
                for (level, p) in dists[i].probabilities.iter().enumerate() {
                    sums[row][level] += p;
                }
            }
            Predictions::Expectations(exps) => {
                // unit-width bins centered on 0..4
                let bin = exps[i].round().clamp(0.0, 4.0) as usize;
                sums[row][bin] += 1.0;
            }
        }
    }
    let mut rows = [[0.0f64; 5]; 5];
    let mut empty_rows = Vec::new();
    for r in 0..5 {
        if counts[r] == 0 {
            empty_rows.push(r);
        } else {
            for c in 0..5 {
                rows[r][c] = sums[r][c] / counts[r] as f64;
            }
        }
    }
    Ok(ConfusionMatrix { rows, empty_rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_point_masses_give_identity() {
        let actual = vec![0u8, 1, 2, 3, 4];
        let dists: Vec<RatingDistribution> = actual
            .iter()
            .map(|&a| RatingDistribution::point_mass(a))
            .collect();
        let cm = confusion_matrix(&Predictions::Distributions(dists), &actual).unwrap();
        for r in 0..5 {
            for c in 0..5 {
                assert_eq!(cm.rows[r][c], if r == c { 1.0 } else { 0.0 });
            }
        }
        assert!(cm.empty_rows.is_empty());
    }

    #[test]
    fn uniform_distributions_give_uniform_rows() {
        let actual = vec![2u8, 2, 3];
        let uniform = RatingDistribution {
            probabilities: [0.2; 5],
        };
        let cm = confusion_matrix(&Predictions::Distributions(vec![uniform; 3]), &actual).unwrap();
        assert_eq!(cm.rows[2], [0.2; 5]);
        assert_eq!(cm.rows[3], [0.2; 5]);
        assert_eq!(cm.empty_rows, vec![0, 1, 4]);
    }

    #[test]
    fn distribution_rows_average() {
        let actual = vec![4u8, 4];
        let half = RatingDistribution {
            probabilities: [0.0, 0.0, 0.0, 0.5, 0.5],
        };
        let cm = confusion_matrix(
            &Predictions::Distributions(vec![half.clone(), half]),
            &actual,
        )
        .unwrap();
        assert_eq!(cm.rows[4], [0.0, 0.0, 0.0, 0.5, 0.5]);
    }

    #[test]
    fn expectation_binning() {
        let actual = vec![3u8, 3, 0];
        let cm =
            confusion_matrix(&Predictions::Expectations(vec![3.4, 2.4, 0.2]), &actual).unwrap();
        assert_eq!(cm.rows[3], [0.0, 0.0, 0.5, 0.5, 0.0]);
        assert_eq!(cm.rows[0], [1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(matches!(
            confusion_matrix(&Predictions::Expectations(vec![1.0]), &[1, 2]),
            Err(LlmError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn ingestion_round_trip_csv() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("freeform_responses.csv"),
            "participant_id,question_key,answer_text\n\
             p1,q1,\"I value privacy, strongly\"\n\
             p1,q2,Consent first\n\
             p2,q1,\"He said \"\"no data\"\"\"\n",
        )
        .unwrap();
        std::fs::write(
            dir.path().join("statement_ratings.csv"),
            "participant_id,statement_text,rating,explanation\n\
             p1,S-A,4,matches my view\n\
             p1,S-B,1,too lax\n\
             p2,S-A,2,partly\n\
             p2,S-B,3,mostly fine\n",
        )
        .unwrap();
        let data = ingest_pilot_data(dir.path()).unwrap();
        assert_eq!(data.participants.len(), 2);
        assert_eq!(
            data.participants[0].freeform_responses[0].1,
            "I value privacy, strongly"
        );
        assert_eq!(
            data.participants[1].freeform_responses[0].1,
            "He said \"no data\""
        );
        assert_eq!(data.participants[0].rated_statements.len(), 2);
        assert_eq!(data.validation.statements, vec!["S-A", "S-B"]);
        let matrix = data.validation.dense_matrix().unwrap();
        assert_eq!(matrix, vec![vec![4.0, 1.0], vec![2.0, 3.0]]);
    }

    #[test]
    fn empty_freeform_file_is_not_an_error() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("freeform_responses.csv"),
            "participant_id,question_key,answer_text\n",
        )
        .unwrap();
        std::fs::write(
            dir.path().join("statement_ratings.csv"),
            "participant_id,statement_text,rating,explanation\n",
        )
        .unwrap();
        let data = ingest_pilot_data(dir.path()).unwrap();
        assert!(data.participants.is_empty());
        assert!(data.validation.statements.is_empty());
    }

    #[test]
    fn out_of_scale_rating_is_a_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("freeform_responses.csv"),
            "participant_id,question_key,answer_text\np1,q1,a\n",
        )
        .unwrap();
        std::fs::write(
            dir.path().join("statement_ratings.csv"),
            "participant_id,statement_text,rating,explanation\np1,S,5,over\n",
        )
        .unwrap();
        assert!(matches!(
            ingest_pilot_data(dir.path()),
            Err(LlmError::Validation(_))
        ));
    }

    #[test]
    fn missing_column_is_named() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("freeform_responses.csv"),
            "participant_id,question,answer_text\np1,q1,a\n",
        )
        .unwrap();
        std::fs::write(
            dir.path().join("statement_ratings.csv"),
            "participant_id,statement_text,rating,explanation\n",
        )
        .unwrap();
        let err = ingest_pilot_data(dir.path()).unwrap_err();
        assert!(err.to_string().contains("question_key"));
    }

    #[test]
    fn jsonl_ingestion() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("freeform_responses.jsonl"),
            "{\"participant_id\":\"p1\",\"question_key\":\"q\",\"answer_text\":\"a\"}\n",
        )
        .unwrap();
        std::fs::write(
            dir.path().join("statement_ratings.jsonl"),
            "{\"participant_id\":\"p1\",\"statement_text\":\"S\",\"rating\":3,\"explanation\":\"\"}\n",
        )
        .unwrap();
        let data = ingest_pilot_data(dir.path()).unwrap();
        assert_eq!(data.participants.len(), 1);
        assert_eq!(data.validation.dense_matrix().unwrap(), vec![vec![3.0]]);
    }
}
