use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::gateway::Gateway;

pub const DEFAULT_THRESHOLDS: [f64; 3] = [0.80, 0.85, 0.90];
pub const DEFAULT_EXCLUSION_THRESHOLD: f64 = 0.85;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContaminationConfig {
    pub thresholds: Vec<f64>,
    pub exclusion_threshold: f64,
    /// Texts per embedding request.
    pub batch_size: usize,
}

impl Default for ContaminationConfig {
    fn default() -> Self {
        Self {
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
            exclusion_threshold: DEFAULT_EXCLUSION_THRESHOLD,
            batch_size: 64,
        }
    }
}

impl ContaminationConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.thresholds.is_empty() {
            return Err("at least one contamination threshold is required".into());
        }
        if self
            .thresholds
            .iter()
            .chain([&self.exclusion_threshold])
            .any(|t| !(-1.0..=1.0).contains(t))
        {
            return Err("similarity thresholds must lie in [-1, 1]".into());
        }
        if self.batch_size == 0 {
            return Err("batch_size must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionSimilarity {
    pub index: usize,
    pub max_similarity: f64,
    /// Index of the most similar test question.
    pub nearest_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub threshold: f64,
    pub flagged: usize,
    pub total: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContaminationReport {
    pub per_question: Vec<QuestionSimilarity>,
    pub thresholds: Vec<ThresholdRow>,
    pub exclusion_threshold: f64,
    /// Synthetic question indices at or above the exclusion threshold.
    pub excluded: Vec<usize>,
}

impl ContaminationReport {
    /// One `threshold | rate% (count)` row per threshold.
    pub fn render_table(&self) -> String {
        let mut out = String::from("| threshold | contamination |\n|---|---|\n");
        for row in &self.thresholds {
            out.push_str(&format!(
                "| {:.2} | {:.2}% ({}) |\n",
                row.threshold,
                row.rate * 100.0,
                row.flagged
            ));
        }
        out
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// For each synthetic vector, the best cosine over all test vectors and its index.
pub fn max_similarities(synth: &[Vec<f64>], test: &[Vec<f64>]) -> Vec<(f64, usize)> {
    let unit = |v: &Vec<f64>| -> Vec<f64> {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n == 0.0 {
            vec![0.0; v.len()]
        } else {
            v.iter().map(|x| x / n).collect()
        }
    };
    let test: Vec<Vec<f64>> = test.iter().map(unit).collect();
    synth
        .iter()
        .map(|s| {
            let s = unit(s);
            test.iter()
                .enumerate()
                .map(|(j, t)| (s.iter().zip(t).map(|(x, y)| x * y).sum::<f64>(), j))
                .fold((f64::NEG_INFINITY, 0), |best, cur| if cur.0 > best.0 { cur } else { best })
        })
        .collect()
}

pub fn report_from_vectors(
    synth: &[Vec<f64>],
    test: &[Vec<f64>],
    cfg: &ContaminationConfig,
) -> Result<ContaminationReport, EvalError> {
    if synth.is_empty() || test.is_empty() {
        return Err(EvalError::Argument("contamination needs non-empty question lists".into()));
    }
    cfg.validate().map_err(EvalError::Argument)?;
    let per_question: Vec<QuestionSimilarity> = max_similarities(synth, test)
        .into_iter()
        .enumerate()
        .map(|(index, (max_similarity, nearest_test))| QuestionSimilarity {
            index,
            max_similarity,
            nearest_test,
        })
        .collect();
    let total = per_question.len();
    let thresholds = cfg
        .thresholds
        .iter()
        .map(|&threshold| {
            let flagged = per_question.iter().filter(|q| q.max_similarity >= threshold).count();
            ThresholdRow {
                threshold,
                flagged,
                total,
                rate: flagged as f64 / total as f64,
            }
        })
        .collect();
    let excluded = per_question
        .iter()
        .filter(|q| q.max_similarity >= cfg.exclusion_threshold)
        .map(|q| q.index)
        .collect();
    Ok(ContaminationReport {
        per_question,
        thresholds,
        exclusion_threshold: cfg.exclusion_threshold,
        excluded,
    })
}

fn embed_batched(gateway: &Gateway, texts: &[String], batch: usize) -> Result<Vec<Vec<f64>>, EvalError> {
    let mut out = Vec::with_capacity(texts.len());
    for chunk in texts.chunks(batch) {
        out.extend(gateway.embed_texts(chunk)?);
    }
    Ok(out)
}

/// Embeds both question lists and flags synthetic questions close to any test question.
pub fn contamination_check(
    gateway: &Gateway,
    synth_questions: &[String],
    test_questions: &[String],
    cfg: &ContaminationConfig,
) -> Result<ContaminationReport, EvalError> {
    if synth_questions.is_empty() || test_questions.is_empty() {
        return Err(EvalError::Argument("contamination needs non-empty question lists".into()));
    }
    cfg.validate().map_err(EvalError::Argument)?;
    let synth = embed_batched(gateway, synth_questions, cfg.batch_size)?;
    let test = embed_batched(gateway, test_questions, cfg.batch_size)?;
    let dims: std::collections::BTreeSet<usize> = synth.iter().chain(&test).map(Vec::len).collect();
    if dims.len() > 1 {
        return Err(EvalError::Argument(format!("embedding dimensions differ across batches: {dims:?}")));
    }
    report_from_vectors(&synth, &test, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{EmbeddingScript, StubScript};
    use std::collections::BTreeMap;

    #[test]
    fn identical_question_flagged_everywhere() {
        let g = Gateway::stub(StubScript::default());
        let synth = vec!["Where is the home stadium?".to_string(), "zebra quantum lattice".to_string()];
        let test = vec!["Where is the home stadium?".to_string()];
        let r = contamination_check(&g, &synth, &test, &ContaminationConfig::default()).unwrap();
        assert!((r.per_question[0].max_similarity - 1.0).abs() < 1e-9);
        assert!(r.thresholds.iter().all(|row| row.flagged >= 1));
        assert!(r.excluded.contains(&0));
    }

    #[test]
    fn orthogonal_vectors_flag_nothing() {
        let mut script = StubScript::default();
        script.embedding = EmbeddingScript::Table {
            vectors: BTreeMap::from([("s".to_string(), vec![1.0, 0.0]), ("t".to_string(), vec![0.0, 1.0])]),
        };
        let g = Gateway::stub(script);
        let r = contamination_check(&g, &["s".into()], &["t".into()], &ContaminationConfig::default()).unwrap();
        assert_eq!(r.per_question[0].max_similarity, 0.0);
        assert!(r.excluded.is_empty());
        assert!(r.render_table().contains("| 0.85 | 0.00% (0) |"));
    }

    #[test]
    fn matches_pairwise_oracle() {
        let synth: Vec<Vec<f64>> = (0..5).map(|i| vec![1.0, i as f64, (i * i) as f64 % 3.0]).collect();
        let test: Vec<Vec<f64>> = (0..3).map(|j| vec![j as f64 - 1.0, 2.0, 1.0]).collect();
        let fast = max_similarities(&synth, &test);
        for (i, s) in synth.iter().enumerate() {
            let mut best = f64::NEG_INFINITY;
            for t in &test {
                best = best.max(cosine(s, t));
            }
            assert!((fast[i].0 - best).abs() < 1e-12);
        }
    }

    #[test]
    fn table_shape() {
        let synth = vec![vec![1.0, 0.0]; 4];
        let r = report_from_vectors(&synth, &[vec![1.0, 0.0]], &ContaminationConfig::default()).unwrap();
        assert_eq!(
            r.render_table(),
            "| threshold | contamination |\n|---|---|\n| 0.80 | 100.00% (4) |\n| 0.85 | 100.00% (4) |\n| 0.90 | 100.00% (4) |\n"
        );
    }
}
