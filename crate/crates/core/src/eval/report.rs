use std::fmt;
use std::fmt::Write as _;

use super::RankingResult;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Hr,
    Ndcg,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Hr => "HR",
            Metric::Ndcg => "NDCG",
        })
    }
}

/// One line of the results table.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub model: String,
    pub metric: Metric,
    pub n: usize,
    /// `overall` or a bucket label.
    pub group: String,
    /// `None` for the mean over repetitions.
    pub repetition: Option<usize>,
    pub value: f64,
}

impl RankingResult {
    /// Flattens the result into table rows: per-repetition values followed
    /// by the mean, for the overall group and then every non-empty bucket.
    pub fn rows(&self, model: &str) -> Vec<ResultRow> {
        let mut rows = Vec::new();
        let mut groups: Vec<(String, Option<usize>)> = vec![("overall".to_string(), None)];
        groups.extend(self.bucket_labels.iter().cloned().enumerate().map(|(b, l)| (l, Some(b))));
        for (label, bucket) in groups {
            for metric in [Metric::Hr, Metric::Ndcg] {
                for (c, &n) in self.top_n.iter().enumerate() {
                    let mut values = Vec::new();
                    for (rep, r) in self.repetitions.iter().enumerate() {
                        let g = match bucket {
                            None => &r.overall,
                            Some(b) => &r.buckets[b],
                        };
                        if g.users == 0 {
                            continue;
                        }
                        let value = match metric {
                            Metric::Hr => g.hr[c],
                            Metric::Ndcg => g.ndcg[c],
                        };
                        values.push(value);
                        rows.push(ResultRow {
                            model: model.to_string(),
                            metric,
                            n,
                            group: label.clone(),
                            repetition: Some(rep),
                            value,
                        });
                    }
                    if !values.is_empty() {
                        rows.push(ResultRow {
                            model: model.to_string(),
                            metric,
                            n,
                            group: label.clone(),
                            repetition: None,
                            value: values.iter().sum::<f64>() / values.len() as f64,
                        });
                    }
                }
            }
        }
        rows
    }
}

/// Renders rows as a tab-separated table with a header line.
pub fn write_results(rows: &[ResultRow]) -> String {
    let mut out = String::from("model\tmetric\tn\tgroup\trepetition\tvalue\n");
    for row in rows {
        let rep = row.repetition.map_or_else(|| "mean".to_string(), |r| r.to_string());
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{:.6}",
            row.model, row.metric, row.n, row.group, rep, row.value
        );
    }
    out
}
