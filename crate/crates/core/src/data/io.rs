use std::collections::{BTreeSet, HashMap};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::warn;

use crate::numkernel::Matrix;

use super::dataset::{Dataset, IdMap};
use super::split::Split;
use super::{DataError, Result};

/// Locations of the files that make up one dataset on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetPaths {
    pub ratings: PathBuf,
    pub trust: PathBuf,
    pub user_features: Option<PathBuf>,
    pub item_features: Option<PathBuf>,
}

impl DatasetPaths {
    pub fn load(&self) -> Result<Dataset> {
        load_dataset(
            &self.ratings,
            &self.trust,
            self.user_features.as_deref(),
            self.item_features.as_deref(),
        )
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads non-empty lines, yielding 1-based line numbers.
fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        let trimmed = line.trim_end_matches('\r');
        if trimmed.trim().is_empty() {
            continue;
        }
        out.push((n + 1, trimmed.to_string()));
    }
    Ok(out)
}

fn read_pairs(path: &Path) -> Result<Vec<(usize, String, String)>> {
    read_lines(path)?
        .into_iter()
        .map(|(line, text)| {
            let fields: Vec<&str> = text.split('\t').collect();
            match fields.as_slice() {
                [a, b] if !a.is_empty() && !b.is_empty() => Ok((line, a.to_string(), b.to_string())),
                _ => Err(DataError::Malformed {
                    path: path.to_path_buf(),
                    line,
                    reason: format!("expected two tab-separated ids, got `{text}`"),
                }),
            }
        })
        .collect()
}

struct FeatureFile {
    dim: usize,
    rows: Vec<(usize, String, Vec<f64>)>,
}

fn read_features(path: &Path) -> Result<FeatureFile> {
    let lines = read_lines(path)?;
    let malformed = |line: usize, reason: String| DataError::Malformed {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let Some(((header_line, header), body)) = lines.split_first() else {
        return Err(malformed(1, "missing `<dim>\\t<count>` header".into()));
    };
    let (dim, count) = match header.split('\t').collect::<Vec<_>>().as_slice() {
        [d, c] => match (d.trim().parse::<usize>(), c.trim().parse::<usize>()) {
            (Ok(d), Ok(c)) => (d, c),
            _ => return Err(malformed(*header_line, format!("bad header `{header}`"))),
        },
        _ => return Err(malformed(*header_line, format!("bad header `{header}`"))),
    };
    let mut rows = Vec::with_capacity(body.len());
    for (line, text) in body {
        let Some((id, values)) = text.split_once('\t') else {
            return Err(malformed(*line, "expected `<id>\\t<v1>,<v2>,...`".into()));
        };
        let parsed: std::result::Result<Vec<f64>, _> = if values.trim().is_empty() {
            Ok(Vec::new())
        } else {
            values.split(',').map(|v| v.trim().parse::<f64>()).collect()
        };
        let parsed = parsed.map_err(|e| malformed(*line, format!("bad feature value: {e}")))?;
        if parsed.len() != dim {
            return Err(DataError::FeatureDimension {
                path: path.to_path_buf(),
                line: *line,
                expected: dim,
                actual: parsed.len(),
            });
        }
        if let Some(v) = parsed.iter().find(|v| !v.is_finite()) {
            return Err(malformed(*line, format!("non-finite feature value {v}")));
        }
        rows.push((*line, id.to_string(), parsed));
    }
    if rows.len() != count {
        return Err(malformed(
            *header_line,
            format!("header declares {count} rows but file has {}", rows.len()),
        ));
    }
    Ok(FeatureFile { dim, rows })
}

/// Dense ids are assigned in sorted id order: numeric when every id is an
/// integer, lexicographic otherwise. Loading is therefore independent of
/// line order.
fn densify(ids: BTreeSet<String>) -> IdMap {
    let mut ids: Vec<String> = ids.into_iter().collect();
    if ids.iter().all(|s| s.parse::<u64>().is_ok()) {
        ids.sort_by_key(|s| s.parse::<u64>().unwrap());
    }
    IdMap::new(ids)
}

fn feature_matrix(path: &Path, file: FeatureFile, ids: &IdMap, kind: &str) -> Result<Matrix> {
    let mut m = Matrix::zeros(ids.len(), file.dim);
    let mut seen = vec![false; ids.len()];
    for (line, id, values) in file.rows {
        let dense = ids.dense(&id).expect("feature ids are part of the id universe");
        if seen[dense] {
            return Err(DataError::Malformed {
                path: path.to_path_buf(),
                line,
                reason: format!("duplicate {kind} id `{id}`"),
            });
        }
        seen[dense] = true;
        m.row_mut(dense).copy_from_slice(&values);
    }
    let missing = seen.iter().filter(|s| !**s).count();
    if missing > 0 {
        warn!("{}: {missing} {kind}s have no feature row; using zero vectors", path.display());
    }
    Ok(m)
}

/// Loads ratings, trust edges and optional feature files.
///
/// Duplicate ratings and trust edges are dropped with a warning, as are
/// trust self-loops.
pub fn load_dataset(
    ratings_path: &Path,
    trust_path: &Path,
    user_feat_path: Option<&Path>,
    item_feat_path: Option<&Path>,
) -> Result<Dataset> {
    let ratings = read_pairs(ratings_path)?;
    let trust = read_pairs(trust_path)?;
    let user_feats = user_feat_path.map(read_features).transpose()?;
    let item_feats = item_feat_path.map(read_features).transpose()?;

    let mut user_set = BTreeSet::new();
    let mut item_set = BTreeSet::new();
    for (_, u, i) in &ratings {
        user_set.insert(u.clone());
        item_set.insert(i.clone());
    }
    for (_, a, b) in &trust {
        user_set.insert(a.clone());
        user_set.insert(b.clone());
    }
    if let Some(f) = &user_feats {
        user_set.extend(f.rows.iter().map(|r| r.1.clone()));
    }
    if let Some(f) = &item_feats {
        item_set.extend(f.rows.iter().map(|r| r.1.clone()));
    }
    let user_ids = densify(user_set);
    let item_ids = densify(item_set);

    let mut interactions = vec![Vec::new(); user_ids.len()];
    for (_, u, i) in &ratings {
        interactions[user_ids.dense(u).unwrap()].push(item_ids.dense(i).unwrap());
    }
    let mut duplicates = 0;
    for list in &mut interactions {
        list.sort_unstable();
        let before = list.len();
        list.dedup();
        duplicates += before - list.len();
    }
    if duplicates > 0 {
        warn!("{}: dropped {duplicates} duplicate ratings", ratings_path.display());
    }

    let mut trust_lists = vec![Vec::new(); user_ids.len()];
    let mut self_loops = 0;
    for (_, a, b) in &trust {
        let (a, b) = (user_ids.dense(a).unwrap(), user_ids.dense(b).unwrap());
        if a == b {
            self_loops += 1;
            continue;
        }
        trust_lists[a].push(b);
    }
    let mut duplicate_edges = 0;
    for list in &mut trust_lists {
        list.sort_unstable();
        let before = list.len();
        list.dedup();
        duplicate_edges += before - list.len();
    }
    if duplicate_edges > 0 || self_loops > 0 {
        warn!(
            "{}: dropped {duplicate_edges} duplicate edges and {self_loops} self-loops",
            trust_path.display()
        );
    }

    let user_features = match (user_feat_path, user_feats) {
        (Some(p), Some(f)) => Some(feature_matrix(p, f, &user_ids, "user")?),
        _ => None,
    };
    let item_features = match (item_feat_path, item_feats) {
        (Some(p), Some(f)) => Some(feature_matrix(p, f, &item_ids, "item")?),
        _ => None,
    };

    Dataset::from_parts(
        user_ids.len(),
        item_ids.len(),
        interactions,
        trust_lists,
        user_features,
        item_features,
    )?
    .with_ids(user_ids, item_ids)
}

fn write_features(path: &Path, m: &Matrix, ids: &IdMap) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    let mut body = format!("{}\t{}\n", m.cols(), m.rows());
    for r in 0..m.rows() {
        body.push_str(ids.external(r));
        body.push('\t');
        let values: Vec<String> = m.row(r).iter().map(|v| format!("{v:?}")).collect();
        body.push_str(&values.join(","));
        body.push('\n');
    }
    w.write_all(body.as_bytes()).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

/// Writes `ratings.tsv`, `trust.tsv` and any feature files into `dir`.
/// Floats are written in shortest round-trip form so reloading is exact.
pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<DatasetPaths> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let paths = DatasetPaths {
        ratings: dir.join("ratings.tsv"),
        trust: dir.join("trust.tsv"),
        user_features: dataset.user_features().map(|_| dir.join("user_features.txt")),
        item_features: dataset.item_features().map(|_| dir.join("item_features.txt")),
    };
    let users = dataset.user_ids();
    let items = dataset.item_ids();

    let mut ratings = String::new();
    for (u, i) in dataset.pairs() {
        ratings.push_str(&format!("{}\t{}\n", users.external(u), items.external(i)));
    }
    fs::write(&paths.ratings, ratings).map_err(io_err(&paths.ratings))?;

    let mut trust = String::new();
    for (a, list) in dataset.trust_lists().iter().enumerate() {
        for &b in list {
            trust.push_str(&format!("{}\t{}\n", users.external(a), users.external(b)));
        }
    }
    fs::write(&paths.trust, trust).map_err(io_err(&paths.trust))?;

    if let (Some(p), Some(x)) = (&paths.user_features, dataset.user_features()) {
        write_features(p, x, users)?;
    }
    if let (Some(p), Some(y)) = (&paths.item_features, dataset.item_features()) {
        write_features(p, y, items)?;
    }
    Ok(paths)
}

const TAGS: [&str; 3] = ["train", "validation", "test"];

/// Writes one `user\titem\ttag` line per interaction, using external ids.
pub fn write_split_manifest(split: &Split, path: &Path) -> Result<()> {
    let users = split.train.user_ids();
    let items = split.train.item_ids();
    let mut out = String::new();
    for (tag, part) in TAGS.iter().zip([&split.train, &split.validation, &split.test]) {
        for (u, i) in part.pairs() {
            out.push_str(&format!("{}\t{}\t{tag}\n", users.external(u), items.external(i)));
        }
    }
    fs::write(path, out).map_err(io_err(path))
}

/// Rebuilds a split of `full` from a manifest. Every interaction of `full`
/// must appear exactly once.
pub fn read_split_manifest(full: &Dataset, path: &Path) -> Result<Split> {
    let malformed = |line: usize, reason: String| DataError::Malformed {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut parts = vec![vec![Vec::new(); full.num_users()]; 3];
    let mut assigned: HashMap<(usize, usize), usize> = HashMap::new();
    for (line, text) in read_lines(path)? {
        let fields: Vec<&str> = text.split('\t').collect();
        let [u, i, tag] = fields.as_slice() else {
            return Err(malformed(line, "expected `user\\titem\\ttag`".into()));
        };
        let user = full
            .user_ids()
            .dense(u)
            .ok_or_else(|| malformed(line, format!("unknown user `{u}`")))?;
        let item = full
            .item_ids()
            .dense(i)
            .ok_or_else(|| malformed(line, format!("unknown item `{i}`")))?;
        let slot = TAGS
            .iter()
            .position(|t| t == tag)
            .ok_or_else(|| malformed(line, format!("unknown split tag `{tag}`")))?;
        if !full.has_interaction(user, item) {
            return Err(malformed(line, format!("({u}, {i}) is not an interaction")));
        }
        if assigned.insert((user, item), slot).is_some() {
            return Err(malformed(line, format!("({u}, {i}) assigned twice")));
        }
        parts[slot][user].push(item);
    }
    if assigned.len() != full.num_interactions() {
        return Err(DataError::Invalid(format!(
            "manifest covers {} of {} interactions",
            assigned.len(),
            full.num_interactions()
        )));
    }
    let mut parts = parts.into_iter();
    Ok(Split {
        train: full.with_interactions(parts.next().unwrap()),
        validation: full.with_interactions(parts.next().unwrap()),
        test: full.with_interactions(parts.next().unwrap()),
        fallback_users: Vec::new(),
    })
}
