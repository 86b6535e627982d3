use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Interaction, InteractionDataset, Partition, Split};
use crate::artifact::{self, Reader, Writer};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LoadOptions {
    pub delimiter: String,
    /// Rows whose rating column is below this value are dropped. Rows without
    /// a rating column are always kept.
    pub rating_threshold: f64,
    pub has_header: bool,
}

impl LoadOptions {
    pub fn for_path(path: &Path) -> Self {
        LoadOptions {
            delimiter: infer_delimiter(path).to_owned(),
            rating_threshold: 3.0,
            has_header: false,
        }
    }
}

/// `.csv` is comma separated, `.dat` uses MovieLens' `::`, anything else tabs.
pub fn infer_delimiter(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => ",",
        Some("dat") => "::",
        _ => "\t",
    }
}

/// Parse `user<d>item[<d>rating[<d>timestamp]]` rows. Blank lines and lines
/// starting with `#` are skipped. Duplicates are kept.
pub fn load_interactions(path: &Path, opts: &LoadOptions) -> Result<Vec<Interaction>> {
    if opts.delimiter.is_empty() {
        return Err(Error::Config("empty delimiter".into()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    let mut data_lines = 0usize;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        if opts.has_header && data_lines == 0 && rows.is_empty() {
            data_lines = 1;
            continue;
        }
        data_lines += 1;
        let cols: Vec<&str> = line.split(opts.delimiter.as_str()).map(str::trim).collect();
        if cols.len() < 2 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected at least 2 columns, found {}", cols.len()),
            });
        }
        if cols[0].is_empty() || cols[1].is_empty() {
            return Err(Error::Parse {
                line: lineno,
                msg: "empty user or item id".into(),
            });
        }
        let rating = match cols.get(2) {
            Some(c) if !c.is_empty() => Some(c.parse::<f64>().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("rating {c:?} is not a number"),
            })?),
            _ => None,
        };
        let timestamp = match cols.get(3) {
            Some(c) if !c.is_empty() => Some(c.parse::<i64>().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("timestamp {c:?} is not an integer"),
            })?),
            _ => None,
        };
        if matches!(rating, Some(r) if r < opts.rating_threshold) {
            continue;
        }
        rows.push(Interaction {
            user: cols[0].to_owned(),
            item: cols[1].to_owned(),
            rating,
            timestamp,
        });
    }
    if data_lines == 0 {
        return Err(Error::EmptyInput(path.to_owned()));
    }
    Ok(rows)
}

/// Contents of `meta.json` in a dataset directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub n_users: usize,
    pub n_items: usize,
    pub n_edges: usize,
    pub n_train: usize,
    pub n_valid: usize,
    pub n_test: usize,
    pub partition: Option<Partition>,
    pub k_core: usize,
    pub seed: u64,
    pub seen_fraction: Option<f64>,
    pub train_fraction: f64,
    pub valid_fraction: f64,
    /// Name of the raw input the dataset was prepared from.
    pub source: String,
    /// Identifies the raw input plus preprocessing, shared by both halves.
    pub source_hash: String,
    /// Identifies this particular dataset directory.
    pub config_hash: String,
}

impl DatasetMeta {
    pub fn counts_from(&mut self, ds: &InteractionDataset) {
        let count = |s| ds.splits().iter().filter(|&&t| t == s).count();
        self.n_users = ds.n_users();
        self.n_items = ds.n_items();
        self.n_edges = ds.n_edges();
        self.n_train = count(Split::Train);
        self.n_valid = count(Split::Valid);
        self.n_test = count(Split::Test);
        self.partition = ds.partition();
    }
}

const EDGES: &str = "edges.bin";
const SPLITS: &str = "splits.bin";
const USERS: &str = "users.tsv";
const ITEMS: &str = "items.tsv";
const META: &str = "meta.json";

impl InteractionDataset {
    /// Write `edges.bin`, `splits.bin`, `users.tsv`, `items.tsv` and
    /// `meta.json` into `dir`.
    pub fn save(&self, dir: &Path, meta: &DatasetMeta) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut w = Writer::default();
        for &(u, v) in self.edges() {
            w.u32(u);
            w.u32(v);
        }
        artifact::write_bytes(&dir.join(EDGES), &w.buf)?;
        let tags: Vec<u8> = self.splits().iter().map(|&s| s as u8).collect();
        artifact::write_bytes(&dir.join(SPLITS), &tags)?;
        write_ids(&dir.join(USERS), self.user_ids())?;
        write_ids(&dir.join(ITEMS), self.item_ids())?;
        artifact::write_json(&dir.join(META), meta)
    }

    pub fn load(dir: &Path) -> Result<(InteractionDataset, DatasetMeta)> {
        let meta: DatasetMeta = artifact::read_json(&dir.join(META))?;
        let path = dir.join(EDGES);
        let bytes = artifact::read_bytes(&path)?;
        if bytes.len() % 8 != 0 {
            return Err(Error::artifact(&path, "length is not a multiple of 8"));
        }
        let mut r = Reader::new(&bytes, &path);
        let mut edges = Vec::with_capacity(bytes.len() / 8);
        for _ in 0..bytes.len() / 8 {
            edges.push((r.u32()?, r.u32()?));
        }
        let split_path = dir.join(SPLITS);
        let splits = artifact::read_bytes(&split_path)?
            .into_iter()
            .map(|t| Split::from_tag(t).ok_or_else(|| Error::artifact(&split_path, format!("bad split tag {t}"))))
            .collect::<Result<Vec<_>>>()?;
        let users = read_ids(&dir.join(USERS))?;
        let items = read_ids(&dir.join(ITEMS))?;
        let ds = InteractionDataset::from_saved(users, items, edges, splits, meta.partition)?;
        Ok((ds, meta))
    }

    pub fn meta_path(dir: &Path) -> std::path::PathBuf {
        dir.join(META)
    }
}

fn write_ids(path: &Path, ids: &[String]) -> Result<()> {
    let mut text = String::new();
    for (i, id) in ids.iter().enumerate() {
        text.push_str(&format!("{i}\t{id}\n"));
    }
    artifact::write_bytes(path, text.as_bytes())
}

fn read_ids(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            let (idx, id) = line
                .split_once('\t')
                .ok_or_else(|| Error::artifact(path, format!("line {}: missing tab", i + 1)))?;
            if idx.parse::<usize>().ok() != Some(i) {
                return Err(Error::artifact(path, format!("line {}: index out of order", i + 1)));
            }
            Ok(id.to_owned())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file_with(contents: &str, ext: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(ext).tempfile().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn low_ratings_are_dropped() {
        let f = file_with("a\tx\t5\nb\ty\t2\n", ".tsv");
        let rows = load_interactions(f.path(), &LoadOptions::for_path(f.path())).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!((rows[0].user.as_str(), rows[0].item.as_str()), ("a", "x"));
    }

    #[test]
    fn parser_keeps_duplicates() {
        let f = file_with("a,x\na,x\n", ".csv");
        let rows = load_interactions(f.path(), &LoadOptions::for_path(f.path())).unwrap();
        assert_eq!(rows.len(), 2);
    }

    #[test]
    fn empty_file_is_an_error() {
        let f = file_with("", ".tsv");
        assert!(matches!(
            load_interactions(f.path(), &LoadOptions::for_path(f.path())),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn malformed_row_reports_line() {
        let f = file_with("a\tx\nlonely\n", ".tsv");
        match load_interactions(f.path(), &LoadOptions::for_path(f.path())) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let f = file_with("a\tx\tfive\n", ".tsv");
        assert!(matches!(
            load_interactions(f.path(), &LoadOptions::for_path(f.path())),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn movielens_format_with_timestamps() {
        let f = file_with("1::10::4::978300760\n2::10::1::978300761\n", ".dat");
        let rows = load_interactions(f.path(), &LoadOptions::for_path(f.path())).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].timestamp, Some(978300760));
    }

    #[test]
    fn header_is_skipped_when_requested() {
        let f = file_with("user,item\na,x\n", ".csv");
        let mut opts = LoadOptions::for_path(f.path());
        opts.has_header = true;
        assert_eq!(load_interactions(f.path(), &opts).unwrap().len(), 1);
    }

    #[test]
    fn save_load_roundtrip() {
        let rows: Vec<Interaction> = ["a x", "a y", "b y", "c x"]
            .iter()
            .map(|s| {
                let (u, v) = s.split_once(' ').unwrap();
                Interaction { user: u.into(), item: v.into(), rating: None, timestamp: None }
            })
            .collect();
        let ds = InteractionDataset::from_interactions(&rows)
            .unwrap()
            .with_splits(vec![Split::Train, Split::Test, Split::Valid, Split::Train]);
        let mut meta = DatasetMeta {
            n_users: 0, n_items: 0, n_edges: 0, n_train: 0, n_valid: 0, n_test: 0,
            partition: None, k_core: 1, seed: 0, seen_fraction: None,
            train_fraction: 0.7, valid_fraction: 0.1, source: "t".into(),
            source_hash: "s".into(), config_hash: "c".into(),
        };
        meta.counts_from(&ds);
        assert_eq!((meta.n_train, meta.n_valid, meta.n_test), (2, 1, 1));
        let dir = tempfile::tempdir().unwrap();
        ds.save(dir.path(), &meta).unwrap();
        let (back, back_meta) = InteractionDataset::load(dir.path()).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back_meta, meta);
        assert_eq!(std::fs::read(dir.path().join("edges.bin")).unwrap().len(), 8 * 4);
    }
}
