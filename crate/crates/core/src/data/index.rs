use std::collections::HashSet;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// One row of a dataset index.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipRecord {
    pub clip_id: String,
    pub audio_ref: PathBuf,
    /// Multi-hot target of length K.
    pub target: Vec<f32>,
}

impl ClipRecord {
    pub fn labels(&self) -> impl Iterator<Item = usize> + '_ {
        self.target.iter().enumerate().filter(|(_, &v)| v > 0.5).map(|(k, _)| k)
    }

    pub fn is_unlabeled(&self) -> bool {
        self.labels().next().is_none()
    }
}

/// Reads a `clip_id,path,labels` CSV. Labels are `;`-separated zero-based
/// class indices. Relative audio paths resolve against the index's directory.
pub fn load_index(path: impl AsRef<Path>, n_classes: usize) -> Result<Vec<ClipRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let mut records = parse_index(&text, n_classes).map_err(|e| match e {
        Error::Index { line, message, .. } => Error::Index {
            path: path.to_path_buf(),
            line,
            message,
        },
        other => other,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    for r in &mut records {
        if r.audio_ref.is_relative() {
            r.audio_ref = base.join(&r.audio_ref);
        }
    }
    Ok(records)
}

/// Parses index text; see [`load_index`].
pub fn parse_index(text: &str, n_classes: usize) -> Result<Vec<ClipRecord>> {
    let err = |line: usize, message: String| Error::Index {
        path: "<index>".into(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim().eq_ignore_ascii_case("clip_id,path,labels") => {}
        Some((i, h)) => return Err(err(i + 1, format!("expected header clip_id,path,labels, got {h:?}"))),
        None => return Err(err(1, "empty index".into())),
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in lines {
        let n = i + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(err(n, format!("expected 3 fields, got {}", fields.len())));
        }
        let (id, audio, labels) = (fields[0], fields[1], fields[2]);
        if id.is_empty() || audio.is_empty() {
            return Err(err(n, "clip_id and path must be non-empty".into()));
        }
        if !seen.insert(id.to_string()) {
            return Err(err(n, format!("duplicate clip_id {id:?}")));
        }
        let mut target = vec![0.0f32; n_classes];
        for tok in labels.split(';').map(str::trim).filter(|t| !t.is_empty()) {
            let k: usize = tok
                .parse()
                .map_err(|_| err(n, format!("label {tok:?} is not a class index")))?;
            if k >= n_classes {
                return Err(err(n, format!("label {k} out of range for {n_classes} classes")));
            }
            target[k] = 1.0;
        }
        let rec = ClipRecord {
            clip_id: id.to_string(),
            audio_ref: PathBuf::from(audio),
            target,
        };
        if rec.is_unlabeled() {
            log::warn!("clip {id} (line {n}) has no labels");
        }
        out.push(rec);
    }
    Ok(out)
}

/// One class name per line; the line number (from 0) is the class index.
pub fn load_class_map(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let names: Vec<String> = text.lines().map(|l| l.trim().to_string()).filter(|l| !l.is_empty()).collect();
    if names.is_empty() {
        return Err(Error::Index {
            path: path.as_ref().to_path_buf(),
            line: 1,
            message: "class map is empty".into(),
        });
    }
    Ok(names)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "clip_id,path,labels\n";

    #[test]
    fn parses_multi_hot() {
        let r = parse_index(&format!("{HEADER}clip1,a.wav,3;17\n"), 527).unwrap();
        assert_eq!(r[0].labels().collect::<Vec<_>>(), vec![3, 17]);
        assert_eq!(r[0].target.len(), 527);
    }

    #[test]
    fn empty_labels_allowed() {
        let r = parse_index(&format!("{HEADER}c,a.wav,\n"), 4).unwrap();
        assert!(r[0].is_unlabeled());
    }

    #[test]
    fn rejects_bad_rows_with_line_numbers() {
        let cases = [
            format!("{HEADER}c,a.wav,1\nc,b.wav,2\n"),
            format!("{HEADER}c,a.wav,9\n"),
            format!("{HEADER}c,a.wav\n"),
            format!("{HEADER}c,a.wav,x\n"),
        ];
        for text in cases {
            match parse_index(&text, 4) {
                Err(Error::Index { line, .. }) => assert!(line >= 2),
                other => panic!("expected index error, got {other:?}"),
            }
        }
        assert!(matches!(parse_index("a,b,c\n", 4), Err(Error::Index { line: 1, .. })));
    }

    #[test]
    fn relative_paths_resolve_against_index() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("idx.csv");
        std::fs::write(&p, format!("{HEADER}c,sub/a.wav,0\n")).unwrap();
        let r = load_index(&p, 2).unwrap();
        assert_eq!(r[0].audio_ref, dir.path().join("sub/a.wav"));
    }
}
