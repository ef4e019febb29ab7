use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand_distr::{Distribution, Normal};

use super::vocab::{Vocabulary, PAD, UNK};
use crate::error::{Error, Result};
use crate::params::{InitRng, ParamId, ParamStore};
use crate::tensor::{Tape, Tensor, Var};

/// Standard deviation for rows that a pretrained file does not cover.
pub const MISSING_ROW_STD: f64 = 0.1;

/// `|V|×E` lookup table. Row `PAD` stays zero; a frozen table never
/// receives gradients at all.
#[derive(Clone, Debug)]
pub struct EmbeddingTable {
    pub param: ParamId,
    pub vocab_size: usize,
    pub dim: usize,
}

impl EmbeddingTable {
    /// Randomly initialized table (`N(0, 1)` rows).
    pub fn random(
        store: &mut ParamStore,
        name: &str,
        vocab_size: usize,
        dim: usize,
        trainable: bool,
        rng: &mut InitRng,
    ) -> Self {
        let normal = Normal::new(0.0, 1.0).expect("valid normal");
        let mut t = Tensor::zeros(vec![vocab_size, dim]);
        for (i, x) in t.data_mut().iter_mut().enumerate() {
            let v = normal.sample(rng);
            *x = if i / dim == PAD { 0.0 } else { v };
        }
        Self::from_tensor(store, name, t, trainable)
    }

    pub fn from_tensor(store: &mut ParamStore, name: &str, mut table: Tensor, trainable: bool) -> Self {
        let (vocab_size, dim) = (table.shape()[0], table.shape()[1]);
        table.data_mut()[PAD * dim..(PAD + 1) * dim].fill(0.0);
        let param = store.add(format!("{name}.table"), table, trainable);
        Self {
            param,
            vocab_size,
            dim,
        }
    }

    pub fn trainable(&self, store: &ParamStore) -> bool {
        store.get(self.param).trainable
    }

    /// Row lookup; PAD ids give zero rows and never pass gradients.
    pub fn embed<'t>(&self, tape: &'t Tape, store: &ParamStore, ids: &[usize]) -> Result<Var<'t>> {
        tape.param(store, self.param).gather_rows(ids, Some(PAD))
    }
}

/// Outcome of reading a word-vector file.
#[derive(Clone, Debug)]
pub struct LoadedVectors {
    pub table: Tensor,
    /// Vocabulary tokens (excluding PAD/UNK) absent from the file.
    pub misses: usize,
}

/// Reads `token v1 … vE` lines into a table aligned with `vocab`.
/// A leading `count dim` header line (word2vec text style) is skipped.
pub fn read_word_vectors(path: &Path, vocab: &Vocabulary, rng: &mut InitRng) -> Result<LoadedVectors> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path.display().to_string();
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; vocab.len()];
    let mut dim: Option<usize> = None;
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if lineno == 0 && fields.len() == 2 && fields.iter().all(|f| f.parse::<u64>().is_ok()) {
            continue;
        }
        if fields.len() < 2 {
            return Err(Error::Parse {
                source_name: name,
                location: format!("line {}", lineno + 1),
                detail: "expected a token followed by numbers".into(),
            });
        }
        let values = fields[1..]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse {
                source_name: name.clone(),
                location: format!("line {}", lineno + 1),
                detail: e.to_string(),
            })?;
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(Error::Format {
                    source_name: name,
                    offset: 0,
                    detail: format!(
                        "line {} has {} values, expected {d}",
                        lineno + 1,
                        values.len()
                    ),
                })
            }
            _ => {}
        }
        if let Some(ix) = vocab.get(fields[0]) {
            rows[ix] = Some(values);
        }
    }
    let dim = dim.ok_or_else(|| Error::Format {
        source_name: name,
        offset: 0,
        detail: "no vectors".into(),
    })?;
    let normal = Normal::new(0.0, MISSING_ROW_STD).expect("valid normal");
    let mut misses = 0;
    let mut data = Vec::with_capacity(vocab.len() * dim);
    for (ix, row) in rows.into_iter().enumerate() {
        match row {
            _ if ix == PAD => data.extend(std::iter::repeat_n(0.0, dim)),
            Some(r) => data.extend(r),
            None => {
                if ix != UNK {
                    misses += 1;
                }
                data.extend((0..dim).map(|_| normal.sample(rng)));
            }
        }
    }
    Ok(LoadedVectors {
        table: Tensor::new(vec![vocab.len(), dim], data)?,
        misses,
    })
}

/// Builds an embedding table from a word-vector file; `trainable = false`
/// gives the frozen variant.
pub fn load_pretrained_vectors(
    store: &mut ParamStore,
    name: &str,
    path: &Path,
    vocab: &Vocabulary,
    trainable: bool,
    rng: &mut InitRng,
) -> Result<(EmbeddingTable, usize)> {
    let loaded = read_word_vectors(path, vocab, rng)?;
    if loaded.misses > 0 {
        log::warn!(
            "{} of {} vocabulary tokens missing from {}",
            loaded.misses,
            vocab.len() - 2,
            path.display()
        );
    }
    Ok((
        EmbeddingTable::from_tensor(store, name, loaded.table, trainable),
        loaded.misses,
    ))
}

/// Writes every non-PAD row as `token v1 … vE`.
pub fn save_word_vectors(path: &Path, vocab: &Vocabulary, table: &Tensor) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for ix in 1..vocab.len() {
        write!(w, "{}", vocab.token(ix)?).map_err(|e| Error::io(path, e))?;
        for v in table.row(ix) {
            write!(w, " {v}").map_err(|e| Error::io(path, e))?;
        }
        writeln!(w).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;

    fn vocab() -> Vocabulary {
        Vocabulary::from_tokens(["is", "it", "red"])
    }

    #[test]
    fn pad_row_is_zero_and_lookup_exact() {
        let mut store = ParamStore::new();
        let mut rng = InitRng::seed_from_u64(0);
        let t = EmbeddingTable::random(&mut store, "emb", 5, 3, true, &mut rng);
        let tape = Tape::new();
        let rows = t.embed(&tape, &store, &[PAD, 3]).unwrap().value();
        assert_eq!(rows.row(0), &[0.0, 0.0, 0.0]);
        assert_eq!(rows.row(1), store.value(t.param).row(3));
        assert!(matches!(
            t.embed(&tape, &store, &[5]),
            Err(Error::Index { .. })
        ));
    }

    #[test]
    fn vector_file_round_trip_and_misses() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vec.txt");
        let v = vocab();
        let mut rng = InitRng::seed_from_u64(4);
        let mut store = ParamStore::new();
        let t = EmbeddingTable::random(&mut store, "e", v.len(), 4, true, &mut rng);
        let original = store.value(t.param).clone();
        save_word_vectors(&path, &v, &original).unwrap();
        let loaded = read_word_vectors(&path, &v, &mut rng).unwrap();
        assert_eq!(loaded.misses, 0);
        assert_eq!(loaded.table, original);

        std::fs::write(&path, "2 2\nis 1 2\nit 3 4\n").unwrap();
        let loaded = read_word_vectors(&path, &v, &mut rng).unwrap();
        assert_eq!(loaded.misses, 1);
        assert_eq!(loaded.table.row(2), &[1.0, 2.0]);
        assert!(loaded.table.row(4).iter().all(|x| *x != 0.0));
    }

    #[test]
    fn vector_file_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        let mut rng = InitRng::seed_from_u64(4);
        std::fs::write(&path, "is 1 2\nit 3 x\n").unwrap();
        match read_word_vectors(&path, &vocab(), &mut rng) {
            Err(Error::Parse { location, .. }) => assert_eq!(location, "line 2"),
            other => panic!("{other:?}"),
        }
        std::fs::write(&path, "is 1 2\nit 3 4 5\n").unwrap();
        assert!(matches!(
            read_word_vectors(&path, &vocab(), &mut rng),
            Err(Error::Format { .. })
        ));
    }
}
