//! Corpus directory layout:
//!
//! ```text
//! corpus.cfg     generator config (key = value)
//! manifest.tsv   id, emotion_name, labeled, split, T_text, frame_file
//! tokens.tsv     id, space-separated phone/tone/position triples
//! frames/*.emoc  one binary frame matrix per utterance
//! ```
//!
//! A frame file is `EMOC`, then little-endian u32 version, rows, cols and
//! `rows * cols` f32 values in row-major order with columns
//! `[mc.., log_f0, voiced]`.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::{AcousticFrame, Corpus, CorpusSpec, Split, TextToken, Utterance};
use crate::error::{Error, Result};

pub const FRAME_MAGIC: &[u8; 4] = b"EMOC";
const FRAME_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

const MANIFEST: &str = "manifest.tsv";
const TOKENS: &str = "tokens.tsv";
const SPEC: &str = "corpus.cfg";
const MANIFEST_HEADER: &str = "id\temotion_name\tlabeled\tsplit\tT_text\tframe_file";
const TOKENS_HEADER: &str = "id\ttokens";

pub fn write_frame_file(path: &Path, frames: &[AcousticFrame]) -> Result<()> {
    let cols = frames.first().map_or(2, AcousticFrame::channels);
    let mut buf = Vec::with_capacity(HEADER_LEN + frames.len() * cols * 4);
    buf.extend_from_slice(FRAME_MAGIC);
    buf.extend_from_slice(&FRAME_VERSION.to_le_bytes());
    buf.extend_from_slice(&(frames.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(cols as u32).to_le_bytes());
    for f in frames {
        if f.channels() != cols {
            return Err(Error::Contract("frames of differing width".into()));
        }
        for &c in &f.mc {
            buf.extend_from_slice(&c.to_le_bytes());
        }
        buf.extend_from_slice(&f.log_f0.to_le_bytes());
        buf.extend_from_slice(&(if f.voiced { 1.0f32 } else { 0.0 }).to_le_bytes());
    }
    fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

fn le_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

pub fn read_frame_file(path: &Path) -> Result<Vec<AcousticFrame>> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let bytes = fs::read(path)?;
    if bytes.len() < 4 || &bytes[..4] != FRAME_MAGIC {
        return Err(Error::Magic {
            path: path.to_path_buf(),
            expected: "EMOC",
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let version = le_u32(&bytes, 4);
    if version != FRAME_VERSION {
        return Err(Error::Version {
            path: path.to_path_buf(),
            version,
        });
    }
    let rows = le_u32(&bytes, 8) as usize;
    let cols = le_u32(&bytes, 12) as usize;
    let expected = HEADER_LEN + rows * cols * 4;
    if bytes.len() != expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected,
            found: bytes.len(),
        });
    }
    if cols < 2 {
        return Err(Error::validation(
            "cols",
            format!("{cols} columns in {}", path.display()),
        ));
    }
    let values: Vec<f32> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    values
        .chunks_exact(cols)
        .map(|row| {
            let voiced = match row[cols - 1] {
                1.0 => true,
                0.0 => false,
                v => {
                    return Err(Error::validation(
                        "voiced",
                        format!("{v} in {}", path.display()),
                    ))
                }
            };
            Ok(AcousticFrame {
                mc: row[..cols - 2].to_vec(),
                log_f0: row[cols - 2],
                voiced,
            })
        })
        .collect()
}

fn format_tokens(tokens: &[TextToken]) -> String {
    tokens
        .iter()
        .map(|t| format!("{}/{}/{}", t.phone_id, t.tone_id, t.position_id))
        .collect::<Vec<_>>()
        .join(" ")
}

fn parse_tokens(text: &str) -> Option<Vec<TextToken>> {
    text.split_whitespace()
        .map(|triple| {
            let mut it = triple.split('/');
            let token = TextToken {
                phone_id: it.next()?.parse().ok()?,
                tone_id: it.next()?.parse().ok()?,
                position_id: it.next()?.parse().ok()?,
            };
            it.next().is_none().then_some(token)
        })
        .collect()
}

pub fn save_corpus(corpus: &Corpus, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir.join("frames"))?;
    fs::write(dir.join(SPEC), corpus.spec.to_config_string())?;
    let mut manifest = String::from(MANIFEST_HEADER);
    manifest.push('\n');
    let mut tokens = String::from(TOKENS_HEADER);
    tokens.push('\n');
    for u in &corpus.utterances {
        let frame_file = format!("frames/{}.emoc", u.id);
        manifest.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            u.id,
            corpus.emotion_name(u.emotion),
            u8::from(u.labeled),
            u.split.as_str(),
            u.tokens.len(),
            frame_file
        ));
        tokens.push_str(&format!("{}\t{}\n", u.id, format_tokens(&u.tokens)));
        write_frame_file(&dir.join(&frame_file), &u.frames)?;
    }
    fs::write(dir.join(MANIFEST), manifest)?;
    fs::write(dir.join(TOKENS), tokens)?;
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    Ok(fs::read_to_string(path)?)
}

pub fn load_corpus(dir: &Path) -> Result<Corpus> {
    let spec = CorpusSpec::read(&dir.join(SPEC))?;
    let manifest_path = dir.join(MANIFEST);
    let tokens_path = dir.join(TOKENS);
    let bad = |path: &Path, line: usize, reason: String| Error::Manifest {
        path: path.to_path_buf(),
        line,
        reason,
    };

    let token_text = read_text(&tokens_path)?;
    let mut token_lines = token_text.lines();
    if token_lines.next() != Some(TOKENS_HEADER) {
        return Err(bad(&tokens_path, 1, "missing header".into()));
    }
    let mut tokens_by_id = HashMap::new();
    for (i, line) in token_lines.enumerate() {
        let (id, body) = line
            .split_once('\t')
            .ok_or_else(|| bad(&tokens_path, i + 2, "expected 2 columns".into()))?;
        let parsed = parse_tokens(body)
            .ok_or_else(|| bad(&tokens_path, i + 2, "bad token triple".into()))?;
        tokens_by_id.insert(id.to_string(), parsed);
    }

    let manifest_text = read_text(&manifest_path)?;
    let mut lines = manifest_text.lines();
    if lines.next() != Some(MANIFEST_HEADER) {
        return Err(bad(&manifest_path, 1, "missing or wrong header".into()));
    }
    let mut utterances = Vec::new();
    let mut corpus = Corpus {
        spec,
        utterances: Vec::new(),
    };
    for (i, line) in lines.enumerate() {
        let ln = i + 2;
        let cols: Vec<&str> = line.split('\t').collect();
        let [id, emotion, labeled, split, t_text, frame_file] = cols[..] else {
            return Err(bad(
                &manifest_path,
                ln,
                format!("expected 6 columns, got {}", cols.len()),
            ));
        };
        let emotion = corpus
            .emotion_by_name(emotion)
            .ok_or_else(|| bad(&manifest_path, ln, format!("unknown emotion `{emotion}`")))?;
        let labeled = match labeled {
            "0" => false,
            "1" => true,
            other => return Err(bad(&manifest_path, ln, format!("labeled `{other}`"))),
        };
        let split: Split = split.parse().map_err(|e| bad(&manifest_path, ln, e))?;
        let t_text: usize = t_text
            .parse()
            .map_err(|_| bad(&manifest_path, ln, format!("T_text `{t_text}`")))?;
        let tokens = tokens_by_id
            .remove(id)
            .ok_or_else(|| bad(&manifest_path, ln, format!("no tokens for `{id}`")))?;
        if tokens.len() != t_text {
            return Err(bad(
                &manifest_path,
                ln,
                format!("T_text {t_text} but {} tokens", tokens.len()),
            ));
        }
        let frames = read_frame_file(&dir.join(frame_file))?;
        utterances.push(Utterance {
            id: id.to_string(),
            emotion,
            labeled,
            tokens,
            frames,
            split,
        });
    }
    corpus.utterances = utterances;
    corpus.validate()?;
    Ok(corpus)
}
