//! Bit-exact binary file formats for the pipeline artifacts.
//!
//! Four little-endian formats, one magic each: "ARTF" feature sequences,
//! "ARTC" codebook stacks, "ARTT" token grids, "ARTE" embedding table sets.
//! Readers report failures with the byte offset reached; token reads validate
//! every code against the stored alphabet. See FORMATS.md for the byte-level
//! layout.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, WriteBytesExt};

use crate::assembly::EmbeddingTableSet;
use crate::error::{Error, Result};
use crate::kmeans::Codebook;
use crate::rvq::{CodebookStack, FeatureSequence, TokenSequence};

pub const MAGIC_FEATURES: &[u8; 4] = b"ARTF";
pub const MAGIC_CODEBOOKS: &[u8; 4] = b"ARTC";
pub const MAGIC_TOKENS: &[u8; 4] = b"ARTT";
pub const MAGIC_EMBEDDINGS: &[u8; 4] = b"ARTE";
pub const FORMAT_VERSION: u32 = 1;

struct Reader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Reader<R> {
    fn new(inner: R) -> Self {
        Self { inner, offset: 0 }
    }

    fn fill(&mut self, buf: &mut [u8]) -> Result<()> {
        let mut read = 0usize;
        while read < buf.len() {
            match self.inner.read(&mut buf[read..]) {
                Ok(0) => {
                    return Err(Error::Format {
                        offset: self.offset,
                        message: format!(
                            "truncated file: expected {} more bytes, got {}",
                            buf.len(),
                            read
                        ),
                    });
                }
                Ok(n) => {
                    read += n;
                    self.offset += n as u64;
                }
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                Err(e) => return Err(Error::Io(e)),
            }
        }
        Ok(())
    }

    fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let mut got = [0u8; 4];
        self.fill(&mut got)?;
        if &got != expected {
            return Err(Error::Format {
                offset: 0,
                message: format!(
                    "bad magic: expected {:?}, found {:?}",
                    String::from_utf8_lossy(expected),
                    String::from_utf8_lossy(&got)
                ),
            });
        }
        Ok(())
    }

    fn version(&mut self) -> Result<()> {
        let v = self.u32()?;
        if v != FORMAT_VERSION {
            return Err(Error::Format {
                offset: self.offset - 4,
                message: format!("unsupported version {v}, expected {FORMAT_VERSION}"),
            });
        }
        Ok(())
    }

    fn u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.fill(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    fn u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        self.fill(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }

    fn f32_vec(&mut self, count: usize) -> Result<Vec<f32>> {
        let mut bytes = vec![0u8; count * 4];
        self.fill(&mut bytes)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    fn u32_vec(&mut self, count: usize) -> Result<Vec<u32>> {
        let mut bytes = vec![0u8; count * 4];
        self.fill(&mut bytes)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    fn dim(&mut self, what: &str) -> Result<usize> {
        let v = self.u32()?;
        if v == 0 {
            return Err(Error::Format {
                offset: self.offset - 4,
                message: format!("{what} must be positive"),
            });
        }
        Ok(v as usize)
    }
}

fn write_f32s<W: Write>(w: &mut W, values: &[f32]) -> Result<()> {
    for &v in values {
        w.write_f32::<LittleEndian>(v)?;
    }
    Ok(())
}

pub fn write_features<W: Write>(seq: &FeatureSequence, sink: &mut W) -> Result<()> {
    sink.write_all(MAGIC_FEATURES)?;
    sink.write_u32::<LittleEndian>(FORMAT_VERSION)?;
    sink.write_u64::<LittleEndian>(seq.length() as u64)?;
    sink.write_u32::<LittleEndian>(seq.dim() as u32)?;
    write_f32s(sink, seq.as_slice())
}

pub fn read_features<R: Read>(source: R) -> Result<FeatureSequence> {
    let mut r = Reader::new(source);
    r.magic(MAGIC_FEATURES)?;
    r.version()?;
    let length = r.u64()? as usize;
    if length == 0 {
        return Err(Error::Format {
            offset: r.offset - 8,
            message: "feature sequence length must be positive".into(),
        });
    }
    let dim = r.dim("feature dimension")?;
    let data = r.f32_vec(length * dim)?;
    FeatureSequence::new(data, dim)
}

pub fn write_codebook_stack<W: Write>(stack: &CodebookStack, sink: &mut W) -> Result<()> {
    sink.write_all(MAGIC_CODEBOOKS)?;
    sink.write_u32::<LittleEndian>(FORMAT_VERSION)?;
    sink.write_u32::<LittleEndian>(stack.num_layers() as u32)?;
    sink.write_u32::<LittleEndian>(stack.codebook_size() as u32)?;
    sink.write_u32::<LittleEndian>(stack.dim() as u32)?;
    for layer in stack.layers() {
        write_f32s(sink, layer.as_slice())?;
    }
    Ok(())
}

pub fn read_codebook_stack<R: Read>(source: R) -> Result<CodebookStack> {
    let mut r = Reader::new(source);
    r.magic(MAGIC_CODEBOOKS)?;
    r.version()?;
    let num_layers = r.dim("layer count")?;
    let k = r.dim("codebook size")?;
    let dim = r.dim("codebook dimension")?;
    let mut layers = Vec::with_capacity(num_layers);
    for _ in 0..num_layers {
        let data = r.f32_vec(k * dim)?;
        layers.push(Codebook::new(data, k, dim)?);
    }
    CodebookStack::new(layers)
}

pub fn write_tokens<W: Write>(tokens: &TokenSequence, sink: &mut W) -> Result<()> {
    sink.write_all(MAGIC_TOKENS)?;
    sink.write_u32::<LittleEndian>(FORMAT_VERSION)?;
    sink.write_u32::<LittleEndian>(tokens.num_layers() as u32)?;
    sink.write_u64::<LittleEndian>(tokens.length() as u64)?;
    sink.write_u32::<LittleEndian>(tokens.codebook_size())?;
    for &c in tokens.as_slice() {
        sink.write_u32::<LittleEndian>(c)?;
    }
    Ok(())
}

pub fn read_tokens<R: Read>(source: R) -> Result<TokenSequence> {
    let mut r = Reader::new(source);
    r.magic(MAGIC_TOKENS)?;
    r.version()?;
    let num_layers = r.dim("layer count")?;
    let length = r.u64()? as usize;
    if length == 0 {
        return Err(Error::Format {
            offset: r.offset - 8,
            message: "token sequence length must be positive".into(),
        });
    }
    let codebook_size = r.dim("codebook size")? as u32;
    let codes = r.u32_vec(num_layers * length)?;
    // TokenSequence::new validates every code against the alphabet and names
    // the offending (layer, position).
    TokenSequence::new(codes, num_layers, length, codebook_size)
}

pub fn write_embedding_tables<W: Write>(tables: &EmbeddingTableSet, sink: &mut W) -> Result<()> {
    sink.write_all(MAGIC_EMBEDDINGS)?;
    sink.write_u32::<LittleEndian>(FORMAT_VERSION)?;
    sink.write_u32::<LittleEndian>(tables.num_layers() as u32)?;
    sink.write_u32::<LittleEndian>(tables.codebook_size() as u32)?;
    sink.write_u32::<LittleEndian>(tables.hidden_size() as u32)?;
    sink.write_u32::<LittleEndian>(tables.max_len() as u32)?;
    for layer in 0..tables.num_layers() {
        write_f32s(sink, tables.layer_table(layer))?;
    }
    write_f32s(sink, tables.bos())?;
    write_f32s(sink, tables.eos())?;
    write_f32s(sink, tables.positional_table())
}

pub fn read_embedding_tables<R: Read>(source: R) -> Result<EmbeddingTableSet> {
    let mut r = Reader::new(source);
    r.magic(MAGIC_EMBEDDINGS)?;
    r.version()?;
    let num_layers = r.dim("layer count")?;
    let k = r.dim("codebook size")?;
    let hidden = r.dim("hidden size")?;
    let max_len = r.u32()? as usize;
    let rows = k + EmbeddingTableSet::SPECIAL_SLOTS;
    let mut per_layer = Vec::with_capacity(num_layers);
    for _ in 0..num_layers {
        per_layer.push(r.f32_vec(rows * hidden)?);
    }
    let bos = r.f32_vec(hidden)?;
    let eos = r.f32_vec(hidden)?;
    let positional = r.f32_vec(max_len * hidden)?;
    EmbeddingTableSet::from_parts(per_layer, bos, eos, positional, k, hidden, max_len)
}

/// Write through a sibling temp file and rename, so readers never observe a
/// partial artifact.
pub fn atomic_write<F>(path: &Path, write_fn: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("bin")
    ));
    let mut w = BufWriter::new(File::create(&tmp)?);
    let result = write_fn(&mut w).and_then(|()| w.flush().map_err(Error::Io));
    match result {
        Ok(()) => {
            drop(w);
            std::fs::rename(&tmp, path)?;
            Ok(())
        }
        Err(e) => {
            drop(w);
            let _ = std::fs::remove_file(&tmp);
            Err(e)
        }
    }
}

pub fn write_features_file(seq: &FeatureSequence, path: &Path) -> Result<()> {
    atomic_write(path, |w| write_features(seq, w))
}

pub fn read_features_file(path: &Path) -> Result<FeatureSequence> {
    read_features(BufReader::new(File::open(path)?))
}

pub fn write_codebook_stack_file(stack: &CodebookStack, path: &Path) -> Result<()> {
    atomic_write(path, |w| write_codebook_stack(stack, w))
}

pub fn read_codebook_stack_file(path: &Path) -> Result<CodebookStack> {
    read_codebook_stack(BufReader::new(File::open(path)?))
}

pub fn write_tokens_file(tokens: &TokenSequence, path: &Path) -> Result<()> {
    atomic_write(path, |w| write_tokens(tokens, w))
}

pub fn read_tokens_file(path: &Path) -> Result<TokenSequence> {
    read_tokens(BufReader::new(File::open(path)?))
}

pub fn write_embedding_tables_file(tables: &EmbeddingTableSet, path: &Path) -> Result<()> {
    atomic_write(path, |w| write_embedding_tables(tables, w))
}

pub fn read_embedding_tables_file(path: &Path) -> Result<EmbeddingTableSet> {
    read_embedding_tables(BufReader::new(File::open(path)?))
}
