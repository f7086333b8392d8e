//! BPF1 frame-stack files.
//!
//! Layout (little-endian): magic `BPF1`, u16 version, u32 width, u32 height,
//! u32 frame count, u8 pixel encoding (0 = u16), u32 metadata length,
//! UTF-8 `key=value` metadata lines, then the frames row-major.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::expose::Frame;
use crate::error::{Error, Result};

pub const BPF_MAGIC: &[u8; 4] = b"BPF1";
pub const BPF_VERSION: u16 = 1;
pub const ENCODING_U16_LE: u8 = 0;
const FIXED_HEADER: u64 = 4 + 2 + 4 + 4 + 4 + 1 + 4;

#[derive(Debug, Clone, PartialEq)]
pub struct BpfHeader {
    pub width: u32,
    pub height: u32,
    pub frame_count: u32,
    pub metadata: BTreeMap<String, String>,
}

impl BpfHeader {
    pub fn frame_bytes(&self) -> u64 {
        self.width as u64 * self.height as u64 * 2
    }

    fn metadata_text(&self) -> String {
        self.metadata
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    fn encode(&self) -> Vec<u8> {
        let meta = self.metadata_text();
        let mut out = Vec::with_capacity(FIXED_HEADER as usize + meta.len());
        out.extend_from_slice(BPF_MAGIC);
        out.extend_from_slice(&BPF_VERSION.to_le_bytes());
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(&self.frame_count.to_le_bytes());
        out.push(ENCODING_U16_LE);
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(meta.as_bytes());
        out
    }
}

fn parse_metadata(text: &str, offset: u64) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    let mut pos = offset;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim_end_matches('\n');
        if !trimmed.is_empty() {
            let (k, v) = trimmed.split_once('=').ok_or_else(|| Error::Format {
                offset: pos,
                message: format!("metadata line without '=': {trimmed:?}"),
            })?;
            map.insert(k.to_string(), v.to_string());
        }
        pos += line.len() as u64;
    }
    Ok(map)
}

/// Streaming writer. Frames go to a temporary file that is renamed into place
/// by [`BpfWriter::finish`] once the declared count has been written.
pub struct BpfWriter {
    path: PathBuf,
    tmp: PathBuf,
    out: BufWriter<File>,
    header: BpfHeader,
    written: u64,
    hasher: Sha256,
    buf: Vec<u8>,
}

impl BpfWriter {
    pub fn create(path: impl AsRef<Path>, header: BpfHeader) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let tmp = temp_path(&path);
        let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let mut out = BufWriter::with_capacity(1 << 20, file);
        let bytes = header.encode();
        out.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        Ok(BpfWriter {
            path,
            tmp,
            out,
            header,
            written: 0,
            hasher,
            buf: Vec::new(),
        })
    }

    pub fn write_frame(&mut self, frame: &Frame) -> Result<()> {
        if frame.width != self.header.width as usize || frame.height != self.header.height as usize {
            return Err(Error::DimensionMismatch {
                expected: (self.header.width as usize, self.header.height as usize),
                got: (frame.width, frame.height),
            });
        }
        if self.written >= self.header.frame_count as u64 {
            return Err(Error::InvalidParameter(format!(
                "stack declares {} frames, refusing to write more",
                self.header.frame_count
            )));
        }
        self.buf.clear();
        for v in &frame.data {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
        self.out.write_all(&self.buf).map_err(|source| Error::Io {
            path: Some(self.tmp.clone()),
            frame: Some(self.written),
            source,
        })?;
        self.hasher.update(&self.buf);
        self.written += 1;
        Ok(())
    }

    /// Flush, check the frame count, rename into place. Returns the SHA-256 of the file.
    pub fn finish(mut self) -> Result<String> {
        if self.written != self.header.frame_count as u64 {
            let _ = std::fs::remove_file(&self.tmp);
            return Err(Error::InsufficientFrames {
                needed: self.header.frame_count as u64,
                got: self.written,
            });
        }
        self.out.flush().map_err(|e| Error::io(&self.tmp, e))?;
        let file = self.out.into_inner().map_err(|e| Error::io(&self.tmp, e.into_error()))?;
        file.sync_all().map_err(|e| Error::io(&self.tmp, e))?;
        std::fs::rename(&self.tmp, &self.path).map_err(|e| Error::io(&self.path, e))?;
        Ok(hex::encode(self.hasher.finalize()))
    }
}

pub(crate) fn temp_path(path: &Path) -> PathBuf {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!(".{name}.tmp{}", std::process::id()))
}

/// Streaming reader with memory bounded by one frame.
pub struct BpfReader {
    path: PathBuf,
    input: BufReader<File>,
    header: BpfHeader,
    header_len: u64,
    next: u64,
    hasher: Option<Sha256>,
    buf: Vec<u8>,
}

impl BpfReader {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        let file_len = file.metadata().map_err(|e| Error::io(&path, e))?.len();
        let mut input = BufReader::with_capacity(1 << 20, file);
        let mut fixed = [0u8; FIXED_HEADER as usize];
        let mut got = 0;
        while got < fixed.len() {
            let n = input.read(&mut fixed[got..]).map_err(|e| Error::io(&path, e))?;
            if n == 0 {
                return Err(Error::Format {
                    offset: got as u64,
                    message: format!("file ends inside the {FIXED_HEADER}-byte header"),
                });
            }
            got += n;
        }
        if &fixed[0..4] != BPF_MAGIC {
            return Err(Error::Format {
                offset: 0,
                message: format!("bad magic {:?}, expected \"BPF1\"", &fixed[0..4]),
            });
        }
        let u32_at = |o: usize| u32::from_le_bytes(fixed[o..o + 4].try_into().expect("4 bytes"));
        let version = u16::from_le_bytes([fixed[4], fixed[5]]);
        if version != BPF_VERSION {
            return Err(Error::Format {
                offset: 4,
                message: format!("unsupported version {version}"),
            });
        }
        let (width, height, frame_count) = (u32_at(6), u32_at(10), u32_at(14));
        if fixed[18] != ENCODING_U16_LE {
            return Err(Error::Format {
                offset: 18,
                message: format!("unsupported pixel encoding {}", fixed[18]),
            });
        }
        let meta_len = u32_at(19) as u64;
        if FIXED_HEADER + meta_len > file_len {
            return Err(Error::Format {
                offset: 19,
                message: format!("metadata length {meta_len} runs past end of file ({file_len} bytes)"),
            });
        }
        let mut meta = vec![0u8; meta_len as usize];
        input.read_exact(&mut meta).map_err(|e| Error::io(&path, e))?;
        let text = String::from_utf8(meta.clone()).map_err(|e| Error::Format {
            offset: FIXED_HEADER + e.utf8_error().valid_up_to() as u64,
            message: "metadata is not valid UTF-8".into(),
        })?;
        let metadata = parse_metadata(&text, FIXED_HEADER)?;
        let header = BpfHeader {
            width,
            height,
            frame_count,
            metadata,
        };
        let header_len = FIXED_HEADER + meta_len;
        let expected_len = header_len + header.frame_bytes() * frame_count as u64;
        if file_len < expected_len {
            let actual = if header.frame_bytes() == 0 {
                0
            } else {
                (file_len - header_len) / header.frame_bytes()
            };
            return Err(Error::Truncated {
                expected: frame_count as u64,
                actual,
                file_len,
                expected_len,
            });
        }
        if file_len > expected_len {
            return Err(Error::Format {
                offset: expected_len,
                message: format!("{} trailing bytes after the last frame", file_len - expected_len),
            });
        }
        let mut hasher = Sha256::new();
        hasher.update(&fixed);
        hasher.update(&meta);
        Ok(BpfReader {
            path,
            input,
            header,
            header_len,
            next: 0,
            hasher: Some(hasher),
            buf: Vec::new(),
        })
    }

    pub fn header(&self) -> &BpfHeader {
        &self.header
    }

    pub fn remaining(&self) -> u64 {
        self.header.frame_count as u64 - self.next
    }

    pub fn next_frame(&mut self) -> Result<Option<Frame>> {
        if self.next >= self.header.frame_count as u64 {
            return Ok(None);
        }
        let n = self.header.frame_bytes() as usize;
        self.buf.resize(n, 0);
        self.input.read_exact(&mut self.buf).map_err(|source| {
            if source.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::Format {
                    offset: self.header_len + self.next * n as u64,
                    message: format!("payload ends inside frame {}", self.next),
                }
            } else {
                Error::Io {
                    path: Some(self.path.clone()),
                    frame: Some(self.next),
                    source,
                }
            }
        })?;
        if let Some(h) = self.hasher.as_mut() {
            h.update(&self.buf);
        }
        let data = self
            .buf
            .chunks_exact(2)
            .map(|b| u16::from_le_bytes([b[0], b[1]]))
            .collect();
        let frame = Frame {
            width: self.header.width as usize,
            height: self.header.height as usize,
            data,
            index: self.next,
        };
        self.next += 1;
        Ok(Some(frame))
    }

    /// SHA-256 of the whole file, available once every frame has been read.
    pub fn source_hash(&mut self) -> Option<String> {
        if self.next < self.header.frame_count as u64 {
            return None;
        }
        self.hasher.take().map(|h| hex::encode(h.finalize()))
    }
}

impl Iterator for BpfReader {
    type Item = Result<Frame>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_frame().transpose()
    }
}
