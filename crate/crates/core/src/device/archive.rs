use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::sampling::SampleSet;

/// Leading bytes of a sample archive; the sample-set encoding follows.
pub const ARCHIVE_MAGIC: &[u8; 4] = b"CBS1";

/// Writes `samples` to `path`.
pub fn archive_samples(samples: &SampleSet, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(ARCHIVE_MAGIC)?;
    samples.write_to(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Reads an archive written by [`archive_samples`]. Truncated, padded or
/// otherwise corrupt files are rejected with the offending byte offset.
pub fn load_samples(path: impl AsRef<Path>) -> Result<SampleSet> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::format(0, "file shorter than the archive magic"),
        _ => Error::Io(e),
    })?;
    if &magic != ARCHIVE_MAGIC {
        return Err(Error::format(0, "missing CBS1 archive magic"));
    }
    let set = SampleSet::read_from(&mut r, ARCHIVE_MAGIC.len() as u64)?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        let end = (ARCHIVE_MAGIC.len() + set.encoded_len()) as u64;
        return Err(Error::format(end, "trailing bytes after sample set"));
    }
    Ok(set)
}
