use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::DeepMusicModel;
use crate::array::ArrayConfig;
use crate::error::{Error, Result};
use crate::grid::{make_grid, partition_grid};
use crate::io::*;
use crate::nn::{read_checkpoint, write_checkpoint, Checkpoint};

pub const MODEL_MAGIC: &[u8; 4] = b"DMMB";
pub const MODEL_VERSION: u16 = 1;

const MAX_REGIONS: usize = 1 << 16;
const MAX_POINTS: usize = 1 << 24;

/// Header, then one length-prefixed `DMNN` checkpoint per region.
pub fn write_model<W: Write>(m: &DeepMusicModel, w: &mut W) -> Result<()> {
    w.write_all(MODEL_MAGIC)?;
    put_u16(w, MODEL_VERSION)?;
    put_usize(w, m.array.num_elements, "M")?;
    put_f64(w, m.array.spacing_wavelengths)?;
    put_f64(w, m.partition.grid.start_deg)?;
    put_f64(w, m.partition.grid.final_deg)?;
    put_usize(w, m.partition.grid.len(), "N")?;
    put_usize(w, m.partition.num_regions, "Q")?;
    for (net, log) in m.networks.iter().zip(&m.logs) {
        let c = Checkpoint { network: net.clone(), stats: m.stats.clone(), log: log.clone() };
        let mut buf = Vec::new();
        write_checkpoint(&c, &mut buf)?;
        put_u64(w, buf.len() as u64)?;
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_model<R: Read>(r: &mut R) -> Result<DeepMusicModel> {
    expect_magic(r, MODEL_MAGIC)?;
    expect_version(r, MODEL_VERSION)?;
    let m = get_count(r, "M", 4096)?;
    let spacing = get_f64(r, "spacing")?;
    let start = get_f64(r, "grid start")?;
    let fin = get_f64(r, "grid final")?;
    let n = get_count(r, "N", MAX_POINTS)?;
    let q = get_count(r, "Q", MAX_REGIONS)?;
    let bad = |e: Error| Error::Format(format!("inconsistent model header: {e}"));
    let array = ArrayConfig::new(m, spacing).map_err(bad)?;
    let partition = partition_grid(make_grid(start, fin, n).map_err(bad)?, q).map_err(bad)?;
    let mut networks = Vec::with_capacity(q);
    let mut logs = Vec::with_capacity(q);
    let mut stats = None;
    for i in 0..q {
        let len = get_u64(r, "checkpoint length")?;
        let mut sub = r.take(len);
        let c = read_checkpoint(&mut sub)?;
        if sub.limit() != 0 {
            return Err(Error::Format(format!("checkpoint {i} is shorter than its length prefix")));
        }
        match &stats {
            None => stats = Some(c.stats),
            Some(s) if *s != c.stats => {
                return Err(Error::Format(format!("checkpoint {i} carries different input statistics")))
            }
            Some(_) => {}
        }
        networks.push(c.network);
        logs.push(c.log);
    }
    let stats = stats.ok_or_else(|| Error::Format("model holds no networks".into()))?;
    DeepMusicModel::new(array, partition, stats, networks, logs).map_err(bad)
}

pub fn save_model(m: &DeepMusicModel, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_model(m, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<DeepMusicModel> {
    let mut r = BufReader::new(File::open(path)?);
    let m = read_model(&mut r)?;
    expect_eof(&mut r)?;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::tests::untrained;

    fn bytes(m: &DeepMusicModel) -> Vec<u8> {
        let mut b = Vec::new();
        write_model(m, &mut b).unwrap();
        b
    }

    #[test]
    fn round_trip() {
        let m = untrained(1);
        let b = bytes(&m);
        assert_eq!(&b[..4], b"DMMB");
        let back = read_model(&mut b.as_slice()).unwrap();
        assert_eq!(back, m);
        assert_eq!(bytes(&back), b);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.dmmb");
        save_model(&untrained(2), &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), untrained(2));
    }

    #[test]
    fn corrupt_bundles_give_typed_errors() {
        let b = bytes(&untrained(3));
        for cut in [2, 10, 40, b.len() / 3, b.len() - 1] {
            assert!(matches!(read_model(&mut &b[..cut]), Err(Error::Truncated(_))), "cut {cut}");
        }
        let mut v = b.clone();
        v[4] = 7;
        assert!(matches!(read_model(&mut v.as_slice()), Err(Error::VersionMismatch { found: 7, .. })));
        let mut q = b.clone();
        // Q = 3 does not divide N = 32.
        q[38] = 3;
        assert!(matches!(read_model(&mut q.as_slice()), Err(Error::Format(_))));
        let mut magic = b.clone();
        magic[1] = b'Z';
        assert!(matches!(read_model(&mut magic.as_slice()), Err(Error::Format(_))));
    }
}
