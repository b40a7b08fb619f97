//! Little-endian binary agent snapshots.
//!
//! Layout: magic `LOGLCKPT`, u32 version, u32 obs_dim, u32 act_dim,
//! u32 hidden count, u32 per hidden size, then f64 values: normalizer count,
//! mean, var, policy parameters, log std, value parameters.

use std::io::{Read, Write};
use std::path::Path;

use super::mlp::{param_count, Mlp};
use super::normalizer::RunningNorm;
use super::policy::{Agent, GaussianPolicy, ValueNet};
use crate::error::CheckpointError;

pub const MAGIC: &[u8; 8] = b"LOGLCKPT";
pub const VERSION: u32 = 1;

pub fn write_agent(agent: &Agent, mut w: impl Write) -> Result<(), CheckpointError> {
    w.write_all(MAGIC)?;
    let hidden = agent.hidden_sizes();
    let mut header = vec![VERSION, agent.obs_dim() as u32, agent.act_dim() as u32, hidden.len() as u32];
    header.extend(hidden.iter().map(|h| *h as u32));
    for h in header {
        w.write_all(&h.to_le_bytes())?;
    }
    let n = &agent.normalizer;
    let values = std::iter::once(&n.count)
        .chain(&n.mean)
        .chain(&n.var)
        .chain(&agent.policy.net.params)
        .chain(&agent.policy.log_std)
        .chain(&agent.value.net.params);
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<(), CheckpointError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => CheckpointError::Truncated,
        _ => CheckpointError::Io(e),
    })
}

fn read_u32(r: &mut impl Read) -> Result<u32, CheckpointError> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>, CheckpointError> {
    let mut out = Vec::with_capacity(n);
    let mut b = [0u8; 8];
    for _ in 0..n {
        read_exact(r, &mut b)?;
        out.push(f64::from_le_bytes(b));
    }
    Ok(out)
}

pub fn read_agent(mut r: impl Read) -> Result<Agent, CheckpointError> {
    let mut magic = [0u8; 8];
    read_exact(&mut r, &mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::Magic);
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let obs_dim = read_u32(&mut r)? as usize;
    let act_dim = read_u32(&mut r)? as usize;
    let n_hidden = read_u32(&mut r)? as usize;
    if n_hidden > 64 {
        return Err(CheckpointError::Incompatible(format!("{n_hidden} hidden layers")));
    }
    let hidden = (0..n_hidden)
        .map(|_| read_u32(&mut r).map(|h| h as usize))
        .collect::<Result<Vec<_>, _>>()?;
    let count = read_f64s(&mut r, 1)?[0];
    let mean = read_f64s(&mut r, obs_dim)?;
    let var = read_f64s(&mut r, obs_dim)?;
    let sizes = |out: usize| -> Vec<usize> {
        std::iter::once(obs_dim)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(out))
            .collect()
    };
    let psizes = sizes(act_dim);
    let vsizes = sizes(1);
    let pparams = read_f64s(&mut r, param_count(&psizes))?;
    let log_std = read_f64s(&mut r, act_dim)?;
    let vparams = read_f64s(&mut r, param_count(&vsizes))?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(CheckpointError::Incompatible("trailing bytes".into()));
    }
    Ok(Agent {
        policy: GaussianPolicy {
            net: Mlp {
                sizes: psizes,
                params: pparams,
            },
            log_std,
        },
        value: ValueNet {
            net: Mlp {
                sizes: vsizes,
                params: vparams,
            },
        },
        normalizer: RunningNorm { count, mean, var },
    })
}

/// Write through a sibling temp file and rename, so an existing checkpoint
/// at `path` is never left half-written.
pub fn save(agent: &Agent, path: &Path) -> Result<(), CheckpointError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    let f = std::fs::File::create(&tmp)?;
    let mut w = std::io::BufWriter::new(f);
    write_agent(agent, &mut w)?;
    w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Agent, CheckpointError> {
    let f = std::fs::File::open(path)?;
    read_agent(std::io::BufReader::new(f))
}

/// Load and check the dimensions against what the caller will feed it.
pub fn load_compatible(path: &Path, obs_dim: usize, act_dim: usize) -> Result<Agent, CheckpointError> {
    let agent = load(path)?;
    if agent.obs_dim() != obs_dim || agent.act_dim() != act_dim {
        return Err(CheckpointError::Incompatible(format!(
            "checkpoint is {}→{}, environment is {obs_dim}→{act_dim}",
            agent.obs_dim(),
            agent.act_dim()
        )));
    }
    Ok(agent)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn agent() -> Agent {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut a = Agent::new(5, 2, &[4, 3], -0.5, &mut rng);
        a.normalizer.update([[1.0, 2.0, 3.0, 4.0, 5.0].as_slice(), [0.0; 5].as_slice()]);
        a
    }

    #[test]
    fn round_trip_is_exact() {
        let a = agent();
        let mut bytes = Vec::new();
        write_agent(&a, &mut bytes).unwrap();
        assert_eq!(&bytes[..8], MAGIC);
        let b = read_agent(bytes.as_slice()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_corruption() {
        let a = agent();
        let mut bytes = Vec::new();
        write_agent(&a, &mut bytes).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(read_agent(bad.as_slice()), Err(CheckpointError::Magic)));
        let mut bad = bytes.clone();
        bad[8] = 7;
        assert!(matches!(read_agent(bad.as_slice()), Err(CheckpointError::Version(7))));
        let short = &bytes[..bytes.len() - 3];
        assert!(matches!(read_agent(short), Err(CheckpointError::Truncated)));
    }
}
