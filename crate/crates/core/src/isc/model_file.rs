//! `ISCM1` model file.
//!
//! After the five magic bytes every field is a little-endian `u64` or `f64`:
//!
//! ```text
//! n_sigmas, sigmas[n_sigmas]
//! n_orders, (dx, dy)[n_orders]
//! include_raw_intensity (0 | 1)
//! feature_config_fingerprint
//! k, feature_dim, centers[k * feature_dim]
//! n_weights, weights[n_weights], bias, slope, intercept
//! checksum (fingerprint of every preceding byte)
//! ```

use std::path::Path;

use super::{ClusterModel, IscFeatureConfig, IscModel, PlattCalibration, SvmModel};
use crate::error::{Error, Result};
use crate::fingerprint;

pub const MAGIC: &[u8; 5] = b"ISCM1";

const MAX_LEN: u64 = 1 << 24;

impl IscModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = MAGIC.to_vec();
        let u = |out: &mut Vec<u8>, v: u64| out.extend_from_slice(&v.to_le_bytes());
        let f = |out: &mut Vec<u8>, v: f64| out.extend_from_slice(&v.to_le_bytes());
        u(&mut out, self.config.sigmas().len() as u64);
        for s in self.config.sigmas() {
            f(&mut out, *s);
        }
        u(&mut out, self.config.derivative_orders().len() as u64);
        for (dx, dy) in self.config.derivative_orders() {
            u(&mut out, u64::from(*dx));
            u(&mut out, u64::from(*dy));
        }
        u(&mut out, u64::from(self.config.include_raw_intensity()));
        u(&mut out, self.cluster.feature_config_fingerprint());
        u(&mut out, self.cluster.k() as u64);
        u(&mut out, self.cluster.feature_dim() as u64);
        for c in self.cluster.centers() {
            f(&mut out, *c);
        }
        u(&mut out, self.svm.weights().len() as u64);
        for w in self.svm.weights() {
            f(&mut out, *w);
        }
        f(&mut out, self.svm.bias());
        f(&mut out, self.svm.calibration().slope);
        f(&mut out, self.svm.calibration().intercept);
        let sum = fingerprint(&out);
        u(&mut out, sum);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 8 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::ModelFormat("missing ISCM1 header".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
        let actual = fingerprint(body);
        if stored != actual {
            return Err(Error::FingerprintMismatch {
                expected: stored,
                actual,
            });
        }
        let mut r = Reader {
            bytes: body,
            pos: MAGIC.len(),
        };
        let n_sigmas = r.len()?;
        let sigmas = (0..n_sigmas).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let n_orders = r.len()?;
        let mut orders = Vec::with_capacity(n_orders);
        for _ in 0..n_orders {
            let dx = u8::try_from(r.u64()?).map_err(|_| Error::ModelFormat("bad derivative order".into()))?;
            let dy = u8::try_from(r.u64()?).map_err(|_| Error::ModelFormat("bad derivative order".into()))?;
            orders.push((dx, dy));
        }
        let raw = match r.u64()? {
            0 => false,
            1 => true,
            v => return Err(Error::ModelFormat(format!("bad intensity flag {v}"))),
        };
        let config = IscFeatureConfig::new(sigmas, orders, raw)?;
        let config_fp = r.u64()?;
        if config_fp != config.fingerprint() {
            return Err(Error::FingerprintMismatch {
                expected: config.fingerprint(),
                actual: config_fp,
            });
        }
        let k = r.len()?;
        let dim = r.len()?;
        let centers = (0..k * dim).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let cluster = ClusterModel::new(k, dim, centers, config_fp)?;
        let n_weights = r.len()?;
        let weights = (0..n_weights).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let bias = r.f64()?;
        let calibration = PlattCalibration::new(r.f64()?, r.f64()?)?;
        if r.pos != body.len() {
            return Err(Error::ModelFormat("trailing bytes".into()));
        }
        let svm = SvmModel::new(weights, bias, calibration)?;
        IscModel::new(config, cluster, svm)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self) -> Result<[u8; 8]> {
        let end = self.pos + 8;
        let chunk = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::ModelFormat("file truncated".into()))?;
        self.pos = end;
        Ok(chunk.try_into().expect("8 bytes"))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }

    fn len(&mut self) -> Result<usize> {
        let v = self.u64()?;
        if v > MAX_LEN {
            return Err(Error::ModelFormat(format!("implausible length {v}")));
        }
        Ok(v as usize)
    }
}
