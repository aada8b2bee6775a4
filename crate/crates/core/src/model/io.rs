//! `.fags` model files.
//!
//! Little-endian, no padding:
//!
//! ```text
//! magic "FAGS" | version u32 | N u64 | L u32 | sh_degree u32 | background 3 x f32
//! positions   N x 3 x f32
//! quaternions N x 4 x f32   (w, x, y, z)
//! log_scales  N x 3 x f32
//! opacities   N x f32       (logits)
//! sh          N x 3 x B x f32  (channel-major per Gaussian, B = (degree+1)^2)
//! levels      N x u8
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use serde_json::json;

use super::{basis_count, GaussianScene};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FAGS";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 4 + 4 + 12;

pub fn write_model(scene: &GaussianScene, out: &mut impl Write) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(HEADER_LEN + scene.len() * (4 * (11 + scene.coeffs_per_gaussian())) + scene.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(scene.len() as u64).to_le_bytes());
    buf.extend_from_slice(&scene.num_levels.to_le_bytes());
    buf.extend_from_slice(&scene.sh_degree.to_le_bytes());
    let mut put = |v: f64| buf.extend_from_slice(&(v as f32).to_le_bytes());
    scene.background.iter().for_each(|&v| put(v));
    scene.positions.iter().flatten().for_each(|&v| put(v));
    scene.rotations.iter().flatten().for_each(|&v| put(v));
    scene.log_scales.iter().flatten().for_each(|&v| put(v));
    scene.opacity_logits.iter().for_each(|&v| put(v));
    scene.sh.iter().for_each(|&v| put(v));
    buf.extend_from_slice(&scene.levels);
    out.write_all(&buf)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format(format!(
                "truncated file: {what} needs {n} bytes at offset {}, {} available",
                self.pos,
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f32s(&mut self, count: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = self.take(count.checked_mul(4).ok_or_else(|| Error::Format("size overflow".into()))?, what)?;
        let vals: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format(format!("non-finite value in {what}")));
        }
        Ok(vals)
    }
}

fn chunks<const K: usize>(v: Vec<f64>) -> Vec<[f64; K]> {
    v.chunks_exact(K).map(|c| c.try_into().unwrap()).collect()
}

pub fn read_model(bytes: &[u8]) -> Result<GaussianScene> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}, expected \"FAGS\"")));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}, expected {VERSION}")));
    }
    let n = r.u64("count")? as usize;
    let num_levels = r.u32("level count")?;
    let sh_degree = r.u32("sh degree")?;
    if sh_degree > 1 {
        return Err(Error::Format(format!("sh degree {sh_degree} unsupported")));
    }
    let bg = r.f32s(3, "background")?;
    let positions = chunks::<3>(r.f32s(n * 3, "positions")?);
    let rotations = chunks::<4>(r.f32s(n * 4, "quaternions")?);
    let log_scales = chunks::<3>(r.f32s(n * 3, "log_scales")?);
    let opacity_logits = r.f32s(n, "opacities")?;
    let sh = r.f32s(n * 3 * basis_count(sh_degree), "sh coefficients")?;
    let levels = r.take(n, "levels")?.to_vec();
    if r.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let scene = GaussianScene {
        positions,
        rotations,
        log_scales,
        opacity_logits,
        sh,
        levels,
        sh_degree,
        num_levels,
        background: [bg[0], bg[1], bg[2]],
    };
    scene.validate().map_err(|e| Error::Format(e.to_string()))?;
    Ok(scene)
}

/// Writes `scene` to `path`. Parameters are stored as `f32`.
pub fn save_model(scene: &GaussianScene, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_model(scene, &mut buf).map_err(|e| Error::io(path, e))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<GaussianScene> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_model(&bytes)
}

/// Field-for-field JSON dump used as the cross-component golden file.
/// Numbers are the exact values of the stored f32s.
pub fn scene_to_json(scene: &GaussianScene) -> serde_json::Value {
    let f = |v: f64| v as f32 as f64;
    json!({
        "magic": "FAGS",
        "version": VERSION,
        "count": scene.len(),
        "num_levels": scene.num_levels,
        "sh_degree": scene.sh_degree,
        "background": scene.background.map(f),
        "positions": scene.positions.iter().map(|p| p.map(f)).collect::<Vec<_>>(),
        "rotations": scene.rotations.iter().map(|p| p.map(f)).collect::<Vec<_>>(),
        "log_scales": scene.log_scales.iter().map(|p| p.map(f)).collect::<Vec<_>>(),
        "opacity_logits": scene.opacity_logits.iter().map(|&v| f(v)).collect::<Vec<_>>(),
        "sh": (0..scene.len()).map(|i| scene.sh_of(i).iter().map(|&v| f(v)).collect::<Vec<_>>()).collect::<Vec<_>>(),
        "levels": scene.levels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hand_built_one_gaussian() -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(b"FAGS");
        b.extend_from_slice(&1u32.to_le_bytes());
        b.extend_from_slice(&1u64.to_le_bytes());
        b.extend_from_slice(&3u32.to_le_bytes());
        b.extend_from_slice(&0u32.to_le_bytes());
        for v in [0.5f32, 0.25, 1.0] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        for v in [1.0f32, -2.0, 3.5] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        for v in [1.0f32, 0.0, 0.0, 0.0] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        for v in [-1.0f32, -2.0, -3.0] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b.extend_from_slice(&0.75f32.to_le_bytes());
        for v in [0.125f32, -0.5, 2.0] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b.push(2);
        b
    }

    #[test]
    fn hand_encoded_fixture_decodes() {
        let bytes = hand_built_one_gaussian();
        assert_eq!(bytes.len(), HEADER_LEN + 4 * (3 + 4 + 3 + 1 + 3) + 1);
        let s = read_model(&bytes).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.num_levels, 3);
        assert_eq!(s.background, [0.5, 0.25, 1.0]);
        assert_eq!(s.positions[0], [1.0, -2.0, 3.5]);
        assert_eq!(s.rotations[0], [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(s.log_scales[0], [-1.0, -2.0, -3.0]);
        assert_eq!(s.opacity_logits[0], 0.75);
        assert_eq!(s.sh, vec![0.125, -0.5, 2.0]);
        assert_eq!(s.levels, vec![2]);
        let mut again = Vec::new();
        write_model(&s, &mut again).unwrap();
        assert_eq!(again, bytes);
    }

    #[test]
    fn wrong_magic_and_version_rejected() {
        let mut bytes = hand_built_one_gaussian();
        bytes[0] = b'X';
        assert!(matches!(read_model(&bytes), Err(Error::Format(m)) if m.contains("magic")));
        let mut bytes = hand_built_one_gaussian();
        bytes[4] = 2;
        assert!(matches!(read_model(&bytes), Err(Error::Format(m)) if m.contains("version")));
    }

    #[test]
    fn truncation_names_the_array() {
        let bytes = hand_built_one_gaussian();
        let cut = &bytes[..bytes.len() - 3];
        match read_model(cut) {
            Err(Error::Format(m)) => assert!(m.contains("sh coefficients"), "{m}"),
            other => panic!("expected truncation error, got {other:?}"),
        }
        assert!(read_model(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn nan_rejected() {
        let mut bytes = hand_built_one_gaussian();
        let off = HEADER_LEN;
        bytes[off..off + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(read_model(&bytes), Err(Error::Format(m)) if m.contains("positions")));
    }

    #[test]
    fn save_load_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.fags");
        let s = read_model(&hand_built_one_gaussian()).unwrap();
        save_model(&s, &p).unwrap();
        assert_eq!(load_model(&p).unwrap(), s);
        assert!(matches!(load_model(dir.path().join("missing.fags")), Err(Error::Io { .. })));
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            n in 0usize..20,
            degree in 0u32..2,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut s = GaussianScene::empty(4, degree, [rng.gen(), rng.gen(), rng.gen()]);
            for _ in 0..n {
                let sh: Vec<f64> = (0..s.coeffs_per_gaussian()).map(|_| rng.gen_range(-2.0..2.0)).collect();
                s.push(
                    [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)],
                    [rng.gen(), rng.gen(), rng.gen(), rng.gen()],
                    [rng.gen_range(-4.0..0.0), rng.gen_range(-4.0..0.0), rng.gen_range(-4.0..0.0)],
                    rng.gen_range(-6.0..6.0),
                    &sh,
                    rng.gen_range(1..=4),
                );
            }
            s.quantize_f32();
            let mut bytes = Vec::new();
            write_model(&s, &mut bytes).unwrap();
            let back = read_model(&bytes).unwrap();
            prop_assert_eq!(back, s);
        }
    }
}
