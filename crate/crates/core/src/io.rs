//! Field files: one JSON header line, then the raw little-endian `f64`
//! payload (complex values interleaved re/im). The header carries a SHA-256
//! of the payload so truncation and bit flips are detected on load.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::grid::{PhaseGrid, SpatialGrid};
use crate::semiclassical::HusimiField;
use crate::state::OneBodyDensity;
use crate::vlasov::VlasovState;
use crate::{Error, Result, C64};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldHeader {
    pub format: u32,
    /// `one_body_density`, `husimi`, `vlasov`, `residuals`, ...
    pub kind: String,
    pub complex: bool,
    /// Number of scalars (complex values count once).
    pub count: usize,
    pub sha256: String,
    #[serde(default)]
    pub meta: serde_json::Value,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

fn encode(values: impl Iterator<Item = f64>) -> Vec<u8> {
    values.flat_map(f64::to_le_bytes).collect()
}

fn write_raw(path: &Path, kind: &str, complex: bool, count: usize, payload: Vec<u8>, meta: serde_json::Value) -> Result<()> {
    let header = FieldHeader {
        format: FORMAT_VERSION,
        kind: kind.to_string(),
        complex,
        count,
        sha256: sha256_hex(&payload),
        meta,
    };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut file = fs::File::create(path)?;
    file.write_all(serde_json::to_string(&header)?.as_bytes())?;
    file.write_all(b"\n")?;
    file.write_all(&payload)?;
    Ok(())
}

/// Header and raw scalars of a field file, after checksum verification.
pub fn read_raw(path: &Path) -> Result<(FieldHeader, Vec<f64>)> {
    let bytes = fs::read(path)?;
    let split = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format(format!("{}: missing header line", path.display())))?;
    let header: FieldHeader = serde_json::from_slice(&bytes[..split])
        .map_err(|e| Error::Format(format!("{}: bad header: {e}", path.display())))?;
    if header.format != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported format version {}", header.format)));
    }
    let payload = &bytes[split + 1..];
    let expected = header.count * if header.complex { 16 } else { 8 };
    if payload.len() != expected {
        return Err(Error::Format(format!(
            "{}: payload has {} bytes, header promises {expected}",
            path.display(),
            payload.len()
        )));
    }
    if sha256_hex(payload) != header.sha256 {
        return Err(Error::Format(format!("{}: checksum mismatch", path.display())));
    }
    let values = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Ok((header, values))
}

pub fn write_real(path: &Path, kind: &str, values: &[f64], meta: serde_json::Value) -> Result<()> {
    write_raw(path, kind, false, values.len(), encode(values.iter().copied()), meta)
}

pub fn write_complex(path: &Path, kind: &str, values: &[C64], meta: serde_json::Value) -> Result<()> {
    write_raw(path, kind, true, values.len(), encode(values.iter().flat_map(|v| [v.re, v.im])), meta)
}

fn expect_kind(header: &FieldHeader, kind: &str, complex: bool) -> Result<()> {
    if header.kind != kind || header.complex != complex {
        return Err(Error::Format(format!("expected a {kind} file, found {}", header.kind)));
    }
    Ok(())
}

fn meta_field<T: serde::de::DeserializeOwned>(meta: &serde_json::Value, key: &str) -> Result<T> {
    let v = meta.get(key).ok_or_else(|| Error::Format(format!("header lacks '{key}'")))?;
    serde_json::from_value(v.clone()).map_err(|e| Error::Format(format!("header field '{key}': {e}")))
}

#[derive(Serialize, Deserialize)]
struct DensityMeta {
    grid: SpatialGrid,
    hbar: f64,
    particles: usize,
    time: f64,
}

pub fn save_density(path: &Path, gamma: &OneBodyDensity, time: f64) -> Result<()> {
    let meta = DensityMeta { grid: *gamma.grid(), hbar: gamma.hbar(), particles: gamma.particle_count(), time };
    write_complex(path, "one_body_density", gamma.kernel(), serde_json::to_value(meta)?)
}

/// Loads a density and its time stamp. Structural checks are left to
/// [`OneBodyDensity::validate`].
pub fn load_density(path: &Path) -> Result<(OneBodyDensity, f64)> {
    let (header, raw) = read_raw(path)?;
    expect_kind(&header, "one_body_density", true)?;
    let meta: DensityMeta = serde_json::from_value(header.meta)
        .map_err(|e| Error::Format(format!("density header: {e}")))?;
    let kernel = raw.chunks_exact(2).map(|c| C64::new(c[0], c[1])).collect();
    Ok((OneBodyDensity::from_kernel(meta.grid, meta.hbar, meta.particles, kernel)?, meta.time))
}

/// Writes one or more stacked fields on `grid`.
pub fn save_phase_field(path: &Path, kind: &str, grid: &PhaseGrid, values: &[f64], mut meta: serde_json::Value) -> Result<()> {
    if values.is_empty() || values.len() % grid.len() != 0 {
        return Err(Error::GridMismatch("payload is not a whole number of phase fields".into()));
    }
    if !meta.is_object() {
        meta = serde_json::json!({});
    }
    meta["phase_grid"] = serde_json::to_value(grid)?;
    write_real(path, kind, values, meta)
}

/// Loads any real phase-space field: `(kind, grid, values, meta)`.
pub fn load_phase_field(path: &Path) -> Result<(String, PhaseGrid, Vec<f64>, serde_json::Value)> {
    let (header, values) = read_raw(path)?;
    if header.complex {
        return Err(Error::Format("phase-space fields are real".into()));
    }
    let grid: PhaseGrid = meta_field(&header.meta, "phase_grid")?;
    if values.len() % grid.len() != 0 {
        return Err(Error::GridMismatch("payload is not a whole number of phase fields".into()));
    }
    Ok((header.kind, grid, values, header.meta))
}

pub fn save_husimi(path: &Path, m: &HusimiField) -> Result<()> {
    save_phase_field(path, "husimi", &m.grid, &m.values, serde_json::json!({ "hbar": m.hbar, "particles": m.particles }))
}

pub fn load_husimi(path: &Path) -> Result<HusimiField> {
    let (kind, grid, values, meta) = load_phase_field(path)?;
    if kind != "husimi" {
        return Err(Error::Format(format!("expected a husimi file, found {kind}")));
    }
    Ok(HusimiField { grid, hbar: meta_field(&meta, "hbar")?, particles: meta_field(&meta, "particles")?, values })
}

pub fn save_vlasov(path: &Path, st: &VlasovState) -> Result<()> {
    save_phase_field(path, "vlasov", &st.grid, &st.values, serde_json::json!({ "time": st.time }))
}

pub fn load_vlasov(path: &Path) -> Result<VlasovState> {
    let (kind, grid, values, meta) = load_phase_field(path)?;
    if kind != "vlasov" {
        return Err(Error::Format(format!("expected a vlasov file, found {kind}")));
    }
    let mut st = VlasovState::new(grid, values)?;
    st.time = meta_field(&meta, "time")?;
    Ok(st)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{slater_density, OrbitalKind, SlaterState};

    #[test]
    fn density_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let grid = SpatialGrid::new(1, 32, 6.0).unwrap();
        let st = SlaterState::build(OrbitalKind::Gaussians, grid, 3, 0.3, 7).unwrap();
        let gamma = slater_density(&st).unwrap();
        let path = dir.path().join("g.bin");
        save_density(&path, &gamma, 0.25).unwrap();
        let (back, t) = load_density(&path).unwrap();
        assert_eq!(back, gamma);
        assert_eq!(t, 0.25);
    }

    #[test]
    fn corruption_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.bin");
        let grid = PhaseGrid::from_extents(1, 8, 2.0, 8, 1.0).unwrap();
        save_phase_field(&path, "husimi", &grid, &[0.5; 64], serde_json::json!({"hbar": 1.0, "particles": 1})).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        let last = bytes.len() - 3;
        bytes[last] ^= 0x40;
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_husimi(&path), Err(Error::Format(_))));
        fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(load_husimi(&path), Err(Error::Format(_))));
    }
}
