//! Polytope and potential files.
//!
//! A potential file is a JSON header naming the polytope (spec and hash),
//! the grid and the normalization flag, followed by the deviation values at
//! the inside nodes in row-major order. Small grids keep the values inline;
//! larger ones store them as little-endian `f64` in a sidecar next to the
//! header.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Domain, DomainRef, Grid};
use crate::model::ToricModel;
use crate::polytope::{Polytope, PolytopeSpec};
use crate::potential::{ConvexPolicy, SymplecticPotential};

pub const FORMAT: &str = "kfl-potential/1";

/// Values up to this count are written inline.
pub const INLINE_LIMIT: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialHeader {
    pub format: String,
    pub polytope: PolytopeSpec,
    pub polytope_hash: String,
    pub grid: Grid,
    /// Number of inside nodes, i.e. of stored values.
    pub nodes: usize,
    pub normalized: bool,
    pub convexified: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    /// Sidecar file name, relative to the header.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sidecar: Option<String>,
}

pub fn read_polytope(path: &Path) -> Result<Polytope> {
    let spec: PolytopeSpec = serde_json::from_slice(&fs::read(path)?)?;
    Polytope::from_spec(&spec)
}

pub fn write_polytope(path: &Path, p: &Polytope) -> Result<()> {
    fs::write(path, serde_json::to_vec_pretty(&p.spec())?)?;
    Ok(())
}

fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("f64")
}

/// Writes `u`; the sidecar goes to `<path>.f64` when the grid is large.
pub fn write_potential(path: &Path, u: &SymplecticPotential) -> Result<()> {
    let d = u.domain();
    let inline = u.values().len() <= INLINE_LIMIT;
    let sidecar = sidecar_path(path);
    let header = PotentialHeader {
        format: FORMAT.into(),
        polytope: d.polytope().spec(),
        polytope_hash: d.polytope().hash().to_string(),
        grid: *d.grid(),
        nodes: d.len(),
        normalized: u.is_normalized(),
        convexified: u.is_convexified(),
        values: inline.then(|| u.values().to_vec()),
        sidecar: (!inline).then(|| {
            sidecar
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default()
        }),
    };
    if !inline {
        let bytes: Vec<u8> = u.values().iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(&sidecar, bytes)?;
    }
    fs::write(path, serde_json::to_vec_pretty(&header)?)?;
    Ok(())
}

pub fn read_header(path: &Path) -> Result<PotentialHeader> {
    let h: PotentialHeader = serde_json::from_slice(&fs::read(path)?)?;
    if h.format != FORMAT {
        return Err(Error::InvalidInput(format!(
            "unknown potential format {:?}",
            h.format
        )));
    }
    Ok(h)
}

/// Builds the domain a header describes, checking the stored hash.
pub fn header_domain(h: &PotentialHeader) -> Result<DomainRef> {
    let p = Polytope::from_spec(&h.polytope)?;
    if p.hash() != h.polytope_hash {
        return Err(Error::InvalidInput(format!(
            "polytope hash {} does not match the stored {}",
            p.hash(),
            h.polytope_hash
        )));
    }
    Domain::with_grid(ToricModel::new(p), h.grid)
}

/// Reads a potential, building its domain from the header.
pub fn read_potential(path: &Path) -> Result<SymplecticPotential> {
    let h = read_header(path)?;
    let d = header_domain(&h)?;
    read_potential_on(path, &h, &d)
}

/// Reads a potential onto an existing compatible domain, so that several
/// files share one.
pub fn read_potential_on(
    path: &Path,
    h: &PotentialHeader,
    domain: &DomainRef,
) -> Result<SymplecticPotential> {
    if h.polytope_hash != domain.polytope().hash()
        || h.grid != *domain.grid()
        || h.nodes != domain.len()
    {
        return Err(Error::GridMismatch);
    }
    let values = match (&h.values, &h.sidecar) {
        (Some(v), _) => v.clone(),
        (None, Some(name)) => {
            let file = path.parent().unwrap_or(Path::new(".")).join(name);
            let bytes = fs::read(&file)?;
            if bytes.len() != 8 * h.nodes {
                return Err(Error::InvalidInput(format!(
                    "sidecar {} holds {} bytes, expected {}",
                    file.display(),
                    bytes.len(),
                    8 * h.nodes
                )));
            }
            bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of eight")))
                .collect()
        }
        (None, None) => return Err(Error::InvalidInput("potential file has no values".into())),
    };
    let u = SymplecticPotential::from_values(domain, values, ConvexPolicy::Strict)?;
    Ok(u.set_flags(h.normalized, h.convexified))
}

/// A manifest entry: a potential file and its label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub label: String,
    pub path: PathBuf,
}

/// Reads a manifest (JSON list of `{label, path}`); relative paths resolve
/// against the manifest's directory.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let mut entries: Vec<ManifestEntry> = serde_json::from_slice(&fs::read(path)?)?;
    let base = path.parent().unwrap_or(Path::new("."));
    for e in &mut entries {
        if e.path.is_relative() {
            e.path = base.join(&e.path);
        }
    }
    Ok(entries)
}

/// Loads every manifest entry onto one shared domain.
pub fn load_manifest(path: &Path) -> Result<Vec<(String, SymplecticPotential)>> {
    let entries = read_manifest(path)?;
    let mut domain: Option<DomainRef> = None;
    let mut out = Vec::with_capacity(entries.len());
    for e in entries {
        let h = read_header(&e.path)?;
        let d = match &domain {
            Some(d) => d.clone(),
            None => {
                let d = header_domain(&h)?;
                domain = Some(d.clone());
                d
            }
        };
        out.push((e.label, read_potential_on(&e.path, &h, &d)?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{potential, Family};

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        for (name, nodes) in [("dp3", 33), ("dp3", 129), ("p1", 8193)] {
            let d = Domain::named(name, nodes).unwrap();
            let u = potential(&d, Family::Bumps, 5, true).unwrap();
            let path = dir.path().join(format!("{name}-{nodes}.json"));
            write_potential(&path, &u).unwrap();
            let h = read_header(&path).unwrap();
            assert_eq!(h.values.is_some(), d.len() <= INLINE_LIMIT);
            let back = read_potential(&path).unwrap();
            assert!(back
                .values()
                .iter()
                .zip(u.values())
                .all(|(a, b)| a.to_bits() == b.to_bits()));
            assert!(back.is_normalized());
            assert_eq!(back.domain().grid(), d.grid());
            back.same_domain(&u).unwrap();
        }
    }

    #[test]
    fn tampered_hash_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let d = Domain::named("p2", 17).unwrap();
        let path = dir.path().join("u.json");
        write_potential(&path, &SymplecticPotential::reference(&d)).unwrap();
        let mut h = read_header(&path).unwrap();
        h.polytope_hash = "00".into();
        fs::write(&path, serde_json::to_vec(&h).unwrap()).unwrap();
        assert!(matches!(read_potential(&path), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn manifest_shares_the_domain() {
        let dir = tempfile::tempdir().unwrap();
        let d = Domain::named("dp3", 33).unwrap();
        for s in 0..3 {
            write_potential(
                &dir.path().join(format!("u{s}.json")),
                &potential(&d, Family::Quadratic, s, true).unwrap(),
            )
            .unwrap();
        }
        let m = dir.path().join("m.json");
        fs::write(&m, r#"[{"label":"a","path":"u0.json"},{"label":"b","path":"u1.json"},{"label":"c","path":"u2.json"}]"#)
            .unwrap();
        let loaded = load_manifest(&m).unwrap();
        assert_eq!(loaded.len(), 3);
        assert!(std::sync::Arc::ptr_eq(
            loaded[0].1.domain(),
            loaded[2].1.domain()
        ));
    }
}
