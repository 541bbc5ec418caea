//! Externally computed per-volume features.
//!
//! Little-endian layout:
//!
//! ```text
//! magic      b"EVF1"
//! u32        component count
//! per comp.  u32 name length, UTF-8 name, u32 dim
//! u64        record count
//! per record u32 region_index, u64 frame_start,
//!            f32 x dim for each component in header order, u8 cls
//! ```
//!
//! The components must be exactly `app`, `ang`, `mag` and `bkg`, in any order.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::features::{Component, ComponentDims};

pub const FEATURE_MAGIC: &[u8; 4] = b"EVF1";
const MAX_NAME_LEN: u32 = 256;

/// Position of a volume in a video: grid region and first frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VolumeKey {
    pub frame_start: u64,
    pub region_index: u32,
}

impl VolumeKey {
    pub fn new(region_index: usize, frame_start: usize) -> Self {
        Self {
            frame_start: frame_start as u64,
            region_index: region_index as u32,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportedRecord {
    pub app: Vec<f32>,
    pub ang: Vec<f32>,
    pub mag: Vec<f32>,
    pub bkg: Vec<f32>,
    pub cls: bool,
}

impl ImportedRecord {
    fn component_mut(&mut self, c: Component) -> &mut Vec<f32> {
        match c {
            Component::App => &mut self.app,
            Component::Ang => &mut self.ang,
            Component::Mag => &mut self.mag,
            Component::Bkg => &mut self.bkg,
        }
    }

    fn component(&self, c: Component) -> &[f32] {
        match c {
            Component::App => &self.app,
            Component::Ang => &self.ang,
            Component::Mag => &self.mag,
            Component::Bkg => &self.bkg,
        }
    }
}

/// Records keyed by volume; iteration order is ingest order (window, then region).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub dims: ComponentDims,
    pub records: BTreeMap<VolumeKey, ImportedRecord>,
}

impl FeatureTable {
    pub fn new(dims: ComponentDims) -> Self {
        Self {
            dims,
            records: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let eof = |e| Error::from_read(e, "feature file");
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(eof)?;
        if &magic != FEATURE_MAGIC {
            return Err(Error::Format(format!("bad feature file magic {magic:?}")));
        }
        let ncomp = r.read_u32::<LittleEndian>().map_err(eof)?;
        let mut order = Vec::new();
        let mut dims: BTreeMap<Component, usize> = BTreeMap::new();
        for _ in 0..ncomp {
            let len = r.read_u32::<LittleEndian>().map_err(eof)?;
            if len > MAX_NAME_LEN {
                return Err(Error::Format(format!("component name length {len} too long")));
            }
            let mut name = vec![0u8; len as usize];
            r.read_exact(&mut name).map_err(eof)?;
            let name = String::from_utf8(name).map_err(|_| Error::Format("component name is not UTF-8".into()))?;
            let comp: Component = name
                .parse()
                .map_err(|_| Error::Format(format!("unknown component {name:?}")))?;
            let dim = r.read_u32::<LittleEndian>().map_err(eof)? as usize;
            if dims.insert(comp, dim).is_some() {
                return Err(Error::Format(format!("component {name:?} declared twice")));
            }
            order.push(comp);
        }
        let get = |c: Component| {
            dims.get(&c)
                .copied()
                .ok_or_else(|| Error::Format(format!("header lacks component {:?}", c.name())))
        };
        let dims = ComponentDims {
            app: get(Component::App)?,
            ang: get(Component::Ang)?,
            mag: get(Component::Mag)?,
            bkg: get(Component::Bkg)?,
        };

        let count = r.read_u64::<LittleEndian>().map_err(eof)?;
        let mut table = FeatureTable::new(dims);
        for i in 0..count {
            let region_index = r.read_u32::<LittleEndian>().map_err(eof)?;
            let frame_start = r.read_u64::<LittleEndian>().map_err(eof)?;
            let mut rec = ImportedRecord {
                app: Vec::new(),
                ang: Vec::new(),
                mag: Vec::new(),
                bkg: Vec::new(),
                cls: false,
            };
            for &c in &order {
                let v = rec.component_mut(c);
                v.resize(dims.get(c), 0.0);
                r.read_f32_into::<LittleEndian>(v).map_err(eof)?;
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Format(format!("record {i} has a non-finite {} entry", c.name())));
                }
            }
            rec.cls = match r.read_u8().map_err(eof)? {
                0 => false,
                1 => true,
                b => return Err(Error::Format(format!("record {i} has cls byte {b}"))),
            };
            let key = VolumeKey {
                frame_start,
                region_index,
            };
            if table.records.insert(key, rec).is_some() {
                return Err(Error::Format(format!(
                    "duplicate record for region {region_index} frame {frame_start}"
                )));
            }
        }
        Ok(table)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(FEATURE_MAGIC)?;
        w.write_u32::<LittleEndian>(Component::ALL.len() as u32)?;
        for c in Component::ALL {
            w.write_u32::<LittleEndian>(c.name().len() as u32)?;
            w.write_all(c.name().as_bytes())?;
            w.write_u32::<LittleEndian>(self.dims.get(c) as u32)?;
        }
        w.write_u64::<LittleEndian>(self.records.len() as u64)?;
        for (key, rec) in &self.records {
            w.write_u32::<LittleEndian>(key.region_index)?;
            w.write_u64::<LittleEndian>(key.frame_start)?;
            for c in Component::ALL {
                let v = rec.component(c);
                if v.len() != self.dims.get(c) {
                    return Err(Error::Dimension(format!(
                        "{} has {} entries, header declares {}",
                        c.name(),
                        v.len(),
                        self.dims.get(c)
                    )));
                }
                for &x in v {
                    w.write_f32::<LittleEndian>(x)?;
                }
            }
            w.write_u8(rec.cls as u8)?;
        }
        Ok(())
    }
}

pub fn import_features(path: &Path) -> Result<FeatureTable> {
    let bytes = std::fs::read(path).map_err(|e| Error::ingest(path, e.to_string()))?;
    FeatureTable::read_from(bytes.as_slice()).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn export_features(table: &FeatureTable, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    table.write_to(&mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}
