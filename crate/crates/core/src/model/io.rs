//! Binary scene model file.
//!
//! ```text
//! magic     b"EVM1"
//! u32       format version
//! u32 x 4   frame height, frame width, region height, region width
//! u32       t
//! f32       exemplar threshold
//! f32 x 4   Z_app, Z_ang, Z_mag, Z_bkg
//! u32 x 4   dims app, ang, mag, bkg
//! u8        feature source (0 builtin, 1 imported)
//! f64 x 2   th_mot, th_bkg
//! u32       videos seen
//! u32 + str effective config (UTF-8)
//! u32       region count
//! per region:
//!   u32 region index, u32 exemplar count
//!   per exemplar: u32 video, u64 frame_start, u8 cls,
//!                 f32 payload app, ang, mag, bkg
//! ```
//!
//! Everything is little-endian.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{Provenance, RegionModel, SceneModel};
use crate::attributes::{FeatureSource, FlowThresholds};
use crate::error::{Error, Result};
use crate::features::{Component, ComponentDims, FeatureVector, Normalizers};
use crate::ingest::RegionGrid;

pub const MODEL_MAGIC: &[u8; 4] = b"EVM1";
pub const MODEL_FORMAT_VERSION: u32 = 1;

const MAX_CONFIG_LEN: u32 = 1 << 24;

impl SceneModel {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let (fh, fw) = self.grid.frame_dims();
        let (rh, rw) = self.grid.region_size();
        w.write_all(MODEL_MAGIC)?;
        w.write_u32::<LittleEndian>(MODEL_FORMAT_VERSION)?;
        for v in [fh, fw, rh, rw, self.t] {
            w.write_u32::<LittleEndian>(v as u32)?;
        }
        w.write_f32::<LittleEndian>(self.th)?;
        for c in Component::ALL {
            w.write_f32::<LittleEndian>(self.normalizers.get(c))?;
        }
        for c in Component::ALL {
            w.write_u32::<LittleEndian>(self.dims.get(c) as u32)?;
        }
        w.write_u8(match self.source {
            FeatureSource::Builtin => 0,
            FeatureSource::Imported => 1,
        })?;
        w.write_f64::<LittleEndian>(self.flow_thresholds.th_mot)?;
        w.write_f64::<LittleEndian>(self.flow_thresholds.th_bkg)?;
        w.write_u32::<LittleEndian>(self.videos_seen)?;
        w.write_u32::<LittleEndian>(self.config.len() as u32)?;
        w.write_all(self.config.as_bytes())?;
        w.write_u32::<LittleEndian>(self.regions.len() as u32)?;
        for rm in &self.regions {
            w.write_u32::<LittleEndian>(rm.region_index as u32)?;
            w.write_u32::<LittleEndian>(rm.len() as u32)?;
            for (f, p) in rm.exemplars().iter().zip(rm.provenance()) {
                w.write_u32::<LittleEndian>(p.video)?;
                w.write_u64::<LittleEndian>(p.frame_start)?;
                w.write_u8(f.cls as u8)?;
                for c in Component::ALL {
                    for &x in f.component(c) {
                        w.write_f32::<LittleEndian>(x)?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let eof = |e| Error::from_read(e, "model file");
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(eof)?;
        if &magic != MODEL_MAGIC {
            return Err(Error::Format(format!("bad model magic {magic:?}")));
        }
        let version = r.read_u32::<LittleEndian>().map_err(eof)?;
        if version != MODEL_FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: MODEL_FORMAT_VERSION,
            });
        }
        let mut geo = [0usize; 5];
        for g in geo.iter_mut() {
            *g = r.read_u32::<LittleEndian>().map_err(eof)? as usize;
        }
        let grid = RegionGrid::new((geo[0], geo[1]), (geo[2], geo[3]))
            .map_err(|e| Error::Format(format!("stored grid is invalid: {e}")))?;
        let t = geo[4];
        let th = r.read_f32::<LittleEndian>().map_err(eof)?;
        let mut z = [0f32; 4];
        r.read_f32_into::<LittleEndian>(&mut z).map_err(eof)?;
        let normalizers = Normalizers {
            app: z[0],
            ang: z[1],
            mag: z[2],
            bkg: z[3],
        };
        normalizers
            .validate()
            .map_err(|e| Error::Format(format!("stored normalizers: {e}")))?;
        let mut d = [0usize; 4];
        for x in d.iter_mut() {
            *x = r.read_u32::<LittleEndian>().map_err(eof)? as usize;
        }
        let dims = ComponentDims {
            app: d[0],
            ang: d[1],
            mag: d[2],
            bkg: d[3],
        };
        let source = match r.read_u8().map_err(eof)? {
            0 => FeatureSource::Builtin,
            1 => FeatureSource::Imported,
            b => return Err(Error::Format(format!("unknown feature source tag {b}"))),
        };
        let flow_thresholds = FlowThresholds {
            th_mot: r.read_f64::<LittleEndian>().map_err(eof)?,
            th_bkg: r.read_f64::<LittleEndian>().map_err(eof)?,
        };
        let videos_seen = r.read_u32::<LittleEndian>().map_err(eof)?;
        let clen = r.read_u32::<LittleEndian>().map_err(eof)?;
        if clen > MAX_CONFIG_LEN {
            return Err(Error::Format(format!("config block of {clen} bytes is implausible")));
        }
        let mut cbuf = vec![0u8; clen as usize];
        r.read_exact(&mut cbuf).map_err(eof)?;
        let config = String::from_utf8(cbuf).map_err(|_| Error::Format("config block is not UTF-8".into()))?;

        let nregions = r.read_u32::<LittleEndian>().map_err(eof)? as usize;
        if nregions != grid.len() {
            return Err(Error::Format(format!(
                "model has {nregions} regions but its grid has {}",
                grid.len()
            )));
        }
        let mut regions = Vec::with_capacity(nregions);
        for expected in 0..nregions {
            let index = r.read_u32::<LittleEndian>().map_err(eof)? as usize;
            if index != expected {
                return Err(Error::Format(format!("region block {expected} is labelled {index}")));
            }
            let count = r.read_u32::<LittleEndian>().map_err(eof)? as usize;
            let mut exemplars = Vec::new();
            let mut provenance = Vec::new();
            for _ in 0..count {
                let video = r.read_u32::<LittleEndian>().map_err(eof)?;
                let frame_start = r.read_u64::<LittleEndian>().map_err(eof)?;
                let cls = match r.read_u8().map_err(eof)? {
                    0 => false,
                    1 => true,
                    b => return Err(Error::Format(format!("exemplar cls byte {b}"))),
                };
                let mut read_vec = |n: usize| -> Result<Vec<f32>> {
                    let mut v = vec![0f32; n];
                    r.read_f32_into::<LittleEndian>(&mut v).map_err(eof)?;
                    Ok(v)
                };
                let app = read_vec(dims.app)?;
                let ang = read_vec(dims.ang)?;
                let mag = read_vec(dims.mag)?;
                let bkg = read_vec(dims.bkg)?;
                let f = FeatureVector::new(app, ang, mag, bkg, cls)
                    .map_err(|e| Error::Format(format!("stored exemplar: {e}")))?;
                exemplars.push(f);
                provenance.push(Provenance { video, frame_start });
            }
            regions.push(RegionModel::from_parts(index, exemplars, provenance));
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(Error::Format("trailing bytes after the last region".into()));
        }
        Ok(SceneModel {
            grid,
            t,
            normalizers,
            th,
            dims,
            source,
            flow_thresholds,
            videos_seen,
            config,
            regions,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }
}

pub fn save_model(model: &SceneModel, path: &Path) -> Result<()> {
    std::fs::write(path, model.to_bytes())?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<SceneModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::ingest(path, e.to_string()))?;
    SceneModel::read_from(bytes.as_slice())
}
