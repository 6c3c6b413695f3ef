//! Mask images (8-bit PGM or PNG, value > 127 = pore) and their `.meta` sidecars.

use std::path::Path;

use crate::kv::KvMap;

use super::{PoreMask, PsdError};

/// Sidecar keys: `scale_nm_per_px` (required), `group`, `replicate_id`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskMeta {
    pub scale: f64,
    /// Replicates sharing a group are aggregated together.
    pub group: String,
    pub replicate_id: String,
}

impl MaskMeta {
    pub fn parse(text: &str, fallback_id: &str) -> Result<Self, PsdError> {
        let kv = KvMap::parse(text)?;
        let replicate_id = kv.get_str("replicate_id").unwrap_or(fallback_id).to_string();
        Ok(Self {
            scale: kv.require("scale_nm_per_px")?,
            group: kv.get_str("group").unwrap_or(&replicate_id).to_string(),
            replicate_id,
        })
    }

    pub fn to_text(&self) -> String {
        let mut kv = KvMap::default();
        kv.insert("scale_nm_per_px", self.scale);
        kv.insert("group", &self.group);
        kv.insert("replicate_id", &self.replicate_id);
        kv.to_text()
    }
}

/// Thresholds a decoded image at 127.
pub fn read_mask_image(path: &Path, scale: f64, replicate_id: &str) -> Result<PoreMask, PsdError> {
    let img = image::open(path)?.into_luma8();
    let (w, h) = img.dimensions();
    let bits = img.pixels().map(|p| p.0[0] > 127).collect();
    PoreMask::new(w as usize, h as usize, bits, scale, replicate_id)
}

/// Reads `<stem>.pgm|png` together with `<stem>.meta`.
pub fn load_mask(path: &Path) -> Result<(PoreMask, MaskMeta), PsdError> {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("").to_string();
    let meta_text = std::fs::read_to_string(path.with_extension("meta"))?;
    let meta = MaskMeta::parse(&meta_text, &stem)?;
    let mask = read_mask_image(path, meta.scale, &meta.replicate_id)?;
    Ok((mask, meta))
}

/// Writes a binary PGM (255 = pore).
pub fn write_mask_pgm(mask: &PoreMask, path: &Path) -> Result<(), PsdError> {
    let pixels: Vec<u8> = mask.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
    let buf = image::GrayImage::from_raw(mask.width as u32, mask.height as u32, pixels)
        .ok_or_else(|| PsdError::InvalidMask("raster size mismatch".into()))?;
    buf.save_with_format(path, image::ImageFormat::Pnm)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_and_meta_round_trip() {
        let dir = std::env::temp_dir().join(format!("mm-psd-io-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let mut mask = PoreMask::blank(7, 5, 0.5);
        mask.set(2, 1, true);
        mask.set(6, 4, true);
        let path = dir.join("r1.pgm");
        write_mask_pgm(&mask, &path).unwrap();
        let meta = MaskMeta {
            scale: 0.5,
            group: "PSf10".into(),
            replicate_id: "r1".into(),
        };
        std::fs::write(path.with_extension("meta"), meta.to_text()).unwrap();
        let (back, meta_back) = load_mask(&path).unwrap();
        assert_eq!(back.bits, mask.bits);
        assert_eq!(meta_back, meta);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn meta_defaults() {
        let m = MaskMeta::parse("scale_nm_per_px = 0.9\n", "img3").unwrap();
        assert_eq!(m.replicate_id, "img3");
        assert_eq!(m.group, "img3");
        assert!(MaskMeta::parse("group = a\n", "x").is_err());
    }
}
