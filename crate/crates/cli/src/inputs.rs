//! Geometry and patch inputs: `rect:WxH`, `mask:FILE`, `circle:R`,
//! `circles:R,GAP`, plus mask bitmap files.

use std::path::Path;

use cropdp::geometry::{CropConfig, Mask, PatchShape, PatchSpec, Placement, Position, Rect};

use crate::params::{invalid, parse_pair, parse_size, Invalid, Params, Result};

pub fn parse_patch(spec: &str) -> Result<PatchShape> {
    let (kind, arg) = spec.split_once(':').unwrap_or(("rect", spec));
    let shape = match kind {
        "rect" => {
            let (w, h) = parse_size(arg)?;
            PatchShape::Rect(Rect::new(w, h))
        }
        "mask" => PatchShape::Mask(read_mask(Path::new(arg))?),
        "circle" => {
            let r = arg
                .trim()
                .parse()
                .map_err(|_| Invalid(format!("circle radius {arg:?} is not an integer")))?;
            PatchShape::Mask(Mask::disk(r).map_err(core_invalid)?)
        }
        "circles" => {
            let (r, gap) = parse_pair(arg)?;
            PatchShape::Mask(Mask::disk_cluster(r, gap).map_err(core_invalid)?)
        }
        other => {
            return invalid(format!(
                "unknown patch kind {other:?}; use rect:WxH, mask:FILE, circle:R or circles:R,GAP"
            ))
        }
    };
    Ok(shape)
}

fn core_invalid(e: cropdp::Error) -> Invalid {
    Invalid(e.to_string())
}

/// Reads a mask from a plain-text 0/1 bitmap or a PBM (`P1` or `P4`) file.
pub fn read_mask(path: &Path) -> Result<Mask> {
    let bytes = std::fs::read(path)
        .map_err(|e| Invalid(format!("cannot read mask {}: {e}", path.display())))?;
    let rows = parse_mask_bytes(&bytes)
        .map_err(|e| Invalid(format!("mask {}: {}", path.display(), e.0)))?;
    Mask::from_rows(&rows).map_err(|e| Invalid(format!("mask {}: {e}", path.display())))
}

pub fn parse_mask_bytes(bytes: &[u8]) -> Result<Vec<Vec<bool>>> {
    if bytes.starts_with(b"P4") {
        return parse_pbm_binary(bytes);
    }
    let text = std::str::from_utf8(bytes).map_err(|_| Invalid("mask is not valid text".into()))?;
    if text.starts_with("P1") {
        parse_pbm_plain(text)
    } else {
        parse_text_bitmap(text)
    }
}

fn parse_text_bitmap(text: &str) -> Result<Vec<Vec<bool>>> {
    let mut rows = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => invalid(format!("unexpected character {c:?} in bitmap")),
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    check_rectangular(rows)
}

fn check_rectangular(rows: Vec<Vec<bool>>) -> Result<Vec<Vec<bool>>> {
    if rows.is_empty() {
        return invalid("bitmap has no rows");
    }
    let w = rows[0].len();
    if rows.iter().any(|r| r.len() != w) {
        return invalid("bitmap rows have different lengths");
    }
    Ok(rows)
}

/// Whitespace-separated header tokens with `#` comments removed.
fn pbm_tokens(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace)
}

fn parse_pbm_plain(text: &str) -> Result<Vec<Vec<bool>>> {
    let mut tokens = pbm_tokens(text).skip(1);
    let (w, h) = pbm_dims(&mut tokens)?;
    // plain PBM pixels may be run together without separators
    let bits: Vec<bool> = tokens
        .flat_map(str::chars)
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            _ => invalid(format!("unexpected character {c:?} in P1 raster")),
        })
        .collect::<Result<_>>()?;
    if bits.len() != w * h {
        return invalid(format!(
            "P1 raster has {} pixels, header says {w}x{h}",
            bits.len()
        ));
    }
    check_rectangular(bits.chunks(w).map(<[bool]>::to_vec).collect())
}

fn pbm_dims<'a>(tokens: &mut impl Iterator<Item = &'a str>) -> Result<(usize, usize)> {
    let mut next = || -> Result<usize> {
        let t = tokens
            .next()
            .ok_or_else(|| Invalid("truncated PBM header".into()))?;
        t.parse()
            .map_err(|_| Invalid(format!("bad PBM dimension {t:?}")))
    };
    let (w, h) = (next()?, next()?);
    if w == 0 || h == 0 {
        return invalid("PBM image is empty");
    }
    Ok((w, h))
}

fn parse_pbm_binary(bytes: &[u8]) -> Result<Vec<Vec<bool>>> {
    // header: magic, width, height, then one whitespace byte before the raster
    let mut pos = 2;
    let mut dims = Vec::new();
    while dims.len() < 2 {
        match bytes.get(pos) {
            None => return invalid("truncated PBM header"),
            Some(b'#') => {
                while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                    pos += 1;
                }
            }
            Some(b) if b.is_ascii_whitespace() => pos += 1,
            Some(b) if b.is_ascii_digit() => {
                let start = pos;
                while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
                    pos += 1;
                }
                let s = std::str::from_utf8(&bytes[start..pos]).unwrap_or("");
                dims.push(
                    s.parse::<usize>()
                        .map_err(|_| Invalid(format!("bad PBM dimension {s:?}")))?,
                );
            }
            Some(b) => return invalid(format!("unexpected byte {b:#04x} in PBM header")),
        }
    }
    let (w, h) = (dims[0], dims[1]);
    if w == 0 || h == 0 {
        return invalid("PBM image is empty");
    }
    pos += 1;
    let stride = w.div_ceil(8);
    let raster = bytes
        .get(pos..pos + stride * h)
        .ok_or_else(|| Invalid("truncated P4 raster".into()))?;
    Ok(raster
        .chunks(stride)
        .map(|row| {
            (0..w)
                .map(|x| row[x / 8] & (0x80 >> (x % 8)) != 0)
                .collect()
        })
        .collect())
}

pub fn crop_config(p: &mut Params, image_default: &str, crop_default: &str) -> Result<CropConfig> {
    let image = p.size("image", Some(image_default))?;
    let pad = p.pair("pad", Some("0,0"))?;
    let crop = p.size("crop", Some(crop_default))?;
    CropConfig::new(image, pad, crop).map_err(core_invalid)
}

/// `--at X,Y` or `--worst-case`; both land in the `at` parameter.
pub fn placement(p: &mut Params) -> Result<Placement> {
    let raw = p.raw("at", Some("worst-case"))?;
    if raw == "worst-case" {
        return Ok(Placement::WorstCase);
    }
    let (x, y) = parse_pair(&raw)?;
    Ok(Placement::At(Position::new(x, y)))
}

pub fn patch_spec(p: &mut Params, default: &str) -> Result<PatchSpec> {
    let shape = parse_patch(&p.raw("patch", Some(default))?)?;
    Ok(PatchSpec {
        shape,
        placement: placement(p)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_bitmap() {
        let rows = parse_mask_bytes(b"# ring\n010\n1 0 1\n010\n").unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[1], vec![true, false, true]);
        assert!(parse_mask_bytes(b"01\n011\n").is_err());
        assert!(parse_mask_bytes(b"02\n").is_err());
    }

    #[test]
    fn plain_pbm() {
        let rows = parse_mask_bytes(b"P1\n# comment\n3 2\n1 0 1\n011\n").unwrap();
        assert_eq!(rows, vec![vec![true, false, true], vec![false, true, true]]);
        assert!(parse_mask_bytes(b"P1\n3 2\n1 0 1\n").is_err());
    }

    #[test]
    fn binary_pbm() {
        // 10 pixels wide: two bytes per row
        let mut bytes = b"P4\n10 2\n".to_vec();
        bytes.extend_from_slice(&[0b1000_0000, 0b0100_0000, 0b0000_0001, 0b0000_0000]);
        let rows = parse_mask_bytes(&bytes).unwrap();
        assert_eq!(rows[0].iter().filter(|&&b| b).count(), 2);
        assert!(rows[0][0] && rows[0][9]);
        assert!(rows[1][7]);
        assert!(parse_mask_bytes(b"P4\n10 2\n\x00").is_err());
    }

    #[test]
    fn patch_kinds() {
        assert_eq!(
            parse_patch("rect:4x3").unwrap(),
            PatchShape::Rect(Rect::new(4, 3))
        );
        assert_eq!(parse_patch("7").unwrap(), PatchShape::Rect(Rect::square(7)));
        assert!(matches!(
            parse_patch("circle:3").unwrap(),
            PatchShape::Mask(_)
        ));
        assert!(matches!(
            parse_patch("circles:2,1").unwrap(),
            PatchShape::Mask(_)
        ));
        assert!(parse_patch("hexagon:3").is_err());
    }
}
