use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::IoError;

/// One exported map point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlyVertex {
    pub position: [f32; 3],
    pub color: [u8; 3],
}

fn header(count: usize) -> String {
    format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {count}\n\
         property float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n"
    )
}

/// Writes a header declaring `count` vertices followed by the records. Fails without
/// writing past the last record if `vertices` does not yield exactly `count` items.
pub fn write_ply_to<W: Write>(
    out: &mut W,
    count: usize,
    vertices: impl IntoIterator<Item = PlyVertex>,
) -> Result<(), IoError> {
    let io = |e: std::io::Error| IoError::Invalid(e.to_string());
    out.write_all(header(count).as_bytes()).map_err(io)?;
    let mut written = 0;
    for v in vertices {
        if written == count {
            return Err(IoError::PlyCount { declared: count, written: written + 1 });
        }
        for c in v.position {
            out.write_f32::<LittleEndian>(c).map_err(io)?;
        }
        out.write_all(&v.color).map_err(io)?;
        written += 1;
    }
    if written != count {
        return Err(IoError::PlyCount { declared: count, written });
    }
    Ok(())
}

/// Writes to a sibling temporary file and renames it into place, so an aborted write
/// leaves no partial file behind.
pub fn write_ply(path: &Path, vertices: &[PlyVertex]) -> Result<(), IoError> {
    let tmp = path.with_extension("ply.partial");
    let result = (|| {
        let file = std::fs::File::create(&tmp).map_err(|e| IoError::file(&tmp, e))?;
        let mut w = std::io::BufWriter::new(file);
        write_ply_to(&mut w, vertices.len(), vertices.iter().copied())?;
        w.flush().map_err(|e| IoError::file(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| IoError::file(path, e))
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result
}

/// Reads files in the layout produced by [`write_ply`].
pub fn read_ply(path: &Path) -> Result<Vec<PlyVertex>, IoError> {
    let file = std::fs::File::open(path).map_err(|e| IoError::file(path, e))?;
    let mut r = BufReader::new(file);
    let mut count = None;
    let mut line = String::new();
    let mut lineno = 0;
    loop {
        line.clear();
        lineno += 1;
        if r.read_line(&mut line).map_err(|e| IoError::file(path, e))? == 0 {
            return Err(IoError::ParseFile { path: path.display().to_string(), line: lineno, message: "missing end_header".into() });
        }
        let l = line.trim_end();
        if l == "end_header" {
            break;
        }
        if let Some(n) = l.strip_prefix("element vertex ") {
            count = n.trim().parse::<usize>().ok();
        }
    }
    let count = count.ok_or_else(|| IoError::file(path, "no vertex count in header"))?;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut position = [0f32; 3];
        for c in &mut position {
            *c = r.read_f32::<LittleEndian>().map_err(|e| IoError::file(path, e))?;
        }
        let mut color = [0u8; 3];
        r.read_exact(&mut color).map_err(|e| IoError::file(path, e))?;
        out.push(PlyVertex { position, color });
    }
    Ok(out)
}
