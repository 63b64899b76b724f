use super::{ElementTable, MolError, Molecule, Vec3};

/// Parses a single-frame XYZ document.
///
/// A `class=K` token in the comment line becomes the molecule's class id.
pub fn parse_xyz(text: &str) -> Result<Molecule, MolError> {
    let lines: Vec<&str> = text.lines().collect();
    let (mol, _comment, used) = parse_frame(&lines, 0)?;
    let trailing = lines[used..].iter().filter(|l| !l.trim().is_empty()).count();
    if trailing > 0 {
        return Err(MolError::CountMismatch {
            expected: mol.len(),
            found: mol.len() + trailing,
        });
    }
    Ok(mol)
}

/// Parses a concatenation of XYZ frames, returning each frame's comment line.
pub fn parse_xyz_frames(text: &str) -> Result<Vec<(String, Molecule)>, MolError> {
    let lines: Vec<&str> = text.lines().collect();
    let mut frames = Vec::new();
    let mut at = 0;
    while at < lines.len() {
        if lines[at].trim().is_empty() {
            at += 1;
            continue;
        }
        let (mol, comment, used) = parse_frame(&lines, at)?;
        frames.push((comment, mol));
        at = used;
    }
    Ok(frames)
}

fn parse_frame(lines: &[&str], start: usize) -> Result<(Molecule, String, usize), MolError> {
    let header = lines.get(start).map(|l| l.trim()).unwrap_or("");
    let count: usize = header
        .parse()
        .map_err(|_| MolError::BadCount(header.to_string()))?;
    if count == 0 {
        return Err(MolError::Empty);
    }
    let comment = lines.get(start + 1).copied().unwrap_or("").trim().to_string();
    let table = ElementTable::standard();
    let mut types = Vec::with_capacity(count);
    let mut coords = Vec::with_capacity(count);
    let body = lines.iter().enumerate().skip(start + 2);
    for (idx, line) in body.take(count) {
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            break;
        }
        if fields.len() < 4 {
            return Err(MolError::MissingFields { line: lineno });
        }
        let element = table
            .by_symbol(fields[0])
            .ok_or_else(|| MolError::UnknownSymbol {
                line: lineno,
                symbol: fields[0].to_string(),
            })?;
        let mut xyz = [0.0; 3];
        for (slot, raw) in xyz.iter_mut().zip(&fields[1..4]) {
            *slot = raw
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| MolError::BadCoordinate {
                    line: lineno,
                    value: raw.to_string(),
                })?;
        }
        types.push(element.charge);
        coords.push(Vec3::from(xyz));
    }
    if types.len() != count {
        return Err(MolError::CountMismatch {
            expected: count,
            found: types.len(),
        });
    }
    let class_id = comment
        .split_whitespace()
        .find_map(|tok| tok.strip_prefix("class=")?.parse().ok());
    let mol = Molecule::with_class(types, coords, class_id)?;
    Ok((mol, comment, start + 2 + count))
}

/// Serializes with six decimals, which round-trips to within 5e-7 Å.
pub fn write_xyz(mol: &Molecule) -> String {
    let table = ElementTable::standard();
    let mut out = format!("{}\n", mol.len());
    if let Some(class) = mol.class_id() {
        out.push_str(&format!("class={class}"));
    }
    for (z, c) in mol.atom_types().iter().zip(mol.coords()) {
        let symbol = &table
            .by_charge(*z)
            .expect("molecule charges are validated")
            .symbol;
        out.push_str(&format!("\n{symbol} {:.6} {:.6} {:.6}", c.x, c.y, c.z));
    }
    out
}
