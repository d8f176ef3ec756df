//! Reader/writer for a fixed-width V2000 connection-table subset: counts
//! line, atom block, bond block, `M  CHG` properties, `M  END`, records
//! separated by `$$$$`. Anything outside this subset is rejected with a line
//! number rather than skipped.

use crate::molecule::{BondKind, Molecule, MoleculeError, Vocabulary};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SdfError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("molecule has {0} atoms; V2000 supports at most 999")]
    TooLarge(usize),
    #[error("atom type index {0} not present in the vocabulary")]
    BadAtomIndex(usize),
    #[error("charge index {0} not present in the vocabulary")]
    BadChargeIndex(usize),
    #[error(transparent)]
    Molecule(#[from] MoleculeError),
}

fn parse_err(line: usize, msg: impl Into<String>) -> SdfError {
    SdfError::Parse {
        line,
        msg: msg.into(),
    }
}

struct Lines<'a> {
    lines: Vec<&'a str>,
    cursor: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            lines: text.lines().collect(),
            cursor: 0,
        }
    }

    /// 1-based number of the last yielded line.
    fn current(&self) -> usize {
        self.cursor
    }

    fn next(&mut self) -> Option<&'a str> {
        let line = self.lines.get(self.cursor)?;
        self.cursor += 1;
        Some(line)
    }

    fn expect(&mut self, what: &str) -> Result<&'a str, SdfError> {
        let at = self.cursor + 1;
        self.next()
            .ok_or_else(|| parse_err(at, format!("unexpected end of input, expected {what}")))
    }

    fn rest_is_blank(&self) -> bool {
        self.lines[self.cursor..].iter().all(|l| l.trim().is_empty())
    }
}

fn fixed_field<'a>(line: &'a str, start: usize, width: usize) -> Option<&'a str> {
    let end = (start + width).min(line.len());
    if start >= line.len() {
        return None;
    }
    Some(line[start..end].trim())
}

/// Parses every record in `text`. Atom symbols and charge values must exist
/// in `vocab`.
pub fn read_sdf_subset(text: &str, vocab: &Vocabulary) -> Result<Vec<Molecule>, SdfError> {
    let mut lines = Lines::new(text);
    let mut mols = Vec::new();
    loop {
        // A record starts right after the previous `$$$$`; only trailing
        // blank lines are allowed at the end of the file.
        if lines.rest_is_blank() {
            return Ok(mols);
        }
        let _title = lines.expect("title line")?;
        lines.expect("header line 2")?;
        lines.expect("header line 3")?;

        let counts_line = lines.expect("counts line")?;
        let counts_no = lines.current();
        let n_atoms: usize = fixed_field(counts_line, 0, 3)
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| parse_err(counts_no, "malformed counts line (atom count)"))?;
        let n_bonds: usize = fixed_field(counts_line, 3, 3)
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| parse_err(counts_no, "malformed counts line (bond count)"))?;
        if n_atoms == 0 {
            return Err(parse_err(counts_no, "record declares zero atoms"));
        }

        let mut coords = Vec::with_capacity(n_atoms);
        let mut atom_types = Vec::with_capacity(n_atoms);
        for _ in 0..n_atoms {
            let line = lines.expect("atom line")?;
            let no = lines.current();
            let mut xyz = [0.0; 3];
            for (d, c) in xyz.iter_mut().enumerate() {
                *c = fixed_field(line, d * 10, 10)
                    .and_then(|f| f.parse().ok())
                    .ok_or_else(|| parse_err(no, "malformed coordinate field"))?;
            }
            let symbol = line
                .get(30..)
                .and_then(|rest| rest.split_whitespace().next())
                .ok_or_else(|| parse_err(no, "missing element symbol"))?;
            let ty = vocab
                .atom_index(symbol)
                .ok_or_else(|| parse_err(no, format!("unknown element '{symbol}'")))?;
            coords.push(xyz);
            atom_types.push(ty);
        }

        let mut bonds = vec![0u8; n_atoms * n_atoms];
        for _ in 0..n_bonds {
            let line = lines.expect("bond line")?;
            let no = lines.current();
            let a: usize = fixed_field(line, 0, 3)
                .and_then(|f| f.parse().ok())
                .ok_or_else(|| parse_err(no, "malformed bond line"))?;
            let b: usize = fixed_field(line, 3, 3)
                .and_then(|f| f.parse().ok())
                .ok_or_else(|| parse_err(no, "malformed bond line"))?;
            let kind: u8 = fixed_field(line, 6, 3)
                .and_then(|f| f.parse().ok())
                .ok_or_else(|| parse_err(no, "malformed bond type"))?;
            if a == 0 || b == 0 || a > n_atoms || b > n_atoms {
                return Err(parse_err(
                    no,
                    format!("bond atom index out of range (indices are 1-based): {a} {b}"),
                ));
            }
            if a == b {
                return Err(parse_err(no, "bond connects an atom to itself"));
            }
            if !(1..=4).contains(&kind) {
                return Err(parse_err(no, format!("unsupported bond type {kind}")));
            }
            let (i, j) = (a - 1, b - 1);
            if bonds[i * n_atoms + j] != 0 {
                return Err(parse_err(no, format!("duplicate bond {a}-{b}")));
            }
            bonds[i * n_atoms + j] = kind;
            bonds[j * n_atoms + i] = kind;
        }

        let zero_charge = vocab.charge_index(0).ok_or_else(|| {
            parse_err(counts_no, "vocabulary does not contain formal charge 0")
        })?;
        let mut charges = vec![zero_charge; n_atoms];
        loop {
            let line = lines.expect("`M  END`")?;
            let no = lines.current();
            if line.starts_with("M  END") {
                break;
            }
            if let Some(rest) = line.strip_prefix("M  CHG") {
                let mut fields = rest.split_whitespace();
                let count: usize = fields
                    .next()
                    .and_then(|f| f.parse().ok())
                    .ok_or_else(|| parse_err(no, "malformed charge property"))?;
                for _ in 0..count {
                    let atom: usize = fields
                        .next()
                        .and_then(|f| f.parse().ok())
                        .ok_or_else(|| parse_err(no, "malformed charge entry"))?;
                    let value: i8 = fields
                        .next()
                        .and_then(|f| f.parse().ok())
                        .ok_or_else(|| parse_err(no, "malformed charge value"))?;
                    if atom == 0 || atom > n_atoms {
                        return Err(parse_err(no, format!("charge atom index {atom} out of range")));
                    }
                    let idx = vocab.charge_index(value).ok_or_else(|| {
                        parse_err(no, format!("formal charge {value} not in vocabulary"))
                    })?;
                    charges[atom - 1] = idx;
                }
            } else {
                return Err(parse_err(
                    no,
                    format!("unsupported record '{}'", line.trim_end()),
                ));
            }
        }

        let mol = Molecule::new(coords, atom_types, bonds, charges)?;
        mols.push(mol);

        // Everything up to the record separator must be blank; data items are
        // outside the subset.
        loop {
            match lines.next() {
                None => return Ok(mols),
                Some(l) if l.starts_with("$$$$") => break,
                Some(l) if l.trim().is_empty() => continue,
                Some(l) => {
                    return Err(parse_err(
                        lines.current(),
                        format!("unsupported data item '{}'", l.trim_end()),
                    ))
                }
            }
        }
    }
}

/// Formats one molecule as a V2000 record ending in `$$$$`.
pub fn write_sdf_record(mol: &Molecule, vocab: &Vocabulary) -> Result<String, SdfError> {
    let n = mol.n_atoms();
    if n > 999 {
        return Err(SdfError::TooLarge(n));
    }
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if mol.bond(i, j) != BondKind::None {
                pairs.push((i, j, mol.bond(i, j) as u8));
            }
        }
    }
    if pairs.len() > 999 {
        return Err(SdfError::TooLarge(pairs.len()));
    }

    let mut out = String::new();
    out.push('\n');
    out.push_str("  semla\n");
    out.push('\n');
    let _ = writeln!(
        out,
        "{:>3}{:>3}  0  0  0  0  0  0  0  0999 V2000",
        n,
        pairs.len()
    );
    for i in 0..n {
        let symbol = vocab
            .atom_symbol(mol.atom_types()[i])
            .ok_or(SdfError::BadAtomIndex(mol.atom_types()[i]))?;
        let c = mol.coords()[i];
        let _ = writeln!(
            out,
            "{:>10.4}{:>10.4}{:>10.4} {:<3} 0  0  0  0  0  0  0  0  0  0  0  0",
            c[0], c[1], c[2], symbol
        );
    }
    for (i, j, kind) in pairs {
        let _ = writeln!(out, "{:>3}{:>3}{:>3}  0", i + 1, j + 1, kind);
    }
    let charged: Vec<(usize, i8)> = (0..n)
        .map(|i| {
            vocab
                .charge_value(mol.charges()[i])
                .ok_or(SdfError::BadChargeIndex(mol.charges()[i]))
                .map(|v| (i, v))
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .filter(|&(_, v)| v != 0)
        .collect();
    for chunk in charged.chunks(8) {
        let _ = write!(out, "M  CHG{:>3}", chunk.len());
        for &(i, v) in chunk {
            let _ = write!(out, "{:>4}{:>4}", i + 1, v);
        }
        out.push('\n');
    }
    out.push_str("M  END\n$$$$\n");
    Ok(out)
}

/// Concatenates records for a whole set of molecules.
pub fn write_sdf_subset(mols: &[Molecule], vocab: &Vocabulary) -> Result<String, SdfError> {
    let mut out = String::new();
    for mol in mols {
        out.push_str(&write_sdf_record(mol, vocab)?);
    }
    Ok(out)
}
