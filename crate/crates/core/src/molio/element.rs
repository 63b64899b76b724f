use std::collections::HashMap;
use std::sync::OnceLock;

use super::MolError;

const STANDARD_TABLE: &str = include_str!("../../data/elements.txt");
const SUPPORTED_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub symbol: String,
    pub charge: u8,
    pub valences: Vec<u8>,
    /// Covalent radius in Å; only used for pairs without explicit thresholds.
    pub covalent_radius: f64,
}

impl Element {
    pub fn max_valence(&self) -> u8 {
        self.valences.iter().copied().max().unwrap_or(0)
    }
}

/// Distance thresholds (Å) indexed by bond order - 1. Strictly decreasing:
/// higher orders require shorter distances.
#[derive(Debug, Clone, PartialEq)]
pub struct BondThresholds(Vec<f64>);

impl BondThresholds {
    pub fn new(thresholds: Vec<f64>) -> Option<Self> {
        let ok = !thresholds.is_empty()
            && thresholds.len() <= 3
            && thresholds.iter().all(|t| t.is_finite() && *t > 0.0)
            && thresholds.windows(2).all(|w| w[1] < w[0]);
        ok.then_some(Self(thresholds))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Highest order whose threshold exceeds `distance`, or 0.
    pub fn order_at(&self, distance: f64) -> u8 {
        self.0
            .iter()
            .rposition(|&t| distance < t)
            .map_or(0, |i| i as u8 + 1)
    }
}

/// Margin added to the summed covalent radii for pairs missing from the table.
const RADIUS_FALLBACK_MARGIN: f64 = 0.25;

#[derive(Debug, Clone)]
pub struct ElementTable {
    version: u32,
    elements: Vec<Element>,
    pairs: HashMap<(u8, u8), BondThresholds>,
}

impl ElementTable {
    /// Table shipped in `data/elements.txt`.
    pub fn standard() -> &'static ElementTable {
        static TABLE: OnceLock<ElementTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            ElementTable::parse(STANDARD_TABLE).expect("shipped element table is valid")
        })
    }

    pub fn parse(text: &str) -> Result<Self, MolError> {
        let mut version = None;
        let mut elements: Vec<Element> = Vec::new();
        let mut pairs = HashMap::new();
        let err = |line: usize, msg: &str| MolError::Table {
            line,
            msg: msg.to_string(),
        };
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let fields: Vec<&str> = content.split_whitespace().collect();
            match fields[0] {
                "version" => {
                    let v: u32 = fields
                        .get(1)
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| err(line, "bad version"))?;
                    if v != SUPPORTED_VERSION {
                        return Err(err(line, &format!("unsupported version {v}")));
                    }
                    version = Some(v);
                }
                "element" => {
                    if fields.len() != 5 {
                        return Err(err(line, "expected: element SYM Z VALENCES RADIUS"));
                    }
                    let charge: u8 = fields[2].parse().map_err(|_| err(line, "bad charge"))?;
                    let valences = fields[3]
                        .split(',')
                        .map(|v| v.parse::<u8>())
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(|_| err(line, "bad valence list"))?;
                    let covalent_radius: f64 =
                        fields[4].parse().map_err(|_| err(line, "bad radius"))?;
                    if charge == 0 || elements.iter().any(|e| e.charge == charge) {
                        return Err(err(line, "duplicate or zero charge"));
                    }
                    elements.push(Element {
                        symbol: fields[1].to_string(),
                        charge,
                        valences,
                        covalent_radius,
                    });
                }
                "pair" => {
                    if !(4..=6).contains(&fields.len()) {
                        return Err(err(line, "expected: pair A B SINGLE [DOUBLE [TRIPLE]]"));
                    }
                    let lookup = |s: &str| {
                        elements
                            .iter()
                            .find(|e| e.symbol == s)
                            .map(|e| e.charge)
                            .ok_or_else(|| err(line, &format!("pair references unknown {s}")))
                    };
                    let (a, b) = (lookup(fields[1])?, lookup(fields[2])?);
                    let values = fields[3..]
                        .iter()
                        .map(|v| v.parse::<f64>())
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(|_| err(line, "bad threshold"))?;
                    let thresholds = BondThresholds::new(values).ok_or_else(|| {
                        err(line, "thresholds must be positive and shrink with bond order")
                    })?;
                    pairs.insert((a.min(b), a.max(b)), thresholds);
                }
                other => return Err(err(line, &format!("unknown record {other:?}"))),
            }
        }
        let version = version.ok_or_else(|| err(0, "missing version record"))?;
        Ok(Self {
            version,
            elements,
            pairs,
        })
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn by_charge(&self, charge: u8) -> Option<&Element> {
        self.elements.iter().find(|e| e.charge == charge)
    }

    /// Case-insensitive symbol lookup.
    pub fn by_symbol(&self, symbol: &str) -> Option<&Element> {
        self.elements
            .iter()
            .find(|e| e.symbol.eq_ignore_ascii_case(symbol))
    }

    /// Explicit thresholds for a pair, if the table lists them.
    pub fn thresholds(&self, a: u8, b: u8) -> Option<&BondThresholds> {
        self.pairs.get(&(a.min(b), a.max(b)))
    }

    /// Bond order for two atoms at `distance`.
    pub fn bond_order(&self, a: u8, b: u8, distance: f64) -> u8 {
        if let Some(t) = self.thresholds(a, b) {
            return t.order_at(distance);
        }
        match (self.by_charge(a), self.by_charge(b)) {
            (Some(ea), Some(eb))
                if distance < ea.covalent_radius + eb.covalent_radius + RADIUS_FALLBACK_MARGIN =>
            {
                1
            }
            _ => 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_table_covers_qm9_elements() {
        let t = ElementTable::standard();
        for sym in ["H", "C", "N", "O", "F"] {
            assert!(t.by_symbol(sym).is_some(), "{sym}");
        }
        assert_eq!(t.by_symbol("c").unwrap().charge, 6);
        assert_eq!(t.by_charge(8).unwrap().max_valence(), 2);
        assert_eq!(t.version(), 1);
    }

    #[test]
    fn thresholds_shrink_with_order() {
        let t = ElementTable::standard();
        for a in [1u8, 6, 7, 8, 9] {
            for b in [1u8, 6, 7, 8, 9] {
                let th = t.thresholds(a, b).expect("all QM9 pairs listed");
                assert!(th.as_slice().windows(2).all(|w| w[1] < w[0]));
            }
        }
    }

    #[test]
    fn non_monotone_thresholds_rejected() {
        let text = "version 1\nelement C 6 4 0.76\npair C C 1.3 1.5\n";
        assert!(matches!(ElementTable::parse(text), Err(MolError::Table { line: 3, .. })));
    }

    #[test]
    fn wrong_version_rejected() {
        assert!(ElementTable::parse("version 2\n").is_err());
        assert!(ElementTable::parse("element H 1 1 0.31\n").is_err());
    }

    #[test]
    fn order_lookup() {
        let t = ElementTable::standard();
        assert_eq!(t.bond_order(1, 1, 0.74), 1);
        assert_eq!(t.bond_order(6, 6, 3.0), 0);
        assert_eq!(t.bond_order(6, 8, 1.21), 2);
        assert_eq!(t.bond_order(8, 6, 1.21), 2);
        assert_eq!(t.bond_order(6, 6, 1.20), 3);
        // strict inequality at the threshold itself
        assert_eq!(t.bond_order(1, 1, 0.84), 0);
    }
}
