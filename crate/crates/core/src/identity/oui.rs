use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use super::IdentityError;
use crate::mac::MacAddr;

static BUNDLED_OUI: &str = include_str!("../../data/oui.tsv");

/// Vendor registry keyed by 24-bit OUI.
///
/// Snapshot format: one `XXXXXX<TAB>Vendor Name` entry per line with the OUI
/// in uppercase hex. Blank lines and `#` comments are skipped.
#[derive(Debug, Clone, Default)]
pub struct OuiRegistry {
    vendors: HashMap<u32, String>,
}

impl OuiRegistry {
    pub fn parse(text: &str) -> Result<Self, IdentityError> {
        let mut vendors = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |reason: &str| IdentityError::Snapshot {
                line: i + 1,
                reason: reason.to_owned(),
            };
            let (oui, vendor) = line.split_once('\t').ok_or_else(|| bad("missing tab separator"))?;
            if oui.len() != 6 || !oui.bytes().all(|b| b.is_ascii_digit() || (b'A'..=b'F').contains(&b)) {
                return Err(bad("OUI must be six uppercase hex digits"));
            }
            let vendor = vendor.trim();
            if vendor.is_empty() {
                return Err(bad("empty vendor name"));
            }
            let oui = u32::from_str_radix(oui, 16).expect("validated hex");
            vendors.insert(oui, vendor.to_owned());
        }
        Ok(OuiRegistry { vendors })
    }

    pub fn load(path: &Path) -> Result<Self, IdentityError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// The registry snapshot compiled into the crate.
    pub fn bundled() -> Arc<OuiRegistry> {
        static CELL: OnceLock<Arc<OuiRegistry>> = OnceLock::new();
        CELL.get_or_init(|| Arc::new(Self::parse(BUNDLED_OUI).expect("bundled OUI snapshot parses")))
            .clone()
    }

    pub fn len(&self) -> usize {
        self.vendors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vendors.is_empty()
    }

    /// Vendor registered for the address's OUI. Locally administered and
    /// group addresses are never looked up.
    pub fn lookup(&self, mac: &MacAddr) -> Option<&str> {
        if mac.is_locally_administered() || mac.is_group() {
            return None;
        }
        self.vendors.get(&mac.oui()).map(String::as_str)
    }

    pub fn lookup_str(&self, mac: &str) -> Result<Option<&str>, IdentityError> {
        let mac: MacAddr = mac.parse()?;
        Ok(self.lookup(&mac))
    }
}
