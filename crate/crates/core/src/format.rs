//! String generators for the `format` keyword.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::choice::{ChoiceError, ChoiceSequence};

/// Generates one string of a format from the choice sequence.
pub type FormatFn = Arc<dyn Fn(&mut ChoiceSequence) -> Result<String, ChoiceError> + Send + Sync>;

const BUILTIN: &[&str] = &["date", "date-time", "uuid", "email", "uri", "ipv4", "ipv6"];

/// Registered format generators. Unknown formats fall back to plain strings.
#[derive(Clone)]
pub struct FormatRegistry {
    formats: BTreeMap<String, FormatFn>,
    overridden: Vec<String>,
}

impl fmt::Debug for FormatRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FormatRegistry")
            .field("formats", &self.formats.keys().collect::<Vec<_>>())
            .field("overridden", &self.overridden)
            .finish()
    }
}

impl Default for FormatRegistry {
    fn default() -> Self {
        let mut formats: BTreeMap<String, FormatFn> = BTreeMap::new();
        formats.insert("date".into(), Arc::new(date));
        formats.insert("date-time".into(), Arc::new(date_time));
        formats.insert("uuid".into(), Arc::new(uuid));
        formats.insert("email".into(), Arc::new(email));
        formats.insert("uri".into(), Arc::new(uri));
        formats.insert("ipv4".into(), Arc::new(ipv4));
        formats.insert("ipv6".into(), Arc::new(ipv6));
        FormatRegistry {
            formats,
            overridden: Vec::new(),
        }
    }
}

impl FormatRegistry {
    /// Registers a generator. Replacing a built-in is allowed and logged.
    pub fn register(&mut self, name: &str, generator: FormatFn) {
        if BUILTIN.contains(&name) {
            log::warn!("format `{name}` overrides the built-in generator");
            self.overridden.push(name.to_string());
        }
        self.formats.insert(name.to_string(), generator);
    }

    pub fn get(&self, name: &str) -> Option<&FormatFn> {
        self.formats.get(name)
    }

    /// Built-in formats that have been replaced.
    pub fn overridden(&self) -> &[String] {
        &self.overridden
    }
}

/// Registers `generator` for `name` in `registry`.
pub fn register_format(registry: &mut FormatRegistry, name: &str, generator: FormatFn) {
    registry.register(name, generator);
}

fn int(s: &mut ChoiceSequence, lo: i128, hi: i128) -> Result<i128, ChoiceError> {
    s.draw_integer(Some(lo), Some(hi))
}

fn date(s: &mut ChoiceSequence) -> Result<String, ChoiceError> {
    let y = int(s, 1970, 2100)?;
    let m = int(s, 1, 12)?;
    let days = match m {
        2 if (y % 4 == 0 && y % 100 != 0) || y % 400 == 0 => 29,
        2 => 28,
        4 | 6 | 9 | 11 => 30,
        _ => 31,
    };
    let d = int(s, 1, days)?;
    Ok(format!("{y:04}-{m:02}-{d:02}"))
}

fn date_time(s: &mut ChoiceSequence) -> Result<String, ChoiceError> {
    let d = date(s)?;
    let h = int(s, 0, 23)?;
    let mi = int(s, 0, 59)?;
    let sec = int(s, 0, 59)?;
    Ok(format!("{d}T{h:02}:{mi:02}:{sec:02}Z"))
}

fn uuid(s: &mut ChoiceSequence) -> Result<String, ChoiceError> {
    let mut b = s.draw_bytes(16)?;
    b[6] = (b[6] & 0x0f) | 0x40;
    b[8] = (b[8] & 0x3f) | 0x80;
    let h = hex::encode(b);
    Ok(format!("{}-{}-{}-{}-{}", &h[0..8], &h[8..12], &h[12..16], &h[16..20], &h[20..32]))
}

fn word(s: &mut ChoiceSequence, max: usize) -> Result<String, ChoiceError> {
    let mut out = String::new();
    loop {
        let c = int(s, 0, 25)? as u8;
        out.push((b'a' + c) as char);
        if out.len() >= max || !s.more(0.6)? {
            return Ok(out);
        }
    }
}

fn email(s: &mut ChoiceSequence) -> Result<String, ChoiceError> {
    Ok(format!("{}@{}.com", word(s, 12)?, word(s, 12)?))
}

fn uri(s: &mut ChoiceSequence) -> Result<String, ChoiceError> {
    let scheme = if s.draw_bool(0.5)? { "https" } else { "http" };
    let mut out = format!("{scheme}://{}.example", word(s, 10)?);
    while s.more(0.4)? {
        out.push('/');
        out.push_str(&word(s, 8)?);
    }
    Ok(out)
}

fn ipv4(s: &mut ChoiceSequence) -> Result<String, ChoiceError> {
    let parts: Result<Vec<String>, _> = (0..4).map(|_| int(s, 0, 255).map(|v| v.to_string())).collect();
    Ok(parts?.join("."))
}

fn ipv6(s: &mut ChoiceSequence) -> Result<String, ChoiceError> {
    let parts: Result<Vec<String>, _> = (0..8).map(|_| int(s, 0, 0xffff).map(|v| format!("{v:x}"))).collect();
    Ok(parts?.join(":"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_produce_well_formed_strings() {
        let reg = FormatRegistry::default();
        for seed in 0..20 {
            let mut s = ChoiceSequence::record(seed);
            let d = reg.get("date").unwrap()(&mut s).unwrap();
            assert_eq!(d.len(), 10);
            let u = reg.get("uuid").unwrap()(&mut s).unwrap();
            assert_eq!(u.len(), 36);
            assert_eq!(&u[14..15], "4");
            let ip = reg.get("ipv4").unwrap()(&mut s).unwrap();
            assert!(ip.parse::<std::net::Ipv4Addr>().is_ok());
            let ip6 = reg.get("ipv6").unwrap()(&mut s).unwrap();
            assert!(ip6.parse::<std::net::Ipv6Addr>().is_ok());
            let e = reg.get("email").unwrap()(&mut s).unwrap();
            assert!(e.contains('@'));
            let uri = reg.get("uri").unwrap()(&mut s).unwrap();
            assert!(url::Url::parse(&uri).is_ok(), "{uri}");
            let dt = reg.get("date-time").unwrap()(&mut s).unwrap();
            assert!(dt.ends_with('Z'));
        }
    }

    #[test]
    fn override_is_recorded() {
        let mut reg = FormatRegistry::default();
        reg.register("uuid", Arc::new(|_| Ok("fixed".to_string())));
        reg.register("color", Arc::new(|_| Ok("red".to_string())));
        assert_eq!(reg.overridden(), &["uuid".to_string()]);
        let mut s = ChoiceSequence::record(0);
        assert_eq!(reg.get("uuid").unwrap()(&mut s).unwrap(), "fixed");
    }
}
