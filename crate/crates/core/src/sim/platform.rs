use std::path::Path;

use crate::error::{Error, Result};
use crate::keyvalue::KeyValues;

/// Homogeneous, fully connected set of hosts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlatformSpec {
    /// Number of hosts.
    pub host_count: u64,
    /// FLOP/s per host.
    pub host_speed: f64,
    /// Bits per second on every host-to-host link.
    pub link_bandwidth: f64,
    /// Seconds.
    pub link_latency: f64,
}

impl PlatformSpec {
    pub fn new(host_count: u64, host_speed: f64, link_bandwidth: f64, link_latency: f64) -> Result<Self> {
        let p = PlatformSpec {
            host_count,
            host_speed,
            link_bandwidth,
            link_latency,
        };
        p.validate()?;
        Ok(p)
    }

    /// 64 hosts at 1.562 MFLOP/s, 50 Mbit/s links, 2 us latency.
    pub fn rp3() -> Self {
        PlatformSpec {
            host_count: 64,
            host_speed: 1.562e6,
            link_bandwidth: 50e6,
            link_latency: 2e-6,
        }
    }

    /// 64 hosts at 41 600 MFLOP/s, 100 Gbit/s links, 100 ns latency.
    pub fn knl() -> Self {
        PlatformSpec {
            host_count: 64,
            host_speed: 41_600e6,
            link_bandwidth: 100e9,
            link_latency: 100e-9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.host_count == 0 {
            return Err(Error::invalid("hosts must be at least 1"));
        }
        if !(self.host_speed > 0.0 && self.host_speed.is_finite()) {
            return Err(Error::invalid(format!("host speed must be positive, got {}", self.host_speed)));
        }
        if !(self.link_bandwidth > 0.0 && self.link_bandwidth.is_finite()) {
            return Err(Error::invalid(format!(
                "link bandwidth must be positive, got {}",
                self.link_bandwidth
            )));
        }
        if !(self.link_latency >= 0.0 && self.link_latency.is_finite()) {
            return Err(Error::invalid(format!(
                "link latency must be non-negative, got {}",
                self.link_latency
            )));
        }
        Ok(())
    }

    /// Serialises in the platform file format.
    pub fn to_file_string(&self) -> String {
        format!(
            "hosts = {}\nspeed_mflops = {}\nbw_mbps = {}\nlatency_us = {}\n",
            self.host_count,
            self.host_speed / 1e6,
            self.link_bandwidth / 1e6,
            self.link_latency / 1e-6
        )
    }
}

const QUANTITIES: [(&str, &[(&str, i32)]); 4] = [
    ("hosts", &[("hosts", 0)]),
    ("speed", &[("speed_mflops", 6)]),
    ("bandwidth", &[("bw_mbps", 6), ("bw_gbps", 9)]),
    ("latency", &[("latency_us", -6), ("latency_ns", -9)]),
];

// Decimal text scaled by a power of ten without an intermediate rounding:
// "1.562" with exponent 6 parses as exactly the double nearest 1.562e6.
fn scaled(kv: &KeyValues, key: &str, exponent: i32) -> Result<f64> {
    let raw = kv.required_raw(key)?;
    let valid = !raw.is_empty()
        && raw.chars().all(|c| c.is_ascii_digit() || c == '.' || c == '-' || c == '+');
    let value: f64 = if valid {
        format!("{raw}e{exponent}").parse().ok()
    } else {
        None
    }
    .ok_or_else(|| kv.error(key, format!("'{key}' is not a decimal number: '{raw}'")))?;
    Ok(value)
}

/// Reads a platform file.
///
/// ```text
/// # RP3
/// hosts = 64
/// speed_mflops = 1.562
/// bw_mbps = 50
/// latency_us = 2
/// ```
pub fn load_platform(path: &Path) -> Result<PlatformSpec> {
    let kv = KeyValues::read(path)?;
    parse_platform(&kv)
}

pub fn parse_platform(kv: &KeyValues) -> Result<PlatformSpec> {
    for key in kv.keys() {
        if !QUANTITIES.iter().any(|(_, variants)| variants.iter().any(|(k, _)| *k == key)) {
            return Err(kv.error(key, format!("unknown platform key '{key}'")));
        }
    }
    let mut values = [0.0f64; 4];
    for (slot, (quantity, variants)) in QUANTITIES.iter().enumerate() {
        let present: Vec<_> = variants.iter().filter(|(k, _)| kv.contains(k)).collect();
        match present.as_slice() {
            [] => {
                let names: Vec<_> = variants.iter().map(|(k, _)| *k).collect();
                return Err(Error::parse(
                    kv.path(),
                    0,
                    format!("missing {quantity}: expected one of {}", names.join(", ")),
                ));
            }
            [(key, exp)] => values[slot] = scaled(kv, key, *exp)?,
            [_, (second, _), ..] => {
                return Err(kv.error(second, format!("{quantity} given in more than one unit")));
            }
        }
    }
    let hosts_key = "hosts";
    let hosts = values[0];
    if hosts < 1.0 || hosts.fract() != 0.0 {
        return Err(kv.error(hosts_key, format!("'hosts' must be a positive integer, got {hosts}")));
    }
    let name_of = |slot: usize| {
        QUANTITIES[slot]
            .1
            .iter()
            .find(|(k, _)| kv.contains(k))
            .map(|(k, _)| *k)
            .unwrap_or_default()
    };
    if values[1] <= 0.0 {
        let key = name_of(1);
        return Err(kv.error(key, format!("'{key}' must be positive")));
    }
    if values[2] <= 0.0 {
        let key = name_of(2);
        return Err(kv.error(key, format!("'{key}' must be positive")));
    }
    if values[3] < 0.0 {
        let key = name_of(3);
        return Err(kv.error(key, format!("'{key}' must not be negative")));
    }
    PlatformSpec::new(hosts as u64, values[1], values[2], values[3])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<PlatformSpec> {
        parse_platform(&KeyValues::parse(Path::new("test.platform"), text)?)
    }

    #[test]
    fn rp3_file() {
        let p = parse("hosts=64\nspeed_mflops = 1.562\nbw_mbps=50\nlatency_us=2 # us\n").unwrap();
        assert_eq!(p, PlatformSpec::rp3());
        assert_eq!(p.host_speed, 1_562_000.0);
    }

    #[test]
    fn knl_file_alternate_units() {
        let p = parse("latency_ns = 100\nbw_gbps = 100\nspeed_mflops = 41600\nhosts = 64\n").unwrap();
        assert_eq!(p, PlatformSpec::knl());
    }

    #[test]
    fn zero_speed_names_field() {
        let err = parse("hosts=64\nspeed_mflops=0\nbw_mbps=50\nlatency_us=2\n").unwrap_err();
        assert!(err.to_string().contains("speed_mflops"), "{err}");
    }

    #[test]
    fn missing_and_duplicate_units() {
        let err = parse("hosts=64\nspeed_mflops=1\nlatency_us=2\n").unwrap_err();
        assert!(err.to_string().contains("bw_mbps"), "{err}");
        let err = parse("hosts=64\nspeed_mflops=1\nbw_mbps=1\nbw_gbps=1\nlatency_us=2\n").unwrap_err();
        assert!(err.to_string().contains("more than one unit"), "{err}");
        assert!(parse("hosts=64\nspeed_mflops=1\nbw_mbps=1\nlatency_us=2\ncolor=red\n").is_err());
        assert!(parse("hosts=6.5\nspeed_mflops=1\nbw_mbps=1\nlatency_us=2\n").is_err());
        assert!(parse("hosts=6\nspeed_mflops=1e3\nbw_mbps=1\nlatency_us=2\n").is_err());
    }

    #[test]
    fn file_string_round_trips() {
        let p = PlatformSpec::rp3();
        assert_eq!(parse(&p.to_file_string()).unwrap(), p);
    }
}
