use std::io;

use serde::Serialize;
use serde_json::ser::{Formatter, Serializer};

/// Writes every float with 17 significant digits so values round-trip.
struct SeventeenDigits;

impl Formatter for SeventeenDigits {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

pub fn to_json_bytes<T: Serialize>(value: &T) -> serde_json::Result<Vec<u8>> {
    let mut buf = Vec::new();
    let mut ser = Serializer::with_formatter(&mut buf, SeventeenDigits);
    value.serialize(&mut ser)?;
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        let v = serde_json::json!({"a": 0.1, "b": [1.0 / 3.0, -2.5e-300], "c": 3});
        let bytes = to_json_bytes(&v).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert!(text.contains("1.0000000000000001e-1"));
        let back: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(back["b"][0].as_f64().unwrap(), 1.0 / 3.0);
        assert_eq!(back["c"], 3);
    }
}
