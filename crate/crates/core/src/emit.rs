//! Deterministic JSON emission for reports and fixture files.
//!
//! Every finite float is printed with 17 significant digits (`{:.16e}`), the
//! smallest count that round-trips any `f64` exactly, so re-running a command
//! on the same input yields byte-identical output and a reader recovers the
//! exact values. Integers are untouched.

use std::io;

use serde::Serialize;

/// `serde_json` formatter that pins the float representation. All other
/// behaviour is the compact default.
struct SigDigits17;

impl serde_json::ser::Formatter for SigDigits17 {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

/// Serialize to a compact JSON string with lossless, byte-stable floats.
pub fn json_string<T: Serialize>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SigDigits17);
    value
        .serialize(&mut ser)
        .expect("report types serialize infallibly");
    String::from_utf8(out).expect("serde_json writes UTF-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_exactly() {
        let values = [
            0.1f64,
            1.0 / 3.0,
            -2.0f64.sqrt(),
            1e-300,
            6.02214076e23,
            0.0,
        ];
        let s = json_string(&values);
        let back: Vec<f64> = serde_json::from_str(&s).unwrap();
        for (a, b) in values.iter().zip(&back) {
            assert_eq!(a.to_bits(), b.to_bits(), "{a} reread as {b}");
        }
    }

    #[test]
    fn output_is_byte_stable_and_integers_stay_integers() {
        #[derive(Serialize)]
        struct Report {
            dims: Vec<usize>,
            gap: f64,
        }
        let r = Report {
            dims: vec![2, 3],
            gap: 0.5,
        };
        let a = json_string(&r);
        let b = json_string(&r);
        assert_eq!(a, b);
        assert_eq!(a, r#"{"dims":[2,3],"gap":5.0000000000000000e-1}"#);
    }
}
