//! Small helpers shared by the TOML-backed config readers.

/// Splits `"interval a=2 b=4"` into the head word and its `key=value` pairs.
pub(crate) fn split_head_args(text: &str) -> (&str, Vec<(&str, &str)>) {
    let mut parts = text.split_whitespace();
    let head = parts.next().unwrap_or("");
    let args = parts
        .map(|p| match p.split_once('=') {
            Some((k, v)) => (k.trim(), v.trim()),
            None => (p, ""),
        })
        .collect();
    (head, args)
}

pub(crate) fn arg_f64(args: &[(&str, &str)], key: &str) -> Option<f64> {
    args.iter().find(|(k, _)| *k == key).and_then(|(_, v)| v.parse::<f64>().ok()).filter(|v| v.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn head_and_args() {
        let (head, args) = split_head_args("interval a=2 b=4.5");
        assert_eq!(head, "interval");
        assert_eq!(arg_f64(&args, "a"), Some(2.0));
        assert_eq!(arg_f64(&args, "b"), Some(4.5));
        assert_eq!(arg_f64(&args, "c"), None);
    }
}
