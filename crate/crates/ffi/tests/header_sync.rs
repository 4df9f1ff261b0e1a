//! Keeps include/orbitlab.h and the exported Rust surface in lockstep:
//! every `extern "C"` function must be declared in the header and vice
//! versa, and the status enum must carry the same discriminants.

use std::collections::BTreeSet;

fn crate_file(rel: &str) -> String {
    let root = env!("CARGO_MANIFEST_DIR");
    std::fs::read_to_string(format!("{root}/{rel}")).expect("readable source file")
}

fn exported_fns(src: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for chunk in src.split("extern \"C\" fn ").skip(1) {
        let name: String = chunk
            .chars()
            .take_while(|c| c.is_alphanumeric() || *c == '_')
            .collect();
        if !name.is_empty() {
            out.insert(name);
        }
    }
    out
}

fn header_fns(header: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for line in header.lines() {
        if let Some(pos) = line.find("orbitlab_") {
            // declarations only: the name is followed by an open paren
            let rest = &line[pos..];
            let name: String = rest
                .chars()
                .take_while(|c| c.is_alphanumeric() || *c == '_')
                .collect();
            if rest[name.len()..].starts_with('(') && !name.is_empty() {
                out.insert(name);
            }
        }
    }
    out
}

#[test]
fn every_export_is_declared_and_vice_versa() {
    let src = crate_file("src/lib.rs");
    let header = crate_file("include/orbitlab.h");
    let exported = exported_fns(&src);
    let declared = header_fns(&header);
    assert!(!exported.is_empty());
    let missing: Vec<_> = exported.difference(&declared).collect();
    assert!(missing.is_empty(), "not in header: {missing:?}");
    let stale: Vec<_> = declared.difference(&exported).collect();
    assert!(stale.is_empty(), "declared but not exported: {stale:?}");
}

#[test]
fn status_discriminants_match() {
    let src = crate_file("src/lib.rs");
    let header = crate_file("include/orbitlab.h");
    // pull `Name = value` pairs from the Rust enum
    let rust_enum = src
        .split("pub enum OrbitlabStatus {")
        .nth(1)
        .unwrap()
        .split('}')
        .next()
        .unwrap();
    let mut count = 0;
    for line in rust_enum.lines() {
        let line = line.trim().trim_end_matches(',');
        if let Some((name, value)) = line.split_once(" = ") {
            // Rust CamelCase -> header SCREAMING_SNAKE with ORBITLAB_ prefix
            let mut snake = String::from("ORBITLAB");
            for ch in name.chars() {
                if ch.is_uppercase() {
                    snake.push('_');
                }
                snake.push(ch.to_ascii_uppercase());
            }
            let expected = format!("{snake} = {value}");
            assert!(
                header.contains(&expected),
                "header misses `{expected}` for Rust variant {name}"
            );
            count += 1;
        }
    }
    assert_eq!(count, 20, "expected all 20 status variants to be checked");
}
