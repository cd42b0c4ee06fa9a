//! Writes a synthetic corpus with its analogy items and candidate list:
//! `cargo run -p qtmine --example synth_corpus -- demo [seed] [bytes]`

use std::fmt::Write as _;
use std::path::PathBuf;

fn main() {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().expect("output directory"));
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed"));
    let bytes: usize = args.next().map_or(100_000, |s| s.parse().expect("bytes"));
    let s = qtmine::synth::generate(seed, bytes);
    std::fs::create_dir_all(&dir).unwrap();
    qtmine::io::write_corpus(&dir.join("corpus.jsonl"), &s.docs).unwrap();

    let mut tsv = String::from("category\tsubcategory\ta\tb\tc\td\n");
    for i in &s.analogies {
        writeln!(tsv, "{}\t{}\t{}\t{}\t{}\t{}", i.category, i.subcategory.as_str(), i.a, i.b, i.c, i.d).unwrap();
    }
    std::fs::write(dir.join("analogies.tsv"), tsv).unwrap();

    let mut names: Vec<&str> = s.drugs.iter().map(|d| d.name.as_str()).collect();
    names.extend(s.unseen.iter().map(String::as_str));
    std::fs::write(dir.join("candidates.txt"), names.join("\n") + "\n").unwrap();
    let eff: Vec<&str> = s.efficacious().iter().map(|d| d.name.as_str()).collect();
    println!("{} documents; efficacious: {}; never mentioned: {}", s.docs.len(), eff.join(" "), s.unseen.join(" "));
}
