fn main() {
    // Placeholder while the core crate grows; the real CLI lands with the
    // pipeline module.
    eprintln!("eversion: not yet wired up");
    std::process::exit(2);
}
