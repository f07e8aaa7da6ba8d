fn main() {
    let outcome = embedmark_cli::run(std::env::args());
    std::process::exit(outcome.exit_code);
}
