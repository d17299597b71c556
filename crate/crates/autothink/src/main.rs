fn main() {
    std::process::exit(autothink::cli::cli_main(std::env::args()));
}
