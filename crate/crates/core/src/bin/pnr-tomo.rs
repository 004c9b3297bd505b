fn main() {
    std::process::exit(pnr_tomo::cli::run(std::env::args_os()));
}
