fn main() {
    std::process::exit(hmmgmr::cli::run_from(std::env::args_os()));
}
