fn main() {
    std::process::exit(shfm_kit::cli::run(std::env::args_os()));
}
