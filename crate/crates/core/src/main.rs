fn main() {
    std::process::exit(ttnc::cli::dispatch(std::env::args_os()));
}
