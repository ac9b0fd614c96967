fn main() {
    std::process::exit(mvkit::cli::run_from_env());
}
