fn main() {
    std::process::exit(spshds::cli::run_from(std::env::args_os()));
}
