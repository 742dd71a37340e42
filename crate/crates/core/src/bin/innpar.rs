fn main() {
    std::process::exit(innpar::cli::run(std::env::args_os().skip(1)));
}
