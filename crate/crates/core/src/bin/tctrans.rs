fn main() {
    std::process::exit(tctrans::cli::run(std::env::args_os()));
}
