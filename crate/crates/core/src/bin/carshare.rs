fn main() {
    std::process::exit(carshare::cli::run(std::env::args_os()));
}
