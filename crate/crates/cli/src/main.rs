fn main() {
    std::process::exit(h2net_cli::run(std::env::args_os()));
}
