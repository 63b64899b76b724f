fn main() {
    std::process::exit(iar_cli::run(std::env::args_os()));
}
