fn main() {
    std::process::exit(asyncpd::cli::main_with(std::env::args_os()));
}
