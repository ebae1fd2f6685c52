fn main() {
    std::process::exit(tempoql_cli::cli::main(std::env::args_os()));
}
