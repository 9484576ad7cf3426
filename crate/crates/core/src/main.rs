fn main() {
    std::process::exit(probit_oaxaca::cli::main_with_args(std::env::args_os()));
}
