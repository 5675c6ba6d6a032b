fn main() {
    std::process::exit(loanprofit::cli::main_with_args(std::env::args_os()));
}
