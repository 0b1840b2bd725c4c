fn main() {
    std::process::exit(bandit_debias::cli::dispatch(std::env::args_os()));
}
