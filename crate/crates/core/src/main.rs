fn main() {
    std::process::exit(pgnbsc::cli::cli_main(std::env::args_os()));
}
