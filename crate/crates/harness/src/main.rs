fn main() {
    std::process::exit(calconf_harness::cli::main_with_args(std::env::args_os()));
}
