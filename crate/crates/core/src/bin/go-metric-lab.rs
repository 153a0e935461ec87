fn main() {
    std::process::exit(go_metric_lab::cli::main_with_args(std::env::args_os()));
}
