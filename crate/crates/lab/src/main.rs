fn main() {
    std::process::exit(plasticity_lab::cli_main(std::env::args_os()));
}
