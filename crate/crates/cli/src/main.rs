fn main() {
    std::process::exit(hmq_detect::cli_main(std::env::args_os()));
}
