fn main() {
    env_logger::init();
    let code = cuelab::cli::run(std::env::args_os(), &mut std::io::stdout());
    std::process::exit(code);
}
