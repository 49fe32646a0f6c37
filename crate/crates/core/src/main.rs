fn main() {
    let code = reflect_lab::cli::run(std::env::args_os());
    std::process::exit(code);
}
