fn main() {
    let code = collide::cli::main(std::env::args_os());
    std::process::exit(code);
}
