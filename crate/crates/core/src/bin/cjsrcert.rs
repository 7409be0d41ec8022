fn main() {
    std::process::exit(cjsrcert::cli::run(std::env::args_os()));
}
