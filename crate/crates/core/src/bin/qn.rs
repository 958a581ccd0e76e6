fn main() {
    let argv: Vec<String> = std::env::args().collect();
    std::process::exit(qn_core::cli::run(&argv));
}
