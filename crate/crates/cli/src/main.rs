fn main() {
    let code = nldm_cli::run(std::env::args().collect(), &mut std::io::stdout());
    std::process::exit(code);
}
