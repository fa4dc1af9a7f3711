fn main() {
    std::process::exit(deconv_quant_cli::main_with_args(std::env::args_os()));
}
