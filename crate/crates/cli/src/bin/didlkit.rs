use std::io;

fn main() {
    let (mut stdin, mut stdout, mut stderr) = (io::stdin().lock(), io::stdout().lock(), io::stderr().lock());
    let mut io = didlkit_cli::Io { stdin: &mut stdin, stdout: &mut stdout, stderr: &mut stderr };
    let code = didlkit_cli::run(std::env::args_os(), &mut io);
    std::process::exit(code);
}
