mod commands;

use std::process::ExitCode;

use clap::Parser;

use commands::Cli;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            report_error("usage", &e.to_string(), &[]);
            return ExitCode::from(2);
        }
    };
    match commands::run(cli, &argv) {
        Ok(code) => code,
        Err(e) => {
            let kind = e
                .chain()
                .find_map(|c| c.downcast_ref::<cryonoise::Error>())
                .map_or("error", |ce| ce.kind());
            let causes: Vec<String> = e.chain().skip(1).map(|c| c.to_string()).collect();
            report_error(kind, &e.to_string(), &causes);
            ExitCode::FAILURE
        }
    }
}

fn report_error(kind: &str, message: &str, causes: &[String]) {
    let body = serde_json::json!({
        "error": { "kind": kind, "message": message.trim_end(), "causes": causes }
    });
    eprintln!("{body}");
}
