//! Command-line entry points, config files, and binary/CSV formats.

pub fn dispatch(args: &[String]) -> u8 {
    let _ = args;
    eprintln!("not yet implemented");
    1
}
