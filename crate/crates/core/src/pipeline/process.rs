use std::io::Read;
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use super::adapters::{ImageInput, OcrEngine};
use super::AdapterError;

/// Placeholder replaced by the image path inside a command template.
pub const IMAGE_PLACEHOLDER: &str = "{image}";

/// OCR through an external program. The image path replaces every
/// `{image}` argument, or is appended as the final argument when there is
/// none; standard output is the extraction.
#[derive(Clone, Debug)]
pub struct CommandOcr {
    program: String,
    args: Vec<String>,
    timeout: Duration,
}

static SCRATCH: AtomicU64 = AtomicU64::new(0);

impl CommandOcr {
    pub fn new(command: &[String], timeout: Duration) -> Option<Self> {
        let (program, args) = command.split_first()?;
        Some(Self {
            program: program.clone(),
            args: args.to_vec(),
            timeout,
        })
    }

    fn argv(&self, image: &Path) -> Vec<String> {
        let img = image.to_string_lossy();
        let mut substituted = false;
        let mut out: Vec<String> = self
            .args
            .iter()
            .map(|a| {
                if a.contains(IMAGE_PLACEHOLDER) {
                    substituted = true;
                    a.replace(IMAGE_PLACEHOLDER, &img)
                } else {
                    a.clone()
                }
            })
            .collect();
        if !substituted {
            out.push(img.into_owned());
        }
        out
    }

    fn run(&self, image: &Path) -> Result<String, AdapterError> {
        let protocol = |reason: String| AdapterError::Protocol {
            adapter: self.program.clone(),
            reason,
        };
        let mut child = Command::new(&self.program)
            .args(self.argv(image))
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| protocol(format!("cannot start: {e}")))?;
        let mut stdout = child.stdout.take().expect("piped stdout");
        let mut stderr = child.stderr.take().expect("piped stderr");
        let out_reader = std::thread::spawn(move || {
            let mut buf = Vec::new();
            stdout.read_to_end(&mut buf).map(|_| buf)
        });
        let err_reader = std::thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = stderr.read_to_end(&mut buf);
            buf
        });
        let start = Instant::now();
        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break status,
                Ok(None) if start.elapsed() >= self.timeout => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(AdapterError::Timeout {
                        adapter: self.program.clone(),
                        ms: self.timeout.as_millis() as u64,
                    });
                }
                Ok(None) => std::thread::sleep(Duration::from_millis(5)),
                Err(e) => return Err(protocol(format!("wait failed: {e}"))),
            }
        };
        let out = out_reader
            .join()
            .expect("reader thread")
            .map_err(|e| protocol(format!("reading stdout: {e}")))?;
        let err = err_reader.join().expect("reader thread");
        if !status.success() {
            let msg = String::from_utf8_lossy(&err);
            return Err(protocol(format!("{status}: {}", msg.trim())));
        }
        let text = String::from_utf8(out).map_err(|_| protocol("stdout is not UTF-8".into()))?;
        Ok(text.trim().to_string())
    }
}

impl OcrEngine for CommandOcr {
    fn name(&self) -> &str {
        &self.program
    }

    fn extract(&self, image: &ImageInput) -> Result<String, AdapterError> {
        if let Some(p) = &image.path {
            return self.run(p);
        }
        let scratch = std::env::temp_dir().join(format!(
            "textcap-ocr-{}-{}.png",
            std::process::id(),
            SCRATCH.fetch_add(1, Ordering::Relaxed)
        ));
        std::fs::write(&scratch, &image.bytes).map_err(|e| AdapterError::Protocol {
            adapter: self.program.clone(),
            reason: format!("writing scratch image: {e}"),
        })?;
        let r = self.run(&scratch);
        let _ = std::fs::remove_file(&scratch);
        r
    }
}

#[cfg(all(test, unix))]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn sh(script: &str, ms: u64) -> CommandOcr {
        CommandOcr::new(
            &["sh".into(), "-c".into(), script.into(), "ocr".into()],
            Duration::from_millis(ms),
        )
        .unwrap()
    }

    fn input() -> ImageInput {
        ImageInput {
            bytes: vec![1, 2, 3],
            path: Some(PathBuf::from("/tmp/some image.png")),
        }
    }

    #[test]
    fn path_is_final_argument_and_stdout_is_text() {
        // $1 is the appended image path
        let ocr = sh("printf 'read:%s\\n' \"$1\"", 5000);
        assert_eq!(ocr.extract(&input()).unwrap(), "read:/tmp/some image.png");
    }

    #[test]
    fn placeholder_substitution() {
        let ocr = CommandOcr::new(
            &["echo".into(), "{image}".into(), "stdout".into()],
            Duration::from_secs(5),
        )
        .unwrap();
        assert_eq!(ocr.argv(Path::new("/x.png")), ["/x.png", "stdout"]);
    }

    #[test]
    fn nonzero_exit_is_protocol_error() {
        let ocr = sh("echo broken >&2; exit 3", 5000);
        match ocr.extract(&input()) {
            Err(AdapterError::Protocol { reason, .. }) => assert!(reason.contains("broken")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn slow_command_times_out() {
        let ocr = sh("sleep 5", 100);
        let t = Instant::now();
        assert!(matches!(ocr.extract(&input()), Err(AdapterError::Timeout { .. })));
        assert!(t.elapsed() < Duration::from_secs(4));
    }

    #[test]
    fn in_memory_images_use_a_scratch_file() {
        let ocr = sh("wc -c < \"$1\"", 5000);
        let img = ImageInput {
            bytes: vec![0; 17],
            path: None,
        };
        assert_eq!(ocr.extract(&img).unwrap(), "17");
    }

    #[test]
    fn missing_program_is_protocol_error() {
        let ocr = CommandOcr::new(&["/nonexistent/ocr".into()], Duration::from_secs(1)).unwrap();
        assert!(matches!(ocr.extract(&input()), Err(AdapterError::Protocol { .. })));
    }
}
