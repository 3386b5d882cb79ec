//! Synthetic corpora used by tests, examples and `make-fixture`.
//!
//! The planted corpus models six applications, each split into a
//! controller component and a handler component, plus 22 unrelated
//! basic-software programs. Controllers and handlers carry token-level
//! role signatures; programs of one application share app-specific
//! identifiers; everything is diluted with generic filler code.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Manifest, ManifestComponent, ManifestInstance, Role, MANIFEST_FILE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureFile {
    pub path: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedCorpus {
    pub files: Vec<FixtureFile>,
    pub manifest: Manifest,
}

/// Knobs for the planted generator. Line counts are per program.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedConfig {
    pub seed: u64,
    pub signature_lines: usize,
    pub component_lines: usize,
    /// Lines shared by every program of one application.
    pub app_lines: usize,
    pub filler_lines: usize,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            seed: 2023,
            signature_lines: 4,
            component_lines: 0,
            app_lines: 3,
            filler_lines: 22,
        }
    }
}

const APPS: [&str; 6] = ["wiper", "hatch", "mirror", "seat", "window", "horn"];

// (component id, prefix, program count, signature templates)
const OTHERS: [(&str, &str, usize, &[&str]); 5] = [
    (
        "bsw_diag",
        "DiagMgr",
        5,
        &[
            "Dem_SetEventStatus({S}_EVENT_{n}, DEM_EVENT_STATUS_FAILED);",
            "Dcm_{S}_ReadDid({S}_DID_{n}, &{v});",
            "if (Dem_GetEventStatus({S}_EVENT_{n}) != E_OK) {{ {v} = 0u; }}",
        ],
    ),
    (
        "bsw_nvm",
        "NvStore",
        5,
        &[
            "NvM_WriteBlock({S}_BLOCK_{n}, &{v});",
            "(void)NvM_ReadBlock({S}_BLOCK_{n}, {S}_mirror);",
            "NvM_GetErrorStatus({S}_BLOCK_{n}, &{S}_result);",
        ],
    ),
    (
        "bsw_com",
        "ComGw",
        4,
        &[
            "Com_SendSignal({S}_SIG_{n}, &{v});",
            "Com_ReceiveSignal({S}_SIG_{n}, &{S}_rx);",
            "PduR_{S}_Transmit({S}_PDU_{n}, &{S}_pdu);",
        ],
    ),
    (
        "lib_util",
        "UtilLib",
        4,
        &[
            "{v} = {S}_Crc8({v}, {n}u);",
            "{v} = {S}_Saturate({v}, {n}, {S}_LIMIT);",
            "{S}_MemCopy(&{v}, &{v}, sizeof({v}));",
        ],
    ),
    (
        "bsw_os",
        "OsSched",
        4,
        &[
            "SchM_Enter_{S}_Exclusive(); {v}++; SchM_Exit_{S}_Exclusive();",
            "ActivateTask({S}_TASK_{n});",
            "(void)SetRelAlarm({S}_ALARM_{n}, {n}u, {n}u);",
        ],
    ),
];

const CONTROLLER_SIGNATURE: &[&str] = &[
    "Rte_Read_Request(&{a}.request);",
    "if ({a}.state == STATE_IDLE) {{ {a}.state = STATE_ACTIVE; }}",
    "Ctrl_Arbitrate({a}.request, &{a}.state);",
    "(void)Rte_Write_Command({a}.command);",
    "switch ({a}.state) {{ case STATE_ACTIVE: {a}.command = {a}.request; break; default: break; }}",
    "/* request arbitration for the {a} state machine */",
];

const HANDLER_SIGNATURE: &[&str] = &[
    "IoHwAb_Set_Pwm({a}.duty);",
    "Dio_WriteChannel({a}.pin, STD_HIGH);",
    "Hdl_Drive_Motor({a}.command, {a}.duty);",
    "{a}.duty = ({a}.command * PWM_MAX) / 100u;",
    "Dio_WriteChannel({a}.pin, STD_LOW);",
    "/* drive the {a} motor pin through the io abstraction */",
];

const COMPONENT_LINES: &[&str] = &[
    "static uint8 {S}_{v}_cache;",
    "{S}_{v}_cache = (uint8){v};",
    "#define {S}_CFG_{n} ({n}u)",
];

const APP_LINES: &[&str] = &[
    "{a}.cfg[{n}] = {AP}_CFG;",
    "(void)Cfg_Get(&{a}, {AP}_ID);",
    "if ({a}.mode != {AP}_MODE) {{ {a}.mode = {AP}_MODE; }}",
];

const FILLER: &[&str] = &[
    "{v} = {v} + {n};",
    "for ({v} = 0; {v} < {n}u; {v}++) {{ {v}[{v}] = 0; }}",
    "if ({v} > {n}) {{ {v} = {v}; }}",
    "{v} ^= ({v} << {n});",
    "{v} = ({v} & 0x{n}u) >> 1;",
    "while ({v} != 0u) {{ {v}--; }}",
    "/* {w} {w} {w} */",
    "// {w} {w}",
    "{v} = {v} ? {v} : {n};",
    "return_value = {v};",
];

const VARS: &[&str] = &[
    "buf", "idx", "tmp", "cnt", "flags", "value", "offset", "len", "status", "mask", "acc", "limit",
    "timer", "counter", "index", "temp", "input", "output", "delta", "ptr", "data", "result", "prev",
    "next", "lo", "hi", "mid", "step", "scale", "bias",
];

const WORDS: &[&str] = &[
    "update", "check", "value", "compute", "store", "handle", "reset", "cycle", "periodic", "init",
    "local", "buffer", "copy", "verify", "range", "limit", "apply", "default", "runtime", "task",
];

struct Ctx<'a> {
    app: &'a str,
    prefix: &'a str,
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn render(template: &str, ctx: &Ctx<'_>, rng: &mut ChaCha8Rng) -> String {
    let mut out = String::with_capacity(template.len() + 16);
    let mut rest = template;
    while let Some(i) = rest.find('{') {
        out.push_str(&rest[..i].replace("}}", "}"));
        rest = &rest[i..];
        if rest.starts_with("{{") {
            out.push('{');
            rest = &rest[2..];
            continue;
        }
        let end = rest.find('}').expect("closed placeholder");
        match &rest[1..end] {
            "a" => out.push_str(ctx.app),
            "Ap" => out.push_str(&capitalize(ctx.app)),
            "AP" => out.push_str(&ctx.app.to_uppercase()),
            "S" => out.push_str(ctx.prefix),
            "v" => out.push_str(VARS.choose(rng).expect("non-empty")),
            "w" => out.push_str(WORDS.choose(rng).expect("non-empty")),
            "n" => out.push_str(&rng.gen_range(1..16u32).to_string()),
            other => panic!("unknown placeholder {other}"),
        }
        rest = &rest[end + 1..];
    }
    out.push_str(&rest.replace("}}", "}"));
    out
}

fn program_text(
    cfg: &PlantedConfig,
    ctx: &Ctx<'_>,
    signature: &[&str],
    func: &str,
    rng: &mut ChaCha8Rng,
) -> String {
    let mut body: Vec<String> = Vec::new();
    for _ in 0..cfg.signature_lines {
        body.push(render(signature.choose(rng).expect("non-empty"), ctx, rng));
    }
    for _ in 0..cfg.component_lines {
        body.push(render(COMPONENT_LINES.choose(rng).expect("non-empty"), ctx, rng));
    }
    for _ in 0..cfg.app_lines {
        body.push(render(APP_LINES.choose(rng).expect("non-empty"), ctx, rng));
    }
    for _ in 0..cfg.filler_lines {
        body.push(render(FILLER.choose(rng).expect("non-empty"), ctx, rng));
    }
    body.shuffle(rng);
    let mut text = format!(
        "/* {} */\n#include \"Std_Types.h\"\n#include \"{}.h\"\n\nvoid {}(void)\n{{\n",
        render("{w} {w} module", ctx, rng),
        ctx.app,
        func
    );
    for line in body {
        text.push_str("    ");
        text.push_str(&line);
        text.push('\n');
    }
    text.push_str("}\n");
    text
}

/// Builds the 40-program planted corpus: apps 0-3 have two controller
/// programs and one handler, apps 4-5 one controller and two handlers.
pub fn planted_corpus(cfg: &PlantedConfig) -> PlantedCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut files = Vec::new();
    let mut components = Vec::new();
    let mut instances = Vec::new();
    let funcs = ["MainFunction", "Mode", "Io", "Pwm"];

    for (i, app) in APPS.iter().enumerate() {
        let (n_ctrl, n_hdl) = if i < 4 { (2, 1) } else { (1, 2) };
        for (role, count, signature, tag) in [
            (Role::Controller, n_ctrl, CONTROLLER_SIGNATURE, "ctrl"),
            (Role::Handler, n_hdl, HANDLER_SIGNATURE, "hdl"),
        ] {
            let prefix = format!("{}{}", capitalize(app), capitalize(tag));
            let ctx = Ctx { app, prefix: &prefix };
            let mut paths = Vec::new();
            for k in 0..count {
                let path = format!("app/{app}/{app}_{tag}_{k}.c");
                let text = program_text(cfg, &ctx, signature, funcs[k % funcs.len()], &mut rng);
                files.push(FixtureFile { path: path.clone(), text });
                paths.push(path);
            }
            components.push(ManifestComponent {
                id: format!("{app}_{tag}"),
                name: format!("{} {}", capitalize(app), if tag == "ctrl" { "controller" } else { "handler" }),
                role,
                files: paths,
            });
        }
        instances.push(ManifestInstance {
            id: format!("{app}_ch"),
            controller: format!("{app}_ctrl"),
            handler: format!("{app}_hdl"),
        });
    }

    for (id, prefix, count, signature) in OTHERS {
        let app = id.rsplit('_').next().expect("component id");
        let ctx = Ctx { app, prefix };
        let mut paths = Vec::new();
        for k in 0..count {
            let path = format!("bsw/{id}/{id}_{k}.c");
            let text = program_text(cfg, &ctx, signature, funcs[k % funcs.len()], &mut rng);
            files.push(FixtureFile { path: path.clone(), text });
            paths.push(path);
        }
        components.push(ManifestComponent {
            id: id.to_owned(),
            name: id.replace('_', " "),
            role: Role::Other,
            files: paths,
        });
    }

    PlantedCorpus {
        files,
        manifest: Manifest {
            components,
            instances,
        },
    }
}

/// Writes files plus `manifest.json` under `dir`.
pub fn write_corpus(dir: &Path, corpus: &PlantedCorpus) -> Result<()> {
    for f in &corpus.files {
        let path = dir.join(&f.path);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(&path, &f.text).map_err(|e| Error::io(&path, e))?;
    }
    crate::io::write_json(&dir.join(MANIFEST_FILE), &corpus.manifest)
}

pub fn write_planted(dir: &Path, cfg: &PlantedConfig) -> Result<PlantedCorpus> {
    let corpus = planted_corpus(cfg);
    write_corpus(dir, &corpus)?;
    Ok(corpus)
}

/// Twenty small sources that stress the lexer: comments, literals with
/// escapes and prefixes, digraphs, CRLF, tabs, unterminated constructs and
/// non-ASCII text.
pub fn lexing_fixture() -> Vec<FixtureFile> {
    let sources: [&str; 20] = [
        "int a = 1;\n",
        "/* hw */ x++;",
        "#include <stdio.h>\nint main(void) { printf(\"%d\\n\", 42); return 0; }\n",
        "char c = '\\'';\nchar d = '\\x41';\n",
        "const wchar_t *w = L\"wide\";\nconst char *u = u8\"utf8\";\n",
        "a <<= 2; b >>= 3; c->d = e ? f : g;\n",
        "float f = 1.5e-3f + .25 + 0x1p-4;\n",
        "// line comment at eof",
        "/* multi\n   line\n   comment */\nvoid f(void);\n",
        "s = \"unterminated\nnext = 1;\n",
        "x = 1; /* never closed",
        "\tif (a&&b||!c) {\r\n\t\treturn;\r\n\t}\r\n",
        "<: :> <% %> %: %:%:\n",
        "int café = 3; /* naïve ünïcode */\n",
        "#define MAX(a, b) ((a) > (b) ? (a) : (b))\n",
        "struct s { unsigned x : 3; } v = { .x = 1 };\n",
        "   \n\n  ",
        "a...b ## c # d\n",
        "label: goto label;\n",
        "uint32 n = 1'000'000u; int z = 0b1010;\n",
    ];
    sources
        .iter()
        .enumerate()
        .map(|(i, s)| FixtureFile {
            path: format!("lex/case_{i:02}.c"),
            text: (*s).to_owned(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_counts() {
        let c = planted_corpus(&PlantedConfig::default());
        assert_eq!(c.files.len(), 40);
        assert_eq!(c.manifest.instances.len(), 6);
        assert_eq!(c.manifest.components.len(), 17);
    }

    #[test]
    fn deterministic() {
        let cfg = PlantedConfig::default();
        assert_eq!(planted_corpus(&cfg), planted_corpus(&cfg));
    }

    #[test]
    fn render_escapes_braces() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ctx = Ctx { app: "wiper", prefix: "WiperCtrl" };
        assert_eq!(render("if (x) {{ {Ap}_{AP} }}", &ctx, &mut rng), "if (x) { Wiper_WIPER }");
    }
}
