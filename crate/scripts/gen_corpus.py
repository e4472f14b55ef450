#!/usr/bin/env python3
"""Generate the manufactured-vulnerability corpus under corpus/.

Each fixture is a small firmware tree with an expect.json sidecar. Run from
the repository root; the output is deterministic.
"""

import json
import re
import shutil
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent / "corpus"
CTRL = "usr/lib/lua/luci/controller"

SINKS = {
    "CI": [
        ("os.execute", 'os.execute("ifconfig " .. {})'),
        ("io.popen", 'io.popen("ping -c 1 " .. {})'),
        ("luci.sys.call", 'luci.sys.call("logger -t fx " .. {})'),
        ("luci.util.exec", 'luci.util.exec("cat /proc/net/" .. {})'),
    ],
    "RCE": [
        ("loadstring", 'loadstring("return " .. {})'),
        ("dofile", 'dofile("/tmp/plugins/" .. {})'),
        ("load", "load({})"),
    ],
    "PAT": [
        ("os.remove", 'os.remove("/tmp/upload/" .. {})'),
        ("io.open", 'io.open("/www/data/" .. {}, "r")'),
        ("nixio.fs.unlink", 'nixio.fs.unlink("/tmp/" .. {})'),
        ("nixio.fs.readfile", 'nixio.fs.readfile("/etc/config/" .. {})'),
    ],
    "SQLI": [
        ("conn.execute", "conn:execute(\"SELECT * FROM users WHERE name = '\" .. {} .. \"'\")"),
        ("conn.query", 'conn:query("DELETE FROM log WHERE id = " .. {})'),
    ],
}

SANITIZERS = {
    "CI": "luci.util.shellquote({})",
    "PAT": "nixio.fs.basename({})",
    "SQLI": "conn:escape({})",
}

SOURCES = [
    'luci.http.formvalue("name")',
    'luci.http.formvalue("iface")',
    "luci.http.content()",
    'luci.http.getcookie("sysauth")',
]

SQL_CONN = '\tlocal conn = luasql.sqlite3():connect("/tmp/app.db")'

# (name, category, files). Files map a path (relative, {U} expanded) to Lua
# text. Markers: {SRC} source expression, SINK[e]SINK sink call on e,
# SAN[e]SAN optional sanitizer, {U} unique suffix. The action function is
# always action_{U} in the controller file.
TEMPLATES = [
    ("direct", "direct", """
function action_{U}()
	local v = {SRC}
	SINK[SAN[v]SAN]SINK
end
"""),
    ("direct_inline", "direct", """
function action_{U}()
	SINK[SAN[{SRC}]SAN]SINK
end
"""),
    ("rename2", "rename", """
function action_{U}()
	local a = {SRC}
	local b = SAN[a]SAN
	SINK[b]SINK
end
"""),
    ("rename3", "rename", """
function action_{U}()
	local a = {SRC}
	local b = "eth" .. a
	local c = SAN[b]SAN
	SINK[c]SINK
end
"""),
    ("rename4", "rename", """
function action_{U}()
	local a = {SRC}
	local b = a
	local c = string.format("%s", SAN[b]SAN)
	local d = c .. ""
	SINK[d]SINK
end
"""),
    ("global_rename", "rename", """
function action_{U}()
	arg_{U} = {SRC}
	local x = SAN[arg_{U}]SAN
	SINK[x]SINK
end
"""),
    ("helper_sink", "inlined", """
local function run_{U}(p)
	SINK[p]SINK
end

function action_{U}()
	local v = {SRC}
	run_{U}(SAN[v]SAN)
end
"""),
    ("helper_source", "inlined", """
local function read_{U}()
	return {SRC}
end

function action_{U}()
	local v = read_{U}()
	SINK[SAN[v]SAN]SINK
end
"""),
    ("helper_transform", "inlined", """
function build_{U}(name)
	return "dev_" .. name
end

function action_{U}()
	local n = {SRC}
	local c = build_{U}(n)
	SINK[SAN[c]SAN]SINK
end
"""),
    ("field_assign", "table_field", """
function action_{U}()
	local t = {}
	t.name = {SRC}
	t.mode = "ro"
	SINK[SAN[t.name]SAN]SINK
end
"""),
    ("field_ctor", "table_field", """
function action_{U}()
	local opts = { dev = {SRC}, mtu = "1500" }
	local d = opts.dev
	SINK[SAN[d]SAN]SINK
end
"""),
    ("field_helper", "table_field", """
local function apply_{U}(cfg)
	SINK[cfg.target]SINK
end

function action_{U}()
	local cfg = {}
	cfg.target = SAN[{SRC}]SAN
	apply_{U}(cfg)
end
"""),
    ("branch", "direct", """
function action_{U}()
	local v = "default"
	if luci.http.formvalue("custom") == "1" then
		v = {SRC}
	end
	SINK[SAN[v]SAN]SINK
end
"""),
    ("loop", "rename", """
function action_{U}()
	local acc = ""
	local item = {SRC}
	for i = 1, 3 do
		acc = acc .. item
	end
	SINK[SAN[acc]SAN]SINK
end
"""),
    ("dispatch_param", "dispatcher", """
function action_{U}(iface)
	local v = "br-" .. iface
	SINK[SAN[v]SAN]SINK
end
"""),
    ("cross_file", "inlined", """
function action_{U}()
	local v = {SRC}
	fx_exec_{U}(SAN[v]SAN)
end
""", {"usr/lib/lua/luci/fxlib_{U}.lua": """
function fx_exec_{U}(c)
	SINK[c]SINK
end
"""}),
]

FIELD_CLEAN = """
function action_{U}()
	local t = {}
	t.name = {SRC}
	t.mode = "ro"
	SINK[t.mode]SINK
end
"""

NWR_ENV = """
function fx_env_{U}()
	local v = os.getenv("FX_{U}")
	SINK[v]SINK
end
"""

NWR_CONST = """
function fx_do_{U}(p)
	SINK[p]SINK
end

function fx_boot_{U}()
	fx_do_{U}("lo")
end
"""

SANITIZED = ["rename2", "helper_sink", "field_assign", "dispatch_param"]
CONSTANT = ["direct", "rename3", "helper_source", "field_helper"]
CONSTANT_RCE_EXTRA = ["rename2"]


def template(name):
    for t in TEMPLATES:
        if t[0] == name:
            return t
    raise KeyError(name)


def render(text, vtype, sink_idx, src, sanitize, u):
    """Expand markers; return (lines, sink names in line order)."""
    san = SANITIZERS.get(vtype) if sanitize else None
    text = text.replace("{U}", u).replace("{SRC}", src)
    text = re.sub(r"SAN\[(.*?)\]SAN", lambda m: san.format(m.group(1)) if san else m.group(1), text)
    name, fmt = SINKS[vtype][sink_idx % len(SINKS[vtype])]
    out, sinks = [], []
    for line in text.strip("\n").split("\n"):
        m = re.search(r"SINK\[(.*)\]SINK", line)
        if m:
            line = line[: m.start()] + fmt.format(m.group(1)) + line[m.end():]
        out.append(line)
        if vtype == "SQLI" and line.startswith(("function ", "local function ")):
            out.append(SQL_CONN)
        if m:
            sinks.append(name)
    return out, sinks


def controller(u, route_call, body_lines):
    head = [
        f'module("luci.controller.fx_{u}", package.seeall)',
        "",
        "function index()",
        f'\tentry({{"admin", "fx", "{u}"}}, call("{route_call}"), "Fixture {u}", 10).leaf = true',
        "end",
        "",
    ]
    return head + body_lines


def sink_lines(lines, sink_names):
    calls = [(i + 1) for i, l in enumerate(lines) if any(f in l for f in ("os.execute(", "io.popen(", "luci.sys.call(",
             "luci.util.exec(", "loadstring(", "dofile(", "load(", "os.remove(", "io.open(", "nixio.fs.unlink(",
             "nixio.fs.readfile(", "conn:execute(", "conn:query("))]
    assert len(calls) == len(sink_names), (lines, sink_names)
    return calls


# Param sources of helpers no dispatched entry reaches; they are reported only
# with the framework rules off.
UNREACHABLE = {
    "helper_sink": "run_{U}(p)",
    "field_helper": "apply_{U}(cfg)",
    "cross_file": "fx_exec_{U}(c)",
    "nwr_env": "os.getenv",
    "nwr_const": "fx_do_{U}(p)",
}


def write_fixture(name, vtype, category, variant, files, expected, web_reachable=True, drop_reason=None,
                  unreachable=None):
    d = ROOT / name
    for rel, lines in files.items():
        p = d / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text("\n".join(lines) + "\n")
    meta = {
        "type": vtype,
        "category": category,
        "variant": variant,
        "web_reachable": web_reachable,
        "findings": expected,
        "unreachable_sources": [unreachable] if unreachable else [],
    }
    if drop_reason:
        meta["drop_reason"] = drop_reason
    (d / "expect.json").write_text(json.dumps(meta, indent=2) + "\n")


def build(vtype, tname, n, variant):
    t = template(tname)
    _, category, text = t[:3]
    extra = t[3] if len(t) > 3 else {}
    u = f"{vtype.lower()}{n:02d}"
    src = SOURCES[n % len(SOURCES)] if variant != "constant" else '"eth0"'
    sanitize = variant == "sanitized"
    files, expected = {}, []
    lines, sinks = render(text, vtype, n, src, sanitize, u)
    main = controller(u, f"action_{u}", lines)
    ctrl_rel = f"{CTRL}/fx_{u}.lua"
    files[ctrl_rel] = main
    for s, line in zip(sinks, sink_lines(main, sinks)):
        expected.append({"type": vtype, "sink": s, "file": ctrl_rel, "line": line})
    for rel, etext in extra.items():
        rel = rel.replace("{U}", u)
        elines, esinks = render(etext, vtype, n, src, sanitize, u)
        files[rel] = elines
        for s, line in zip(esinks, sink_lines(elines, esinks)):
            expected.append({"type": vtype, "sink": s, "file": rel, "line": line})
    if variant != "vulnerable":
        expected = []
    unreachable = UNREACHABLE.get(tname, "").replace("{U}", u) or None
    write_fixture(f"{vtype.lower()}_{n:02d}_{tname}_{variant}", vtype, category, variant, files, expected,
                  unreachable=unreachable)


def build_special(vtype, n, kind):
    u = f"{vtype.lower()}{n:02d}"
    if kind == "field_clean":
        lines, _ = render(FIELD_CLEAN, vtype, n, SOURCES[0], False, u)
        files = {f"{CTRL}/fx_{u}.lua": controller(u, f"action_{u}", lines)}
        write_fixture(f"{vtype.lower()}_{n:02d}_field_clean_constant", vtype, "table_field", "constant", files, [])
        return
    text, reason = (NWR_ENV, "not_web_reachable") if kind == "nwr_env" else (NWR_CONST, "constant_parameter")
    rel = f"usr/lib/lua/luci/tools/fx_{u}.lua"
    lines, _ = render(text, vtype, n, "", False, u)
    files = {rel: lines}
    write_fixture(f"{vtype.lower()}_{n:02d}_{kind}_not_web_reachable", vtype, "library", "not_web_reachable", files, [],
                  web_reachable=False, drop_reason=reason, unreachable=UNREACHABLE[kind].replace("{U}", u))


def trigger_words():
    return {
        "sources": ["luci.http.content", "luci.http.getcookie"],
        "sinks": [
            {"name": "luci.util.exec", "args": [1], "type": "CI"},
            {"name": "loadstring", "args": [1], "type": "RCE"},
            {"name": "dofile", "args": [1], "type": "RCE"},
            {"name": "load", "args": [1], "type": "RCE"},
            {"name": "io.open", "args": [1], "type": "PAT"},
            {"name": "nixio.fs.unlink", "args": [1], "type": "PAT"},
            {"name": "nixio.fs.readfile", "args": [1], "type": "PAT"},
            {"name": ":execute", "args": [1], "type": "SQLI"},
            {"name": ":query", "args": [1], "type": "SQLI"},
        ],
        "sanitizers": ["nixio.fs.basename", ":escape"],
    }


def main():
    if ROOT.exists():
        shutil.rmtree(ROOT)
    ROOT.mkdir(parents=True)
    for vtype in SINKS:
        n = 0
        for t in TEMPLATES:
            n += 1
            build(vtype, t[0], n, "vulnerable")
        if vtype in SANITIZERS:
            for tname in SANITIZED:
                n += 1
                build(vtype, tname, n, "sanitized")
        for tname in CONSTANT + (CONSTANT_RCE_EXTRA if vtype == "RCE" else []):
            n += 1
            build(vtype, tname, n, "constant")
        for kind in ("field_clean", "nwr_env", "nwr_const"):
            n += 1
            build_special(vtype, n, kind)
    (ROOT / "trigger_words.json").write_text(json.dumps(trigger_words(), indent=2) + "\n")


if __name__ == "__main__":
    main()
