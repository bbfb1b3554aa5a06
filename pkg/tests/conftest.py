import stat
import sys

import pytest

PY = sys.executable

# Tiny standalone simulators used by executor/workflow tests. Written as
# real executables (shebang + exec bit) so deleting one produces a genuine
# spawn failure, and a shell no-op keeps the stress tests cheap.

NOOP_SH = """\
#!/bin/sh
read line
echo '{"type":"done","metrics":{"ok":1.0}}'
"""

ECHO_VALUE = f"""\
#!{PY}
import json, sys
req = json.loads(sys.stdin.readline())
value = float(req["config"].get("value", 0.0))
print(json.dumps({{"type": "done", "metrics": {{"m": value}}}}))
"""

SLEEPY = f"""\
#!{PY}
import json, sys, time
req = json.loads(sys.stdin.readline())
time.sleep(float(req["config"].get("sleep_s", 0.05)))
print(json.dumps({{"type": "done", "metrics": {{"ok": 1.0}}}}))
"""

CRASHY = f"""\
#!{PY}
import sys
sys.stdin.readline()
sys.exit(3)
"""

FLAKY = f"""\
#!{PY}
import json, os, sys
req = json.loads(sys.stdin.readline())
flag = os.path.join(req["config"]["flag_dir"], f"seen_{{req['trial_id']}}")
if not os.path.exists(flag):
    open(flag, "w").close()
    sys.exit(1)
print(json.dumps({{"type": "done", "metrics": {{"m": 1.0}}}}))
"""

REPORTER = f"""\
#!{PY}
import json, sys
req = json.loads(sys.stdin.readline())
value = float(req["config"].get("value", 0.0))
steps = req.get("report_steps") or 0
for k in range(1, steps + 1):
    print(json.dumps({{"type": "report", "step": k, "metrics": {{"m": value}}}}))
    sys.stdout.flush()
print(json.dumps({{"type": "done", "metrics": {{"m": value}}}}))
"""

REJECTY = f"""\
#!{PY}
import json, sys
req = json.loads(sys.stdin.readline())
if float(req["config"].get("r", 0.0)) >= 0.5:
    print(json.dumps({{"type": "rejected", "reason": "r >= 0.5"}}))
else:
    print(json.dumps({{"type": "done", "metrics": {{"m": 1.0}}}}))
"""

MALFORMED = f"""\
#!{PY}
import sys
sys.stdin.readline()
print("this is not a protocol message")
"""

BAD_EXIT = f"""\
#!{PY}
import json, sys
sys.stdin.readline()
print(json.dumps({{"type": "done", "metrics": {{"ok": 1.0}}}}))
sys.stdout.flush()
sys.exit(5)
"""

CHATTY = f"""\
#!{PY}
import json, sys
sys.stdin.readline()
print(json.dumps({{"type": "done", "metrics": {{"ok": 1.0}}}}))
print(json.dumps({{"type": "done", "metrics": {{"ok": 2.0}}}}))
"""

SLOW = f"""\
#!{PY}
import sys, time
sys.stdin.readline()
time.sleep(30)
"""

BRANIN = f"""\
#!{PY}
import json, math, sys
req = json.loads(sys.stdin.readline())
c = req["config"]
x1, x2 = float(c["x1"]), float(c["x2"])
b = 5.1 / (4 * math.pi ** 2)
cc = 5 / math.pi
t = 1 / (8 * math.pi)
f = (x2 - b * x1 ** 2 + cc * x1 - 6.0) ** 2 + 10 * (1 - t) * math.cos(x1) + 10
print(json.dumps({{"type": "done", "metrics": {{"branin": f, "neg_branin": -f}}}}))
"""

_SOURCES = {
    "noop": NOOP_SH,
    "echo_value": ECHO_VALUE,
    "sleepy": SLEEPY,
    "crashy": CRASHY,
    "flaky": FLAKY,
    "reporter": REPORTER,
    "rejecty": REJECTY,
    "malformed": MALFORMED,
    "bad_exit": BAD_EXIT,
    "chatty": CHATTY,
    "slow": SLOW,
    "branin": BRANIN,
}


def write_sim(directory, name, source=None) -> str:
    path = directory / f"{name}"
    path.write_text(source if source is not None else _SOURCES[name])
    path.chmod(path.stat().st_mode | stat.S_IXUSR | stat.S_IXGRP | stat.S_IXOTH)
    return str(path)


@pytest.fixture(scope="session")
def sims(tmp_path_factory):
    """Map of simulator name -> executable path."""
    root = tmp_path_factory.mktemp("sims")
    return {name: write_sim(root, name) for name in _SOURCES}
