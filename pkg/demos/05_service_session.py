"""
HTTP service walkthrough
========================

Everything the browser studio does, scripted against a live service
instance: list models, run a three-round coarse-to-fine selection through
/candidates, verify the assembled latent renders byte-identically through
/generate, then submit a color edit job and poll it to completion.

The service is started in-process on a local port; only stdlib HTTP is
used on the client side, so this doubles as wire-format documentation.
"""

import base64
import io
import json
import os
import sys
import threading
import time
import urllib.request

import numpy as np
import uvicorn
from PIL import Image

from scalebranch.service import create_app

ART = os.path.join(os.path.dirname(__file__), "_artifacts")
CKPT = os.path.join(ART, "desk.ckpt")
if not os.path.exists(CKPT):
    sys.exit("run demos/00_train_desk.py first (no desk.ckpt found)")

PORT = 8731
BASE = f"http://127.0.0.1:{PORT}"


def post(path: str, payload: dict, accept: str = "application/json"):
    req = urllib.request.Request(
        BASE + path,
        data=json.dumps(payload).encode(),
        headers={"Content-Type": "application/json", "Accept": accept},
        method="POST",
    )
    with urllib.request.urlopen(req) as resp:
        body = resp.read()
    return body if accept == "image/png" else json.loads(body)


def get(path: str):
    with urllib.request.urlopen(BASE + path) as resp:
        return json.loads(resp.read())


# ---------------------------------------------------------------------------
# Boot the service on a background thread.

server = uvicorn.Server(uvicorn.Config(
    create_app({"desk": CKPT}), host="127.0.0.1", port=PORT, log_level="warning",
))
threading.Thread(target=server.run, daemon=True).start()
while not server.started:
    time.sleep(0.05)

models = get("/models")["models"]
print("models:", [(m["name"], m["resolution"]) for m in models])

# ---------------------------------------------------------------------------
# Coarse-to-fine: each round draws candidate completions of the fixed
# prefix; "the user" picks one and its sub-vector at the current scale is
# appended to the prefix.

prefix = []
picks = (2, 0, 1)  # scripted user choices, one per scale
for scale, pick in enumerate(picks):
    batch = post("/candidates", {
        "model": "desk", "prefix": prefix, "count": 6, "seed": 100 + scale,
    })["candidates"]
    chosen = batch[pick]
    prefix.append(chosen["latent"]["subvectors"][scale])
    print(f"scale {scale}: picked candidate {pick} of {len(batch)}")

assembled = {"subvectors": chosen["latent"]["subvectors"]}
final = post("/generate", {"model": "desk", "latent": assembled})
identical = final["image_png_b64"] == chosen["image_png_b64"]
print(f"assembled latent re-renders byte-identically: {identical}")
assert identical

png = base64.b64decode(final["image_png_b64"])
with open(os.path.join(ART, "session_final.png"), "wb") as fh:
    fh.write(png)

# ---------------------------------------------------------------------------
# Color-only edit job: submit, poll the ticket, save the result.

image = np.asarray(Image.open(io.BytesIO(png)).convert("RGB"), dtype=np.float32) / 255.0
target = image.copy()
target[:, : image.shape[1] // 2] = (0.2, 0.4, 0.8)  # repaint the left half blue

job = post("/edit", {
    "model": "desk",
    "color": target.tolist(),
    "config": {"init": "encoder", "steps": 120, "restarts": 1},
})
print(f"edit job {job['job_id']} submitted")
while True:
    status = get(f"/jobs/{job['job_id']}")
    if status["status"] in ("done", "failed"):
        break
    time.sleep(0.3)
assert status["status"] == "done", status
result = status["result"]
print(f"edit finished: loss {result['loss']:.4f} (init {result['trace'][0]:.4f})")
with open(os.path.join(ART, "session_edit.png"), "wb") as fh:
    fh.write(base64.b64decode(result["image_png_b64"]))

server.should_exit = True
print(f"wrote {os.path.join(ART, 'session_final.png')} and session_edit.png")
