#!/usr/bin/env python3
"""Drive the human-labeling HTTP service end to end, no browser needed.

Starts the service over a small queue, plays the annotator with plain HTTP
calls, and shows the labels landing in the buffer on the next tick. The
browser UI in frontend/ consumes exactly these four endpoints.
"""

import json
import urllib.request

import numpy as np

from safecredit.continual import FeedbackBuffer, cv_score
from safecredit.envs import EnvConfig, make_env, true_label
from safecredit.envs.datasets import generate_labeled_segments
from safecredit.experiment.service import LabelService
from safecredit.models import SsvModel, train_model


def call(method, url, body=None):
    data = None if body is None else json.dumps(body).encode()
    req = urllib.request.Request(url, data=data, method=method,
                                 headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req) as resp:
            return resp.status, json.loads(resp.read())
    except urllib.error.HTTPError as err:
        return err.code, json.loads(err.read())


env_cfg = EnvConfig(env_id="hazard_point", horizon=120, budget=25.0)
segments = generate_labeled_segments(env_cfg, 200, seed=21, min_segment_len=30)
model = SsvModel(obs_dim=4, act_dim=2, head="distributional", seed=4)
train_model(model, segments, epochs=10, seed=4, target_accuracy=0.9)

buffer = FeedbackBuffer()
for segment, _ in generate_labeled_segments(env_cfg, 12, seed=22,
                                            min_segment_len=30):
    est = cv_score(model, segment)
    buffer.enqueue(segment, cv=est.cv, phat=float(np.exp(est.mean)))
buffer.select_for_labeling(4)

env = make_env(env_cfg)
service = LabelService(buffer, status_fn=lambda: {"iteration": 0, "lambda": 0.0},
                       geometry=env.geometry()).start()
print(f"service at {service.url}")

status, queue = call("GET", service.url + "/queue")
print(f"GET /queue -> {status}, {len(queue['items'])} items "
      f"(sorted by CV: {[round(i['cv'], 2) for i in queue['items']]})")

# The 'human' labels from the rendered path: unsafe iff many steps sit
# inside a hazard disc. Here the script just reuses the oracle.
queued = {item.segment_id: item.segment for item in buffer.selected()}
for item in queue["items"]:
    sid = item["segment_id"]
    detail = call("GET", service.url + f"/trajectory/{sid}")[1]
    print(f"  segment {sid}: {len(detail['path'])} path points, "
          f"P(safe)={detail['phat']:.2f}")
    label = true_label(queued[sid], env_cfg.budget)
    status, _ = call("POST", service.url + "/label",
                     {"segment_id": sid, "label": label})
    print(f"POST /label segment {sid} label {label} -> {status}")

dup = queue["items"][0]["segment_id"]
status, body = call("POST", service.url + "/label",
                    {"segment_id": dup, "label": 1})
print(f"duplicate submission -> {status} ({body['error']})")

print(f"labels harvested on tick: {buffer.labeling_tick()}")
print("status:", call("GET", service.url + "/status")[1])
service.stop()
