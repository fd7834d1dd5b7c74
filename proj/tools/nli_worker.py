#!/usr/bin/env python3
# Copyright 2026 The nlifaith Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""NLI classification worker for the nlifaith local and http backends.

Request:  {"pairs": [[premise, hypothesis], ...], "dropout": bool, "seeds": [int, ...]}
Response: {"probs": [[entailment, neutral, contradiction], ...]}

--stdio reads one request per line on stdin and answers on stdout.
--serve PORT answers POST requests on any path.
"""
import argparse
import json
import sys
from collections import defaultdict
from http.server import BaseHTTPRequestHandler, HTTPServer

import torch
from transformers import AutoModelForSequenceClassification, AutoTokenizer


class Classifier:
    def __init__(self, checkpoint, device, max_length, batch_size):
        self.tokenizer = AutoTokenizer.from_pretrained(checkpoint)
        self.model = AutoModelForSequenceClassification.from_pretrained(checkpoint)
        self.model.to(device)
        self.device = device
        self.max_length = max_length
        self.batch_size = batch_size
        labels = {v.lower(): int(k) for k, v in self.model.config.id2label.items()}
        try:
            self.order = [labels["entailment"], labels["neutral"], labels["contradiction"]]
        except KeyError:
            sys.exit(f"checkpoint labels {sorted(labels)} lack entailment/neutral/contradiction")

    @torch.no_grad()
    def _forward(self, pairs):
        enc = self.tokenizer(
            [p for p, _ in pairs],
            [h for _, h in pairs],
            truncation="only_first",
            max_length=self.max_length,
            padding=True,
            return_tensors="pt",
        ).to(self.device)
        probs = torch.softmax(self.model(**enc).logits.double(), dim=-1)
        return probs[:, self.order].tolist()

    def classify(self, pairs, dropout, seeds):
        if len(seeds) == 1:
            seeds = seeds * len(pairs)
        out = [None] * len(pairs)
        if not dropout:
            self.model.eval()
            groups = {0: list(range(len(pairs)))}
        else:
            # Every dropout layer is active; the mask stream is reset per seed.
            self.model.train()
            groups = defaultdict(list)
            for i, s in enumerate(seeds):
                groups[s].append(i)
        for seed, idx in groups.items():
            for start in range(0, len(idx), self.batch_size):
                chunk = idx[start:start + self.batch_size]
                if dropout:
                    torch.manual_seed(seed)
                for i, p in zip(chunk, self._forward([pairs[i] for i in chunk])):
                    out[i] = p
        self.model.eval()
        return out

    def handle(self, body):
        req = json.loads(body)
        return {"probs": self.classify(req["pairs"], bool(req.get("dropout")), req.get("seeds", [0]))}


def serve_stdio(clf):
    for line in sys.stdin:
        if not line.strip():
            continue
        sys.stdout.write(json.dumps(clf.handle(line)) + "\n")
        sys.stdout.flush()


def serve_http(clf, port):
    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            body = self.rfile.read(int(self.headers.get("Content-Length", 0)))
            try:
                payload = json.dumps(clf.handle(body)).encode()
                self.send_response(200)
            except (KeyError, ValueError) as e:
                payload = json.dumps({"error": str(e)}).encode()
                self.send_response(400)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)

    HTTPServer(("0.0.0.0", port), Handler).serve_forever()


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--checkpoint", default="MoritzLaurer/DeBERTa-v3-large-mnli-fever-anli-ling-wanli")
    ap.add_argument("--device", default="cpu")
    ap.add_argument("--max-length", type=int, default=512)
    ap.add_argument("--batch-size", type=int, default=16)
    mode = ap.add_mutually_exclusive_group(required=True)
    mode.add_argument("--stdio", action="store_true")
    mode.add_argument("--serve", type=int, metavar="PORT")
    args = ap.parse_args()
    clf = Classifier(args.checkpoint, args.device, args.max_length, args.batch_size)
    if args.stdio:
        serve_stdio(clf)
    else:
        serve_http(clf, args.serve)


if __name__ == "__main__":
    main()
