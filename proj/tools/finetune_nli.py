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
"""Fine-tunes an NLI classifier for nlifaith's finetune command.

Reads a request JSON written by the C++ side, trains with the Hugging Face
Trainer, and writes {"checkpoints": [{step, checkpoint, val_loss}, ...]}
with one entry per saved checkpoint. A diverged run reports val_loss null.
"""
import argparse
import json
import math
import os

import torch
from transformers import (AutoModelForSequenceClassification, AutoTokenizer, Trainer,
                          TrainerCallback, TrainingArguments)

LABELS = {"e": "entailment", "n": "neutral", "c": "contradiction"}


def read_jsonl(path):
    with open(path, encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


def label_index(model, name):
    name = LABELS.get(name, name).lower()
    for key, idx in model.config.label2id.items():
        if key.lower() == name:
            return idx
    raise SystemExit(f"checkpoint has no label {name!r}: {model.config.label2id}")


class Pairs(torch.utils.data.Dataset):
    def __init__(self, rows, tokenizer, model):
        self.enc = tokenizer([r["premise"] for r in rows], [r["hypothesis"] for r in rows],
                             truncation="only_first", max_length=512)
        self.labels = [label_index(model, r["label"]) for r in rows]

    def __len__(self):
        return len(self.labels)

    def __getitem__(self, i):
        item = {k: v[i] for k, v in self.enc.items()}
        item["labels"] = self.labels[i]
        return item


class LossLog(TrainerCallback):
    def __init__(self):
        self.losses = {}

    def on_evaluate(self, args, state, control, metrics=None, **kwargs):
        if metrics and "eval_loss" in metrics:
            self.losses[state.global_step] = metrics["eval_loss"]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--request", required=True)
    ap.add_argument("--result", required=True)
    ap.add_argument("--per-device-batch", type=int, default=8)
    args = ap.parse_args()

    with open(args.request, encoding="utf-8") as f:
        req = json.load(f)
    torch.manual_seed(req["seed"])

    tokenizer = AutoTokenizer.from_pretrained(req["base_checkpoint"])
    model = AutoModelForSequenceClassification.from_pretrained(req["base_checkpoint"])
    train = Pairs(read_jsonl(req["train_path"]), tokenizer, model)
    val = Pairs(read_jsonl(req["val_path"]), tokenizer, model)

    per_device = min(args.per_device_batch, req["effective_batch_size"])
    if req["effective_batch_size"] % per_device:
        per_device = 1
    log = LossLog()
    targs = TrainingArguments(
        output_dir=req["output_dir"],
        per_device_train_batch_size=per_device,
        per_device_eval_batch_size=per_device,
        gradient_accumulation_steps=req["effective_batch_size"] // per_device,
        learning_rate=req["learning_rate"],
        weight_decay=req["weight_decay"],
        warmup_ratio=req["warmup_ratio"],
        max_steps=req["total_steps"],
        eval_strategy="steps",
        eval_steps=req["checkpoint_interval"],
        save_strategy="steps",
        save_steps=req["checkpoint_interval"],
        seed=req["seed"],
        report_to=[],
    )
    trainer = Trainer(model=model, args=targs, train_dataset=train, eval_dataset=val,
                      processing_class=tokenizer, callbacks=[log])
    trainer.train()

    out = []
    for step in range(req["checkpoint_interval"], req["total_steps"] + 1, req["checkpoint_interval"]):
        loss = log.losses.get(step)
        ok = loss is not None and math.isfinite(loss)
        out.append({"step": step,
                    "checkpoint": os.path.join(req["output_dir"], f"checkpoint-{step}"),
                    "val_loss": loss if ok else None})
    with open(args.result, "w", encoding="utf-8") as f:
        json.dump({"checkpoints": out}, f, indent=2)


if __name__ == "__main__":
    main()
