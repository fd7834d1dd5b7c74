// Copyright 2026 The nlifaith Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "nlifaith/adaptation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "nlifaith/data_io.hpp"
#include "nlifaith/errors.hpp"
#include "nlifaith/random.hpp"
#include "nlifaith/util.hpp"

#include <json.hpp>

#ifndef NLIFAITH_TOOLS_DIR
#define NLIFAITH_TOOLS_DIR "tools"
#endif

namespace nlifaith::adaptation {

using nlohmann::json;

namespace {

// Stream ids keep the draws of different operations independent even when
// they share a seed.
constexpr std::uint64_t kPhraseChoiceStream = 0x70687261736531ULL;
constexpr std::uint64_t kSubsetStream = 0x73756273657431ULL;

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string corpus_bytes(std::span<const NLIInstance> corpus) {
  std::string out;
  for (const auto& inst : corpus) {
    out += io::nli_to_json_line(inst);
    out += '\n';
  }
  return out;
}

}  // namespace

std::string_view to_string(NliLabel label) {
  switch (label) {
    case NliLabel::kEntailment:
      return "entailment";
    case NliLabel::kNeutral:
      return "neutral";
    case NliLabel::kContradiction:
      return "contradiction";
  }
  return "neutral";
}

NliLabel parse_nli_label(std::string_view text) {
  if (text == "e" || text == "entailment") return NliLabel::kEntailment;
  if (text == "n" || text == "neutral") return NliLabel::kNeutral;
  if (text == "c" || text == "contradiction") return NliLabel::kContradiction;
  throw UsageError("unknown NLI label '" + std::string(text) + "'");
}

std::string_view to_string(PhraseCategory category) {
  switch (category) {
    case PhraseCategory::kIntroductory:
      return "introductory";
    case PhraseCategory::kHedging:
      return "hedging";
    case PhraseCategory::kSentiment:
      return "sentiment";
  }
  return "introductory";
}

PhraseCategory parse_phrase_category(std::string_view text) {
  std::string lower(trim(text));
  for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (lower == "introductory" || lower == "introductory statements")
    return PhraseCategory::kIntroductory;
  if (lower == "hedging") return PhraseCategory::kHedging;
  if (lower == "sentiment") return PhraseCategory::kSentiment;
  throw UsageError("unknown phrase category '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------

PhraseSet::PhraseSet(std::vector<Phrase> entries) : entries_(std::move(entries)) {
  if (entries_.empty()) throw UsageError("phrase set is empty");
  std::set<std::string> seen;
  for (const auto& p : entries_) {
    if (p.text.empty()) throw UsageError("phrase set contains an empty phrase");
    if (!seen.insert(p.text).second)
      throw UsageError("duplicate phrase '" + p.text + "'");
  }
}

PhraseSet PhraseSet::default_set() {
  using C = PhraseCategory;
  return PhraseSet({
      {"Here is what I know:", C::kIntroductory},
      {"yep. Also", C::kIntroductory},
      {"Sure! Here is what I know:", C::kIntroductory},
      {"I am not sure, but", C::kHedging},
      {"I am not sure but I do know that", C::kHedging},
      {"I do not have information on this but", C::kHedging},
      {"I think", C::kHedging},
      {"I believe", C::kHedging},
      {"I love that!", C::kSentiment},
      {"I like that!", C::kSentiment},
  });
}

PhraseSet PhraseSet::parse(std::string_view text) {
  std::vector<Phrase> entries;
  std::optional<PhraseCategory> current;
  std::size_t lineno = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    if (line.front() == '[' && line.back() == ']') {
      current = parse_phrase_category(line.substr(1, line.size() - 2));
      continue;
    }
    if (!current)
      throw SchemaError("phrase on line " + std::to_string(lineno) +
                        " appears before any [category] header");
    entries.push_back({std::string(line), *current});
  }
  return PhraseSet(std::move(entries));
}

PhraseSet PhraseSet::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse(text);
}

std::string PhraseSet::serialize() const {
  std::string out;
  std::optional<PhraseCategory> current;
  for (const auto& p : entries_) {
    if (!current || *current != p.category) {
      if (current) out += '\n';
      out += "[" + std::string(to_string(p.category)) + "]\n";
      current = p.category;
    }
    out += p.text + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------

NLIInstance augment_instance(const NLIInstance& inst, std::string_view phrase) {
  if (phrase.empty()) throw UsageError("augmentation phrase is empty");
  if (inst.augmented) throw UsageError("instance '" + inst.uid + "' is already augmented");
  NLIInstance out = inst;
  out.uid = inst.uid + "#aug";
  out.hypothesis = std::string(phrase) + " " + inst.hypothesis;
  out.augmented = true;
  out.phrase_used = std::string(phrase);
  return out;
}

NLIInstance strip_augmentation(const NLIInstance& inst) {
  if (!inst.augmented || !inst.phrase_used)
    throw UsageError("instance '" + inst.uid + "' is not augmented");
  const std::string prefix = *inst.phrase_used + " ";
  if (inst.hypothesis.rfind(prefix, 0) != 0)
    throw ValidationError("instance '" + inst.uid + "' does not start with its phrase");
  NLIInstance out = inst;
  constexpr std::string_view kSuffix = "#aug";
  if (out.uid.size() >= kSuffix.size() &&
      out.uid.compare(out.uid.size() - kSuffix.size(), kSuffix.size(), kSuffix) == 0)
    out.uid.resize(out.uid.size() - kSuffix.size());
  out.hypothesis = inst.hypothesis.substr(prefix.size());
  out.augmented = false;
  out.phrase_used.reset();
  return out;
}

std::size_t phrase_choice(std::uint64_t seed, std::size_t index, std::size_t n_phrases) {
  CounterRng rng(hash_combine(seed, kPhraseChoiceStream), index);
  return static_cast<std::size_t>(rng.below(n_phrases));
}

std::vector<NLIInstance> build_augmented_corpus(std::span<const NLIInstance> corpus,
                                                const PhraseSet& phrases,
                                                std::uint64_t seed) {
  if (corpus.empty()) throw UsageError("cannot augment an empty corpus");
  std::vector<NLIInstance> out;
  out.reserve(corpus.size() * 2);
  out.insert(out.end(), corpus.begin(), corpus.end());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& phrase = phrases[phrase_choice(seed, i, phrases.size())];
    out.push_back(augment_instance(corpus[i], phrase.text));
  }
  return out;
}

PhraseSet sample_phrase_subset(const PhraseSet& phrases, std::size_t m, std::uint64_t seed) {
  if (m < 1 || m > phrases.size()) {
    throw UsageError("phrase subset size " + std::to_string(m) + " outside [1, " +
                     std::to_string(phrases.size()) + "]");
  }
  std::vector<std::size_t> idx(phrases.size());
  std::iota(idx.begin(), idx.end(), 0);
  CounterRng rng(seed, kSubsetStream);
  // Partial Fisher-Yates: the first m slots are a uniform sample.
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(idx.size() - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(m);
  std::sort(idx.begin(), idx.end());
  std::vector<Phrase> chosen;
  for (std::size_t i : idx) chosen.push_back(phrases[i]);
  return PhraseSet(std::move(chosen));
}

// ---------------------------------------------------------------------------

std::string manifest_to_json(const RobustnessManifest& m) {
  json j;
  j["repeat"] = m.repeat;
  j["seed"] = m.seed;
  j["phrases"] = m.phrases;
  j["output_path"] = m.output_path.string();
  j["content_sha256"] = m.content_sha256;
  j["instances"] = m.instances;
  return j.dump(2);
}

RobustnessManifest manifest_from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    RobustnessManifest m;
    m.repeat = j.at("repeat").get<std::size_t>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.phrases = j.at("phrases").get<std::vector<std::string>>();
    m.output_path = j.at("output_path").get<std::string>();
    m.content_sha256 = j.at("content_sha256").get<std::string>();
    m.instances = j.at("instances").get<std::size_t>();
    return m;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("bad robustness manifest: ") + e.what());
  }
}

std::vector<RobustnessManifest> run_robustness_protocol(std::span<const NLIInstance> corpus,
                                                        const PhraseSet& phrases,
                                                        const std::filesystem::path& out_dir,
                                                        std::size_t repeats, std::size_t m,
                                                        std::uint64_t seed) {
  if (repeats < 1) throw UsageError("robustness protocol needs at least one repeat");
  std::vector<RobustnessManifest> manifests;
  for (std::size_t r = 0; r < repeats; ++r) {
    const std::uint64_t run_seed = seed + r;
    const auto subset = sample_phrase_subset(phrases, m, run_seed);
    const auto augmented = build_augmented_corpus(corpus, subset, run_seed);
    char name[32];
    std::snprintf(name, sizeof(name), "repeat_%02zu", r);
    const auto dir = out_dir / name;
    RobustnessManifest man;
    man.repeat = r;
    man.seed = run_seed;
    for (const auto& p : subset.entries()) man.phrases.push_back(p.text);
    man.output_path = dir / "train.jsonl";
    man.instances = augmented.size();
    try {
      std::filesystem::create_directories(dir);
      const std::string bytes = corpus_bytes(augmented);
      {
        std::ofstream out(man.output_path, std::ios::binary | std::ios::trunc);
        out << bytes;
        if (!out) throw IoError("write failed: " + man.output_path.string());
      }
      man.content_sha256 = sha256_hex(bytes);
      std::ofstream mf(dir / "manifest.json", std::ios::binary | std::ios::trunc);
      mf << manifest_to_json(man) << '\n';
      if (!mf) throw IoError("write failed: " + (dir / "manifest.json").string());
    } catch (const std::exception& e) {
      throw IoError("robustness repeat " + std::to_string(r) + ": " + e.what());
    }
    manifests.push_back(std::move(man));
  }
  return manifests;
}

bool replay_manifest(const RobustnessManifest& manifest, std::span<const NLIInstance> corpus,
                     const PhraseSet& phrases) {
  const auto subset = sample_phrase_subset(phrases, manifest.phrases.size(), manifest.seed);
  std::vector<std::string> texts;
  for (const auto& p : subset.entries()) texts.push_back(p.text);
  if (texts != manifest.phrases) return false;
  const auto augmented = build_augmented_corpus(corpus, subset, manifest.seed);
  return sha256_hex(corpus_bytes(augmented)) == manifest.content_sha256;
}

std::map<std::string, RunSummary> summarize_runs(
    std::span<const std::map<std::string, double>> runs) {
  std::map<std::string, std::vector<double>> values;
  for (const auto& run : runs)
    for (const auto& [corpus, auc] : run) values[corpus].push_back(auc);
  std::map<std::string, RunSummary> out;
  for (const auto& [corpus, v] : values) {
    RunSummary s;
    s.runs = v.size();
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(v.size()));
    s.min = *std::min_element(v.begin(), v.end());
    s.max = *std::max_element(v.begin(), v.end());
    out[corpus] = s;
  }
  return out;
}

// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(warmup_ratio > 0.0) || !(weight_decay > 0.0) || effective_batch_size <= 0 ||
      !(learning_rate > 0.0) || checkpoint_interval <= 0 || total_steps < 0) {
    throw UsageError("training hyperparameters must be positive");
  }
  if (total_steps % checkpoint_interval != 0) {
    throw UsageError("checkpoint_interval " + std::to_string(checkpoint_interval) +
                     " does not divide total_steps " + std::to_string(total_steps));
  }
}

ScriptTrainer::ScriptTrainer(std::string script, std::string python)
    : script_(script.empty() ? std::string(NLIFAITH_TOOLS_DIR) + "/finetune_nli.py"
                             : std::move(script)),
      python_(std::move(python)) {}

std::vector<CheckpointEval> ScriptTrainer::train(const TrainRequest& request) {
  std::filesystem::create_directories(request.output_dir);
  const auto req_path = request.output_dir / "train_request.json";
  const auto res_path = request.output_dir / "train_result.json";
  const auto& c = request.config;
  json req = {{"base_checkpoint", request.base_checkpoint},
              {"train_path", request.train_path.string()},
              {"val_path", request.val_path.string()},
              {"output_dir", request.output_dir.string()},
              {"warmup_ratio", c.warmup_ratio},
              {"weight_decay", c.weight_decay},
              {"effective_batch_size", c.effective_batch_size},
              {"learning_rate", c.learning_rate},
              {"total_steps", c.total_steps},
              {"checkpoint_interval", c.checkpoint_interval},
              {"seed", c.seed}};
  {
    std::ofstream out(req_path);
    out << req.dump(2) << '\n';
    if (!out) throw IoError("cannot write " + req_path.string());
  }
  const int rc = run_process(
      {python_, script_, "--request", req_path.string(), "--result", res_path.string()});
  if (rc != 0) throw Error("training script exited with status " + std::to_string(rc));
  std::ifstream in(res_path);
  if (!in) throw IoError("training script wrote no result at " + res_path.string());
  std::vector<CheckpointEval> out;
  try {
    const json res = json::parse(in);
    for (const auto& e : res.at("checkpoints")) {
      const auto& loss = e.at("val_loss");
      out.push_back({e.at("step").get<int>(), e.at("checkpoint").get<std::string>(),
                     loss.is_number() ? loss.get<double>() : std::nan("")});
    }
  } catch (const json::exception& e) {
    throw SchemaError("bad training result " + res_path.string() + ": " + e.what());
  }
  return out;
}

FinetuneResult finetune(const std::string& model_checkpoint,
                        const std::filesystem::path& train_corpus,
                        const std::filesystem::path& val_corpus, const TrainConfig& cfg,
                        std::span<const double> learning_rates,
                        const std::filesystem::path& output_dir, Trainer& trainer) {
  cfg.validate();
  std::filesystem::create_directories(output_dir);
  json meta;
  meta["base_checkpoint"] = model_checkpoint;
  meta["train_corpus"] = train_corpus.string();
  meta["val_corpus"] = val_corpus.string();
  meta["config"] = {{"warmup_ratio", cfg.warmup_ratio},
                    {"weight_decay", cfg.weight_decay},
                    {"effective_batch_size", cfg.effective_batch_size},
                    {"total_steps", cfg.total_steps},
                    {"checkpoint_interval", cfg.checkpoint_interval},
                    {"selection", "min_augmented_val_loss"},
                    {"seed", cfg.seed}};
  meta["runs"] = json::array();

  FinetuneResult best;
  best.checkpoint = model_checkpoint;
  best.val_loss = std::numeric_limits<double>::infinity();
  best.learning_rate = cfg.learning_rate;

  if (cfg.total_steps > 0) {
    std::vector<double> lrs(learning_rates.begin(), learning_rates.end());
    if (lrs.empty()) lrs.push_back(cfg.learning_rate);
    for (std::size_t i = 0; i < lrs.size(); ++i) {
      TrainRequest req;
      req.base_checkpoint = model_checkpoint;
      req.train_path = train_corpus;
      req.val_path = val_corpus;
      req.output_dir = output_dir / ("lr_" + std::to_string(i));
      req.config = cfg;
      req.config.learning_rate = lrs[i];
      const auto evals = trainer.train(req);

      json run = {{"learning_rate", lrs[i]}, {"checkpoints", json::array()}};
      for (const auto& e : evals) {
        run["checkpoints"].push_back(
            {{"step", e.step},
             {"checkpoint", e.checkpoint},
             {"val_loss", std::isfinite(e.val_loss) ? json(e.val_loss) : json(nullptr)}});
      }
      meta["runs"].push_back(run);
      for (const auto& e : evals) {
        if (!std::isfinite(e.val_loss)) {
          std::ofstream(output_dir / "finetune_run.json") << meta.dump(2) << '\n';
          throw DivergenceError("non-finite validation loss at step " +
                                std::to_string(e.step) + " with learning rate " +
                                std::to_string(lrs[i]) + " (checkpoint " + e.checkpoint + ")");
        }
        if (e.val_loss < best.val_loss) {
          best.checkpoint = e.checkpoint;
          best.val_loss = e.val_loss;
          best.learning_rate = lrs[i];
          best.step = e.step;
        }
      }
    }
    if (!std::isfinite(best.val_loss)) throw Error("training produced no checkpoints");
  }

  meta["selected"] = {{"checkpoint", best.checkpoint},
                      {"learning_rate", best.learning_rate},
                      {"step", best.step},
                      {"val_loss", std::isfinite(best.val_loss) ? json(best.val_loss)
                                                                : json(nullptr)}};
  best.metadata_path = output_dir / "finetune_run.json";
  std::ofstream out(best.metadata_path);
  out << meta.dump(2) << '\n';
  if (!out) throw IoError("cannot write " + best.metadata_path.string());
  return best;
}

}  // namespace nlifaith::adaptation
