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

#include "nlifaith/data_io.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include "nlifaith/backend.hpp"
#include "nlifaith/csv.hpp"
#include "nlifaith/errors.hpp"
#include "nlifaith/random.hpp"

#include <json.hpp>

namespace nlifaith::io {

using nlohmann::json;
using scoring::NLIProbs;
using scoring::ScoreRecord;

namespace {

std::string trim_lower(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

std::size_t column_index(const csv::Row& header, const std::string& name,
                         const std::filesystem::path& path) {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) {
    throw SchemaError(path.string() + ": missing column '" + name + "'");
  }
  return static_cast<std::size_t>(it - header.begin());
}

}  // namespace

// ---------------------------------------------------------------------------

double CorpusStats::faithful_percent() const {
  return total ? 100.0 * static_cast<double>(n_faithful) / static_cast<double>(total) : 0.0;
}

double CorpusStats::unfaithful_percent() const {
  return total ? 100.0 * static_cast<double>(n_unfaithful) / static_cast<double>(total) : 0.0;
}

std::string make_uid(std::string_view corpus_id, std::size_t row) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06zu", row);
  return std::string(corpus_id) + "-" + buf;
}

LoaderConfig LoaderConfig::true_default() { return LoaderConfig{}; }

LoaderConfig LoaderConfig::begin_v2() {
  LoaderConfig cfg;
  cfg.grounding_column = "knowledge";
  cfg.generation_column = "response";
  cfg.label_column = "begin_label";
  cfg.model_column = "model";
  cfg.faithful_labels = {"fully attributable", "fully_attributable"};
  cfg.unfaithful_labels = {};
  cfg.other_labels_unfaithful = true;
  cfg.delimiter = '\t';
  return cfg;
}

LoaderConfig loader_config_for(std::string_view corpus_id) {
  if (corpus_id == "begin_v2") return LoaderConfig::begin_v2();
  return LoaderConfig::true_default();
}

std::map<std::string, LoaderConfig> read_loader_configs(const std::filesystem::path& path) {
  auto in = open_in(path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
  if (!doc.is_object()) throw SchemaError(path.string() + ": expected a JSON object");
  std::map<std::string, LoaderConfig> out;
  for (const auto& [id, j] : doc.items()) {
    LoaderConfig cfg = loader_config_for(id);
    if (j.contains("grounding_column")) cfg.grounding_column = j["grounding_column"];
    if (j.contains("generation_column")) cfg.generation_column = j["generation_column"];
    if (j.contains("label_column")) cfg.label_column = j["label_column"];
    if (j.contains("model_column")) cfg.model_column = j["model_column"].get<std::string>();
    if (j.contains("faithful_labels"))
      cfg.faithful_labels = j["faithful_labels"].get<std::set<std::string>>();
    if (j.contains("unfaithful_labels"))
      cfg.unfaithful_labels = j["unfaithful_labels"].get<std::set<std::string>>();
    if (j.contains("other_labels_unfaithful"))
      cfg.other_labels_unfaithful = j["other_labels_unfaithful"];
    if (j.contains("filter_column")) cfg.filter_column = j["filter_column"].get<std::string>();
    if (j.contains("filter_value")) cfg.filter_value = j["filter_value"].get<std::string>();
    if (j.contains("delimiter")) {
      const std::string d = j["delimiter"];
      if (d.size() != 1) throw SchemaError(path.string() + ": delimiter must be one character");
      cfg.delimiter = d[0];
    }
    out.emplace(id, std::move(cfg));
  }
  return out;
}

std::vector<FaithfulnessInstance> load_true_corpus(const std::filesystem::path& path,
                                                   std::string_view corpus_id) {
  return load_true_corpus(path, corpus_id, loader_config_for(corpus_id));
}

std::vector<FaithfulnessInstance> load_true_corpus(const std::filesystem::path& path,
                                                   std::string_view corpus_id,
                                                   const LoaderConfig& cfg) {
  auto in = open_in(path);
  csv::Reader reader(in, cfg.delimiter);
  csv::Row header;
  if (!reader.next(header) || (header.size() == 1 && header[0].empty()))
    throw SchemaError(path.string() + ": empty file, no header");
  // Strip a UTF-8 byte order mark from the first column name.
  if (!header.empty() && header[0].rfind("\xEF\xBB\xBF", 0) == 0) header[0].erase(0, 3);

  const auto g_col = column_index(header, cfg.grounding_column, path);
  const auto t_col = column_index(header, cfg.generation_column, path);
  const auto l_col = column_index(header, cfg.label_column, path);
  std::optional<std::size_t> m_col;
  if (cfg.model_column) m_col = column_index(header, *cfg.model_column, path);
  std::optional<std::size_t> f_col;
  if (cfg.filter_column) f_col = column_index(header, *cfg.filter_column, path);

  std::set<std::string> faithful, unfaithful;
  for (const auto& l : cfg.faithful_labels) faithful.insert(trim_lower(l));
  for (const auto& l : cfg.unfaithful_labels) unfaithful.insert(trim_lower(l));

  std::vector<FaithfulnessInstance> out;
  csv::Row row;
  std::size_t data_row = 0;
  while (reader.next(row)) {
    if (row.size() == 1 && row[0].empty()) continue;  // blank line
    ++data_row;
    const std::string where =
        path.string() + " row " + std::to_string(data_row) + " (line " +
        std::to_string(reader.line()) + ")";
    if (row.size() != header.size()) {
      throw SchemaError(where + ": expected " + std::to_string(header.size()) +
                        " fields, got " + std::to_string(row.size()));
    }
    if (f_col && row[*f_col] != cfg.filter_value.value_or("")) continue;
    FaithfulnessInstance inst;
    inst.corpus_id = std::string(corpus_id);
    inst.uid = make_uid(corpus_id, out.size());
    inst.grounding = row[g_col];
    inst.generation = row[t_col];
    const std::string label = trim_lower(row[l_col]);
    if (faithful.count(label)) {
      inst.gold_label = 1;
    } else if (unfaithful.count(label) || cfg.other_labels_unfaithful) {
      inst.gold_label = 0;
    } else {
      throw ValidationError(where + ": non-binary label '" + row[l_col] + "'");
    }
    if (inst.grounding.empty()) throw ValidationError(where + ": empty grounding");
    if (inst.generation.empty()) throw ValidationError(where + ": empty generation");
    if (m_col) inst.generator_model = row[*m_col];
    out.push_back(std::move(inst));
  }
  if (out.empty()) throw SchemaError(path.string() + ": no data rows");
  return out;
}

void write_true_corpus(const std::filesystem::path& path,
                       std::span<const FaithfulnessInstance> instances) {
  auto out = open_out(path);
  const bool with_model = std::any_of(instances.begin(), instances.end(),
                                      [](const auto& i) { return i.generator_model.has_value(); });
  csv::Row header = {"grounding", "generated_text", "label"};
  if (with_model) header.push_back("model");
  csv::write_row(out, header);
  for (const auto& inst : instances) {
    csv::Row row = {inst.grounding, inst.generation, std::to_string(inst.gold_label)};
    if (with_model) row.push_back(inst.generator_model.value_or(""));
    csv::write_row(out, row);
  }
}

CorpusStats corpus_stats(std::span<const FaithfulnessInstance> instances) {
  if (instances.empty()) throw UsageError("corpus_stats: no instances");
  CorpusStats s;
  s.corpus_id = instances.front().corpus_id;
  for (const auto& inst : instances) {
    if (inst.gold_label == 1) {
      ++s.n_faithful;
    } else {
      ++s.n_unfaithful;
    }
  }
  s.total = instances.size();
  return s;
}

const std::vector<std::string>& default_evaluation_corpora() {
  static const std::vector<std::string> kCorpora = {
      "frank", "mnbm", "summeval", "qags_x", "qags_c",
      "begin", "dialfact", "q2", "paws"};
  return kCorpora;
}

bool is_fact_checking(std::string_view corpus_id) {
  return corpus_id == "fever" || corpus_id == "vitaminc";
}

const std::vector<CorpusStats>& reference_stats() {
  static const std::vector<CorpusStats> kStats = {
      {"frank", 223, 448, 671},       {"mnbm", 255, 2245, 2500},
      {"summeval", 1306, 294, 1600},  {"qags_x", 116, 123, 239},
      {"qags_c", 113, 122, 235},      {"begin", 282, 554, 836},
      {"dialfact", 3341, 5348, 8689}, {"q2", 628, 460, 1088},
      {"paws", 3539, 4461, 8000},
  };
  return kStats;
}

std::optional<CorpusStats> reference_stats_for(std::string_view corpus_id) {
  for (const auto& s : reference_stats())
    if (s.corpus_id == corpus_id) return s;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// NLI JSON lines

std::string nli_to_json_line(const adaptation::NLIInstance& inst) {
  json j;
  j["uid"] = inst.uid;
  j["premise"] = inst.premise;
  j["hypothesis"] = inst.hypothesis;
  j["label"] = adaptation::to_string(inst.label);
  j["source_round"] = inst.source_round ? json(*inst.source_round) : json(nullptr);
  j["augmented"] = inst.augmented;
  j["phrase_used"] = inst.phrase_used ? json(*inst.phrase_used) : json(nullptr);
  return j.dump();
}

std::vector<adaptation::NLIInstance> read_nli_jsonl(const std::filesystem::path& path,
                                                    std::optional<std::string> source_round) {
  auto in = open_in(path);
  std::vector<adaptation::NLIInstance> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const std::string where = path.string() + " line " + std::to_string(lineno);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw SchemaError(where + ": " + e.what());
    }
    auto field = [&](const char* name) -> std::string {
      if (!j.contains(name) || !j[name].is_string())
        throw SchemaError(where + ": missing string field '" + name + "'");
      return j[name].get<std::string>();
    };
    adaptation::NLIInstance inst;
    inst.uid = field("uid");
    inst.premise = j.contains("premise") ? field("premise") : field("context");
    inst.hypothesis = field("hypothesis");
    try {
      inst.label = adaptation::parse_nli_label(field("label"));
    } catch (const UsageError& e) {
      throw ValidationError(where + ": " + e.what());
    }
    if (j.contains("source_round") && j["source_round"].is_string()) {
      inst.source_round = j["source_round"].get<std::string>();
    } else {
      inst.source_round = source_round;
    }
    inst.augmented = j.value("augmented", false);
    if (j.contains("phrase_used") && j["phrase_used"].is_string())
      inst.phrase_used = j["phrase_used"].get<std::string>();
    if (inst.augmented != inst.phrase_used.has_value())
      throw ValidationError(where + ": 'augmented' and 'phrase_used' disagree");
    out.push_back(std::move(inst));
  }
  return out;
}

void write_nli_jsonl(const std::filesystem::path& path,
                     std::span<const adaptation::NLIInstance> corpus) {
  auto out = open_out(path);
  for (const auto& inst : corpus) out << nli_to_json_line(inst) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Score files

void write_score_csv(const std::filesystem::path& path, std::span<const ScoreRow> rows) {
  auto out = open_out(path);
  csv::write_row(out, {"uid", "corpus", "metric", "score"});
  for (const auto& r : rows)
    csv::write_row(out, {r.uid, r.corpus, r.metric, csv::format_double(r.score)});
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<ScoreRow> read_score_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  csv::Reader reader(in);
  csv::Row header;
  if (!reader.next(header)) throw SchemaError(path.string() + ": empty score file");
  const auto u = column_index(header, "uid", path);
  const auto c = column_index(header, "corpus", path);
  const auto m = column_index(header, "metric", path);
  const auto s = column_index(header, "score", path);
  std::vector<ScoreRow> rows;
  csv::Row row;
  while (reader.next(row)) {
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() != header.size())
      throw SchemaError(path.string() + " line " + std::to_string(reader.line()) +
                        ": wrong field count");
    try {
      rows.push_back({row[u], row[c], row[m], csv::parse_double(row[s])});
    } catch (const ValidationError& e) {
      throw ValidationError(path.string() + " line " + std::to_string(reader.line()) +
                            ": " + e.what());
    }
  }
  return rows;
}

std::vector<ScoreRow> to_score_rows(std::span<const FaithfulnessInstance> instances,
                                    std::span<const ScoreRecord> records) {
  if (instances.size() != records.size())
    throw AlignmentError("instances and records differ in length");
  std::vector<ScoreRow> rows;
  rows.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].instance_uid != instances[i].uid)
      throw AlignmentError("record uid " + records[i].instance_uid +
                           " does not match instance uid " + instances[i].uid);
    rows.push_back({records[i].instance_uid, instances[i].corpus_id,
                    records[i].metric_id, records[i].score});
  }
  return rows;
}

std::string record_to_json_line(const ScoreRecord& rec) {
  json j;
  j["uid"] = rec.instance_uid;
  j["metric"] = rec.metric_id;
  j["score"] = rec.ok() ? json(rec.score) : json(nullptr);
  auto& samples = j["prob_samples"] = json::array();
  for (const auto& p : rec.prob_samples)
    samples.push_back({p.entailment, p.neutral, p.contradiction});
  j["truncated"] = rec.truncated;
  if (rec.error) j["error"] = *rec.error;
  return j.dump();
}

ScoreRecord record_from_json_line(std::string_view line) {
  const json j = json::parse(line);
  ScoreRecord rec;
  rec.instance_uid = j.at("uid").get<std::string>();
  rec.metric_id = j.at("metric").get<std::string>();
  rec.truncated = j.at("truncated").get<bool>();
  for (const auto& p : j.at("prob_samples")) {
    if (!p.is_array() || p.size() != 3) throw json::type_error::create(302, "bad sample", &p);
    rec.prob_samples.push_back({p[0].get<double>(), p[1].get<double>(), p[2].get<double>()});
  }
  if (j.contains("error")) {
    rec.error = j["error"].get<std::string>();
    rec.score = std::nan("");
  } else {
    rec.score = j.at("score").get<double>();
  }
  return rec;
}

void write_records_jsonl(const std::filesystem::path& path,
                         std::span<const ScoreRecord> records) {
  auto out = open_out(path);
  for (const auto& r : records) out << record_to_json_line(r) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<ScoreRecord> read_records_jsonl(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::vector<ScoreRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(record_from_json_line(line));
    } catch (const json::exception& e) {
      throw SchemaError(path.string() + " line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Score cache

namespace {

constexpr std::string_view kCacheFormat = "nlifaith-score-cache";
constexpr int kCacheVersion = 1;

json cache_header(const CacheKey& key) {
  return {{"format", kCacheFormat},
          {"version", kCacheVersion},
          {"checkpoint", key.checkpoint},
          {"config_digest", key.config_digest},
          {"corpus_id", key.corpus_id}};
}

std::string sanitize(std::string_view s) {
  std::string out;
  for (char c : s) out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
  if (out.size() > 40) out.resize(40);
  return out;
}

}  // namespace

std::string CacheKey::file_name() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(hash_string(
                    checkpoint + '\x1f' + config_digest + '\x1f' + corpus_id)));
  return sanitize(corpus_id) + "." + config_digest + "." + buf + ".jsonl";
}

ScoreCache::ScoreCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::filesystem::path ScoreCache::path_for(const CacheKey& key) const {
  return dir_ / key.file_name();
}

void ScoreCache::warn(std::string message) {
  std::cerr << "warning: " << message << '\n';
  warnings_.push_back(std::move(message));
}

ScoreCache::Lock::Lock(const ScoreCache& cache, const CacheKey& key) {
  const auto lock_path = cache.path_for(key).string() + ".lock";
  fd_ = ::open(lock_path.c_str(), O_CREAT | O_RDWR, 0644);
  if (fd_ < 0) throw IoError("cannot open cache lock " + lock_path);
  if (::flock(fd_, LOCK_EX) != 0) {
    ::close(fd_);
    throw IoError("cannot lock " + lock_path);
  }
}

ScoreCache::Lock::~Lock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

std::map<std::string, ScoreRecord> ScoreCache::read_file(const CacheKey& key,
                                                         bool& corrupt) const {
  corrupt = false;
  std::map<std::string, ScoreRecord> out;
  const auto path = path_for(key);
  std::ifstream in(path, std::ios::binary);
  if (!in) return out;
  std::string line;
  if (!std::getline(in, line)) {
    corrupt = true;
    return {};
  }
  try {
    if (json::parse(line) != cache_header(key)) {
      corrupt = true;
      return {};
    }
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto rec = record_from_json_line(line);
      if (!rec.ok() || rec.prob_samples.empty()) {
        corrupt = true;
        return {};
      }
      out[rec.instance_uid] = std::move(rec);
    }
  } catch (const json::exception&) {
    corrupt = true;
    return {};
  }
  // A file without a trailing newline was cut short mid-write.
  in.clear();
  in.seekg(0, std::ios::end);
  if (in.tellg() > 0) {
    in.seekg(-1, std::ios::end);
    if (in.get() != '\n') {
      corrupt = true;
      return {};
    }
  }
  return out;
}

std::map<std::string, ScoreRecord> ScoreCache::load(const CacheKey& key) {
  bool corrupt = false;
  auto out = read_file(key, corrupt);
  if (corrupt) {
    warn("score cache " + path_for(key).string() +
         " is corrupt or has a mismatching header; rebuilding from scratch");
    std::filesystem::remove(path_for(key));
  }
  return out;
}

void ScoreCache::store(const CacheKey& key, std::span<const ScoreRecord> records) {
  const auto path = path_for(key);
  bool corrupt = false;
  const auto existing = read_file(key, corrupt);
  // Existing lines are kept verbatim; new records are appended after them.
  std::string body;
  if (!corrupt && std::filesystem::exists(path)) {
    std::ifstream in(path, std::ios::binary);
    body.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  } else {
    body = cache_header(key).dump() + "\n";
  }
  std::set<std::string> seen;
  for (const auto& rec : records) {
    if (!rec.ok() || existing.count(rec.instance_uid) || !seen.insert(rec.instance_uid).second)
      continue;
    body += record_to_json_line(rec);
    body += '\n';
  }
  const auto tmp = path.string() + ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    out << body;
    out.flush();
    if (!out) throw IoError("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

std::vector<ScoreRecord> cache_get_or_score(std::span<const FaithfulnessInstance> instances,
                                            const scoring::MetricConfig& cfg,
                                            Backend& backend, ScoreCache& cache,
                                            std::string_view metric_id) {
  cfg.validate();
  if (instances.empty()) throw UsageError("cache_get_or_score: no instances");
  const std::string id =
      metric_id.empty() ? cfg.default_metric_id() : std::string(metric_id);

  // Group by corpus; each corpus has its own key and lock.
  std::map<std::string, std::vector<std::size_t>> by_corpus;
  for (std::size_t i = 0; i < instances.size(); ++i)
    by_corpus[instances[i].corpus_id].push_back(i);

  std::vector<ScoreRecord> out(instances.size());
  for (const auto& [corpus, indices] : by_corpus) {
    const CacheKey key{backend.checkpoint_or_endpoint(), cfg.digest(), corpus};
    ScoreCache::Lock lock(cache, key);
    auto cached = cache.load(key);

    std::vector<FaithfulnessInstance> todo;
    std::vector<std::size_t> todo_pos;
    for (std::size_t i : indices) {
      auto it = cached.find(instances[i].uid);
      if (it != cached.end()) {
        out[i] = it->second;
        out[i].metric_id = id;
      } else {
        todo.push_back(instances[i]);
        todo_pos.push_back(i);
      }
    }
    if (todo.empty()) continue;
    auto fresh = scoring::score_dataset(todo, cfg, backend, id);
    cache.store(key, fresh);
    for (std::size_t j = 0; j < fresh.size(); ++j) out[todo_pos[j]] = std::move(fresh[j]);
  }
  return out;
}

}  // namespace nlifaith::io
