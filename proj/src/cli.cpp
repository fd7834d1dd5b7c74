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


#include "nlifaith/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "nlifaith/analysis.hpp"
#include "nlifaith/csv.hpp"
#include "nlifaith/data_io.hpp"
#include "nlifaith/errors.hpp"
#include "nlifaith/evaluation_stats.hpp"
#include "nlifaith/nli_scoring.hpp"
#include "nlifaith/random.hpp"
#include "nlifaith/util.hpp"

namespace nlifaith::cli {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string fixed(double v, int prec) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  if (!out.flush()) throw IoError("write failed for " + path.string());
}

// Fixed-width text table for stdout.
void print_table(std::ostream& out, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  for (const auto& r : rows)
    for (std::size_t c = 0; c < r.size() && c < width.size(); ++c)
      width[c] = std::max(width[c], r[c].size());
  auto line = [&](const std::vector<std::string>& r) {
    for (std::size_t c = 0; c < width.size(); ++c) {
      const std::string& cell = c < r.size() ? r[c] : std::string();
      out << (c ? "  " : "") << cell << std::string(width[c] - cell.size(), ' ');
    }
    out << '\n';
  };
  line(header);
  std::size_t total = 0;
  for (auto w : width) total += w;
  out << std::string(total + 2 * (width.size() - 1), '-') << '\n';
  for (const auto& r : rows) line(r);
}

// ---------------------------------------------------------------- settings

struct Settings {
  scoring::MetricConfig metric;
  BackendKind backend = BackendKind::kLocalModel;
  std::string target;
  std::string cache_dir;
  std::uint64_t seed = 0;
  int bootstrap = stats::kDefaultBootstrapSamples;
  int permutations = stats::kDefaultPermutations;
  double alpha = stats::kDefaultAlpha;
  bool include_fever = false;

  json to_json() const {
    json j;
    j["mode"] = std::string(scoring::to_string(metric.mode));
    j["mc"] = metric.mc_enabled;
    j["k"] = metric.k;
    j["batch_size"] = metric.batch_size;
    j["max_premise_tokens"] = metric.max_premise_tokens;
    j["backend"] = std::string(to_string(backend));
    j["target"] = target;
    j["cache"] = cache_dir;
    j["seed"] = seed;
    j["bootstrap"] = bootstrap;
    j["permutations"] = permutations;
    j["alpha"] = alpha;
    j["include_fever"] = include_fever;
    return j;
  }
};

// Values given on the command line; they win over the config file.
struct Overrides {
  std::optional<std::string> config_path;
  std::optional<std::string> mode;
  std::optional<bool> mc;
  std::optional<int> k;
  std::optional<int> batch_size;
  std::optional<int> max_premise_tokens;
  std::optional<std::string> backend;
  std::optional<std::string> target;
  std::optional<std::string> cache_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> bootstrap;
  std::optional<int> permutations;
  std::optional<double> alpha;
  std::optional<bool> include_fever;
};

template <class T>
T config_value(const json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw UsageError("config key '" + key + "' has the wrong type");
  }
}

void apply_config_file(Settings& s, const fs::path& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw UsageError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw UsageError("config " + path.string() + " must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key == "mode") s.metric.mode = scoring::parse_score_mode(config_value<std::string>(v, key));
    else if (key == "mc") s.metric.mc_enabled = config_value<bool>(v, key);
    else if (key == "k") s.metric.k = config_value<int>(v, key);
    else if (key == "batch_size") s.metric.batch_size = config_value<int>(v, key);
    else if (key == "max_premise_tokens") s.metric.max_premise_tokens = config_value<int>(v, key);
    else if (key == "backend") s.backend = parse_backend_kind(config_value<std::string>(v, key));
    else if (key == "target") s.target = config_value<std::string>(v, key);
    else if (key == "cache") s.cache_dir = config_value<std::string>(v, key);
    else if (key == "seed") s.seed = config_value<std::uint64_t>(v, key);
    else if (key == "bootstrap") s.bootstrap = config_value<int>(v, key);
    else if (key == "permutations") s.permutations = config_value<int>(v, key);
    else if (key == "alpha") s.alpha = config_value<double>(v, key);
    else if (key == "include_fever") s.include_fever = config_value<bool>(v, key);
    else throw UsageError("unknown config key '" + key + "' in " + path.string());
  }
}

Settings resolve(const Overrides& ov) {
  Settings s;
  if (ov.config_path) apply_config_file(s, *ov.config_path);
  if (ov.mode) s.metric.mode = scoring::parse_score_mode(*ov.mode);
  if (ov.mc) s.metric.mc_enabled = *ov.mc;
  if (ov.k) s.metric.k = *ov.k;
  if (ov.batch_size) s.metric.batch_size = *ov.batch_size;
  if (ov.max_premise_tokens) s.metric.max_premise_tokens = *ov.max_premise_tokens;
  if (ov.backend) s.backend = parse_backend_kind(*ov.backend);
  if (ov.target) s.target = *ov.target;
  if (ov.cache_dir) s.cache_dir = *ov.cache_dir;
  if (ov.seed) s.seed = *ov.seed;
  if (ov.bootstrap) s.bootstrap = *ov.bootstrap;
  if (ov.permutations) s.permutations = *ov.permutations;
  if (ov.alpha) s.alpha = *ov.alpha;
  if (ov.include_fever) s.include_fever = *ov.include_fever;
  s.metric.base_seed = s.seed;
  s.metric.validate();
  if (s.bootstrap < 1) throw UsageError("--bootstrap must be >= 1");
  if (s.permutations < 1) throw UsageError("--permutations must be >= 1");
  if (!(s.alpha > 0.0 && s.alpha < 1.0)) throw UsageError("--alpha must be in (0, 1)");
  return s;
}

// ---------------------------------------------------------------- run record

class RunRecorder {
 public:
  RunRecorder(std::string command, std::vector<std::string> args, const Settings& s)
      : settings_(s) {
    m_.command = std::move(command);
    m_.args = std::move(args);
    m_.config_json = s.to_json().dump();
    m_.config_digest = sha256_hex(m_.config_json);
    m_.seeds["seed"] = s.seed;
    m_.started_at = utc_now();
    m_.tool_version = std::string(kToolVersion);
  }

  void input(const fs::path& p) {
    if (!fs::exists(p)) throw IoError("input not found: " + p.string());
    m_.inputs.push_back({p.string(), fs::is_regular_file(p) ? sha256_file(p) : ""});
  }
  void seed(const std::string& name, std::uint64_t v) { m_.seeds[name] = v; }
  void output(const fs::path& p) { m_.outputs.push_back({p.string(), sha256_file(p)}); }
  void write_output(const fs::path& p, std::string_view content) {
    write_text(p, content);
    output(p);
  }

  void finish(const fs::path& manifest_path) {
    m_.finished_at = utc_now();
    write_text(manifest_path, m_.to_json());
  }

  const Settings& settings() const { return settings_; }

 private:
  RunManifest m_;
  Settings settings_;
};

fs::path manifest_path_for(const std::optional<std::string>& explicit_path, const fs::path& primary) {
  if (explicit_path) return *explicit_path;
  return fs::path(primary.string() + ".manifest.json");
}

// ---------------------------------------------------------------- corpora

struct CorpusSpec {
  std::string id;
  fs::path path;
};

CorpusSpec parse_corpus_spec(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) return {fs::path(text).stem().string(), text};
  if (eq == 0 || eq + 1 == text.size())
    throw UsageError("corpus spec '" + text + "' must look like ID=PATH");
  return {text.substr(0, eq), text.substr(eq + 1)};
}

void check_corpus_allowed(std::string_view id, const Settings& s) {
  if (io::is_fact_checking(id) && !s.include_fever)
    throw UnsupportedCorpusError("corpus '" + std::string(id) +
                                 "' is a fact-checking set; pass --include-fever to use it");
}

io::LoaderConfig loader_for(const std::string& id, const std::optional<std::string>& config_file) {
  if (config_file) {
    const auto all = io::read_loader_configs(*config_file);
    if (auto it = all.find(id); it != all.end()) return it->second;
  }
  return io::loader_config_for(id);
}

std::vector<io::FaithfulnessInstance> load_corpora(const std::vector<std::string>& specs,
                                                   const std::optional<std::string>& loader_file,
                                                   RunRecorder& rec) {
  std::vector<io::FaithfulnessInstance> all;
  std::set<std::string> seen;
  if (loader_file) rec.input(*loader_file);
  for (const auto& text : specs) {
    const auto spec = parse_corpus_spec(text);
    check_corpus_allowed(spec.id, rec.settings());
    if (!seen.insert(spec.id).second) throw UsageError("corpus '" + spec.id + "' given twice");
    rec.input(spec.path);
    auto part = io::load_true_corpus(spec.path, spec.id, loader_for(spec.id, loader_file));
    all.insert(all.end(), std::make_move_iterator(part.begin()),
               std::make_move_iterator(part.end()));
  }
  return all;
}

// Default corpora first in their usual order, then the rest alphabetically.
std::vector<std::string> ordered_corpora(const std::set<std::string>& present) {
  std::vector<std::string> out;
  for (const auto& c : io::default_evaluation_corpora())
    if (present.count(c)) out.push_back(c);
  for (const auto& c : present)
    if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
  return out;
}

// Score files joined with gold labels.
struct Scored {
  stats::ScoreTable table;
  std::vector<int> labels;            // aligned with table.uids
  std::vector<std::string> corpora;   // display order

  std::vector<stats::CorpusScores> by_corpus(const std::string& metric) const {
    const auto& col = table.column(metric);
    std::vector<stats::CorpusScores> out;
    for (const auto& c : corpora) {
      stats::CorpusScores cs{c, {}, {}};
      for (std::size_t i = 0; i < table.uids.size(); ++i) {
        if (table.corpora[i] != c) continue;
        cs.scores.push_back(col[i]);
        cs.labels.push_back(labels[i]);
      }
      out.push_back(std::move(cs));
    }
    return out;
  }
};

Scored load_scored(const std::vector<std::string>& score_files,
                   const std::vector<std::string>& gold_specs,
                   const std::optional<std::string>& loader_file, RunRecorder& rec) {
  std::vector<io::ScoreRow> rows;
  for (const auto& f : score_files) {
    rec.input(f);
    auto part = io::read_score_csv(f);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  Scored s;
  s.table = stats::align_scores(rows);
  const auto gold = load_corpora(gold_specs, loader_file, rec);

  std::map<std::string, const io::FaithfulnessInstance*> by_uid;
  for (const auto& g : gold) by_uid[g.uid] = &g;
  std::set<std::string> scored_corpora(s.table.corpora.begin(), s.table.corpora.end());
  std::set<std::string> scored_uids(s.table.uids.begin(), s.table.uids.end());

  std::vector<std::string> problems;
  s.labels.resize(s.table.uids.size());
  for (std::size_t i = 0; i < s.table.uids.size(); ++i) {
    auto it = by_uid.find(s.table.uids[i]);
    if (it == by_uid.end()) {
      problems.push_back("no gold label for " + s.table.uids[i]);
    } else if (it->second->corpus_id != s.table.corpora[i]) {
      problems.push_back(s.table.uids[i] + " is in corpus " + it->second->corpus_id +
                         " but scored as " + s.table.corpora[i]);
    } else {
      s.labels[i] = it->second->gold_label;
    }
  }
  for (const auto& g : gold)
    if (scored_corpora.count(g.corpus_id) && !scored_uids.count(g.uid))
      problems.push_back("no scores for " + g.uid);
  for (const auto& c : scored_corpora) check_corpus_allowed(c, rec.settings());
  if (!problems.empty()) {
    std::string msg = "scores and gold labels do not align (" + std::to_string(problems.size()) +
                      " problems)";
    for (std::size_t i = 0; i < problems.size() && i < 20; ++i) msg += "\n  " + problems[i];
    throw AlignmentError(msg);
  }
  s.corpora = ordered_corpora(scored_corpora);
  return s;
}

// NAME=m1,m2[,...]
void add_ensembles(Scored& s, const std::vector<std::string>& specs, stats::EnsembleRule rule) {
  for (const auto& spec : specs) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0)
      throw UsageError("ensemble spec '" + spec + "' must look like NAME=m1,m2");
    const std::string name = spec.substr(0, eq);
    if (std::find(s.table.metrics.begin(), s.table.metrics.end(), name) != s.table.metrics.end())
      throw UsageError("ensemble name '" + name + "' clashes with an existing metric");
    std::vector<std::string> members;
    std::stringstream ss(spec.substr(eq + 1));
    for (std::string m; std::getline(ss, m, ',');)
      if (!m.empty()) members.push_back(m);
    auto col = stats::ensemble_scores(s.table, members, rule);
    s.table.metrics.push_back(name);
    s.table.columns.push_back(std::move(col));
  }
}

std::unique_ptr<Backend> open_backend(const Settings& s, const Hooks& hooks) {
  std::string target = s.target;
  if (target.empty()) {
    if (s.backend == BackendKind::kLocalModel) target = std::string(kDefaultCheckpoint);
    else if (s.backend == BackendKind::kRemoteHttp)
      throw UsageError("--backend http needs --target URL");
  }
  return hooks.make_backend ? hooks.make_backend(s.backend, target)
                            : make_backend(s.backend, target);
}

std::string pct(double v) { return fixed(100.0 * v, 1); }

// ---------------------------------------------------------------- commands

struct Common {
  Overrides ov;
  std::optional<std::string> manifest;
  std::vector<std::string> args;
  const Hooks* hooks = nullptr;
  std::ostream* out = nullptr;
  std::ostream* err = nullptr;
};

struct ScoreOpts {
  std::string corpus;
  std::optional<std::string> corpus_id;
  std::optional<std::string> loader_config;
  std::optional<std::string> metric_id;
  std::string output;
  std::optional<std::string> records;
};

int cmd_score(const ScoreOpts& o, Common& c) {
  const Settings s = resolve(c.ov);
  RunRecorder rec("score", c.args, s);
  rec.seed("base_seed", s.metric.base_seed);
  auto spec = parse_corpus_spec(o.corpus);
  if (o.corpus_id) spec.id = *o.corpus_id;
  const auto instances = load_corpora({spec.id + "=" + spec.path.string()}, o.loader_config, rec);

  auto backend = open_backend(s, *c.hooks);
  const std::string metric_id = o.metric_id.value_or(s.metric.default_metric_id());
  std::vector<scoring::ScoreRecord> records;
  std::size_t cache_warnings = 0;
  if (!s.cache_dir.empty()) {
    io::ScoreCache cache(s.cache_dir);
    records = io::cache_get_or_score(instances, s.metric, *backend, cache, metric_id);
    for (const auto& w : cache.warnings()) *c.err << "warning: " << w << '\n';
    cache_warnings = cache.warnings().size();
  } else {
    records = scoring::score_dataset(instances, s.metric, *backend, metric_id);
  }

  io::write_score_csv(o.output, io::to_score_rows(instances, records));
  rec.output(o.output);
  if (o.records) {
    io::write_records_jsonl(*o.records, records);
    rec.output(*o.records);
  }

  std::size_t failed = 0;
  double sum = 0.0;
  for (const auto& r : records) {
    if (r.ok()) sum += r.score;
    else ++failed;
  }
  const std::size_t ok = records.size() - failed;
  print_table(*c.out, {"corpus", "metric", "instances", "scored", "failed", "mean", "classify calls"},
              {{spec.id, metric_id, std::to_string(records.size()), std::to_string(ok),
                std::to_string(failed), ok ? fixed(sum / ok, 4) : "nan",
                std::to_string(backend->call_counter())}});
  if (cache_warnings) *c.out << cache_warnings << " cache warning(s)\n";
  for (const auto& r : records)
    if (!r.ok()) *c.err << "error: " << r.instance_uid << ": " << *r.error << '\n';
  rec.finish(manifest_path_for(c.manifest, o.output));
  return failed ? kExitPartial : kExitOk;
}

struct EvalOpts {
  std::vector<std::string> scores;
  std::vector<std::string> gold;
  std::optional<std::string> loader_config;
  std::vector<std::string> baselines;
  std::vector<std::string> ensembles;
  std::string ensemble_rule = "minmax-mean";
  std::vector<std::string> metrics;
  std::string output;
  std::optional<std::string> table;
  std::optional<std::string> csv_out;
};

json auc_json(const stats::CorpusAuc& a) {
  return {{"corpus", a.corpus_id}, {"auc", a.auc}, {"ci_low", a.ci_low},
          {"ci_high", a.ci_high}, {"n", a.n}};
}

int cmd_evaluate(const EvalOpts& o, Common& c) {
  const Settings s = resolve(c.ov);
  RunRecorder rec("evaluate", c.args, s);
  Scored sc = load_scored(o.scores, o.gold, o.loader_config, rec);
  add_ensembles(sc, o.ensembles, stats::parse_ensemble_rule(o.ensemble_rule));

  std::vector<std::string> metrics = o.metrics.empty() ? sc.table.metrics : o.metrics;
  for (const auto& m : metrics) (void)sc.table.column(m);
  for (const auto& b : o.baselines) {
    (void)sc.table.column(b);
    if (std::find(metrics.begin(), metrics.end(), b) == metrics.end()) metrics.push_back(b);
  }

  std::map<std::string, stats::EvalReport> reports;
  for (const auto& m : metrics) {
    const auto corpora = sc.by_corpus(m);
    reports[m] = stats::evaluate(corpora, s.bootstrap, s.alpha, s.seed);
  }

  // Significance of each metric over each named baseline, per corpus and
  // on the average.
  std::vector<stats::SignificanceResult> sig;
  for (const auto& m : metrics) {
    if (std::find(o.baselines.begin(), o.baselines.end(), m) != o.baselines.end()) continue;
    const auto cm = sc.by_corpus(m);
    for (const auto& b : o.baselines) {
      const auto cb = sc.by_corpus(b);
      std::vector<stats::PairedCorpusScores> paired;
      for (std::size_t i = 0; i < cm.size(); ++i) {
        const std::uint64_t sd = hash_combine(s.seed, hash_string(cm[i].corpus_id));
        auto r = stats::paired_randomization_test(cm[i].scores, cb[i].scores, cm[i].labels,
                                                  s.permutations, sd);
        r.metric_a = m;
        r.metric_b = b;
        r.corpus_id = cm[i].corpus_id;
        sig.push_back(r);
        paired.push_back({cm[i].corpus_id, cm[i].scores, cb[i].scores, cm[i].labels});
      }
      auto r = stats::paired_randomization_test_macro(paired, s.permutations, s.seed);
      r.metric_a = m;
      r.metric_b = b;
      sig.push_back(r);
    }
  }

  json j;
  j["config"] = {{"bootstrap", s.bootstrap}, {"permutations", s.permutations},
                 {"alpha", s.alpha}, {"seed", s.seed}};
  j["baselines"] = o.baselines;
  j["metrics"] = json::array();
  for (const auto& m : metrics) {
    json jm;
    jm["metric"] = m;
    jm["per_corpus"] = json::array();
    for (const auto& a : reports[m].per_corpus) jm["per_corpus"].push_back(auc_json(a));
    jm["macro_avg"] = auc_json(reports[m].macro_avg);
    j["metrics"].push_back(jm);
  }
  j["significance"] = json::array();
  for (const auto& r : sig)
    j["significance"].push_back({{"metric_a", r.metric_a}, {"metric_b", r.metric_b},
                                 {"corpus", r.corpus_id}, {"observed_diff", r.observed_diff},
                                 {"p_value", r.p_value}, {"permutations", r.permutations}});
  rec.write_output(o.output, j.dump(2) + "\n");

  // Grid: one row per corpus plus the average, AUC x100 with the CI below
  // and above, and a letter per baseline it significantly beats.
  auto marks = [&](const std::string& m, const std::string& corpus) {
    std::string out;
    for (std::size_t b = 0; b < o.baselines.size(); ++b)
      for (const auto& r : sig)
        if (r.metric_a == m && r.metric_b == o.baselines[b] && r.corpus_id == corpus &&
            r.p_value <= s.alpha)
          out += static_cast<char>('a' + b);
    return out;
  };
  auto cell = [&](const std::string& m, const stats::CorpusAuc& a, const std::string& key) {
    std::string mk = marks(m, key);
    return pct(a.ci_low) + " " + pct(a.auc) + (mk.empty() ? "" : "^" + mk) + " " + pct(a.ci_high);
  };
  std::vector<std::string> header = {"corpus"};
  header.insert(header.end(), metrics.begin(), metrics.end());
  std::vector<std::vector<std::string>> grid;
  for (std::size_t ci = 0; ci < sc.corpora.size(); ++ci) {
    std::vector<std::string> row = {sc.corpora[ci]};
    for (const auto& m : metrics) row.push_back(cell(m, reports[m].per_corpus[ci], sc.corpora[ci]));
    grid.push_back(std::move(row));
  }
  std::vector<std::string> avg = {"Avg"};
  for (const auto& m : metrics) avg.push_back(cell(m, reports[m].macro_avg, "avg"));
  grid.push_back(std::move(avg));

  print_table(*c.out, header, grid);
  std::string legend;
  for (std::size_t b = 0; b < o.baselines.size(); ++b)
    legend += std::string(legend.empty() ? "" : "; ") + static_cast<char>('a' + b) +
              " = better than " + o.baselines[b] + " at p <= " + fixed(s.alpha, 2);
  *c.out << "AUC x100 with " << fixed(100.0 * (1.0 - s.alpha), 0) << "% bootstrap CI (B="
         << s.bootstrap << ")";
  if (!legend.empty()) *c.out << "; " << legend << " (R=" << s.permutations << ")";
  *c.out << '\n';

  if (o.table) {
    std::ostringstream md;
    md << '|';
    for (const auto& h : header) md << ' ' << h << " |";
    md << "\n|";
    for (std::size_t i = 0; i < header.size(); ++i) md << "---|";
    md << '\n';
    for (const auto& r : grid) {
      md << '|';
      for (const auto& x : r) md << ' ' << x << " |";
      md << '\n';
    }
    if (!legend.empty()) md << '\n' << legend << '\n';
    rec.write_output(*o.table, md.str());
  }
  if (o.csv_out) {
    std::ostringstream os;
    csv::write_row(os, {"metric", "corpus", "auc", "ci_low", "ci_high", "n"});
    for (const auto& m : metrics) {
      auto put = [&](const stats::CorpusAuc& a, const std::string& name) {
        csv::write_row(os, {m, name, csv::format_double(a.auc), csv::format_double(a.ci_low),
                            csv::format_double(a.ci_high), std::to_string(a.n)});
      };
      for (const auto& a : reports[m].per_corpus) put(a, a.corpus_id);
      put(reports[m].macro_avg, "avg");
    }
    rec.write_output(*o.csv_out, os.str());
  }
  rec.finish(manifest_path_for(c.manifest, o.output));
  return kExitOk;
}

struct AblateOpts {
  std::vector<std::string> scores;
  std::vector<std::string> gold;
  std::optional<std::string> loader_config;
  std::vector<std::string> pairs;
  std::string output;
};

int cmd_ablate(const AblateOpts& o, Common& c) {
  const Settings s = resolve(c.ov);
  RunRecorder rec("ablate", c.args, s);
  const Scored sc = load_scored(o.scores, o.gold, o.loader_config, rec);

  std::ostringstream os;
  csv::write_row(os, {"variant", "base", "corpus", "delta_auc", "ci_low", "ci_high"});
  std::vector<std::string> header = {"corpus"};
  std::vector<std::vector<std::string>> grid(sc.corpora.size() + 1);
  for (std::size_t i = 0; i < sc.corpora.size(); ++i) grid[i].push_back(sc.corpora[i]);
  grid.back().push_back("Avg");

  for (const auto& p : o.pairs) {
    const auto colon = p.find(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == p.size())
      throw UsageError("pair '" + p + "' must look like VARIANT:BASE");
    const std::string variant = p.substr(0, colon), base = p.substr(colon + 1);
    const auto cv = sc.by_corpus(variant);
    const auto cb = sc.by_corpus(base);
    std::vector<stats::PairedCorpusScores> paired;
    for (std::size_t i = 0; i < cv.size(); ++i)
      paired.push_back({cv[i].corpus_id, cv[i].scores, cb[i].scores, cv[i].labels});
    const auto diffs = stats::ablation_report(paired, s.bootstrap, s.alpha, s.seed);
    header.push_back(variant + " vs " + base);
    for (std::size_t i = 0; i < diffs.size(); ++i) {
      const auto& d = diffs[i];
      csv::write_row(os, {variant, base, d.corpus_id, csv::format_double(d.delta_auc),
                          csv::format_double(d.ci_low), csv::format_double(d.ci_high)});
      std::string sign = d.delta_auc > 0 ? "+" : "";
      grid[i].push_back(sign + pct(d.delta_auc) + " [" + pct(d.ci_low) + ", " + pct(d.ci_high) +
                        "]");
    }
  }
  rec.write_output(o.output, os.str());
  print_table(*c.out, header, grid);
  *c.out << "AUC difference x100 with paired bootstrap CI (B=" << s.bootstrap << ")\n";
  rec.finish(manifest_path_for(c.manifest, o.output));
  return kExitOk;
}

adaptation::PhraseSet load_phrases(const std::string& spec, RunRecorder& rec) {
  if (spec == "default") return adaptation::PhraseSet::default_set();
  rec.input(spec);
  return adaptation::PhraseSet::load(spec);
}

std::vector<adaptation::NLIInstance> load_nli_inputs(const std::vector<std::string>& inputs,
                                                     RunRecorder& rec) {
  std::vector<adaptation::NLIInstance> corpus;
  for (const auto& f : inputs) {
    rec.input(f);
    auto part = io::read_nli_jsonl(f, fs::path(f).stem().string());
    corpus.insert(corpus.end(), std::make_move_iterator(part.begin()),
                  std::make_move_iterator(part.end()));
  }
  return corpus;
}

struct AugmentOpts {
  std::vector<std::string> inputs;
  std::string phrases = "default";
  std::string output;
};

int cmd_augment(const AugmentOpts& o, Common& c) {
  const Settings s = resolve(c.ov);
  RunRecorder rec("augment", c.args, s);
  const auto phrases = load_phrases(o.phrases, rec);
  const auto corpus = load_nli_inputs(o.inputs, rec);
  const auto out = adaptation::build_augmented_corpus(corpus, phrases, s.seed);
  io::write_nli_jsonl(o.output, out);
  rec.output(o.output);

  std::map<adaptation::NliLabel, std::size_t> orig, aug;
  for (const auto& x : out) (x.augmented ? aug : orig)[x.label]++;
  std::vector<std::vector<std::string>> rows;
  for (auto l : {adaptation::NliLabel::kEntailment, adaptation::NliLabel::kNeutral,
                 adaptation::NliLabel::kContradiction})
    rows.push_back({std::string(adaptation::to_string(l)), std::to_string(orig[l]),
                    std::to_string(aug[l])});
  rows.push_back({"total", std::to_string(corpus.size()), std::to_string(out.size() - corpus.size())});
  print_table(*c.out, {"label", "original", "augmented"}, rows);
  *c.out << out.size() << " instances written to " << o.output << '\n';
  rec.finish(manifest_path_for(c.manifest, o.output));
  return kExitOk;
}

struct RobustnessOpts {
  std::vector<std::string> inputs;
  std::string phrases = "default";
  std::size_t repeats = 10;
  std::size_t m = 5;
  std::string out_dir;
  std::vector<std::string> aggregate;
};

int cmd_robustness(const RobustnessOpts& o, Common& c) {
  const Settings s = resolve(c.ov);
  if (o.inputs.empty() && o.aggregate.empty())
    throw UsageError("robustness needs --input to generate runs or --aggregate to summarize them");
  RunRecorder rec("robustness", c.args, s);
  const fs::path dir = o.out_dir;

  if (!o.inputs.empty()) {
    const auto phrases = load_phrases(o.phrases, rec);
    const auto corpus = load_nli_inputs(o.inputs, rec);
    const auto manifests =
        adaptation::run_robustness_protocol(corpus, phrases, dir, o.repeats, o.m, s.seed);
    std::vector<std::vector<std::string>> rows;
    for (const auto& m : manifests) {
      rec.output(m.output_path);
      rec.output(m.output_path.parent_path() / "manifest.json");
      rec.seed("repeat_" + std::to_string(m.repeat), m.seed);
      std::string joined;
      for (const auto& p : m.phrases) joined += (joined.empty() ? "" : " | ") + p;
      rows.push_back({std::to_string(m.repeat), std::to_string(m.seed),
                      std::to_string(m.instances), m.content_sha256.substr(0, 12), joined});
    }
    print_table(*c.out, {"repeat", "seed", "instances", "sha256", "phrases"}, rows);
  }

  if (!o.aggregate.empty()) {
    // Each file is an evaluate report from one repeat.
    std::vector<std::map<std::string, double>> runs;
    for (const auto& f : o.aggregate) {
      rec.input(f);
      json j;
      try {
        j = json::parse(read_text(f));
        std::map<std::string, double> run;
        for (const auto& jm : j.at("metrics")) {
          const std::string metric = jm.at("metric");
          for (const auto& a : jm.at("per_corpus"))
            run[metric + "/" + a.at("corpus").get<std::string>()] = 100.0 * a.at("auc").get<double>();
          run[metric + "/avg"] = 100.0 * jm.at("macro_avg").at("auc").get<double>();
        }
        runs.push_back(std::move(run));
      } catch (const json::exception& e) {
        throw ValidationError("aggregate input " + f + " is not an evaluate report: " + e.what());
      }
    }
    const auto summary = adaptation::summarize_runs(runs);
    std::ostringstream os;
    csv::write_row(os, {"metric", "corpus", "mean", "std", "min", "max", "runs"});
    std::vector<std::vector<std::string>> rows;
    for (const auto& [key, r] : summary) {
      const auto slash = key.rfind('/');
      const std::string metric = key.substr(0, slash), corpus = key.substr(slash + 1);
      csv::write_row(os, {metric, corpus, csv::format_double(r.mean), csv::format_double(r.stddev),
                          csv::format_double(r.min), csv::format_double(r.max),
                          std::to_string(r.runs)});
      rows.push_back({metric, corpus, fixed(r.mean, 1), fixed(r.stddev, 1), fixed(r.min, 1),
                      fixed(r.max, 1), std::to_string(r.runs)});
    }
    rec.write_output(dir / "aggregate.csv", os.str());
    print_table(*c.out, {"metric", "corpus", "avg", "std", "min", "max", "runs"}, rows);
  }
  rec.finish(manifest_path_for(c.manifest, dir / "robustness"));
  return kExitOk;
}

struct FinetuneOpts {
  std::optional<std::string> base;
  std::string train;
  std::string val;
  std::vector<double> lrs;
  int steps = 2000;
  int interval = 500;
  int batch = 64;
  double warmup = 0.06;
  double weight_decay = 0.01;
  std::string out_dir;
  std::string script;
  std::string python = "python3";
};

int cmd_finetune(const FinetuneOpts& o, Common& c) {
  const Settings s = resolve(c.ov);
  RunRecorder rec("finetune", c.args, s);
  rec.input(o.train);
  rec.input(o.val);
  adaptation::TrainConfig cfg;
  cfg.total_steps = o.steps;
  cfg.checkpoint_interval = o.interval;
  cfg.effective_batch_size = o.batch;
  cfg.warmup_ratio = o.warmup;
  cfg.weight_decay = o.weight_decay;
  cfg.seed = s.seed;
  const std::vector<double> lrs = o.lrs.empty() ? std::vector<double>{cfg.learning_rate} : o.lrs;
  const std::string base =
      o.base.value_or(s.target.empty() ? std::string(kDefaultCheckpoint) : s.target);

  std::unique_ptr<adaptation::Trainer> trainer =
      c.hooks->make_trainer ? c.hooks->make_trainer()
                            : std::make_unique<adaptation::ScriptTrainer>(o.script, o.python);
  const auto res = adaptation::finetune(base, o.train, o.val, cfg, lrs, o.out_dir, *trainer);
  if (!res.metadata_path.empty()) rec.output(res.metadata_path);
  print_table(*c.out, {"checkpoint", "learning rate", "step", "val loss"},
              {{res.checkpoint, csv::format_double(res.learning_rate), std::to_string(res.step),
                fixed(res.val_loss, 4)}});
  rec.finish(manifest_path_for(c.manifest, fs::path(o.out_dir) / "finetune"));
  return kExitOk;
}

// --- analyze

struct AnalyzeOpts {
  std::vector<std::string> corpora;
  std::vector<std::string> scores;
  std::optional<std::string> loader_config;
  std::vector<std::string> metrics;
  std::string output;
  // histogram
  std::optional<std::string> metric;
  std::optional<std::string> corpus_filter;
  int bins = analysis::kDefaultHistogramBins;
  std::optional<std::string> hist_mode;
  std::optional<std::string> svg;
  // cost
  double questions = 0.0;
  double question_length = 0.0;
  bool measure = false;
  std::optional<std::string> markdown;
};

int cmd_stats(const AnalyzeOpts& o, Common& c) {
  const Settings s = resolve(c.ov);
  RunRecorder rec("analyze stats", c.args, s);
  std::ostringstream os;
  csv::write_row(os, {"corpus", "faithful", "unfaithful", "total", "faithful_pct",
                      "unfaithful_pct", "reference_total", "matches_reference"});
  std::vector<std::vector<std::string>> rows;
  for (const auto& spec : o.corpora) {
    const auto inst = load_corpora({spec}, o.loader_config, rec);
    const auto st = io::corpus_stats(inst);
    const auto ref = io::reference_stats_for(st.corpus_id);
    const std::string match =
        !ref ? "" : (ref->n_faithful == st.n_faithful && ref->n_unfaithful == st.n_unfaithful ? "yes" : "no");
    csv::write_row(os, {st.corpus_id, std::to_string(st.n_faithful), std::to_string(st.n_unfaithful),
                        std::to_string(st.total), csv::format_double(st.faithful_percent()),
                        csv::format_double(st.unfaithful_percent()),
                        ref ? std::to_string(ref->total) : "", match});
    rows.push_back({st.corpus_id, std::to_string(st.n_faithful) + " (" + fixed(st.faithful_percent(), 1) + "%)",
                    std::to_string(st.n_unfaithful) + " (" + fixed(st.unfaithful_percent(), 1) + "%)",
                    std::to_string(st.total), match.empty() ? "-" : match});
  }
  rec.write_output(o.output, os.str());
  print_table(*c.out, {"corpus", "faithful", "unfaithful", "total", "matches reference"}, rows);
  rec.finish(manifest_path_for(c.manifest, o.output));
  return kExitOk;
}

int cmd_pronoun_corr(const AnalyzeOpts& o, Common& c) {
  const Settings s = resolve(c.ov);
  RunRecorder rec("analyze pronoun-corr", c.args, s);
  const auto instances = load_corpora(o.corpora, o.loader_config, rec);
  std::vector<io::ScoreRow> rows;
  for (const auto& f : o.scores) {
    rec.input(f);
    auto part = io::read_score_csv(f);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  const auto table = stats::align_scores(rows);
  const std::vector<std::string> metrics = o.metrics.empty() ? table.metrics : o.metrics;
  const auto report = analysis::proxy_correlation_report(instances, table, metrics);
  rec.write_output(o.output, report.to_csv());

  std::vector<std::string> header = {"method"};
  header.insert(header.end(), report.corpora.begin(), report.corpora.end());
  std::vector<std::vector<std::string>> grid;
  for (std::size_t r = 0; r < report.rows.size(); ++r) {
    std::vector<std::string> row = {report.rows[r]};
    for (const auto& cell : report.cells[r])
      row.push_back(cell.result ? fixed(cell.result->tau, 2) : "NA");
    grid.push_back(std::move(row));
  }
  print_table(*c.out, header, grid);
  *c.out << "Kendall tau-b against the first-person pronoun indicator\n";
  rec.finish(manifest_path_for(c.manifest, o.output));
  return kExitOk;
}

int cmd_histogram(const AnalyzeOpts& o, Common& c) {
  const Settings s = resolve(c.ov);
  if (!o.metric) throw UsageError("histogram needs --metric");
  RunRecorder rec("analyze histogram", c.args, s);
  const Scored sc = load_scored(o.scores, o.corpora, o.loader_config, rec);
  const auto& col = sc.table.column(*o.metric);
  std::vector<double> scores;
  std::vector<int> labels;
  for (std::size_t i = 0; i < col.size(); ++i) {
    if (o.corpus_filter && sc.table.corpora[i] != *o.corpus_filter) continue;
    scores.push_back(col[i]);
    labels.push_back(sc.labels[i]);
  }
  if (scores.empty()) throw UsageError("no scores selected for the histogram");
  const auto mode = o.hist_mode ? scoring::parse_score_mode(*o.hist_mode) : s.metric.mode;
  const auto h = analysis::score_histogram(scores, labels, mode, o.bins);
  rec.write_output(o.output, h.to_csv());
  if (o.svg) rec.write_output(*o.svg, h.to_svg(*o.metric));
  std::vector<std::vector<std::string>> rows;
  for (std::size_t b = 0; b + 1 < h.bin_edges.size(); ++b)
    rows.push_back({"[" + fixed(h.bin_edges[b], 2) + ", " + fixed(h.bin_edges[b + 1], 2) + ")",
                    std::to_string(h.counts_faithful[b]), std::to_string(h.counts_unfaithful[b])});
  print_table(*c.out, {"bin", "faithful", "unfaithful"}, rows);
  rec.finish(manifest_path_for(c.manifest, o.output));
  return kExitOk;
}

int cmd_begin_bias(const AnalyzeOpts& o, Common& c) {
  const Settings s = resolve(c.ov);
  if (o.corpora.size() != 1) throw UsageError("begin-bias takes exactly one --corpus");
  RunRecorder rec("analyze begin-bias", c.args, s);
  auto spec = parse_corpus_spec(o.corpora.front());
  rec.input(spec.path);
  io::LoaderConfig cfg = io::LoaderConfig::begin_v2();
  if (o.loader_config) {
    rec.input(*o.loader_config);
    const auto all = io::read_loader_configs(*o.loader_config);
    if (auto it = all.find(spec.id); it != all.end()) cfg = it->second;
  }
  const auto instances = io::load_true_corpus(spec.path, spec.id, cfg);
  const auto results = analysis::begin_bias_report(instances);
  std::ostringstream os;
  csv::write_row(os, {"var_x", "var_y", "tau", "n", "p_value"});
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : results) {
    csv::write_row(os, {r.var_x, r.var_y, csv::format_double(r.tau), std::to_string(r.n),
                        r.p_value ? csv::format_double(*r.p_value) : ""});
    rows.push_back({r.var_x, r.var_y, fixed(r.tau, 3), std::to_string(r.n),
                    r.p_value ? fixed(*r.p_value, 4) : "-"});
  }
  rec.write_output(o.output, os.str());
  print_table(*c.out, {"x", "y", "tau-b", "n", "p"}, rows);
  rec.finish(manifest_path_for(c.manifest, o.output));
  return kExitOk;
}

int cmd_cost(const AnalyzeOpts& o, Common& c) {
  const Settings s = resolve(c.ov);
  RunRecorder rec("analyze cost", c.args, s);
  const auto instances = load_corpora(o.corpora, o.loader_config, rec);
  analysis::CorpusSummary summary;
  summary.instances = instances.size();
  for (const auto& x : instances) {
    summary.input_sentences += static_cast<double>(analysis::count_sentences(x.grounding));
    summary.output_sentences += static_cast<double>(analysis::count_sentences(x.generation));
  }
  if (!instances.empty()) {
    summary.input_sentences /= static_cast<double>(instances.size());
    summary.output_sentences /= static_cast<double>(instances.size());
  }
  summary.questions = o.questions;
  summary.question_length = o.question_length;

  std::optional<std::uint64_t> measured_mc, measured_no_mc;
  if (o.measure) {
    scoring::MetricConfig with = s.metric, without = s.metric;
    with.mc_enabled = true;
    without.mc_enabled = false;
    auto b1 = open_backend(s, *c.hooks);
    scoring::score_dataset(instances, with, *b1);
    measured_mc = b1->call_counter();
    auto b2 = open_backend(s, *c.hooks);
    scoring::score_dataset(instances, without, *b2);
    measured_no_mc = b2->call_counter();
  }
  const auto report = analysis::cost_report(s.metric, summary, measured_mc, measured_no_mc);
  rec.write_output(o.output, report.to_csv());
  if (o.markdown) rec.write_output(*o.markdown, report.to_markdown());
  *c.out << report.to_markdown();
  rec.finish(manifest_path_for(c.manifest, o.output));
  return kExitOk;
}

}  // namespace

// ---------------------------------------------------------------- manifest

std::string RunManifest::to_json() const {
  auto files = [](const std::vector<FileDigest>& v) {
    json a = json::array();
    for (const auto& f : v) a.push_back({{"path", f.path}, {"sha256", f.sha256}});
    return a;
  };
  json j;
  j["command"] = command;
  j["args"] = args;
  j["config"] = json::parse(config_json.empty() ? "{}" : config_json);
  j["config_digest"] = config_digest;
  j["inputs"] = files(inputs);
  j["seeds"] = seeds;
  j["outputs"] = files(outputs);
  j["started_at"] = started_at;
  j["finished_at"] = finished_at;
  j["tool_version"] = tool_version;
  return j.dump(2) + "\n";
}

RunManifest RunManifest::from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    RunManifest m;
    m.command = j.at("command");
    m.args = j.at("args").get<std::vector<std::string>>();
    m.config_json = j.at("config").dump();
    m.config_digest = j.at("config_digest");
    for (const auto& f : j.at("inputs")) m.inputs.push_back({f.at("path"), f.at("sha256")});
    m.seeds = j.at("seeds").get<std::map<std::string, std::uint64_t>>();
    for (const auto& f : j.at("outputs")) m.outputs.push_back({f.at("path"), f.at("sha256")});
    m.started_at = j.at("started_at");
    m.finished_at = j.at("finished_at");
    m.tool_version = j.at("tool_version");
    return m;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed run manifest: ") + e.what());
  }
}

RunManifest RunManifest::load(const fs::path& path) {
  return from_json(read_text(path));
}

std::vector<std::string> verify_manifest(const RunManifest& m) {
  std::vector<std::string> problems;
  if (sha256_hex(m.config_json) != m.config_digest) problems.push_back("config digest mismatch");
  auto check = [&](const std::vector<FileDigest>& files, const char* kind) {
    for (const auto& f : files) {
      if (!fs::exists(f.path)) {
        problems.push_back(std::string(kind) + " missing: " + f.path);
      } else if (!f.sha256.empty() && sha256_file(f.path) != f.sha256) {
        problems.push_back(std::string(kind) + " changed: " + f.path);
      }
    }
  };
  check(m.inputs, "input");
  check(m.outputs, "output");
  return problems;
}

namespace {

int cmd_replay(const std::string& manifest_path, bool check_only, Common& c) {
  const RunManifest m = RunManifest::load(manifest_path);
  if (check_only) {
    const auto problems = verify_manifest(m);
    for (const auto& p : problems) *c.out << p << '\n';
    *c.out << (problems.empty() ? "manifest verified\n" : "manifest does not verify\n");
    return problems.empty() ? kExitOk : kExitFailure;
  }
  if (sha256_hex(m.config_json) != m.config_digest)
    throw ValidationError("manifest config digest does not match its config");
  std::vector<std::string> argv = {"nlifaith"};
  argv.insert(argv.end(), m.args.begin(), m.args.end());
  std::ostringstream sink;
  const int rc = run(argv, sink, *c.err, *c.hooks);
  if (rc != kExitOk && rc != kExitPartial) {
    *c.err << sink.str();
    return rc;
  }
  std::vector<std::vector<std::string>> rows;
  bool all_same = true;
  for (const auto& f : m.outputs) {
    const std::string now = fs::exists(f.path) ? sha256_file(f.path) : "missing";
    const bool same = now == f.sha256;
    all_same = all_same && same;
    rows.push_back({f.path, same ? "identical" : "DIFFERENT"});
  }
  print_table(*c.out, {"output", "replay"}, rows);
  return all_same ? kExitOk : kExitFailure;
}

}  // namespace

// ---------------------------------------------------------------- entry

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
        const Hooks& hooks) {
  CLI::App app{"Faithfulness evaluation with NLI classifiers", "nlifaith"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(kToolVersion));

  Common c;
  c.hooks = &hooks;
  c.out = &out;
  c.err = &err;
  c.args.assign(args.begin() + (args.empty() ? 0 : 1), args.end());
  Overrides& ov = c.ov;

  app.add_option_function<std::string>("--config", [&](const std::string& v) { ov.config_path = v; },
                                       "JSON config; flags override it")
      ->check(CLI::ExistingFile);
  app.add_option_function<std::uint64_t>("--seed", [&](std::uint64_t v) { ov.seed = v; },
                                         "Seed for sampling, resampling and MC dropout");
  app.add_option_function<std::string>("--backend", [&](const std::string& v) { ov.backend = v; },
                                       "Classifier backend")
      ->check(CLI::IsMember({"local", "http", "mock"}));
  app.add_option_function<std::string>("--target", [&](const std::string& v) { ov.target = v; },
                                       "Checkpoint (local) or endpoint URL (http)");
  app.add_option_function<std::string>("--cache", [&](const std::string& v) { ov.cache_dir = v; },
                                       "Score cache directory");
  app.add_flag_function("--include-fever", [&](std::int64_t) { ov.include_fever = true; },
                        "Allow fact-checking corpora");
  app.add_option("--manifest", c.manifest, "Where to write the run manifest");

  auto metric_flags = [&](CLI::App* sub) {
    sub->add_option_function<std::string>("--mode", [&](const std::string& v) { ov.mode = v; },
                                          "Score mode: e or e-c")
        ->check(CLI::IsMember({"e", "e-c"}));
    sub->add_flag_function("--mc", [&](std::int64_t) { ov.mc = true; }, "Enable MC dropout");
    sub->add_flag_function("--no-mc", [&](std::int64_t) { ov.mc = false; }, "Disable MC dropout");
    sub->add_option_function<int>("--k", [&](int v) { ov.k = v; }, "MC dropout samples");
    sub->add_option_function<int>("--batch-size", [&](int v) { ov.batch_size = v; });
    sub->add_option_function<int>("--max-premise-tokens",
                                  [&](int v) { ov.max_premise_tokens = v; });
  };
  auto stat_flags = [&](CLI::App* sub) {
    sub->add_option_function<int>("--bootstrap", [&](int v) { ov.bootstrap = v; },
                                  "Bootstrap resamples");
    sub->add_option_function<int>("--permutations", [&](int v) { ov.permutations = v; },
                                  "Randomization test permutations");
    sub->add_option_function<double>("--alpha", [&](double v) { ov.alpha = v; });
  };

  ScoreOpts so;
  auto* score = app.add_subcommand("score", "Score a corpus with the NLI metric");
  score->add_option("--corpus", so.corpus, "Corpus CSV, optionally ID=PATH")->required();
  score->add_option("--corpus-id", so.corpus_id);
  score->add_option("--loader-config", so.loader_config)->check(CLI::ExistingFile);
  score->add_option("--metric-id", so.metric_id);
  score->add_option("-o,--output", so.output, "Score CSV")->required();
  score->add_option("--records", so.records, "Full records as JSONL");
  metric_flags(score);

  EvalOpts eo;
  auto* evaluate = app.add_subcommand("evaluate", "AUC with CIs and significance");
  evaluate->add_option("--scores", eo.scores, "Score CSVs")->required();
  evaluate->add_option("--gold", eo.gold, "Gold corpora as ID=PATH")->required();
  evaluate->add_option("--loader-config", eo.loader_config)->check(CLI::ExistingFile);
  evaluate->add_option("--baseline", eo.baselines, "Metrics to test against");
  evaluate->add_option("--ensemble", eo.ensembles, "NAME=m1,m2");
  evaluate->add_option("--ensemble-rule", eo.ensemble_rule)
      ->check(CLI::IsMember({"minmax-mean", "rank-mean", "mean"}));
  evaluate->add_option("--metrics", eo.metrics, "Restrict to these metrics");
  evaluate->add_option("-o,--output", eo.output, "Report JSON")->required();
  evaluate->add_option("--table", eo.table, "Markdown grid");
  evaluate->add_option("--csv", eo.csv_out, "Per-corpus CSV");
  stat_flags(evaluate);

  AblateOpts ao;
  auto* ablate = app.add_subcommand("ablate", "Paired AUC differences");
  ablate->add_option("--scores", ao.scores)->required();
  ablate->add_option("--gold", ao.gold)->required();
  ablate->add_option("--loader-config", ao.loader_config)->check(CLI::ExistingFile);
  ablate->add_option("--pair", ao.pairs, "VARIANT:BASE")->required();
  ablate->add_option("-o,--output", ao.output)->required();
  stat_flags(ablate);

  AugmentOpts ug;
  auto* augment = app.add_subcommand("augment", "Prepend phrases to NLI hypotheses");
  augment->add_option("--input", ug.inputs, "NLI JSONL files")->required();
  augment->add_option("--phrases", ug.phrases, "'default' or a phrase file");
  augment->add_option("-o,--output", ug.output)->required();

  RobustnessOpts ro;
  auto* robust = app.add_subcommand("robustness", "Phrase-subset repeats and their summary");
  robust->add_option("--input", ro.inputs);
  robust->add_option("--phrases", ro.phrases);
  robust->add_option("--repeats", ro.repeats);
  robust->add_option("--m", ro.m, "Phrases per subset");
  robust->add_option("--out-dir", ro.out_dir)->required();
  robust->add_option("--aggregate", ro.aggregate, "Evaluate reports, one per repeat");

  FinetuneOpts fo;
  auto* finetune = app.add_subcommand("finetune", "Fine-tune and select by validation loss");
  finetune->add_option("--base-checkpoint", fo.base);
  finetune->add_option("--train", fo.train)->required();
  finetune->add_option("--val", fo.val)->required();
  finetune->add_option("--lr", fo.lrs);
  finetune->add_option("--steps", fo.steps);
  finetune->add_option("--interval", fo.interval);
  finetune->add_option("--batch", fo.batch);
  finetune->add_option("--warmup", fo.warmup);
  finetune->add_option("--weight-decay", fo.weight_decay);
  finetune->add_option("--out-dir", fo.out_dir)->required();
  finetune->add_option("--script", fo.script);
  finetune->add_option("--python", fo.python);

  AnalyzeOpts an;
  auto* analyze = app.add_subcommand("analyze", "Corpus and metric analyses");
  analyze->require_subcommand(1);
  auto* a_stats = analyze->add_subcommand("stats", "Class counts per corpus");
  a_stats->add_option("--corpus", an.corpora, "ID=PATH")->required();
  a_stats->add_option("--loader-config", an.loader_config);
  a_stats->add_option("-o,--output", an.output)->required();
  auto* a_pron = analyze->add_subcommand("pronoun-corr", "Pronoun indicator correlations");
  a_pron->add_option("--corpus", an.corpora, "ID=PATH")->required();
  a_pron->add_option("--scores", an.scores)->required();
  a_pron->add_option("--metrics", an.metrics);
  a_pron->add_option("--loader-config", an.loader_config);
  a_pron->add_option("-o,--output", an.output)->required();
  auto* a_hist = analyze->add_subcommand("histogram", "Score distribution by label");
  a_hist->add_option("--scores", an.scores)->required();
  a_hist->add_option("--gold", an.corpora, "ID=PATH")->required();
  a_hist->add_option("--metric", an.metric)->required();
  a_hist->add_option("--corpus", an.corpus_filter);
  a_hist->add_option("--bins", an.bins);
  a_hist->add_option("--score-mode", an.hist_mode)->check(CLI::IsMember({"e", "e-c"}));
  a_hist->add_option("--loader-config", an.loader_config);
  a_hist->add_option("--svg", an.svg);
  a_hist->add_option("-o,--output", an.output)->required();
  auto* a_bias = analyze->add_subcommand("begin-bias", "Generator model vs pronoun and label");
  a_bias->add_option("--corpus", an.corpora, "BEGIN v2 TSV")->required();
  a_bias->add_option("--loader-config", an.loader_config);
  a_bias->add_option("-o,--output", an.output)->required();
  auto* a_cost = analyze->add_subcommand("cost", "Model call estimates");
  a_cost->add_option("--corpus", an.corpora, "ID=PATH")->required();
  a_cost->add_option("--questions", an.questions, "Mean questions per instance");
  a_cost->add_option("--question-length", an.question_length, "Mean question length");
  a_cost->add_flag("--measure", an.measure, "Run the metric and count classify calls");
  a_cost->add_option("--loader-config", an.loader_config);
  a_cost->add_option("--markdown", an.markdown);
  a_cost->add_option("-o,--output", an.output)->required();
  metric_flags(a_cost);

  std::string replay_path;
  bool replay_check = false;
  auto* replay = app.add_subcommand("replay", "Re-run a manifest and compare outputs");
  replay->add_option("manifest", replay_path)->required()->check(CLI::ExistingFile);
  replay->add_flag("--check-only", replay_check, "Only re-hash recorded files");

  std::vector<const char*> argv;
  argv.push_back(args.empty() ? "nlifaith" : args[0].c_str());
  for (std::size_t i = 1; i < args.size(); ++i) argv.push_back(args[i].c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (score->parsed()) return cmd_score(so, c);
    if (evaluate->parsed()) return cmd_evaluate(eo, c);
    if (ablate->parsed()) return cmd_ablate(ao, c);
    if (augment->parsed()) return cmd_augment(ug, c);
    if (robust->parsed()) return cmd_robustness(ro, c);
    if (finetune->parsed()) return cmd_finetune(fo, c);
    if (replay->parsed()) return cmd_replay(replay_path, replay_check, c);
    if (a_stats->parsed()) return cmd_stats(an, c);
    if (a_pron->parsed()) return cmd_pronoun_corr(an, c);
    if (a_hist->parsed()) return cmd_histogram(an, c);
    if (a_bias->parsed()) return cmd_begin_bias(an, c);
    if (a_cost->parsed()) return cmd_cost(an, c);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace nlifaith::cli
