// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The rastar Authors

// Batch command-line front end. Every command stages its outputs in memory,
// renames each into place only after all of them were produced, and writes a
// run manifest next to the primary output.

#include <openssl/evp.h>
#include <unicode/uversion.h>

#include <CLI11.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rastar/http_backend.hpp"
#include "rastar/rastar.hpp"

#ifndef RASTAR_VERSION
#define RASTAR_VERSION "dev"
#endif

namespace fs = std::filesystem;
namespace pt = boost::property_tree;
using json = nlohmann::ordered_json;

namespace rastar::cli {
namespace {

enum ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kUsage = 2,
  kConfig = 3,
  kData = 4,
  kRomanization = 5,
  kBackend = 6,
  kIo = 7,
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

constexpr const char* kTokenEnv = "RASTAR_API_TOKEN";

// ---------------------------------------------------------------------------
// Configuration

struct KeySpec {
  const char* key;
  const char* fallback;  // nullptr: no default
  bool is_path;
};

// Every accepted key. Paths given in a config file resolve against that file's
// directory; paths given with --set resolve against the working directory.
constexpr KeySpec kKeys[] = {
    {"paths.pinyin", nullptr, true},
    {"paths.entities", nullptr, true},
    {"paths.templates", nullptr, true},
    {"paths.backend_fixture", nullptr, true},
    {"retrieval.k", "3", false},
    {"retrieval.granularity", "phoneme", false},
    {"retrieval.tones", "false", false},
    {"retrieval.type_filter", "false", false},
    {"tagger.kind", "dictionary", false},
    {"tagger.threshold", "0.8", false},
    {"rlm.mask_fraction", "0.30", false},
    {"rlm.nbest", "10", false},
    {"correction.template", "correct", false},
    {"correction.mode", "auto", false},
    {"correction.spans", "tagger", false},
    {"correction.max_tokens", "2048", false},
    {"correction.temperature", "0", false},
    {"astar.rejection_budget", "4", false},
    {"astar.balance", "false", false},
    {"astar.hint_template", "hint", false},
    {"backend.kind", "scripted", false},
    {"backend.url", "http://127.0.0.1:8000", false},
    {"backend.path", "/v1/chat/completions", false},
    {"backend.model", "default", false},
    {"backend.connect_timeout_ms", "5000", false},
    {"backend.read_timeout_ms", "120000", false},
    {"backend.retries", "3", false},
    {"backend.max_in_flight", "8", false},
    {"backend.send_mode_field", "true", false},
    {"backend.send_mode_message", "false", false},
    {"run.seed", "0", false},
    {"run.jobs", "1", false},
};

const KeySpec* find_key(const std::string& key) {
  for (const auto& k : kKeys) {
    if (key == k.key) return &k;
  }
  return nullptr;
}

class Settings {
 public:
  /// Loads `file` (may be empty) and applies `overrides` on top.
  static Settings load(const std::string& file, const std::vector<std::string>& overrides) {
    Settings s;
    for (const auto& k : kKeys) {
      if (k.fallback) s.values_[k.key] = k.fallback;
    }
    if (!file.empty()) {
      pt::ptree tree;
      try {
        pt::read_ini(file, tree);
      } catch (const pt::ini_parser_error& e) {
        throw ConfigError(e.what());
      }
      const fs::path base = fs::path(file).parent_path();
      for (const auto& [section, body] : tree) {
        if (body.empty()) throw ConfigError(file + ": key '" + section + "' must sit inside a [section]");
        for (const auto& [name, leaf] : body) {
          const std::string key = section + "." + name;
          const KeySpec* spec = find_key(key);
          if (!spec) throw ConfigError(file + ": unknown key '" + key + "'");
          std::string value = leaf.get_value<std::string>();
          if (spec->is_path && !value.empty()) value = (base / value).lexically_normal().string();
          s.values_[key] = value;
        }
      }
    }
    for (const auto& o : overrides) {
      const auto eq = o.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects section.key=value, got '" + o + "'");
      const std::string key = o.substr(0, eq);
      if (!find_key(key)) throw ConfigError("unknown key '" + key + "'");
      s.values_[key] = o.substr(eq + 1);
    }
    return s;
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  std::string text(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end() || it->second.empty()) throw ConfigError("missing setting '" + key + "'");
    return it->second;
  }

  /// A path setting; the file must exist.
  std::string path(const std::string& key) const {
    const std::string p = text(key);
    if (!fs::is_regular_file(p)) throw ConfigError("'" + key + "' names a missing file: " + p);
    return p;
  }

  long integer(const std::string& key, long min) const {
    const std::string v = text(key);
    long out = 0;
    std::size_t used = 0;
    try {
      out = std::stol(v, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != v.size()) throw ConfigError("'" + key + "' must be an integer, got '" + v + "'");
    if (out < min) throw ConfigError("'" + key + "' must be >= " + std::to_string(min));
    return out;
  }

  std::uint64_t seed() const {
    const std::string v = text("run.seed");
    std::size_t used = 0;
    std::uint64_t out = 0;
    try {
      out = std::stoull(v, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != v.size() || v.front() == '-') throw ConfigError("'run.seed' must be a non-negative integer");
    return out;
  }

  double real(const std::string& key, double lo, double hi) const {
    const std::string v = text(key);
    double out = 0;
    std::size_t used = 0;
    try {
      out = std::stod(v, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != v.size()) throw ConfigError("'" + key + "' must be a number, got '" + v + "'");
    if (!(out >= lo && out <= hi)) {
      char range[96];
      std::snprintf(range, sizeof range, "[%g, %g]", lo, hi);
      throw ConfigError("'" + key + "' must lie in " + range);
    }
    return out;
  }

  bool flag(const std::string& key) const {
    const std::string v = text(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("'" + key + "' must be true or false, got '" + v + "'");
  }

  std::string choice(const std::string& key, std::initializer_list<const char*> allowed) const {
    const std::string v = text(key);
    std::string names;
    for (const char* a : allowed) {
      if (v == a) return v;
      names += names.empty() ? a : std::string(", ") + a;
    }
    throw ConfigError("'" + key + "' must be one of " + names + ", got '" + v + "'");
  }

  /// Effective settings, ordered by key.
  json to_json() const {
    json out = json::object();
    for (const auto& [k, v] : values_) out[k] = v;
    return out;
  }

 private:
  std::map<std::string, std::string> values_;
};

// ---------------------------------------------------------------------------
// Run context: input hashing, staged outputs and the manifest

std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[md[i] >> 4];
    out += kHex[md[i] & 15];
  }
  return out;
}

struct Run {
  std::string command;
  std::string config_file;
  Settings settings;
  bool json_format = false;
  std::string manifest_path;
  json inputs = json::array();
  std::vector<std::pair<std::string, std::string>> outputs;  // path, contents
  std::set<std::string> read_paths;

  /// Reads an input file and records its hash.
  std::string read(const std::string& role, const std::string& path) {
    if (!fs::is_regular_file(path)) throw Error(Errc::DataError, "cannot read " + role + " '" + path + "'");
    std::string contents = read_file(path);
    if (read_paths.insert(role + "\n" + path).second) {
      inputs.push_back({{"role", role}, {"path", path}, {"sha256", sha256_hex(contents)}});
    }
    return contents;
  }

  void stage(const std::string& path, std::string contents) {
    for (const auto& [p, c] : outputs) {
      if (p == path) throw ConfigError("two outputs share the path '" + path + "'");
    }
    outputs.emplace_back(path, std::move(contents));
  }

  void commit() {
    std::string target = manifest_path;
    if (target.empty() && !outputs.empty()) target = outputs.front().first + ".manifest.json";
    json files = json::array();
    for (const auto& [path, contents] : outputs) {
      files.push_back({{"path", path}, {"sha256", sha256_hex(contents)}, {"bytes", contents.size()}});
    }
    for (const auto& [path, contents] : outputs) write_file_atomic(path, contents);
    if (target.empty()) return;
    const json config = settings.to_json();
    json manifest = {
        {"tool", "rastar"},
        {"command", command},
        {"versions",
         {{"rastar", RASTAR_VERSION},
          {"icu", U_ICU_VERSION},
          {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_PATCH)}}},
        {"config_file", config_file.empty() ? json() : json(config_file)},
        {"config_sha256", sha256_hex(config.dump())},
        {"config", config},
        {"inputs", inputs},
        {"outputs", files},
    };
    write_file_atomic(target, manifest.dump(2) + "\n");
  }

  /// Summary on stdout in the requested format.
  void report(const json& j, const std::string& text) const {
    if (json_format) {
      std::cout << j.dump(2) << "\n";
    } else {
      std::cout << text;
    }
  }
};

std::string jsonl(const std::vector<json>& lines) {
  std::string out;
  for (const auto& l : lines) out += l.dump() + "\n";
  return out;
}

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// ---------------------------------------------------------------------------
// Shared loaders

PhoneticOptions phonetic_options(const Settings& s) {
  PhoneticOptions o;
  o.granularity = parse_granularity(s.choice("retrieval.granularity", {"phoneme", "syllable"}));
  o.tones = s.flag("retrieval.tones");
  return o;
}

std::shared_ptr<const PinyinDictionary> load_dictionary(Run& run) {
  std::istringstream in(run.read("pinyin", run.settings.path("paths.pinyin")));
  return std::make_shared<const PinyinDictionary>(PinyinDictionary::parse(in));
}

EntityRepository load_repository(Run& run) {
  auto dict = load_dictionary(run);
  std::istringstream in(run.read("entities", run.settings.path("paths.entities")));
  auto result = EntityRepository::build(parse_entity_list(in), std::move(dict), phonetic_options(run.settings));
  if (result.duplicates_dropped > 0) {
    std::cerr << "warning: " << result.duplicates_dropped << " duplicate entities dropped\n";
  }
  return std::move(result.repository);
}

PromptTemplates load_templates(Run& run) {
  std::istringstream in(run.read("templates", run.settings.path("paths.templates")));
  return PromptTemplates::parse(in);
}

std::unique_ptr<ModelBackend> make_backend(Run& run) {
  const Settings& s = run.settings;
  if (s.choice("backend.kind", {"scripted", "http"}) == "scripted") {
    const std::string path = s.path("paths.backend_fixture");
    const std::string text = run.read("backend_fixture", path);
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(Errc::DataError, path + ": " + e.what());
    }
    try {
      return std::unique_ptr<ModelBackend>(new ScriptedBackend(ScriptedBackend::from_json(doc)));
    } catch (const Error& e) {
      throw Error(Errc::DataError, path + ": " + e.what());
    }
  }
  HttpBackendConfig c;
  c.base_url = s.text("backend.url");
  c.path = s.text("backend.path");
  c.model = s.text("backend.model");
  c.connect_timeout = std::chrono::milliseconds(s.integer("backend.connect_timeout_ms", 1));
  c.read_timeout = std::chrono::milliseconds(s.integer("backend.read_timeout_ms", 1));
  c.max_retries = static_cast<int>(s.integer("backend.retries", 0));
  c.max_in_flight = s.integer("backend.max_in_flight", 1);
  c.send_mode_field = s.flag("backend.send_mode_field");
  c.send_mode_message = s.flag("backend.send_mode_message");
  if (const char* token = std::getenv(kTokenEnv)) c.auth_token = token;
  return std::make_unique<HttpBackend>(std::move(c));
}

std::vector<DatasetRecord> load_records(Run& run, const std::string& path) {
  std::istringstream in(run.read("dataset", path));
  return parse_dataset(in, path);
}

std::size_t jobs(const Run& run) { return static_cast<std::size_t>(run.settings.integer("run.jobs", 1)); }

Sampling sampling(const Settings& s) {
  Sampling out;
  out.max_tokens = static_cast<int>(s.integer("correction.max_tokens", 1));
  out.temperature = s.real("correction.temperature", 0.0, 10.0);
  return out;
}

/// Per-example seed; distinct streams for distinct (record, source) pairs.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = seed ^ (a * 0x9E3779B97F4A7C15ULL) ^ (b * 0xC2B2AE3D27D4EB4FULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

json spans_json(const std::vector<EntitySpan>& spans) {
  json out = json::array();
  for (const auto& s : spans) out.push_back(span_json(s));
  return out;
}

// ---------------------------------------------------------------------------
// Commands

struct RetrieveArgs {
  std::vector<std::string> queries;
  std::string input;
  std::string output;
  std::string type;
};

int cmd_retrieve(Run& run, const RetrieveArgs& args) {
  const auto repo = load_repository(run);
  const auto k = static_cast<std::size_t>(run.settings.integer("retrieval.k", 1));
  std::optional<EntityType> filter;
  if (!args.type.empty()) filter = parse_entity_type(args.type);

  std::vector<std::string> queries;
  for (const auto& q : args.queries) queries.push_back(utf8::nfc(q));
  if (!args.input.empty()) {
    std::istringstream in(run.read("queries", args.input));
    std::string line;
    while (std::getline(in, line)) {
      line = utf8::strip(line);
      if (!line.empty()) queries.push_back(utf8::nfc(line));
    }
  }
  if (queries.empty()) throw Error(Errc::DataError, "no queries given");

  std::vector<RankedCandidates> results(queries.size());
  parallel_for(queries.size(), jobs(run), [&](std::size_t i) { results[i] = retrieve_top_k(queries[i], repo, k, filter); });

  std::string out;
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (run.json_format) {
      out += json{{"query", results[i].query}, {"candidates", candidates_json(results[i])}}.dump() + "\n";
      continue;
    }
    if (i > 0) out += "\n";
    out += "# " + results[i].query + "\n";
    if (results[i].candidates.empty()) out += "(no candidates)\n";
    for (std::size_t r = 0; r < results[i].candidates.size(); ++r) {
      const auto& c = results[i].candidates[r];
      out += std::to_string(r + 1) + "\t" + c.entity.surface + "\t" + std::string(entity_type_code(c.entity.type)) +
             "\t" + fixed(c.similarity) + "\t" + fixed(c.probability) + "\n";
    }
  }
  if (args.output.empty()) {
    std::cout << out;
  } else {
    run.stage(args.output, out);
  }
  run.commit();
  return kOk;
}

struct DatasetArgs {
  std::string dataset;
  std::string output;
};

struct TagArgs : DatasetArgs {
  std::string field = "hypothesis";
};

int cmd_tag(Run& run, const TagArgs& args) {
  const auto records = load_records(run, args.dataset);
  std::unique_ptr<ModelBackend> backend;
  std::optional<EntityRepository> repo;
  std::unique_ptr<Tagger> tagger;
  if (run.settings.choice("tagger.kind", {"dictionary", "backend"}) == "dictionary") {
    repo.emplace(load_repository(run));
    tagger = std::make_unique<DictionaryTagger>(*repo, run.settings.real("tagger.threshold", 1e-12, 1.0));
  } else {
    backend = make_backend(run);
    tagger = std::make_unique<BackendTagger>(*backend);
  }
  const bool on_reference = args.field == "reference";

  struct Row {
    bool present = false;
    std::string text;
    std::vector<BioTag> tags;
    std::vector<EntitySpan> predicted;
    std::vector<EntitySpan> gold;
  };
  std::vector<Row> rows(records.size());
  parallel_for(records.size(), jobs(run), [&](std::size_t i) {
    const auto& r = records[i];
    Row& row = rows[i];
    if (!on_reference && !r.hypothesis) return;
    row.present = true;
    row.text = on_reference ? r.reference : *r.hypothesis;
    row.tags = tagger->tag(row.text);
    row.predicted = extract_spans(row.tags, row.text);
    if (on_reference) {
      row.gold = r.entities;
    } else if (!row.text.empty() && !r.reference.empty()) {
      const auto gold_tags = align_tags_to_hypothesis(r.reference_tagged(), row.text);
      row.gold = extract_spans(gold_tags, row.text);
    }
  });

  std::vector<json> lines;
  std::vector<std::vector<EntitySpan>> predicted, gold;
  std::size_t skipped = 0, entities = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!rows[i].present) {
      ++skipped;
      continue;
    }
    std::string tags;
    for (BioTag t : rows[i].tags) tags += to_char(t);
    lines.push_back({{"id", records[i].id},
                     {"field", args.field},
                     {"text", rows[i].text},
                     {"tags", tags},
                     {"entities", spans_json(rows[i].predicted)}});
    entities += rows[i].predicted.size();
    predicted.push_back(rows[i].predicted);
    gold.push_back(rows[i].gold);
  }
  run.stage(args.output, jsonl(lines));
  const Prf prf = ner_prf(predicted, gold);
  run.commit();
  run.report({{"tagged", lines.size()},
              {"skipped", skipped},
              {"entities", entities},
              {"ner", {{"recall", prf.recall}, {"precision", prf.precision}, {"f1", prf.f1}}}},
             "tagged " + std::to_string(lines.size()) + " utterances (" + std::to_string(skipped) +
                 " skipped), " + std::to_string(entities) + " entities\nNER against gold: recall " +
                 fixed(prf.recall, 4) + "  precision " + fixed(prf.precision, 4) + "  F1 " + fixed(prf.f1, 4) +
                 "\n");
  return kOk;
}

int cmd_build_rlm(Run& run, const DatasetArgs& args) {
  const auto records = load_records(run, args.dataset);
  const double fraction = run.settings.real("rlm.mask_fraction", 0.0, 1.0);
  const auto nbest = static_cast<std::size_t>(run.settings.integer("rlm.nbest", 0));
  const std::uint64_t seed = run.settings.seed();

  std::vector<std::vector<json>> per_record(records.size());
  parallel_for(records.size(), jobs(run), [&](std::size_t i) {
    const auto& r = records[i];
    const auto ref_tagged = r.reference_tagged();
    std::vector<std::pair<std::string, TaggedUtterance>> sources{{"reference", ref_tagged}};
    std::vector<std::string> hyps(r.nbest.begin(), r.nbest.begin() + std::min(nbest, r.nbest.size()));
    if (r.nbest.empty() && r.hypothesis && nbest > 0) hyps.push_back(*r.hypothesis);
    for (std::size_t h = 0; h < hyps.size(); ++h) {
      if (hyps[h].empty() || r.reference.empty()) continue;
      sources.emplace_back(r.nbest.empty() ? std::string("hypothesis") : "nbest:" + std::to_string(h),
                           TaggedUtterance::from_tags(hyps[h], align_tags_to_hypothesis(ref_tagged, hyps[h])));
    }
    for (std::size_t s = 0; s < sources.size(); ++s) {
      const auto ex = build_rlm_example(sources[s].second, fraction, derive_seed(seed, i, s));
      json line = {{"id", r.id}, {"source", sources[s].first}};
      const json body = rlm_example_json(ex);
      for (const auto& [key, value] : body.items()) line[key] = value;
      per_record[i].push_back(std::move(line));
    }
  });
  std::vector<json> lines;
  for (auto& v : per_record) lines.insert(lines.end(), v.begin(), v.end());
  run.stage(args.output, jsonl(lines));
  run.commit();
  run.report({{"records", records.size()}, {"examples", lines.size()}, {"mask_fraction", fraction}},
             "wrote " + std::to_string(lines.size()) + " examples from " + std::to_string(records.size()) +
                 " records (mask fraction " + fixed(fraction, 2) + ")\n");
  return kOk;
}

struct CorrectArgs : DatasetArgs {
  std::string log;
};

json rates_json(const MetricReport& m) {
  return {{"cer", m.cer()}, {"ne_cer", m.ne_cer()}, {"ne_recall", m.ne_recall()}};
}

std::string rates_text(const char* label, const MetricReport& m) {
  return std::string(label) + "CER " + fixed(100 * m.cer(), 2) + "%  NE-CER " + fixed(100 * m.ne_cer(), 2) +
         "%  NE-Recall " + fixed(100 * m.ne_recall(), 2) + "%\n";
}

int cmd_correct(Run& run, const CorrectArgs& args) {
  const auto records = load_records(run, args.dataset);
  const auto repo = load_repository(run);
  const auto templates = load_templates(run);
  auto backend = make_backend(run);
  const Settings& s = run.settings;
  CorrectionOptions options;
  options.template_id = s.text("correction.template");
  if (!templates.contains(options.template_id)) throw ConfigError("no template named '" + options.template_id + "'");
  options.mode_directive = parse_mode_directive(s.choice("correction.mode", {"auto", "think", "nothink"}));
  options.k = static_cast<std::size_t>(s.integer("retrieval.k", 1));
  options.type_filter = s.flag("retrieval.type_filter");
  options.sampling = sampling(s);
  const bool gold_spans = s.choice("correction.spans", {"tagger", "gold"}) == "gold";
  const double threshold = s.real("tagger.threshold", 1e-12, 1.0);

  std::vector<std::optional<UtteranceCorrection>> done(records.size());
  parallel_for(records.size(), jobs(run), [&](std::size_t i) {
    const auto& r = records[i];
    if (!r.hypothesis) return;
    std::vector<EntitySpan> spans;
    if (gold_spans) {
      const auto ref = utf8::decode(r.reference);
      const auto hyp = utf8::decode(*r.hypothesis);
      const auto ops = align_sequences(ref, hyp);
      for (const auto& e : r.entities) {
        if (auto p = project_span(ops, e, hyp)) spans.push_back(*p);
      }
    } else {
      spans = extract_spans(dictionary_tagger(*r.hypothesis, repo, threshold), *r.hypothesis);
    }
    done[i] = correct_utterance(r.id, *r.hypothesis, spans, repo, templates, *backend, options);
  });

  std::vector<json> out_lines, log_lines;
  std::vector<CorrectionResult> all;
  MetricReport before, after;
  std::size_t skipped = 0, changed = 0, replaced = 0, rejected = 0, failures = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!done[i]) {
      ++skipped;
      continue;
    }
    const auto& u = *done[i];
    std::vector<EntitySpan> spans;
    for (const auto& res : u.results) {
      spans.push_back(res.request.span);
      log_lines.push_back(correction_log_json(u.id, res));
      replaced += res.chosen ? 1 : 0;
      rejected += res.answer_rejected ? 1 : 0;
      failures += res.error ? 1 : 0;
      all.push_back(res);
    }
    changed += u.corrected != u.hypothesis ? 1 : 0;
    out_lines.push_back({{"id", u.id},
                         {"hypothesis", u.hypothesis},
                         {"corrected", u.corrected},
                         {"spans", spans_json(spans)},
                         {"changed", u.corrected != u.hypothesis}});
    const auto& r = records[i];
    if (!r.reference.empty()) {
      before.add(r.reference, u.hypothesis, r.entities);
      after.add(r.reference, u.corrected, r.entities);
    }
  }
  run.stage(args.output, jsonl(out_lines));
  if (!args.log.empty()) run.stage(args.log, jsonl(log_lines));
  run.commit();

  json summary = {{"utterances", out_lines.size()}, {"skipped", skipped},        {"spans", all.size()},
                  {"replaced", replaced},           {"rejected_answers", rejected}, {"backend_failures", failures},
                  {"changed_utterances", changed},  {"before", rates_json(before)}, {"after", rates_json(after)}};
  std::string text = "corrected " + std::to_string(out_lines.size()) + " utterances (" + std::to_string(skipped) +
                     " without hypothesis), " + std::to_string(all.size()) + " spans, " + std::to_string(replaced) +
                     " replaced, " + std::to_string(rejected) + " rejected answers, " + std::to_string(failures) +
                     " backend failures\n" + rates_text("before: ", before) + rates_text("after:  ", after);
  if (!all.empty()) {
    const RunStats st = run_stats(all);
    summary["mean_token_count"] = st.mean_token_count;
    summary["nothink_ratio"] = st.nothink_ratio;
    text += "mean tokens " + fixed(st.mean_token_count, 2) + "  nothink ratio " + fixed(st.nothink_ratio, 4) + "\n";
  }
  if (failures > 0) std::cerr << "warning: " << failures << " spans kept after backend failures\n";
  run.report(summary, text);
  return kOk;
}

struct AstarArgs : DatasetArgs {
  std::string discarded;
};

int cmd_build_astar(Run& run, const AstarArgs& args) {
  const auto records = load_records(run, args.dataset);
  const auto repo = load_repository(run);
  const auto templates = load_templates(run);
  auto backend = make_backend(run);
  const Settings& s = run.settings;
  AstarOptions options;
  options.rejection_budget = static_cast<int>(s.integer("astar.rejection_budget", 1));
  options.hint_template = s.text("astar.hint_template");
  options.sampling = sampling(s);
  options.jobs = jobs(run);
  const std::string template_id = s.text("correction.template");
  for (const auto& name : {template_id, options.hint_template}) {
    if (!templates.contains(name)) throw ConfigError("no template named '" + name + "'");
  }
  const auto set = problems_from_dataset(records, repo, static_cast<std::size_t>(s.integer("retrieval.k", 1)),
                                         template_id, options.markers);
  const auto partition = classify_problems(set.problems, *backend, templates, options);
  const auto pairs = build_preference_pairs(partition, s.flag("astar.balance"), s.seed());

  std::vector<json> pair_lines, discard_lines;
  for (const auto& p : pairs) pair_lines.push_back(pair_json(p));
  for (const auto& [id, reason] : set.skipped) {
    discard_lines.push_back({{"id", id}, {"reason", reason}, {"responses", json::array()}});
  }
  for (const auto& d : partition.discarded) discard_lines.push_back(discard_json(d));
  run.stage(args.output, jsonl(pair_lines));
  if (!args.discarded.empty()) run.stage(args.discarded, jsonl(discard_lines));
  run.commit();

  const std::size_t direct = static_cast<std::size_t>(std::count_if(
      pairs.begin(), pairs.end(), [](const PreferencePair& p) { return p.preferred.mode == Mode::Nothink; }));
  run.report({{"problems", set.problems.size()},
              {"simple", partition.simple.size()},
              {"challenging", partition.challenging.size()},
              {"formidable", partition.formidable.size()},
              {"discarded", discard_lines.size()},
              {"pairs", pairs.size()},
              {"nothink_preferred", direct},
              {"think_preferred", pairs.size() - direct}},
             std::to_string(set.problems.size()) + " problems: " + std::to_string(partition.simple.size()) +
                 " simple, " + std::to_string(partition.challenging.size()) + " challenging, " +
                 std::to_string(partition.formidable.size()) + " formidable, " +
                 std::to_string(discard_lines.size()) + " discarded\n" + std::to_string(pairs.size()) +
                 " preference pairs (" + std::to_string(direct) + " prefer nothink, " +
                 std::to_string(pairs.size() - direct) + " prefer think)\n");
  return kOk;
}

struct EvaluateArgs {
  std::string dataset;
  std::string hypotheses;
  std::string tags;
  std::string output;
};

/// id -> value of `field` for each line of a JSONL file.
std::map<std::string, nlohmann::json> index_jsonl(Run& run, const std::string& role, const std::string& path) {
  std::map<std::string, nlohmann::json> out;
  std::istringstream in(run.read(role, path));
  for_each_jsonl(in, path, [&](std::size_t, const nlohmann::json& j) {
    const std::string id = j.at("id").get<std::string>();
    if (!out.emplace(id, j).second) throw Error(Errc::DataError, "duplicate id '" + id + "'");
  });
  return out;
}

int cmd_evaluate(Run& run, const EvaluateArgs& args) {
  const auto records = load_records(run, args.dataset);
  std::map<std::string, nlohmann::json> hyps, tags;
  if (!args.hypotheses.empty()) hyps = index_jsonl(run, "hypotheses", args.hypotheses);
  if (!args.tags.empty()) tags = index_jsonl(run, "tags", args.tags);

  MetricReport report;
  std::vector<std::vector<EntitySpan>> predicted, gold;
  for (const auto& r : records) {
    std::string hyp;
    if (!args.hypotheses.empty()) {
      const auto it = hyps.find(r.id);
      if (it == hyps.end()) throw Error(Errc::DataError, "no corrected hypothesis for '" + r.id + "'");
      hyp = utf8::nfc(it->second.at("corrected").get<std::string>());
    } else if (r.hypothesis) {
      hyp = *r.hypothesis;
    } else {
      throw Error(Errc::DataError, "record '" + r.id + "' has no hypothesis");
    }
    report.add(r.reference, hyp, r.entities);
    if (!args.tags.empty()) {
      const auto it = tags.find(r.id);
      if (it == tags.end()) throw Error(Errc::DataError, "no tags for '" + r.id + "'");
      if (utf8::nfc(it->second.at("text").get<std::string>()) != r.reference) {
        throw Error(Errc::DataError, "tags for '" + r.id + "' were not produced on the reference text");
      }
      std::vector<EntitySpan> spans;
      for (const auto& e : it->second.at("entities")) {
        EntitySpan span;
        span.start = e.at("start").get<std::size_t>();
        span.end = e.at("end").get<std::size_t>();
        if (e.contains("type")) span.type = parse_entity_type(e["type"].get<std::string>());
        spans.push_back(span);
      }
      predicted.push_back(std::move(spans));
      gold.push_back(r.entities);
    }
  }
  if (!args.tags.empty()) report.ner = ner_prf(predicted, gold);
  const std::string body = run.json_format ? report.to_json().dump(2) + "\n" : report.to_text();
  if (args.output.empty()) {
    std::cout << body;
  } else {
    run.stage(args.output, body);
  }
  run.commit();
  return kOk;
}

struct StatsArgs {
  std::string log;
  std::string output;
};

int cmd_stats(Run& run, const StatsArgs& args) {
  std::vector<ModelResponse> responses;
  std::istringstream in(run.read("log", args.log));
  for_each_jsonl(in, args.log, [&](std::size_t, const nlohmann::json& j) { responses.push_back(response_from_log(j)); });
  const RunStats st = run_stats(responses);
  const json j = {{"responses", st.total},
                  {"think", st.think_count},
                  {"nothink", st.nothink_count},
                  {"mean_token_count", st.mean_token_count},
                  {"nothink_ratio", st.nothink_ratio},
                  {"estimated_token_counts", st.estimated_token_counts}};
  const std::string body =
      run.json_format ? j.dump(2) + "\n"
                      : "responses      " + std::to_string(st.total) + " (" + std::to_string(st.think_count) +
                            " think, " + std::to_string(st.nothink_count) + " nothink)\nmean tokens    " +
                            fixed(st.mean_token_count, 2) + "\nnothink ratio  " + fixed(st.nothink_ratio, 4) +
                            "\n" +
                            (st.estimated_token_counts ? "estimated      " + std::to_string(st.estimated_token_counts) +
                                                             " token counts are character counts\n"
                                                       : "");
  if (args.output.empty()) {
    std::cout << body;
  } else {
    run.stage(args.output, body);
  }
  run.commit();
  return kOk;
}

int exit_code_for(Errc code) {
  switch (code) {
    case Errc::UnknownCharacter: return kRomanization;
    case Errc::BackendFailure:
    case Errc::Timeout:
    case Errc::ProtocolError:
    case Errc::MalformedResponse: return kBackend;
    case Errc::IoError: return kIo;
    case Errc::InvalidArgument:
    case Errc::UnknownTemplate: return kConfig;
    case Errc::GranularityMismatch:
    case Errc::NonFiniteInput:
    case Errc::MissingResponse: return kInternal;
    default: return kData;
  }
}

int main_impl(int argc, char** argv) {
  CLI::App app{"rastar: phonetic retrieval, entity tagging, correction and A-STAR preference data for ASR transcripts"};
  app.set_version_flag("--version", RASTAR_VERSION);
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_file, format = "text", manifest;
  std::vector<std::string> overrides;
  long jobs_flag = 0;
  std::uint64_t seed_flag = 0;
  app.add_option("--config", config_file, "Configuration file (INI sections of key = value)");
  auto* jobs_opt = app.add_option("--jobs", jobs_flag, "Worker threads (overrides run.jobs)");
  auto* seed_opt = app.add_option("--seed", seed_flag, "Random seed (overrides run.seed)");
  app.add_option("--format", format, "Output format")->check(CLI::IsMember({"text", "json"}));
  app.add_option("--set", overrides, "Override a setting: section.key=value (repeatable)");
  app.add_option("--manifest", manifest, "Run manifest path (default: <output>.manifest.json)");

  RetrieveArgs retrieve;
  auto* c_retrieve = app.add_subcommand("retrieve", "Rank repository entities for spans");
  c_retrieve->add_option("queries", retrieve.queries, "Span texts");
  c_retrieve->add_option("--input", retrieve.input, "File with one span per line");
  c_retrieve->add_option("--output", retrieve.output, "Write results here instead of stdout");
  c_retrieve->add_option("--type", retrieve.type, "Only entities of this type")
      ->check(CLI::IsMember({"PER", "LOC", "ORG"}));
  long k_flag = 0;
  auto* k_opt = c_retrieve->add_option("-k,--top-k", k_flag, "Candidates per span (overrides retrieval.k)");

  TagArgs tag;
  auto* c_tag = app.add_subcommand("tag", "Tag dataset utterances with BIO labels");
  c_tag->add_option("--dataset", tag.dataset, "Dataset JSONL")->required();
  c_tag->add_option("--output", tag.output, "Tagged JSONL")->required();
  c_tag->add_option("--field", tag.field, "Text to tag")->check(CLI::IsMember({"hypothesis", "reference"}));

  DatasetArgs rlm;
  auto* c_rlm = app.add_subcommand("build-rlm", "Build masked tagging examples");
  c_rlm->add_option("--dataset", rlm.dataset, "Dataset JSONL")->required();
  c_rlm->add_option("--output", rlm.output, "Examples JSONL")->required();

  CorrectArgs correct;
  auto* c_correct = app.add_subcommand("correct", "Correct entity spans in hypotheses");
  c_correct->add_option("--dataset", correct.dataset, "Dataset JSONL")->required();
  c_correct->add_option("--output", correct.output, "Corrections JSONL")->required();
  c_correct->add_option("--log", correct.log, "Per-span correction log JSONL");

  AstarArgs astar;
  auto* c_astar = app.add_subcommand("build-astar", "Build think/nothink preference pairs");
  c_astar->add_option("--dataset", astar.dataset, "Dataset JSONL")->required();
  c_astar->add_option("--output", astar.output, "Preference pairs JSONL")->required();
  c_astar->add_option("--discarded", astar.discarded, "Discarded problems JSONL");

  EvaluateArgs evaluate;
  auto* c_eval = app.add_subcommand("evaluate", "Score hypotheses against references");
  c_eval->add_option("--dataset", evaluate.dataset, "Dataset JSONL")->required();
  c_eval->add_option("--hypotheses", evaluate.hypotheses, "Corrections JSONL to score instead of the hypotheses");
  c_eval->add_option("--tags", evaluate.tags, "Tagged JSONL of the references, for NER scores");
  c_eval->add_option("--output", evaluate.output, "Write the report here instead of stdout");

  StatsArgs stats;
  auto* c_stats = app.add_subcommand("stats", "Token and mode statistics of a correction log");
  c_stats->add_option("--log", stats.log, "Correction log JSONL")->required();
  c_stats->add_option("--output", stats.output, "Write the summary here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    Run run;
    run.command = app.get_subcommands().front()->get_name();
    run.config_file = config_file;
    run.json_format = format == "json";
    run.manifest_path = manifest;
    if (!config_file.empty() && !fs::is_regular_file(config_file)) {
      throw ConfigError("config file '" + config_file + "' does not exist");
    }
    if (!config_file.empty()) run.read("config", config_file);
    run.settings = Settings::load(config_file, overrides);
    if (jobs_opt->count() > 0) run.settings.set("run.jobs", std::to_string(jobs_flag));
    if (seed_opt->count() > 0) run.settings.set("run.seed", std::to_string(seed_flag));
    if (k_opt->count() > 0) run.settings.set("retrieval.k", std::to_string(k_flag));
    run.settings.integer("run.jobs", 1);
    run.settings.seed();

    if (*c_retrieve) return cmd_retrieve(run, retrieve);
    if (*c_tag) return cmd_tag(run, tag);
    if (*c_rlm) return cmd_build_rlm(run, rlm);
    if (*c_correct) return cmd_correct(run, correct);
    if (*c_astar) return cmd_build_astar(run, astar);
    if (*c_eval) return cmd_evaluate(run, evaluate);
    if (*c_stats) return cmd_stats(run, stats);
    return kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternal;
  }
}

}  // namespace
}  // namespace rastar::cli

int main(int argc, char** argv) { return rastar::cli::main_impl(argc, argv); }
